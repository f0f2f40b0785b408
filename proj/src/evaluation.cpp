#include "leakgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <Eigen/Eigenvalues>

namespace leakgan {

NllEstimate eval_nll(const Generator &gen, const FeatureExtractor &fx, const Oracle &oracle,
                     std::size_t samples, std::uint64_t seed) {
    if (samples == 0) throw Error("eval_nll: sample count must be positive");
    constexpr std::size_t kChunk = 500;
    NllEstimate total;
    double seq_sum = 0.0, tok_sum = 0.0;
    for (std::size_t begin = 0, chunk = 0; begin < samples; begin += kChunk, ++chunk) {
        const std::size_t n = std::min(kChunk, samples - begin);
        auto trace = generate(gen, fx, n, GenerationMode::Sample, derive_seed(seed, {chunk}));
        const auto part = oracle.nll(trace.tokens);
        seq_sum += part.per_sequence * static_cast<double>(part.sequences);
        tok_sum += part.per_token * static_cast<double>(part.tokens);
        total.sequences += part.sequences;
        total.tokens += part.tokens;
    }
    total.per_sequence = seq_sum / static_cast<double>(total.sequences);
    total.per_token = total.tokens ? tok_sum / static_cast<double>(total.tokens) : 0.0;
    return total;
}

NllEstimate eval_nll(const Generator &gen, const Discriminator &disc, const Oracle &oracle,
                     std::size_t samples, std::uint64_t seed) {
    return eval_nll(gen, FeatureExtractor(disc), oracle, samples, seed);
}

// ---------------------------------------------------------------------------

namespace {

std::string ngram_key(const Sentence &s, std::size_t begin, int m) {
    std::string key;
    for (int i = 0; i < m; ++i) {
        if (i) key += '\x1f';
        key += s[begin + static_cast<std::size_t>(i)];
    }
    return key;
}

std::map<std::string, int> count_ngrams(const Sentence &s, int m) {
    std::map<std::string, int> counts;
    const auto mm = static_cast<std::size_t>(m);
    for (std::size_t i = 0; i + mm <= s.size(); ++i) ++counts[ngram_key(s, i, m)];
    return counts;
}

} // namespace

BleuReferences::BleuReferences(const std::vector<Sentence> &references, int max_n) : max_n_(max_n) {
    if (references.empty()) throw Error("bleu: reference set is empty");
    if (max_n < 1) throw Error("bleu: n must be >= 1");
    for (const auto &ref : references) {
        lengths_.push_back(ref.size());
        for (int m = 1; m <= max_n; ++m)
            for (const auto &[key, count] : count_ngrams(ref, m)) {
                int &slot = max_counts_[key];
                slot = std::max(slot, count);
            }
    }
    std::sort(lengths_.begin(), lengths_.end());
    lengths_.erase(std::unique(lengths_.begin(), lengths_.end()), lengths_.end());
}

std::size_t BleuReferences::closest_length(std::size_t length) const {
    std::size_t best = lengths_.front();
    for (std::size_t l : lengths_) {
        const auto d = [&](std::size_t x) { return x > length ? x - length : length - x; };
        if (d(l) < d(best)) best = l; // ascending order keeps the shorter one on ties
    }
    return best;
}

int BleuReferences::max_count(const std::string &ngram_key) const {
    auto it = max_counts_.find(ngram_key);
    return it == max_counts_.end() ? 0 : it->second;
}

BleuResult bleu(const std::vector<Sentence> &candidates, const BleuReferences &refs, int n) {
    if (n < 1 || n > refs.max_n()) throw Error("bleu: n outside the precomputed range");
    BleuResult out;
    std::vector<double> matched(static_cast<std::size_t>(n), 0.0), total(static_cast<std::size_t>(n), 0.0);
    std::size_t empty = 0;
    for (const auto &cand : candidates) {
        if (cand.empty()) ++empty;
        out.candidate_length += cand.size();
        out.reference_length += refs.closest_length(cand.size());
        for (int m = 1; m <= n; ++m)
            for (const auto &[key, count] : count_ngrams(cand, m)) {
                matched[static_cast<std::size_t>(m - 1)] += std::min(count, refs.max_count(key));
                total[static_cast<std::size_t>(m - 1)] += count;
            }
    }
    if (empty) out.warnings.push_back(std::to_string(empty) + " empty candidate(s) score zero n-grams");
    if (out.candidate_length == 0) {
        out.warnings.push_back("no candidate tokens; BLEU is 0");
        out.precisions.assign(static_cast<std::size_t>(n), 0.0);
        return out;
    }
    double log_sum = 0.0;
    bool zero = false;
    for (int m = 0; m < n; ++m) {
        const double p = total[static_cast<std::size_t>(m)] > 0 ? matched[static_cast<std::size_t>(m)] / total[static_cast<std::size_t>(m)] : 0.0;
        out.precisions.push_back(p);
        if (p <= 0.0) zero = true;
        else log_sum += std::log(p);
    }
    const double c = static_cast<double>(out.candidate_length), r = static_cast<double>(out.reference_length);
    out.brevity_penalty = c > r ? 1.0 : std::exp(1.0 - r / c);
    out.score = zero ? 0.0 : out.brevity_penalty * std::exp(log_sum / n);
    return out;
}

BleuResult bleu(const std::vector<Sentence> &candidates, const std::vector<Sentence> &references, int n) {
    return bleu(candidates, BleuReferences(references, n), n);
}

double bleu_n(const std::vector<Sentence> &candidates, const std::vector<Sentence> &references, int n) {
    if (n < 2 || n > 5) throw Error("bleu_n: n must be in 2..5");
    return bleu(candidates, references, n).score;
}

GainCurve relative_gain_curve(const std::vector<Sentence> &a, const std::vector<Sentence> &b,
                              const std::vector<Sentence> &references, int n, std::size_t bucket_width) {
    if (bucket_width == 0) throw Error("relative_gain_curve: bucket width must be positive");
    BleuReferences refs(references, n);
    std::map<std::size_t, std::pair<std::vector<Sentence>, std::vector<Sentence>>> buckets;
    for (const auto &s : a) buckets[s.size() / bucket_width].first.push_back(s);
    for (const auto &s : b) buckets[s.size() / bucket_width].second.push_back(s);

    GainCurve curve;
    for (const auto &[bucket, sets] : buckets) {
        const std::size_t lo = bucket * bucket_width, hi = lo + bucket_width - 1;
        const std::string range = std::to_string(lo) + "-" + std::to_string(hi);
        if (sets.first.empty() || sets.second.empty()) {
            curve.notes.push_back("bucket " + range + " skipped: one sample set is empty");
            continue;
        }
        GainPoint p;
        p.length_lo = lo;
        p.length_hi = hi;
        p.count_a = sets.first.size();
        p.count_b = sets.second.size();
        p.bleu_a = bleu(sets.first, refs, n).score;
        p.bleu_b = bleu(sets.second, refs, n).score;
        if (p.bleu_b == 0.0) {
            curve.notes.push_back("bucket " + range + " skipped: baseline BLEU is 0");
            continue;
        }
        p.gain = (p.bleu_a - p.bleu_b) / p.bleu_b;
        curve.points.push_back(p);
    }
    return curve;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void provenance_header(std::ostream &os, const std::string &provenance) {
    if (!provenance.empty()) os << kProvenancePrefix << ' ' << provenance << '\n';
}

} // namespace

void write_gain_csv(std::ostream &os, const GainCurve &curve, int n, const std::string &provenance) {
    provenance_header(os, provenance);
    os << "length_lo,length_hi,count_a,count_b,bleu" << n << "_a,bleu" << n << "_b,relative_gain\n";
    for (const auto &p : curve.points)
        os << p.length_lo << ',' << p.length_hi << ',' << p.count_a << ',' << p.count_b << ','
           << fmt(p.bleu_a) << ',' << fmt(p.bleu_b) << ',' << fmt(p.gain) << '\n';
}

// ---------------------------------------------------------------------------

Matrix Pca::project(const Eigen::Ref<const Matrix> &points) const {
    return components.transpose() * (points.colwise() - mean);
}

Pca fit_pca(const Eigen::Ref<const Matrix> &points, int components) {
    const Index d = points.rows(), N = points.cols();
    if (N < 2) throw Error("fit_pca: need at least two points");
    if (components < 1 || components > d) throw Error("fit_pca: bad component count");
    Pca pca;
    pca.mean = points.rowwise().mean();
    Matrix centered = points.colwise() - pca.mean;
    Matrix cov = centered * centered.transpose() / static_cast<double>(N - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("fit_pca: eigen decomposition failed");
    pca.components.resize(d, components);
    pca.explained_variance.resize(components);
    for (int i = 0; i < components; ++i) {
        const Index col = d - 1 - i; // eigenvalues ascend
        Vector v = solver.eigenvectors().col(col);
        Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0) v = -v;
        pca.components.col(i) = v;
        pca.explained_variance[i] = std::max(0.0, solver.eigenvalues()[col]);
    }
    return pca;
}

TraceExport feature_trace(const Discriminator &disc, const SequenceBatch &sentences,
                          const SequenceBatch &real) {
    FeatureExtractor fx(disc);
    TraceExport out;
    out.sentences = sentences;
    out.real_features = fx.leak(real);
    out.pca = fit_pca(out.real_features, 2);
    out.real_projection = out.pca.project(out.real_features);
    const auto feats = prefix_features(fx, sentences);
    const std::size_t T = sentences.length();
    for (std::size_t r = 0; r < sentences.rows(); ++r) {
        Matrix steps(disc.feature_dim(), static_cast<Index>(T));
        for (std::size_t t = 1; t <= T; ++t) steps.col(static_cast<Index>(t - 1)) = feats[t].col(static_cast<Index>(r));
        out.projections.push_back(out.pca.project(steps));
        out.steps.push_back(std::move(steps));
    }
    return out;
}

TraceExport feature_trace(const Generator &gen, const Discriminator &disc, std::size_t n,
                          const SequenceBatch &real, std::uint64_t seed) {
    auto trace = generate(gen, FeatureExtractor(disc), n, GenerationMode::Sample, seed);
    return feature_trace(disc, trace.tokens, real);
}

void write_trace_csv(std::ostream &os, const TraceExport &trace, const std::string &provenance) {
    // Explained variance rides on the provenance line so the CSV body stays plain.
    provenance_header(os, provenance + " explained_variance=" + fmt(trace.pca.explained_variance[0]) +
                              ":" + fmt(trace.pca.explained_variance[1]));
    os << "source,sentence,step,dim,value\n";
    for (std::size_t s = 0; s < trace.projections.size(); ++s)
        for (Index t = 0; t < trace.projections[s].cols(); ++t)
            for (Index d = 0; d < 2; ++d)
                os << "generated," << s << ',' << t + 1 << ',' << d << ',' << fmt(trace.projections[s](d, t)) << '\n';
    const std::size_t T = trace.sentences.length();
    for (Index m = 0; m < trace.real_projection.cols(); ++m)
        for (Index d = 0; d < 2; ++d)
            os << "real," << m << ',' << T << ',' << d << ',' << fmt(trace.real_projection(d, m)) << '\n';
}

// ---------------------------------------------------------------------------

std::vector<InteractionRow> interaction_export(const Generator &gen, const GenerationTrace &trace) {
    const auto &cfg = gen.config();
    const std::size_t T = trace.tokens.length();
    if (trace.logit_matrices.size() != T)
        throw Error("interaction_export: trace was generated without logit matrices");
    const auto V = static_cast<Index>(cfg.vocab_size);
    std::vector<InteractionRow> rows;
    rows.reserve(trace.tokens.rows() * T);
    for (std::size_t b = 0; b < trace.tokens.rows(); ++b)
        for (std::size_t t = 0; t < T; ++t) {
            InteractionRow row;
            row.sentence = b;
            row.step = t;
            row.token = trace.tokens.at(b, t);
            auto O = logit_matrix(trace.logit_matrices[t], static_cast<Index>(b), V, cfg.goal_dim);
            row.values = O.row(row.token).transpose().cwiseProduct(trace.goal_embeddings[t].col(static_cast<Index>(b)));
            rows.push_back(std::move(row));
        }
    return rows;
}

void write_interaction_csv(std::ostream &os, const std::vector<InteractionRow> &rows,
                           const Vocabulary *vocab, const std::string &provenance) {
    provenance_header(os, provenance);
    os << "sentence,step,token,dim,value\n";
    for (const auto &row : rows) {
        const std::string token = vocab ? vocab->token(row.token) : std::to_string(row.token);
        for (Index d = 0; d < row.values.size(); ++d)
            os << row.sentence << ',' << row.step + 1 << ',' << token << ',' << d << ',' << fmt(row.values[d]) << '\n';
    }
}

} // namespace leakgan
