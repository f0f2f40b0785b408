#include "leakgan/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace leakgan {

Vocabulary::Vocabulary(const std::vector<std::string> &real_tokens) {
    tokens_.reserve(real_tokens.size() + 2);
    tokens_.push_back(kPadToken);
    tokens_.push_back(kStartToken);
    tokens_.insert(tokens_.end(), real_tokens.begin(), real_tokens.end());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        auto [it, fresh] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
        if (!fresh) throw Error("vocabulary: duplicate or reserved token '" + tokens_[i] + "'");
    }
}

Vocabulary Vocabulary::synthetic(std::size_t size) {
    if (size < 2) throw Error("vocabulary: size must be at least 2");
    std::vector<std::string> real;
    for (std::size_t i = kFirstRealToken; i < size; ++i) real.push_back(std::to_string(i));
    return Vocabulary(real);
}

TokenId Vocabulary::id(const std::string &token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw Error("token '" + token + "' is not in the vocabulary");
    return it->second;
}

const std::string &Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw Error("token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path &path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    for (const auto &t : tokens_) os << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(is, line);) lines.push_back(line);
    if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kStartToken)
        throw Error(path.string() + ": vocabulary must start with " + kPadToken + " and " +
                    kStartToken);
    return Vocabulary(std::vector<std::string>(lines.begin() + 2, lines.end()));
}

VocabularyBuild build_vocab(const std::vector<Sentence> &corpus, int min_freq) {
    if (corpus.empty()) throw Error("build_vocab: empty corpus");
    if (min_freq < 1) throw Error("build_vocab: min_freq must be >= 1");

    std::map<std::string, long> freq;
    for (const auto &s : corpus)
        for (const auto &tok : s) {
            if (tok == Vocabulary::kPadToken || tok == Vocabulary::kStartToken)
                throw Error("build_vocab: corpus contains reserved token '" + tok + "'");
            ++freq[tok];
        }

    std::vector<std::pair<std::string, long>> kept;
    for (const auto &[tok, n] : freq)
        if (n >= min_freq) kept.emplace_back(tok, n);
    if (kept.empty())
        throw Error("build_vocab: no token reaches min_freq=" + std::to_string(min_freq));
    // std::map iteration is lexicographic, so a stable sort on count keeps ties ordered.
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto &a, const auto &b) { return a.second > b.second; });

    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (auto &kv : kept) tokens.push_back(kv.first);

    VocabularyBuild out{Vocabulary(tokens), {}};
    out.flagged.reserve(corpus.size());
    for (const auto &s : corpus)
        out.flagged.push_back(std::any_of(s.begin(), s.end(), [&](const std::string &tok) {
            return !out.vocab.contains(tok);
        }));
    return out;
}

TokenSequence encode(const Sentence &sentence, const Vocabulary &vocab, std::size_t T) {
    if (sentence.size() > T)
        throw Error("encode: sentence of length " + std::to_string(sentence.size()) +
                    " exceeds T=" + std::to_string(T));
    TokenSequence ids(T, kPad);
    for (std::size_t i = 0; i < sentence.size(); ++i) ids[i] = vocab.id(sentence[i]);
    return ids;
}

Sentence decode(std::span<const TokenId> ids, const Vocabulary &vocab) {
    Sentence out;
    for (TokenId id : ids) {
        if (id == kPad) break;
        out.push_back(vocab.token(id));
    }
    return out;
}

Sentence tokenize(const std::string &line) {
    Sentence out;
    std::istringstream ss(line);
    for (std::string tok; ss >> tok;) out.push_back(tok);
    return out;
}

SequenceBatch SequenceBatch::from_rows(const std::vector<TokenSequence> &rows) {
    if (rows.empty()) return {};
    SequenceBatch b(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != b.length_) throw Error("SequenceBatch: ragged rows");
        std::copy(rows[r].begin(), rows[r].end(), b[r].begin());
    }
    return b;
}

SequenceBatch SequenceBatch::slice(std::size_t begin, std::size_t end) const {
    end = std::min(end, rows_);
    SequenceBatch b(end > begin ? end - begin : 0, length_);
    std::copy(ids_.begin() + static_cast<std::ptrdiff_t>(begin * length_),
              ids_.begin() + static_cast<std::ptrdiff_t>(end * length_), b.ids_.begin());
    return b;
}

SequenceBatch SequenceBatch::gather(std::span<const std::size_t> rows) const {
    SequenceBatch b(rows.size(), length_);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = (*this)[rows[i]];
        std::copy(src.begin(), src.end(), b[i].begin());
    }
    return b;
}

void SequenceBatch::validate(std::size_t vocab_size) const {
    for (TokenId id : ids_)
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
            throw Error("sequence batch holds id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(vocab_size));
}

std::vector<Sentence> read_sentences(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path.string());
    std::vector<Sentence> out;
    for (std::string line; std::getline(is, line);) {
        if (line.rfind(kProvenancePrefix, 0) == 0) continue;
        out.push_back(tokenize(line));
    }
    return out;
}

void write_sentences(const std::filesystem::path &path, const std::vector<Sentence> &sentences,
                     const std::string &provenance) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    if (!provenance.empty()) os << kProvenancePrefix << ' ' << provenance << '\n';
    for (const auto &s : sentences) {
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? " " : "") << s[i];
        os << '\n';
    }
}

void write_batch(const std::filesystem::path &path, const SequenceBatch &batch,
                 const Vocabulary &vocab, const std::string &provenance) {
    std::vector<Sentence> sentences;
    sentences.reserve(batch.rows());
    for (std::size_t r = 0; r < batch.rows(); ++r) sentences.push_back(decode(batch[r], vocab));
    write_sentences(path, sentences, provenance);
}

SequenceBatch read_batch(const std::filesystem::path &path, const Vocabulary &vocab, std::size_t T) {
    std::vector<TokenSequence> rows;
    for (const auto &s : read_sentences(path)) {
        if (s.empty() || s.size() > T) continue;
        rows.push_back(encode(s, vocab, T));
    }
    if (rows.empty()) throw Error(path.string() + ": no usable sentences of length <= " +
                                  std::to_string(T));
    return SequenceBatch::from_rows(rows);
}

// ---------------------------------------------------------------------------

ParamList OracleParams::parameters() {
    ParamList out;
    add_param(out, "oracle.embedding", embedding);
    lstm.append_params(out, "oracle.lstm");
    add_param(out, "oracle.out_weight", out_weight);
    add_param(out, "oracle.out_bias", out_bias);
    return out;
}

Oracle::Oracle(std::size_t vocab_size, std::size_t length, std::size_t hidden)
    : vocab_size_(vocab_size), length_(length), hidden_(hidden) {
    if (vocab_size <= static_cast<std::size_t>(kFirstRealToken))
        throw Error("oracle: vocabulary needs at least one real token");
    if (hidden < 1 || length < 1) throw Error("oracle: hidden size and length must be >= 1");
    const auto V = static_cast<Index>(vocab_size);
    const auto H = static_cast<Index>(hidden);
    params_.embedding = Matrix::Zero(H, V);
    params_.lstm = LstmParams(H, H);
    params_.out_weight = Matrix::Zero(V, H);
    params_.out_bias = Vector::Zero(V);
}

Oracle Oracle::init(std::size_t vocab_size, std::size_t length, std::size_t hidden,
                    std::uint64_t seed) {
    Oracle o(vocab_size, length, hidden);
    Rng rng(seed);
    for (auto &p : o.parameters()) fill_normal(p.map(), rng, 1.0);
    return o;
}

namespace {

constexpr std::size_t kChunk = 256;

Matrix embed_columns(const Matrix &table, std::span<const TokenId> ids) {
    Matrix x(table.rows(), static_cast<Index>(ids.size()));
    for (std::size_t b = 0; b < ids.size(); ++b) x.col(static_cast<Index>(b)) = table.col(ids[b]);
    return x;
}

} // namespace

SequenceBatch Oracle::sample(std::size_t n, std::uint64_t seed) const {
    SequenceBatch out(n, length_);
    const auto H = static_cast<Index>(hidden_);
    for (std::size_t begin = 0; begin < n; begin += kChunk) {
        const std::size_t B = std::min(kChunk, n - begin);
        std::vector<Rng> rngs;
        for (std::size_t b = 0; b < B; ++b) rngs.emplace_back(derive_seed(seed, {begin + b}));

        std::vector<TokenId> prev(B, kStart);
        LstmState state = LstmState::zeros(H, static_cast<Index>(B));
        for (std::size_t t = 0; t < length_; ++t) {
            state = lstm_step(params_.lstm, embed_columns(params_.embedding, prev), state);
            Matrix logits = params_.out_weight * state.h;
            logits.colwise() += params_.out_bias;
            for (std::size_t b = 0; b < B; ++b) {
                Vector p = masked_softmax(logits.col(static_cast<Index>(b)));
                auto x = static_cast<TokenId>(sample_categorical(p, uniform01(rngs[b])));
                out.at(begin + b, t) = x;
                prev[b] = x;
            }
        }
    }
    return out;
}

Matrix Oracle::log_probs(const SequenceBatch &batch) const {
    batch.validate(vocab_size_);
    if (batch.length() != length_)
        throw Error("oracle: batch length " + std::to_string(batch.length()) + " != T=" +
                    std::to_string(length_));
    const auto H = static_cast<Index>(hidden_);
    const std::size_t n = batch.rows();
    Matrix lp = Matrix::Zero(static_cast<Index>(n), static_cast<Index>(length_));
    for (std::size_t begin = 0; begin < n; begin += kChunk) {
        const std::size_t B = std::min(kChunk, n - begin);
        std::vector<TokenId> prev(B, kStart);
        LstmState state = LstmState::zeros(H, static_cast<Index>(B));
        for (std::size_t t = 0; t < length_; ++t) {
            state = lstm_step(params_.lstm, embed_columns(params_.embedding, prev), state);
            Matrix logits = params_.out_weight * state.h;
            logits.colwise() += params_.out_bias;
            for (std::size_t b = 0; b < B; ++b) {
                TokenId x = batch.at(begin + b, t);
                if (x != kPad)
                    lp(static_cast<Index>(begin + b), static_cast<Index>(t)) =
                        masked_log_prob(logits.col(static_cast<Index>(b)), x);
                prev[b] = x;
            }
        }
    }
    return lp;
}

NllEstimate Oracle::nll(const SequenceBatch &batch) const {
    NllEstimate e;
    if (batch.rows() == 0) return e;
    Matrix lp = log_probs(batch);
    double total = -lp.sum();
    for (std::size_t r = 0; r < batch.rows(); ++r)
        for (TokenId x : batch[r]) e.tokens += (x != kPad);
    e.sequences = batch.rows();
    e.per_sequence = total / static_cast<double>(e.sequences);
    e.per_token = e.tokens ? total / static_cast<double>(e.tokens) : 0.0;
    return e;
}

} // namespace leakgan
