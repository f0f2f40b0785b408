#pragma once

#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "leakgan/corpus.hpp"
#include "leakgan/discriminator.hpp"
#include "leakgan/generator.hpp"

namespace leakgan {

struct MetricReport {
    std::string metric;
    double value = 0.0;
    std::string config_digest;
    std::size_t samples = 0;
};

/// Oracle NLL of `samples` generator outputs drawn at the sampling temperature.
/// Drawn in chunks of 500; chunk i uses the stream derive_seed(seed, {i}).
NllEstimate eval_nll(const Generator &gen, const FeatureExtractor &fx, const Oracle &oracle,
                     std::size_t samples, std::uint64_t seed);
NllEstimate eval_nll(const Generator &gen, const Discriminator &disc, const Oracle &oracle,
                     std::size_t samples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// BLEU

/// Recorded next to every BLEU number that leaves the program.
inline constexpr const char *kBleuConvention =
    "corpus-level; every candidate scored against the whole reference set; counts clipped by "
    "the max reference count; brevity penalty from the closest reference length (shorter on "
    "ties); uniform weights; no smoothing";

struct BleuResult {
    double score = 0.0;
    std::vector<double> precisions; // p_1..p_n
    double brevity_penalty = 0.0;
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;
    std::vector<std::string> warnings;
};

/// Precomputed reference statistics, reusable across candidate sets.
class BleuReferences {
  public:
    BleuReferences(const std::vector<Sentence> &references, int max_n);

    int max_n() const { return max_n_; }
    std::size_t closest_length(std::size_t length) const;
    int max_count(const std::string &ngram_key) const;

  private:
    int max_n_;
    std::vector<std::size_t> lengths_; // sorted, unique
    std::unordered_map<std::string, int> max_counts_;
};

BleuResult bleu(const std::vector<Sentence> &candidates, const BleuReferences &refs, int n);
BleuResult bleu(const std::vector<Sentence> &candidates, const std::vector<Sentence> &references, int n);

/// Corpus BLEU-n, n in 2..5.
double bleu_n(const std::vector<Sentence> &candidates, const std::vector<Sentence> &references, int n);

struct GainPoint {
    std::size_t length_lo = 0, length_hi = 0; // inclusive
    std::size_t count_a = 0, count_b = 0;
    double bleu_a = 0.0, bleu_b = 0.0;
    double gain = 0.0; // (A - B) / B
};

struct GainCurve {
    std::vector<GainPoint> points;
    std::vector<std::string> notes; // skipped buckets
};

/// Buckets both candidate sets by sentence length (width `bucket_width`) and
/// reports the relative BLEU-n gain of A over B in every bucket both fill.
GainCurve relative_gain_curve(const std::vector<Sentence> &a, const std::vector<Sentence> &b,
                              const std::vector<Sentence> &references, int n,
                              std::size_t bucket_width = 1);

void write_gain_csv(std::ostream &os, const GainCurve &curve, int n, const std::string &provenance);

// ---------------------------------------------------------------------------
// Feature traces

struct Pca {
    Vector mean;
    Matrix components;          // d x m, orthonormal columns, descending variance
    Vector explained_variance;  // m

    /// m x N coordinates of the columns of `points`.
    Matrix project(const Eigen::Ref<const Matrix> &points) const;
};

/// PCA of the columns of `points` (d x N). Each component is oriented so its
/// largest-magnitude entry is positive.
Pca fit_pca(const Eigen::Ref<const Matrix> &points, int components = 2);

struct TraceExport {
    SequenceBatch sentences;
    std::vector<Matrix> steps;       // per sentence, d_f x T: f_1..f_T in leak mode
    std::vector<Matrix> projections; // per sentence, 2 x T
    Matrix real_features;            // d_f x M, completed real sentences
    Matrix real_projection;          // 2 x M
    Pca pca;
};

/// Traces of given sentences against the PCA plane of the real sentences.
TraceExport feature_trace(const Discriminator &disc, const SequenceBatch &sentences,
                          const SequenceBatch &real);
/// Traces of n freshly generated sentences.
TraceExport feature_trace(const Generator &gen, const Discriminator &disc, std::size_t n,
                          const SequenceBatch &real, std::uint64_t seed);

/// Long format: source,sentence,step,dim,value (source = generated | real).
void write_trace_csv(std::ostream &os, const TraceExport &trace, const std::string &provenance);

// ---------------------------------------------------------------------------
// Manager x Worker interaction

struct InteractionRow {
    std::size_t sentence = 0;
    std::size_t step = 0; // 0-based generation step; the token emitted is token step+1
    TokenId token = kPad;
    Vector values;        // O_t[token, :] * w_t, k entries
};

/// One row per sentence and step. The trace must hold logit matrices.
std::vector<InteractionRow> interaction_export(const Generator &gen, const GenerationTrace &trace);

void write_interaction_csv(std::ostream &os, const std::vector<InteractionRow> &rows,
                           const Vocabulary *vocab, const std::string &provenance);

} // namespace leakgan
