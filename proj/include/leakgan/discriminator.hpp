#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leakgan/corpus.hpp"
#include "leakgan/nn.hpp"

namespace leakgan {

struct ConvWindow {
    int window = 1;
    int count = 1;
    bool operator==(const ConvWindow &) const = default;
};

enum class FeatureSource { PostHighway, PreHighway };
enum class Activation { Relu, Tanh, Identity };

/// CNN layout of the feature extractor.
struct ConvSpec {
    std::vector<ConvWindow> windows;
    Index embedding_dim = 64;
    bool highway = true;
    double dropout_keep = 0.75;
    double l2_coeff = 1e-4;
    FeatureSource feature_source = FeatureSource::PostHighway;
    Activation activation = Activation::Relu;

    Index feature_dim() const;

    /// Throws when a window exceeds T or a count is not positive.
    void validate(std::size_t T) const;

    /// Kernel tables used for the synthetic benchmark (T = 20 or 40).
    static ConvSpec reference(std::size_t T);

    /// "w:c,w:c,..." <-> windows
    static std::vector<ConvWindow> parse_windows(const std::string &text);
    static std::string format_windows(const std::vector<ConvWindow> &windows);
};

struct DiscriminatorParams {
    Matrix embedding;               // E x |V|
    std::vector<Matrix> conv;       // per bank: count x (window * E); tap o = cols [o*E, (o+1)*E)
    std::vector<Vector> conv_bias;  // per bank: count
    Matrix gate_weight;             // d_f x d_f (highway transform gate)
    Vector gate_bias;
    Matrix transform_weight;        // d_f x d_f
    Vector transform_bias;
    Vector out_weight;              // phi_l, d_f
    Vector out_bias;                // 1

    ParamList parameters();
    DiscriminatorParams zeros_like() const;
};

enum class FeatureMode {
    Train, // dropout active
    Leak,  // deterministic
};

class Discriminator;

/// Intermediate values of one sequence's forward pass, kept for backward.
struct FeatureCache {
    std::vector<std::vector<int>> argmax; // per bank, per filter: best position
    Vector pooled;                        // max-over-time pre-activation
    Vector activated;                     // after activation (pre-highway)
    Vector gate;                          // highway gate
    Vector transform_pre;                 // highway transform pre-ReLU
    Vector highway_out;                   // post-highway
};

/// Evaluates the feature extractor with the conv taps pre-multiplied into
/// per-token tables. Valid while the discriminator parameters are unchanged.
class FeatureExtractor {
  public:
    /// Tables for every token in the vocabulary.
    explicit FeatureExtractor(const Discriminator &disc);
    /// Tables only for the tokens in `batch` (plus PAD).
    FeatureExtractor(const Discriminator &disc, const SequenceBatch &batch);

    /// Post-activation (and post-highway, if enabled) vector of a T-length id row.
    /// Rows shorter than T are treated as PAD-padded prefixes.
    Vector classifier_input(std::span<const TokenId> tokens, FeatureCache *cache = nullptr) const;

    /// Leaked feature f for a (prefix of a) sequence, per the configured feature source.
    Vector leak(std::span<const TokenId> tokens) const;

    /// Leaked features of each row of a batch (d_f x B).
    Matrix leak(const SequenceBatch &batch) const;

    /// phi_l . f + bias
    double logit(const Eigen::Ref<const Vector> &classifier_input) const;

    const Discriminator &discriminator() const { return *disc_; }

  private:
    void build(std::span<const TokenId> tokens);

    const Discriminator *disc_;
    std::vector<int> column_of_; // token id -> table column, -1 when absent
    std::vector<std::vector<Matrix>> tables_; // [bank][tap]: count x columns
};

struct DiscriminatorLoss {
    double bce = 0.0;
    double l2 = 0.0;
    double total() const { return bce + l2; }
};

class Discriminator {
  public:
    Discriminator(ConvSpec spec, std::size_t vocab_size, std::size_t length);

    /// N(0, 0.1^2) weights, zero biases.
    static Discriminator init(ConvSpec spec, std::size_t vocab_size, std::size_t length,
                              std::uint64_t seed);

    const ConvSpec &spec() const { return spec_; }
    std::size_t vocab_size() const { return vocab_size_; }
    std::size_t length() const { return length_; }
    Index feature_dim() const { return spec_.feature_dim(); }

    DiscriminatorParams &params() { return params_; }
    const DiscriminatorParams &params() const { return params_; }
    ParamList parameters() { return params_.parameters(); }

    /// d_f x B. Train mode applies inverted dropout to the post-highway vector
    /// using `dropout_rng`; leak mode is deterministic.
    Matrix extract_features(const SequenceBatch &batch, FeatureMode mode = FeatureMode::Leak,
                            Rng *dropout_rng = nullptr) const;

    /// sigmoid(phi_l . f + bias) per row, leak mode.
    Vector classify(const SequenceBatch &batch) const;

    /// Mean binary cross-entropy (label 1 = real) plus l2_coeff * ||phi||^2.
    /// Accumulates the gradient into `grad` when non-null. A null dropout_rng
    /// evaluates without dropout.
    DiscriminatorLoss loss(const SequenceBatch &batch, std::span<const double> labels,
                           Rng *dropout_rng, DiscriminatorParams *grad) const;

    /// One optimizer step on real (label 1) and fake (label 0) rows.
    DiscriminatorLoss train_step(const SequenceBatch &real, const SequenceBatch &fake,
                                 Optimizer &optimizer, Rng &rng, long step = 0);

  private:
    ConvSpec spec_;
    std::size_t vocab_size_;
    std::size_t length_;
    DiscriminatorParams params_;
};

} // namespace leakgan
