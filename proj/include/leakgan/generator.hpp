#pragma once

#include <deque>
#include <span>
#include <vector>

#include "leakgan/corpus.hpp"
#include "leakgan/discriminator.hpp"
#include "leakgan/nn.hpp"

namespace leakgan {

struct GeneratorConfig {
    std::size_t vocab_size = 0;
    std::size_t length = 20;    // T
    Index feature_dim = 0;      // d_f, fixed by the discriminator
    Index embedding_dim = 32;   // Worker token embedding
    Index worker_hidden = 32;
    Index manager_hidden = 32;
    Index goal_dim = 16;        // k
    int horizon = 4;            // c
    double temperature_train = 1.5;
    double temperature_sample = 1.0;

    void validate() const;
};

/// theta_m: LSTM over leaked features plus a linear read-out to the raw goal.
struct ManagerParams {
    LstmParams lstm;   // d_f -> H_m
    Matrix goal_weight; // k x H_m
    Vector goal_bias;  // k

    ParamList parameters();
    ManagerParams zeros_like() const;
};

/// theta_w and psi. out_weight maps h^W to the |V| x k matrix O_t, stored
/// row-major per column: entry (v, j) of O_t lives at row v*k + j.
struct WorkerParams {
    Matrix embedding;  // E x |V|
    LstmParams lstm;   // E -> H_w
    Matrix out_weight; // (|V| k) x H_w
    Vector out_bias;   // |V| k
    Matrix psi;        // k x k, no bias

    ParamList parameters();
    WorkerParams zeros_like() const;
};

class Generator {
  public:
    explicit Generator(GeneratorConfig config);

    /// N(0, 0.1^2) weights (psi included), zero biases.
    static Generator init(GeneratorConfig config, std::uint64_t seed);

    const GeneratorConfig &config() const { return config_; }
    ManagerParams &manager() { return manager_; }
    const ManagerParams &manager() const { return manager_; }
    WorkerParams &worker() { return worker_; }
    const WorkerParams &worker() const { return worker_; }

    ParamList manager_parameters() { return manager_.parameters(); }
    ParamList worker_parameters() { return worker_.parameters(); }
    ParamList parameters();

  private:
    GeneratorConfig config_;
    ManagerParams manager_;
    WorkerParams worker_;
};

struct ManagerState {
    LstmState lstm;
    /// Most recent first; always `horizon` entries, zero before the first goals.
    std::deque<Matrix> goals;
    long degenerate_goals = 0;

    static ManagerState zeros(const GeneratorConfig &config, Index batch);
};

struct WorkerState {
    LstmState lstm;

    static WorkerState zeros(const GeneratorConfig &config, Index batch);
};

/// Norms below this make a raw goal degenerate (mapped to the zero vector).
inline constexpr double kDegenerateGoalNorm = 1e-8;

/// raw / ||raw||, or zero when ||raw|| < kDegenerateGoalNorm.
Vector normalize_goal(const Eigen::Ref<const Vector> &raw, bool *degenerate = nullptr);

/// Feeds leaked features (d_f x B) to the Manager, returns unit goals (k x B)
/// and pushes them onto the state's goal history. `raw_goals` receives g-hat.
Matrix manager_step(const Generator &gen, const Eigen::Ref<const Matrix> &features,
                    ManagerState &state, Matrix *raw_goals = nullptr, LstmCache *cache = nullptr);

/// psi applied to the sum of the goals in `history`.
Matrix goal_embedding(const Matrix &psi, const std::deque<Matrix> &history);

/// Runs the Worker on the previous tokens; returns O_t for every row ((|V| k) x B).
Matrix worker_step(const Generator &gen, std::span<const TokenId> inputs, WorkerState &state,
                   LstmCache *cache = nullptr);

/// Column `row` of a worker_step result viewed as the |V| x k matrix O_t.
inline Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
logit_matrix(const Matrix &O, Index row, Index vocab, Index k) {
    return {O.col(row).data(), vocab, k};
}

/// O_t . w_t for a |V| x k matrix and a k-vector.
Vector token_logits(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                         Eigen::RowMajor>> &O,
                    const Eigen::Ref<const Vector> &w);

/// softmax(O_t . w_t / alpha) with PAD and START masked out. Throws for alpha <= 0.
Vector action_distribution(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic,
                                                                Eigen::Dynamic, Eigen::RowMajor>> &O,
                           const Eigen::Ref<const Vector> &w, double alpha);
/// Same on precomputed logits.
Vector action_distribution(const Eigen::Ref<const Vector> &logits, double alpha);

enum class GenerationMode { Train, Sample };

/// Per-step record of one generate() call. Index t in [0, T) is the step that
/// reads prefix s_t and emits token t+1.
struct GenerationTrace {
    SequenceBatch tokens;                // B x T
    std::vector<Matrix> features;        // T+1 entries f_0..f_T, each d_f x B
    std::vector<Matrix> goals;           // T entries g_t, k x B
    std::vector<Matrix> goal_embeddings; // T entries w_t, k x B
    std::vector<Matrix> logit_matrices;  // T entries O_t, (|V| k) x B; empty unless requested
    Matrix log_probs;                    // B x T, log G(x_{t+1} | s_t) at the sampling temperature
    long degenerate_goals = 0;
};

/// Mutable batch state for step-by-step generation. Copyable: a copy is a
/// branch point for Monte Carlo rollouts.
struct RolloutState {
    SequenceBatch tokens; // PAD beyond `t`
    std::size_t t = 0;
    ManagerState manager;
    WorkerState worker;
    std::vector<Rng> rngs; // one stream per row

    static RolloutState start(const GeneratorConfig &config, std::size_t batch);
};

/// One generation step for every row. When `forced` is given the next token
/// is copied from it instead of sampled (teacher forcing / prefix replay).
/// Appends to `trace` when non-null.
void advance(const Generator &gen, const FeatureExtractor &fx, RolloutState &state, double alpha,
             const SequenceBatch *forced = nullptr, GenerationTrace *trace = nullptr,
             bool keep_logit_matrices = false);

/// Samples B sequences. Row r draws from the stream derive_seed(seed, {r}).
GenerationTrace generate(const Generator &gen, const Discriminator &disc, std::size_t batch,
                         GenerationMode mode, std::uint64_t seed, bool keep_logit_matrices = true);
GenerationTrace generate(const Generator &gen, const FeatureExtractor &fx, std::size_t batch,
                         GenerationMode mode, std::uint64_t seed, bool keep_logit_matrices = false);

/// Replays prefix[0, t) through both modules, then samples the rest with the
/// training temperature from an RNG seeded with `seed`.
TokenSequence rollout_continue(const Generator &gen, const Discriminator &disc,
                               std::span<const TokenId> prefix, std::size_t t, std::uint64_t seed);

/// State after teacher-forcing the first t tokens of every row of `batch`.
RolloutState replay_prefix(const Generator &gen, const FeatureExtractor &fx,
                           const SequenceBatch &batch, std::size_t t);

/// Leaked features f_0..f_T of every row's prefixes (T+1 entries, d_f x B).
std::vector<Matrix> prefix_features(const FeatureExtractor &fx, const SequenceBatch &batch);

/// Unit goals the Manager emits for a fixed feature sequence (T entries).
std::vector<Matrix> manager_goals(const Generator &gen, const std::vector<Matrix> &features);

/// sum_{i<c} g_{t-i} for every t (goals before step 0 are zero).
std::vector<Matrix> goal_sums(const std::vector<Matrix> &goals, int horizon);

} // namespace leakgan
