#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "leakgan/corpus.hpp"
#include "leakgan/discriminator.hpp"
#include "leakgan/generator.hpp"
#include "leakgan/nn.hpp"

namespace leakgan {

/// B x T per-step rewards; column t scores token t+1 (and the goal g_t that guided it).
using RewardMatrix = Matrix;

enum class RescaleActivation { Sigmoid, Identity };
enum class WorkerReward { Intrinsic, IntrinsicTimesQ };

/// Rank-based rescale of every column: entry i becomes
/// act(delta * (0.5 - rank(i) / B)), rank 1 = highest value, ties by row order.
RewardMatrix bootstrap_rescale(const RewardMatrix &rewards, double delta, RescaleActivation act);

/// Cosine similarity; 0 when either vector has (near) zero norm.
double cosine_similarity(const Eigen::Ref<const Vector> &a, const Eigen::Ref<const Vector> &b);

/// Worker's intrinsic reward after emitting token t (1 <= t <= T):
/// (1/c) sum_{i=1..c} cos(f_t - f_{t-i}, g_{t-i}); terms with t-i < 0 are 0.
/// features[j] = f_j, goals[j] = g_j.
double intrinsic_reward(std::span<const Vector> features, std::span<const Vector> goals,
                        std::size_t t, int horizon);

/// Intrinsic rewards for a whole trace (B x T, column t-1 holds token t).
RewardMatrix intrinsic_rewards(const std::vector<Matrix> &features, const std::vector<Matrix> &goals,
                               int horizon);

/// Scores complete sequences, one value per row (normally D's probability of "real").
using SequenceScorer = std::function<Vector(const SequenceBatch &)>;

SequenceScorer discriminator_scorer(const FeatureExtractor &fx);

/// Q estimate for prefix length t (1 <= t <= T) of every row: mean score of N
/// completions sampled at the training temperature, or the score of the batch
/// itself when t == T. Rollout n of row r at step t draws from
/// derive_seed(seed, {t, n, r}).
Vector mc_q_estimate(const Generator &gen, const FeatureExtractor &fx, const SequenceScorer &score,
                     const SequenceBatch &batch, std::size_t t, int rollouts, std::uint64_t seed);

/// All T columns at once (prefix states are replayed a single time).
RewardMatrix mc_q_matrix(const Generator &gen, const FeatureExtractor &fx,
                         const SequenceScorer &score, const SequenceBatch &batch, int rollouts,
                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Losses with analytic gradients. Both are differentiable functions of one
// module's parameters with everything else held constant.

/// -(1/B) sum_b sum_{t <= T-c} q[b,t] * cos(f_{t+c} - f_t, g_t(theta_m)).
/// features holds f_0..f_T. Accumulates into grad when non-null.
double manager_loss(const Generator &gen, const std::vector<Matrix> &features, const Matrix &q,
                    ManagerParams *grad);

/// (1/(B T)) sum_b sum_t -weight[b,t] * log G(x_{t+1} | s_t) at temperature alpha,
/// with goal sums held constant. PAD targets are skipped.
double worker_loss(const Generator &gen, const SequenceBatch &tokens,
                   const std::vector<Matrix> &goal_sums, const Matrix &weights, double alpha,
                   WorkerParams *grad);

// ---------------------------------------------------------------------------
// Optimizer steps. Each touches exactly one module.

double manager_adv_step(Generator &gen, const std::vector<Matrix> &features, const RewardMatrix &q,
                        Optimizer &opt, long step = 0);

double worker_adv_step(Generator &gen, const GenerationTrace &trace, const RewardMatrix &rewards,
                       Optimizer &opt, long step = 0);

/// Manager mimics real-text feature transitions (q = 1).
double manager_pretrain_step(Generator &gen, const FeatureExtractor &fx,
                             const SequenceBatch &real, Optimizer &opt, long step = 0);
double manager_pretrain_step(Generator &gen, const std::vector<Matrix> &real_features,
                             Optimizer &opt, long step = 0);

/// Cross-entropy on real text with goals from the current (fixed) Manager.
double worker_mle_step(Generator &gen, const FeatureExtractor &fx, const SequenceBatch &real,
                       Optimizer &opt, long step = 0);
double worker_mle_step(Generator &gen, const SequenceBatch &real,
                       const std::vector<Matrix> &real_features, Optimizer &opt, long step = 0);

// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t batch_size = 64;
    int rollout_num = 4;
    double rescale_delta = 12.0;
    RescaleActivation rescale_activation = RescaleActivation::Sigmoid;
    bool rescale = true;                 // feed rescaled (true) or raw Q to the Manager
    WorkerReward worker_reward = WorkerReward::Intrinsic;
    int interleave_period = 15;
    int g_steps = 1;
    int d_steps = 5;
    int d_epochs = 3;
    std::size_t d_samples = 0;           // negatives per d-step; 0 = size of the real set
    int pretrain_rounds = 1;
    int disc_pretrain_steps = 5;   // fresh negative sets, d_epochs passes each
    int gen_pretrain_epochs = 80;
    int pretrain_patience = 5;
    bool restore_best = true;            // end each pre-training round on its best epoch
    int adversarial_epochs = 100;
    std::size_t nll_samples = 1000;
    OptimizerConfig gen_optimizer{OptimizerKind::Sgd, 1e-3, 0.9, 0.999, 1e-8, 5.0};
    double adv_gen_lr = 0.0;             // generator rate once adversarial training starts; 0 keeps gen_optimizer's
    OptimizerConfig disc_optimizer{OptimizerKind::Sgd, 1e-4, 0.9, 0.999, 1e-8, 0.0};
    std::uint64_t seed = 1;

    void validate() const;
};

/// One line of the metrics CSV. Empty optionals print as empty fields.
struct MetricsRow {
    int epoch = 0;
    std::string phase;
    long step = 0;
    std::optional<double> loss_d, loss_worker, loss_manager, nll_oracle, q_mean, intrinsic_mean;
};

inline constexpr const char *kMetricsHeader =
    "epoch,phase,step,loss_d,loss_worker,loss_manager,nll_oracle,q_mean,intrinsic_mean";

std::string format_metrics_row(const MetricsRow &row);

struct TrainResult {
    std::vector<MetricsRow> rows;
    std::optional<double> untrained_nll;
    std::optional<double> pretrain_best_nll;
    std::optional<double> adversarial_best_nll;
    std::optional<double> adversarial_worst_nll;
};

/// Runs pre-training and adversarial training.
class Trainer {
  public:
    using RowSink = std::function<void(const MetricsRow &)>;
    using CheckpointHook = std::function<void(const std::string &tag)>;

    Trainer(TrainConfig config, Generator &gen, Discriminator &disc, SequenceBatch real,
            const Oracle *oracle = nullptr);

    void on_row(RowSink sink) { sink_ = std::move(sink); }
    void on_checkpoint(CheckpointHook hook, int interval) {
        checkpoint_ = std::move(hook);
        checkpoint_interval_ = interval;
    }

    /// Oracle NLL (per sequence) of nll_samples generator samples at the
    /// sampling temperature, using a fixed evaluation seed.
    std::optional<double> evaluate_nll();

    void pretrain();
    void adversarial();
    TrainResult run();

    const TrainResult &result() const { return result_; }

  private:
    void emit(MetricsRow row);
    double discriminator_epochs(int steps, int epoch_tag, const std::string &phase, long &step);
    double mle_epoch(double *manager_loss_out, long &step);
    std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t salt);

    TrainConfig config_;
    Generator &gen_;
    Discriminator &disc_;
    SequenceBatch real_;
    const Oracle *oracle_;
    Optimizer manager_opt_;
    Optimizer worker_opt_;
    Optimizer disc_opt_;
    Rng dropout_rng_;
    RowSink sink_;
    CheckpointHook checkpoint_;
    int checkpoint_interval_ = 0;
    TrainResult result_;
    long gen_step_ = 0;
    long disc_step_ = 0;
    std::uint64_t shuffle_counter_ = 0;
};

} // namespace leakgan
