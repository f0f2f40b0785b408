#include "leakgan/training.hpp"

#include "leakgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace leakgan {

namespace {

// Stream tags for derive_seed; fixed so that runs are reproducible.
enum SeedTag : std::uint64_t {
    kTagEval = 11,
    kTagNegatives = 12,
    kTagAdversarial = 13,
    kTagRollout = 14,
    kTagShuffle = 15,
    kTagDropout = 16,
};

constexpr double kZeroNorm = 1e-12;

Matrix column_gather(const Matrix &m, std::span<const std::size_t> cols) {
    Matrix out(m.rows(), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Index>(i)) = m.col(static_cast<Index>(cols[i]));
    return out;
}

} // namespace

RewardMatrix bootstrap_rescale(const RewardMatrix &rewards, double delta, RescaleActivation act) {
    const Index B = rewards.rows();
    RewardMatrix out(B, rewards.cols());
    std::vector<Index> order(static_cast<std::size_t>(B));
    for (Index t = 0; t < rewards.cols(); ++t) {
        std::iota(order.begin(), order.end(), Index{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](Index a, Index b) { return rewards(a, t) > rewards(b, t); });
        for (Index rank = 1; rank <= B; ++rank) {
            const double z = delta * (0.5 - static_cast<double>(rank) / static_cast<double>(B));
            out(order[static_cast<std::size_t>(rank - 1)], t) =
                act == RescaleActivation::Sigmoid ? sigmoid(z) : z;
        }
    }
    return out;
}

double cosine_similarity(const Eigen::Ref<const Vector> &a, const Eigen::Ref<const Vector> &b) {
    const double na = a.norm(), nb = b.norm();
    if (!(na > kZeroNorm) || !(nb > kZeroNorm)) return 0.0;
    return a.dot(b) / (na * nb);
}

double intrinsic_reward(std::span<const Vector> features, std::span<const Vector> goals,
                        std::size_t t, int horizon) {
    if (horizon < 1) throw Error("intrinsic_reward: horizon must be >= 1");
    if (t >= features.size()) throw Error("intrinsic_reward: feature trace too short");
    double sum = 0.0;
    for (int i = 1; i <= horizon; ++i) {
        if (static_cast<std::size_t>(i) > t) break; // f_{t-i}, g_{t-i} are zero-padded
        const std::size_t j = t - static_cast<std::size_t>(i);
        if (j >= goals.size()) throw Error("intrinsic_reward: goal trace too short");
        sum += cosine_similarity(features[t] - features[j], goals[j]);
    }
    return sum / horizon;
}

RewardMatrix intrinsic_rewards(const std::vector<Matrix> &features, const std::vector<Matrix> &goals,
                               int horizon) {
    const std::size_t T = goals.size();
    if (features.size() != T + 1) throw Error("intrinsic_rewards: need T+1 feature steps");
    const Index B = goals.front().cols();
    RewardMatrix r = RewardMatrix::Zero(B, static_cast<Index>(T));
    for (std::size_t t = 1; t <= T; ++t)
        for (Index b = 0; b < B; ++b) {
            double sum = 0.0;
            for (int i = 1; i <= horizon && static_cast<std::size_t>(i) <= t; ++i) {
                const std::size_t j = t - static_cast<std::size_t>(i);
                sum += cosine_similarity(features[t].col(b) - features[j].col(b), goals[j].col(b));
            }
            r(b, static_cast<Index>(t - 1)) = sum / horizon;
        }
    return r;
}

SequenceScorer discriminator_scorer(const FeatureExtractor &fx) {
    return [&fx](const SequenceBatch &batch) {
        Vector out(static_cast<Index>(batch.rows()));
        for (std::size_t r = 0; r < batch.rows(); ++r)
            out[static_cast<Index>(r)] = sigmoid(fx.logit(fx.classifier_input(batch[r])));
        return out;
    };
}

namespace {

Vector rollout_mean(const Generator &gen, const FeatureExtractor &fx, const SequenceScorer &score,
                    const RolloutState &branch_point, int rollouts, std::uint64_t seed) {
    const auto &cfg = gen.config();
    const std::size_t B = branch_point.tokens.rows();
    Vector acc = Vector::Zero(static_cast<Index>(B));
    for (int n = 0; n < rollouts; ++n) {
        RolloutState branch = branch_point;
        branch.rngs.clear();
        for (std::size_t r = 0; r < B; ++r)
            branch.rngs.emplace_back(derive_seed(seed, {branch_point.t, static_cast<std::uint64_t>(n), r}));
        while (branch.t < cfg.length) advance(gen, fx, branch, cfg.temperature_train);
        // Running mean: exact when every rollout scores the same.
        acc += (score(branch.tokens) - acc) / static_cast<double>(n + 1);
    }
    return acc;
}

} // namespace

Vector mc_q_estimate(const Generator &gen, const FeatureExtractor &fx, const SequenceScorer &score,
                     const SequenceBatch &batch, std::size_t t, int rollouts, std::uint64_t seed) {
    const std::size_t T = gen.config().length;
    if (t < 1 || t > T) throw Error("mc_q_estimate: t must be in [1, T]");
    if (rollouts < 1) throw Error("mc_q_estimate: rollout count must be >= 1");
    if (t == T) return score(batch);
    RolloutState state = replay_prefix(gen, fx, batch, t);
    return rollout_mean(gen, fx, score, state, rollouts, seed);
}

RewardMatrix mc_q_matrix(const Generator &gen, const FeatureExtractor &fx,
                         const SequenceScorer &score, const SequenceBatch &batch, int rollouts,
                         std::uint64_t seed) {
    const auto &cfg = gen.config();
    const std::size_t T = cfg.length;
    if (rollouts < 1) throw Error("mc_q_matrix: rollout count must be >= 1");
    RewardMatrix q(static_cast<Index>(batch.rows()), static_cast<Index>(T));
    RolloutState state = RolloutState::start(cfg, batch.rows());
    for (std::size_t t = 1; t < T; ++t) {
        advance(gen, fx, state, cfg.temperature_train, &batch);
        q.col(static_cast<Index>(t - 1)) = rollout_mean(gen, fx, score, state, rollouts, seed);
    }
    q.col(static_cast<Index>(T - 1)) = score(batch);
    return q;
}

// ---------------------------------------------------------------------------

double manager_loss(const Generator &gen, const std::vector<Matrix> &features, const Matrix &q,
                    ManagerParams *grad) {
    const auto &cfg = gen.config();
    const auto &p = gen.manager();
    const std::size_t T = cfg.length;
    const auto c = static_cast<std::size_t>(cfg.horizon);
    if (features.size() != T + 1) throw Error("manager_loss: need T+1 feature steps");
    const Index B = features.front().cols();
    if (q.rows() != B || q.cols() != static_cast<Index>(T)) throw Error("manager_loss: q must be B x T");
    if (T < c) return 0.0;
    const std::size_t steps = T - c + 1;
    const double inv_b = 1.0 / static_cast<double>(B);

    ManagerState state = ManagerState::zeros(cfg, B);
    std::vector<LstmCache> caches(steps);
    std::vector<Matrix> hidden(steps), draw(steps);
    double loss = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        Matrix raw;
        manager_step(gen, features[t], state, &raw, grad ? &caches[t] : nullptr);
        hidden[t] = state.lstm.h;
        draw[t] = Matrix::Zero(raw.rows(), B);
        for (Index b = 0; b < B; ++b) {
            Vector d = features[t + c].col(b) - features[t].col(b);
            const double nd = d.norm(), ng = raw.col(b).norm();
            if (!(nd > kZeroNorm) || !(ng >= kDegenerateGoalNorm)) continue;
            const double cosv = d.dot(raw.col(b)) / (nd * ng);
            const double w = q(b, static_cast<Index>(t)) * inv_b;
            loss -= w * cosv;
            draw[t].col(b) = -w * (d / (nd * ng) - cosv * raw.col(b) / (ng * ng));
        }
    }
    if (!grad) return loss;

    Matrix dh = Matrix::Zero(cfg.manager_hidden, B);
    Matrix dc = Matrix::Zero(cfg.manager_hidden, B);
    for (std::size_t t = steps; t-- > 0;) {
        grad->goal_weight.noalias() += draw[t] * hidden[t].transpose();
        grad->goal_bias += draw[t].rowwise().sum();
        dh.noalias() += p.goal_weight.transpose() * draw[t];
        lstm_step_backward(p.lstm, caches[t], dh, dc, grad->lstm, nullptr);
    }
    return loss;
}

double worker_loss(const Generator &gen, const SequenceBatch &tokens,
                   const std::vector<Matrix> &goal_sums, const Matrix &weights, double alpha,
                   WorkerParams *grad) {
    const auto &cfg = gen.config();
    const auto &p = gen.worker();
    const std::size_t T = cfg.length;
    const auto V = static_cast<Index>(cfg.vocab_size);
    const Index k = cfg.goal_dim;
    const auto B = static_cast<Index>(tokens.rows());
    if (!(alpha > 0.0)) throw Error("worker_loss: temperature must be > 0");
    if (tokens.length() != T || goal_sums.size() != T) throw Error("worker_loss: expected T steps");
    if (weights.rows() != B || weights.cols() != static_cast<Index>(T))
        throw Error("worker_loss: weights must be B x T");
    const double scale = 1.0 / (static_cast<double>(B) * static_cast<double>(T));

    WorkerState state = WorkerState::zeros(cfg, B);
    std::vector<LstmCache> caches(grad ? T : 0);
    std::vector<Matrix> hidden(grad ? T : 0), w_steps(grad ? T : 0), du_steps(grad ? T : 0);
    std::vector<std::vector<TokenId>> inputs(T, std::vector<TokenId>(static_cast<std::size_t>(B), kStart));
    double loss = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        if (t > 0)
            for (Index b = 0; b < B; ++b) inputs[t][static_cast<std::size_t>(b)] = tokens.at(static_cast<std::size_t>(b), t - 1);
        Matrix O = worker_step(gen, inputs[t], state, grad ? &caches[t] : nullptr);
        Matrix w = p.psi * goal_sums[t];
        Matrix du = Matrix::Zero(V, B);
        for (Index b = 0; b < B; ++b) {
            const TokenId y = tokens.at(static_cast<std::size_t>(b), t);
            const double wt = weights(b, static_cast<Index>(t));
            if (y == kPad || wt == 0.0) continue;
            Vector z = token_logits(logit_matrix(O, b, V, k), w.col(b)) / alpha;
            loss -= wt * scale * masked_log_prob(z, y);
            if (grad) {
                Vector dz = masked_softmax(z);
                dz[y] -= 1.0;
                du.col(b) = (wt * scale / alpha) * dz;
            }
        }
        if (grad) {
            hidden[t] = state.lstm.h;
            w_steps[t] = std::move(w);
            du_steps[t] = std::move(du);
        }
    }
    if (!grad) return loss;

    Matrix dh = Matrix::Zero(cfg.worker_hidden, B);
    Matrix dc = Matrix::Zero(cfg.worker_hidden, B);
    Matrix dO(V * k, B), dx;
    for (std::size_t t = T; t-- > 0;) {
        Matrix O = p.out_weight * hidden[t];
        O.colwise() += p.out_bias;
        for (Index b = 0; b < B; ++b) {
            auto Ob = logit_matrix(O, b, V, k);
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dOb(
                dO.col(b).data(), V, k);
            dOb.noalias() = du_steps[t].col(b) * w_steps[t].col(b).transpose();
            Vector dw = Ob.transpose() * du_steps[t].col(b);
            grad->psi.noalias() += dw * goal_sums[t].col(b).transpose();
        }
        grad->out_weight.noalias() += dO * hidden[t].transpose();
        grad->out_bias += dO.rowwise().sum();
        dh.noalias() += p.out_weight.transpose() * dO;
        lstm_step_backward(p.lstm, caches[t], dh, dc, grad->lstm, &dx);
        for (Index b = 0; b < B; ++b) grad->embedding.col(inputs[t][static_cast<std::size_t>(b)]) += dx.col(b);
    }
    return loss;
}

// ---------------------------------------------------------------------------

namespace {

void check_finite(const ParamList &grads, double loss, const std::string &phase, long step) {
    if (!std::isfinite(loss)) throw NonFiniteError(phase, step, "loss");
    for (const auto &g : grads)
        if (!g.map().allFinite()) throw NonFiniteError(phase, step, "gradient of " + g.name);
}

} // namespace

double manager_adv_step(Generator &gen, const std::vector<Matrix> &features, const RewardMatrix &q,
                        Optimizer &opt, long step) {
    ManagerParams grad = gen.manager().zeros_like();
    const double loss = manager_loss(gen, features, q, &grad);
    auto gviews = grad.parameters();
    check_finite(gviews, loss, "manager_adversarial", step);
    opt.step(gen.manager_parameters(), gviews);
    return loss;
}

double worker_adv_step(Generator &gen, const GenerationTrace &trace, const RewardMatrix &rewards,
                       Optimizer &opt, long step) {
    WorkerParams grad = gen.worker().zeros_like();
    const auto sums = goal_sums(trace.goals, gen.config().horizon);
    const double loss =
        worker_loss(gen, trace.tokens, sums, rewards, gen.config().temperature_train, &grad);
    auto gviews = grad.parameters();
    check_finite(gviews, loss, "worker_adversarial", step);
    opt.step(gen.worker_parameters(), gviews);
    return loss;
}

double manager_pretrain_step(Generator &gen, const std::vector<Matrix> &real_features,
                             Optimizer &opt, long step) {
    const Index B = real_features.front().cols();
    Matrix ones = Matrix::Ones(B, static_cast<Index>(gen.config().length));
    ManagerParams grad = gen.manager().zeros_like();
    const double loss = manager_loss(gen, real_features, ones, &grad);
    auto gviews = grad.parameters();
    check_finite(gviews, loss, "manager_pretrain", step);
    opt.step(gen.manager_parameters(), gviews);
    return loss;
}

double manager_pretrain_step(Generator &gen, const FeatureExtractor &fx, const SequenceBatch &real,
                             Optimizer &opt, long step) {
    return manager_pretrain_step(gen, prefix_features(fx, real), opt, step);
}

double worker_mle_step(Generator &gen, const SequenceBatch &real,
                       const std::vector<Matrix> &real_features, Optimizer &opt, long step) {
    const auto sums = goal_sums(manager_goals(gen, real_features), gen.config().horizon);
    Matrix ones = Matrix::Ones(static_cast<Index>(real.rows()), static_cast<Index>(gen.config().length));
    WorkerParams grad = gen.worker().zeros_like();
    const double loss = worker_loss(gen, real, sums, ones, gen.config().temperature_train, &grad);
    auto gviews = grad.parameters();
    check_finite(gviews, loss, "worker_mle", step);
    opt.step(gen.worker_parameters(), gviews);
    return loss;
}

double worker_mle_step(Generator &gen, const FeatureExtractor &fx, const SequenceBatch &real,
                       Optimizer &opt, long step) {
    return worker_mle_step(gen, real, prefix_features(fx, real), opt, step);
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    if (batch_size < 2) throw Error("train: batch_size must be >= 2");
    if (rollout_num < 1) throw Error("train: rollout_num must be >= 1");
    if (!(rescale_delta > 0.0)) throw Error("train: rescale_delta must be > 0");
    if (interleave_period < 1) throw Error("train: interleave_period must be >= 1");
    if (g_steps < 0 || d_steps < 0 || d_epochs < 0) throw Error("train: step counts must be >= 0");
    if (pretrain_rounds < 0 || disc_pretrain_steps < 0 || gen_pretrain_epochs < 0)
        throw Error("train: pre-training budgets must be >= 0");
    if (pretrain_patience < 1) throw Error("train: pretrain_patience must be >= 1");
    if (adversarial_epochs < 0) throw Error("train: adversarial_epochs must be >= 0");
    if (!(gen_optimizer.learning_rate > 0.0) || !(disc_optimizer.learning_rate > 0.0))
        throw Error("train: learning rates must be > 0");
    if (!(adv_gen_lr >= 0.0)) throw Error("train: adv_gen_lr must be >= 0");
}

std::string format_metrics_row(const MetricsRow &row) {
    auto field = [](const std::optional<double> &v) -> std::string {
        if (!v) return "";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.9g", *v);
        return buf;
    };
    return std::to_string(row.epoch) + "," + row.phase + "," + std::to_string(row.step) + "," +
           field(row.loss_d) + "," + field(row.loss_worker) + "," + field(row.loss_manager) + "," +
           field(row.nll_oracle) + "," + field(row.q_mean) + "," + field(row.intrinsic_mean);
}

Trainer::Trainer(TrainConfig config, Generator &gen, Discriminator &disc, SequenceBatch real,
                 const Oracle *oracle)
    : config_(std::move(config)), gen_(gen), disc_(disc), real_(std::move(real)), oracle_(oracle),
      manager_opt_(config_.gen_optimizer), worker_opt_(config_.gen_optimizer),
      disc_opt_(config_.disc_optimizer), dropout_rng_(derive_seed(config_.seed, {kTagDropout})) {
    config_.validate();
    if (real_.rows() == 0) throw Error("train: empty training set");
    if (real_.length() != gen_.config().length || disc_.length() != gen_.config().length)
        throw Error("train: sequence length mismatch between data, generator and discriminator");
    if (disc_.feature_dim() != gen_.config().feature_dim)
        throw Error("train: generator feature_dim does not match the discriminator");
    real_.validate(gen_.config().vocab_size);
}

void Trainer::emit(MetricsRow row) {
    if (sink_) sink_(row);
    result_.rows.push_back(std::move(row));
}

std::vector<std::size_t> Trainer::shuffled(std::size_t n, std::uint64_t salt) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(config_.seed, {kTagShuffle, salt, shuffle_counter_++}));
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    return idx;
}

std::optional<double> Trainer::evaluate_nll() {
    if (!oracle_ || config_.nll_samples == 0) return std::nullopt;
    return eval_nll(gen_, disc_, *oracle_, config_.nll_samples, derive_seed(config_.seed, {kTagEval}))
        .per_sequence;
}

double Trainer::discriminator_epochs(int steps, int epoch_tag, const std::string &phase, long &step) {
    const std::size_t n_fake = config_.d_samples ? config_.d_samples : real_.rows();
    const std::size_t half = std::max<std::size_t>(1, config_.batch_size / 2);
    double last = 0.0;
    for (int s = 0; s < steps; ++s) {
        FeatureExtractor fx(disc_);
        auto fake = generate(gen_, fx, n_fake, GenerationMode::Train,
                             derive_seed(config_.seed, {kTagNegatives, static_cast<std::uint64_t>(disc_step_)}))
                        .tokens;
        double sum = 0.0;
        long batches = 0;
        for (int e = 0; e < config_.d_epochs; ++e) {
            auto ri = shuffled(real_.rows(), 1);
            auto fi = shuffled(fake.rows(), 2);
            const std::size_t n = std::min(ri.size(), fi.size());
            for (std::size_t begin = 0; begin < n; begin += half) {
                const std::size_t end = std::min(n, begin + half);
                std::span<const std::size_t> rs(ri.data() + begin, end - begin);
                std::span<const std::size_t> fs(fi.data() + begin, end - begin);
                auto l = disc_.train_step(real_.gather(rs), fake.gather(fs), disc_opt_, dropout_rng_, disc_step_);
                sum += l.total();
                ++batches;
            }
        }
        ++disc_step_;
        last = batches ? sum / static_cast<double>(batches) : 0.0;
        MetricsRow row;
        row.epoch = epoch_tag;
        row.phase = phase;
        row.step = step++;
        row.loss_d = last;
        emit(row);
    }
    return last;
}

double Trainer::mle_epoch(double *manager_loss_out, long &step) {
    FeatureExtractor fx(disc_);
    // D is frozen for the whole epoch, so real-prefix features are computed once.
    const auto all_features = prefix_features(fx, real_);
    auto order = shuffled(real_.rows(), 3);
    double wsum = 0.0, msum = 0.0;
    long batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
        const std::size_t end = std::min(order.size(), begin + config_.batch_size);
        std::span<const std::size_t> idx(order.data() + begin, end - begin);
        SequenceBatch batch = real_.gather(idx);
        std::vector<Matrix> feats;
        feats.reserve(all_features.size());
        for (const auto &f : all_features) feats.push_back(column_gather(f, idx));
        msum += manager_pretrain_step(gen_, feats, manager_opt_, gen_step_);
        wsum += worker_mle_step(gen_, batch, feats, worker_opt_, gen_step_);
        ++gen_step_;
        ++batches;
    }
    ++step;
    if (manager_loss_out) *manager_loss_out = msum / static_cast<double>(batches);
    return wsum / static_cast<double>(batches);
}

void Trainer::pretrain() {
    long step = 0;
    {
        MetricsRow row;
        row.phase = "init_eval";
        row.nll_oracle = evaluate_nll();
        result_.untrained_nll = row.nll_oracle;
        emit(row);
    }
    int g_epoch = 0;
    for (int round = 1; round <= config_.pretrain_rounds; ++round) {
        discriminator_epochs(config_.disc_pretrain_steps, round, "pretrain_d", step);

        int since_best = 0;
        std::optional<double> round_best;
        std::optional<Generator> best_gen;
        for (int e = 0; e < config_.gen_pretrain_epochs; ++e) {
            double mloss = 0.0;
            MetricsRow row;
            row.loss_worker = mle_epoch(&mloss, step);
            row.loss_manager = mloss;
            row.epoch = ++g_epoch;
            row.phase = "pretrain_g";
            row.step = step - 1;
            row.nll_oracle = evaluate_nll();
            emit(row);

            const double metric = row.nll_oracle ? *row.nll_oracle : *row.loss_worker;
            if (row.nll_oracle && (!result_.pretrain_best_nll || *row.nll_oracle < *result_.pretrain_best_nll))
                result_.pretrain_best_nll = row.nll_oracle;
            if (!round_best || metric < *round_best) {
                round_best = metric;
                since_best = 0;
                if (config_.restore_best) best_gen = gen_;
            } else if (++since_best >= config_.pretrain_patience) {
                break;
            }
        }
        if (best_gen) gen_ = *best_gen;
    }
    if (checkpoint_) checkpoint_("pretrain");
}

void Trainer::adversarial() {
    const auto &cfg = gen_.config();
    long step = 0;
    if (config_.adv_gen_lr > 0) {
        manager_opt_.set_learning_rate(config_.adv_gen_lr);
        worker_opt_.set_learning_rate(config_.adv_gen_lr);
    }
    for (int epoch = 1; epoch <= config_.adversarial_epochs; ++epoch) {
        for (int g = 0; g < config_.g_steps; ++g) {
            FeatureExtractor fx(disc_);
            const auto e = static_cast<std::uint64_t>(epoch), gs = static_cast<std::uint64_t>(g);
            auto trace = generate(gen_, fx, config_.batch_size, GenerationMode::Train,
                                  derive_seed(config_.seed, {kTagAdversarial, e, gs}));
            RewardMatrix q = mc_q_matrix(gen_, fx, discriminator_scorer(fx), trace.tokens,
                                         config_.rollout_num, derive_seed(config_.seed, {kTagRollout, e, gs}));
            RewardMatrix q_fed =
                config_.rescale ? bootstrap_rescale(q, config_.rescale_delta, config_.rescale_activation) : q;
            RewardMatrix ri = intrinsic_rewards(trace.features, trace.goals, cfg.horizon);
            RewardMatrix rw = config_.worker_reward == WorkerReward::Intrinsic ? ri : RewardMatrix(ri.cwiseProduct(q_fed));

            MetricsRow row;
            row.epoch = epoch;
            row.phase = "adv_g";
            row.step = step++;
            row.loss_worker = worker_adv_step(gen_, trace, rw, worker_opt_, gen_step_);
            row.loss_manager = manager_adv_step(gen_, trace.features, q_fed, manager_opt_, gen_step_);
            ++gen_step_;
            row.q_mean = q.mean();
            row.intrinsic_mean = ri.mean();
            emit(row);
        }

        if (epoch % config_.interleave_period == 0) {
            double mloss = 0.0;
            MetricsRow row;
            row.epoch = epoch;
            row.phase = "adv_mle";
            row.loss_worker = mle_epoch(&mloss, step);
            row.step = step - 1;
            row.loss_manager = mloss;
            emit(row);
        }

        discriminator_epochs(config_.d_steps, epoch, "adv_d", step);

        MetricsRow eval;
        eval.epoch = epoch;
        eval.phase = "adv_eval";
        eval.step = step++;
        eval.nll_oracle = evaluate_nll();
        if (eval.nll_oracle) {
            const double v = *eval.nll_oracle;
            if (!result_.adversarial_best_nll || v < *result_.adversarial_best_nll) result_.adversarial_best_nll = v;
            if (!result_.adversarial_worst_nll || v > *result_.adversarial_worst_nll) result_.adversarial_worst_nll = v;
        }
        emit(eval);

        if (checkpoint_ && checkpoint_interval_ > 0 && epoch % checkpoint_interval_ == 0)
            checkpoint_("adv_epoch_" + std::to_string(epoch));
    }
    if (checkpoint_) checkpoint_("final");
}

TrainResult Trainer::run() {
    pretrain();
    adversarial();
    return result_;
}

} // namespace leakgan
