#include "leakgan/generator.hpp"

#include <cmath>

namespace leakgan {

void GeneratorConfig::validate() const {
    if (vocab_size <= static_cast<std::size_t>(kFirstRealToken))
        throw Error("generator: vocabulary needs at least one real token");
    if (length < 1) throw Error("generator: T must be >= 1");
    if (feature_dim < 1) throw Error("generator: feature_dim must be >= 1");
    if (embedding_dim < 1 || worker_hidden < 1 || manager_hidden < 1 || goal_dim < 1)
        throw Error("generator: dimensions must be >= 1");
    if (horizon < 1) throw Error("generator: goal horizon c must be >= 1");
    if (!(temperature_train > 0.0) || !(temperature_sample > 0.0))
        throw Error("generator: temperatures must be > 0");
}

ParamList ManagerParams::parameters() {
    ParamList out;
    lstm.append_params(out, "manager.lstm");
    add_param(out, "manager.goal_weight", goal_weight);
    add_param(out, "manager.goal_bias", goal_bias);
    return out;
}

ManagerParams ManagerParams::zeros_like() const {
    ManagerParams z;
    z.lstm = LstmParams(lstm.input_size(), lstm.hidden_size());
    z.goal_weight = Matrix::Zero(goal_weight.rows(), goal_weight.cols());
    z.goal_bias = Vector::Zero(goal_bias.size());
    return z;
}

ParamList WorkerParams::parameters() {
    ParamList out;
    add_param(out, "worker.embedding", embedding);
    lstm.append_params(out, "worker.lstm");
    add_param(out, "worker.out_weight", out_weight);
    add_param(out, "worker.out_bias", out_bias);
    add_param(out, "worker.psi", psi);
    return out;
}

WorkerParams WorkerParams::zeros_like() const {
    WorkerParams z;
    z.embedding = Matrix::Zero(embedding.rows(), embedding.cols());
    z.lstm = LstmParams(lstm.input_size(), lstm.hidden_size());
    z.out_weight = Matrix::Zero(out_weight.rows(), out_weight.cols());
    z.out_bias = Vector::Zero(out_bias.size());
    z.psi = Matrix::Zero(psi.rows(), psi.cols());
    return z;
}

Generator::Generator(GeneratorConfig config) : config_(config) {
    config_.validate();
    const auto V = static_cast<Index>(config_.vocab_size);
    const Index k = config_.goal_dim;
    manager_.lstm = LstmParams(config_.feature_dim, config_.manager_hidden);
    manager_.goal_weight = Matrix::Zero(k, config_.manager_hidden);
    manager_.goal_bias = Vector::Zero(k);
    worker_.embedding = Matrix::Zero(config_.embedding_dim, V);
    worker_.lstm = LstmParams(config_.embedding_dim, config_.worker_hidden);
    worker_.out_weight = Matrix::Zero(V * k, config_.worker_hidden);
    worker_.out_bias = Vector::Zero(V * k);
    worker_.psi = Matrix::Zero(k, k);
}

Generator Generator::init(GeneratorConfig config, std::uint64_t seed) {
    Generator g(config);
    Rng rng(seed);
    fill_normal(g.manager_.lstm.weight, rng, 0.1);
    fill_normal(g.manager_.goal_weight, rng, 0.1);
    fill_normal(g.worker_.embedding, rng, 0.1);
    fill_normal(g.worker_.lstm.weight, rng, 0.1);
    fill_normal(g.worker_.out_weight, rng, 0.1);
    fill_normal(g.worker_.psi, rng, 0.1);
    return g;
}

ParamList Generator::parameters() {
    ParamList out = manager_.parameters();
    for (auto &p : worker_.parameters()) out.push_back(p);
    return out;
}

ManagerState ManagerState::zeros(const GeneratorConfig &config, Index batch) {
    ManagerState s;
    s.lstm = LstmState::zeros(config.manager_hidden, batch);
    for (int i = 0; i < config.horizon; ++i) s.goals.push_back(Matrix::Zero(config.goal_dim, batch));
    return s;
}

WorkerState WorkerState::zeros(const GeneratorConfig &config, Index batch) {
    return {LstmState::zeros(config.worker_hidden, batch)};
}

Vector normalize_goal(const Eigen::Ref<const Vector> &raw, bool *degenerate) {
    const double n = raw.norm();
    const bool zero = !(n >= kDegenerateGoalNorm);
    if (degenerate) *degenerate = zero;
    if (zero) return Vector::Zero(raw.size());
    return raw / n;
}

Matrix manager_step(const Generator &gen, const Eigen::Ref<const Matrix> &features,
                    ManagerState &state, Matrix *raw_goals, LstmCache *cache) {
    const auto &p = gen.manager();
    if (features.rows() != p.lstm.input_size())
        throw Error("manager: feature dimension " + std::to_string(features.rows()) +
                    " != d_f=" + std::to_string(p.lstm.input_size()));
    state.lstm = lstm_step(p.lstm, features, state.lstm, cache);
    Matrix raw = p.goal_weight * state.lstm.h;
    raw.colwise() += p.goal_bias;
    Matrix goals(raw.rows(), raw.cols());
    for (Index b = 0; b < raw.cols(); ++b) {
        bool degenerate = false;
        goals.col(b) = normalize_goal(raw.col(b), &degenerate);
        state.degenerate_goals += degenerate;
    }
    state.goals.push_front(goals);
    state.goals.pop_back();
    if (raw_goals) *raw_goals = std::move(raw);
    return goals;
}

Matrix goal_embedding(const Matrix &psi, const std::deque<Matrix> &history) {
    if (history.empty()) throw Error("goal_embedding: empty goal history");
    Matrix sum = history.front();
    for (std::size_t i = 1; i < history.size(); ++i) sum += history[i];
    return psi * sum;
}

Matrix worker_step(const Generator &gen, std::span<const TokenId> inputs, WorkerState &state,
                   LstmCache *cache) {
    const auto &p = gen.worker();
    Matrix x(p.embedding.rows(), static_cast<Index>(inputs.size()));
    for (std::size_t b = 0; b < inputs.size(); ++b) {
        if (inputs[b] < 0 || inputs[b] >= p.embedding.cols())
            throw Error("worker: token id " + std::to_string(inputs[b]) + " out of range");
        x.col(static_cast<Index>(b)) = p.embedding.col(inputs[b]);
    }
    state.lstm = lstm_step(p.lstm, x, state.lstm, cache);
    Matrix O = p.out_weight * state.lstm.h;
    O.colwise() += p.out_bias;
    return O;
}

Vector token_logits(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                         Eigen::RowMajor>> &O,
                    const Eigen::Ref<const Vector> &w) {
    return O * w;
}

Vector action_distribution(const Eigen::Ref<const Vector> &logits, double alpha) {
    if (!(alpha > 0.0)) throw Error("action_distribution: temperature must be > 0");
    return masked_softmax(logits / alpha);
}

Vector action_distribution(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic,
                                                                Eigen::Dynamic, Eigen::RowMajor>> &O,
                           const Eigen::Ref<const Vector> &w, double alpha) {
    return action_distribution(token_logits(O, w), alpha);
}

// ---------------------------------------------------------------------------

RolloutState RolloutState::start(const GeneratorConfig &config, std::size_t batch) {
    RolloutState s;
    s.tokens = SequenceBatch(batch, config.length, kPad);
    s.manager = ManagerState::zeros(config, static_cast<Index>(batch));
    s.worker = WorkerState::zeros(config, static_cast<Index>(batch));
    return s;
}

void advance(const Generator &gen, const FeatureExtractor &fx, RolloutState &state, double alpha,
             const SequenceBatch *forced, GenerationTrace *trace, bool keep_logit_matrices) {
    const auto &cfg = gen.config();
    const std::size_t B = state.tokens.rows();
    const std::size_t t = state.t;
    if (t >= cfg.length) throw Error("advance: sequence already complete");
    if (!forced && state.rngs.size() != B) throw Error("advance: one RNG per row required");

    Matrix f(cfg.feature_dim, static_cast<Index>(B));
    for (std::size_t b = 0; b < B; ++b)
        f.col(static_cast<Index>(b)) = fx.leak(state.tokens[b].first(t));

    const long before = state.manager.degenerate_goals;
    Matrix g = manager_step(gen, f, state.manager);
    Matrix w = goal_embedding(gen.worker().psi, state.manager.goals);

    std::vector<TokenId> inputs(B, kStart);
    if (t > 0)
        for (std::size_t b = 0; b < B; ++b) inputs[b] = state.tokens.at(b, t - 1);
    Matrix O = worker_step(gen, inputs, state.worker);

    const auto V = static_cast<Index>(cfg.vocab_size);
    const Index k = cfg.goal_dim;
    Vector lp(static_cast<Index>(B));
    for (std::size_t b = 0; b < B; ++b) {
        const auto bi = static_cast<Index>(b);
        Vector logits = token_logits(logit_matrix(O, bi, V, k), w.col(bi)) / alpha;
        TokenId x;
        if (forced) {
            x = forced->at(b, t);
        } else {
            Vector p = masked_softmax(logits);
            x = static_cast<TokenId>(sample_categorical(p, uniform01(state.rngs[b])));
        }
        lp[bi] = x == kPad ? 0.0 : masked_log_prob(logits, x);
        state.tokens.at(b, t) = x;
    }
    state.t = t + 1;

    if (trace) {
        trace->features.push_back(std::move(f));
        trace->goals.push_back(std::move(g));
        trace->goal_embeddings.push_back(std::move(w));
        if (keep_logit_matrices) trace->logit_matrices.push_back(std::move(O));
        trace->log_probs.col(static_cast<Index>(t)) = lp;
        trace->degenerate_goals += state.manager.degenerate_goals - before;
    }
}

namespace {

void finish_trace(const FeatureExtractor &fx, const RolloutState &state, GenerationTrace &trace) {
    trace.tokens = state.tokens;
    trace.features.push_back(fx.leak(state.tokens));
}

} // namespace

GenerationTrace generate(const Generator &gen, const FeatureExtractor &fx, std::size_t batch,
                         GenerationMode mode, std::uint64_t seed, bool keep_logit_matrices) {
    const auto &cfg = gen.config();
    const double alpha = mode == GenerationMode::Train ? cfg.temperature_train : cfg.temperature_sample;
    RolloutState state = RolloutState::start(cfg, batch);
    for (std::size_t b = 0; b < batch; ++b) state.rngs.emplace_back(derive_seed(seed, {b}));
    GenerationTrace trace;
    trace.log_probs = Matrix::Zero(static_cast<Index>(batch), static_cast<Index>(cfg.length));
    while (state.t < cfg.length) advance(gen, fx, state, alpha, nullptr, &trace, keep_logit_matrices);
    finish_trace(fx, state, trace);
    return trace;
}

GenerationTrace generate(const Generator &gen, const Discriminator &disc, std::size_t batch,
                         GenerationMode mode, std::uint64_t seed, bool keep_logit_matrices) {
    FeatureExtractor fx(disc);
    return generate(gen, fx, batch, mode, seed, keep_logit_matrices);
}

RolloutState replay_prefix(const Generator &gen, const FeatureExtractor &fx,
                           const SequenceBatch &batch, std::size_t t) {
    const auto &cfg = gen.config();
    if (t > cfg.length) throw Error("replay_prefix: t exceeds T");
    if (batch.length() != cfg.length) throw Error("replay_prefix: batch length != T");
    RolloutState state = RolloutState::start(cfg, batch.rows());
    while (state.t < t) advance(gen, fx, state, cfg.temperature_train, &batch);
    return state;
}

TokenSequence rollout_continue(const Generator &gen, const Discriminator &disc,
                               std::span<const TokenId> prefix, std::size_t t, std::uint64_t seed) {
    const auto &cfg = gen.config();
    if (t > cfg.length) throw Error("rollout_continue: t exceeds T");
    if (prefix.size() < t) throw Error("rollout_continue: prefix shorter than t");
    SequenceBatch one(1, cfg.length, kPad);
    std::copy(prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(t), one[0].begin());
    one.validate(cfg.vocab_size);

    FeatureExtractor fx(disc);
    RolloutState state = replay_prefix(gen, fx, one, t);
    state.rngs.assign(1, Rng(seed));
    while (state.t < cfg.length) advance(gen, fx, state, cfg.temperature_train);
    auto row = state.tokens[0];
    return {row.begin(), row.end()};
}

std::vector<Matrix> prefix_features(const FeatureExtractor &fx, const SequenceBatch &batch) {
    const std::size_t T = batch.length();
    std::vector<Matrix> out;
    out.reserve(T + 1);
    for (std::size_t t = 0; t <= T; ++t) {
        Matrix f(fx.discriminator().feature_dim(), static_cast<Index>(batch.rows()));
        for (std::size_t b = 0; b < batch.rows(); ++b)
            f.col(static_cast<Index>(b)) = fx.leak(batch[b].first(t));
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<Matrix> manager_goals(const Generator &gen, const std::vector<Matrix> &features) {
    const std::size_t T = gen.config().length;
    if (features.size() < T) throw Error("manager_goals: need at least T feature steps");
    ManagerState state = ManagerState::zeros(gen.config(), features.front().cols());
    std::vector<Matrix> goals;
    goals.reserve(T);
    for (std::size_t t = 0; t < T; ++t) goals.push_back(manager_step(gen, features[t], state));
    return goals;
}

std::vector<Matrix> goal_sums(const std::vector<Matrix> &goals, int horizon) {
    std::vector<Matrix> out;
    out.reserve(goals.size());
    for (std::size_t t = 0; t < goals.size(); ++t) {
        Matrix s = goals[t];
        for (int i = 1; i < horizon && static_cast<std::size_t>(i) <= t; ++i) s += goals[t - static_cast<std::size_t>(i)];
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace leakgan
