#include <doctest.h>

#include <cmath>

#include "leakgan/generator.hpp"

using namespace leakgan;

namespace {

ConvSpec toy_spec() {
    ConvSpec s;
    s.windows = {{1, 2}, {2, 2}, {3, 2}};
    s.embedding_dim = 4;
    return s;
}

GeneratorConfig toy_config(std::size_t vocab = 8, std::size_t T = 6) {
    GeneratorConfig c;
    c.vocab_size = vocab;
    c.length = T;
    c.feature_dim = 6;
    c.embedding_dim = 5;
    c.worker_hidden = 6;
    c.manager_hidden = 5;
    c.goal_dim = 4;
    c.horizon = 2;
    return c;
}

double entropy(const Vector &p) {
    double h = 0;
    for (Index i = 0; i < p.size(); ++i)
        if (p[i] > 0) h -= p[i] * std::log(p[i]);
    return h;
}

} // namespace

TEST_CASE("goal normalization") {
    Vector g(2);
    g << 3, 4;
    Vector u = normalize_goal(g);
    CHECK(u[0] == doctest::Approx(0.6));
    CHECK(u[1] == doctest::Approx(0.8));

    bool degenerate = false;
    CHECK(normalize_goal(Vector::Zero(2), &degenerate).isZero(0));
    CHECK(degenerate);

    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        Vector r(16);
        fill_normal(r, rng, 1.0);
        CHECK(std::abs(normalize_goal(r).norm() - 1.0) < 1e-9);
    }
}

TEST_CASE("goal embedding sums the history through psi") {
    std::deque<Matrix> one = {Matrix::Constant(3, 1, 0.5)};
    Matrix I = Matrix::Identity(3, 3);
    CHECK(goal_embedding(I, one) == one.front());

    std::deque<Matrix> zeros(4, Matrix::Zero(3, 2));
    CHECK(goal_embedding(I, zeros).isZero(0));

    std::deque<Matrix> two = {Matrix::Constant(3, 1, 1.0), Matrix::Constant(3, 1, 2.0)};
    Matrix psi = 2 * I;
    CHECK(goal_embedding(psi, two) == Matrix::Constant(3, 1, 6.0));
}

TEST_CASE("worker output shape and zero projection") {
    auto cfg = toy_config(10);
    Generator gen(cfg);
    gen.worker().embedding.setRandom();
    WorkerState s = WorkerState::zeros(cfg, 2);
    std::vector<TokenId> in = {kStart, 5};
    Matrix O = worker_step(gen, in, s);
    CHECK(O.rows() == 40);
    CHECK(O.cols() == 2);
    CHECK(O.isZero(0));
    auto view = logit_matrix(O, 1, 10, 4);
    CHECK(view.rows() == 10);
    CHECK(view.cols() == 4);
}

TEST_CASE("action distribution") {
    Vector zero = Vector::Zero(5);
    Vector p = action_distribution(zero, 1.0);
    CHECK(p[kPad] == 0.0);
    CHECK(p[kStart] == 0.0);
    for (Index i = 2; i < 5; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3));

    Vector two(4);
    two << 0, 0, 1, 0;
    Vector q = action_distribution(two, 1.0);
    CHECK(q[2] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(q[3] == doctest::Approx(0.2689).epsilon(1e-4));

    CHECK_THROWS_AS(action_distribution(two, 0.0), Error);
    CHECK_THROWS_AS(action_distribution(two, -1.0), Error);

    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        Vector z(12);
        fill_normal(z, rng, 2.0);
        Vector cold = action_distribution(z, 0.5), warm = action_distribution(z, 1.0), hot = action_distribution(z, 2.0);
        Index a = 0, b = 0;
        cold.maxCoeff(&a);
        hot.maxCoeff(&b);
        CHECK(a == b);
        CHECK(std::abs(cold.sum() - 1.0) < 1e-9);
        CHECK(entropy(cold) <= entropy(warm) + 1e-12);
        CHECK(entropy(warm) <= entropy(hot) + 1e-12);
    }

    Matrix O(3, 2);
    O << 0, 0, 0, 0, 1, 2;
    Vector w(2);
    w << 1, 1;
    CHECK(token_logits(O, w)[2] == 3.0);
}

TEST_CASE("generate: shape, determinism, traces") {
    auto cfg = toy_config();
    auto gen = Generator::init(cfg, 3);
    auto disc = Discriminator::init(toy_spec(), cfg.vocab_size, cfg.length, 4);

    auto a = generate(gen, disc, 5, GenerationMode::Sample, 77);
    auto b = generate(gen, disc, 5, GenerationMode::Sample, 77);
    auto c = generate(gen, disc, 5, GenerationMode::Sample, 78);
    CHECK(a.tokens == b.tokens);
    CHECK_FALSE(a.tokens == c.tokens);
    CHECK(a.tokens.rows() == 5);
    CHECK(a.tokens.length() == cfg.length);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t t = 0; t < cfg.length; ++t) {
            CHECK(a.tokens.at(r, t) >= kFirstRealToken);
            CHECK(a.tokens.at(r, t) < static_cast<TokenId>(cfg.vocab_size));
        }

    CHECK(a.features.size() == cfg.length + 1);
    CHECK(a.goals.size() == cfg.length);
    CHECK(a.goal_embeddings.size() == cfg.length);
    CHECK(a.logit_matrices.size() == cfg.length);
    for (const auto &g : a.goals)
        for (Index r = 0; r < g.cols(); ++r) {
            const double n = g.col(r).norm();
            CHECK((n == 0.0 || std::abs(n - 1.0) < 1e-9));
        }

    // f_0 is the all-PAD feature; f_T the completed sentence.
    FeatureExtractor fx(disc);
    CHECK(a.features[0].col(0) == fx.leak(std::span<const TokenId>{}));
    CHECK(a.features[cfg.length].col(2) == fx.leak(a.tokens[2]));

    // Logged log-probs match the action distribution at the sampling temperature.
    const auto &O = a.logit_matrices[1];
    Vector p = action_distribution(logit_matrix(O, 0, 8, 4), a.goal_embeddings[1].col(0), cfg.temperature_sample);
    CHECK(a.log_probs(0, 1) == doctest::Approx(std::log(p[a.tokens.at(0, 1)])).epsilon(1e-12));
}

TEST_CASE("a single usable token forces a constant sequence") {
    auto cfg = toy_config(3);
    auto gen = Generator::init(cfg, 1);
    auto disc = Discriminator::init(toy_spec(), 3, cfg.length, 1);
    auto out = generate(gen, disc, 4, GenerationMode::Train, 9);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t t = 0; t < cfg.length; ++t) CHECK(out.tokens.at(r, t) == kFirstRealToken);
    CHECK(out.log_probs.isZero(0));
}

TEST_CASE("rollout_continue") {
    auto cfg = toy_config();
    auto gen = Generator::init(cfg, 3);
    auto disc = Discriminator::init(toy_spec(), cfg.vocab_size, cfg.length, 4);

    TokenSequence prefix = {2, 3, 4, 5, 6, 7};
    CHECK(rollout_continue(gen, disc, prefix, cfg.length, 1) == prefix);

    auto full = rollout_continue(gen, disc, prefix, 2, 11);
    CHECK(full[0] == 2);
    CHECK(full[1] == 3);

    // From t = 0 a rollout is a train-mode generation of one row.
    auto g = generate(gen, disc, 1, GenerationMode::Train, 55);
    auto r = rollout_continue(gen, disc, {}, 0, derive_seed(55, {0}));
    CHECK(TokenSequence(g.tokens[0].begin(), g.tokens[0].end()) == r);

    // A policy that always puts all mass on token 5.
    gen.manager().goal_weight.setZero();
    gen.manager().goal_bias.setZero();
    gen.manager().goal_bias[0] = 1.0;
    gen.worker().psi.setIdentity();
    gen.worker().out_weight.setZero();
    gen.worker().out_bias.setZero();
    gen.worker().out_bias[5 * cfg.goal_dim + 0] = 100.0;
    auto one = rollout_continue(gen, disc, prefix, 2, 1);
    auto two = rollout_continue(gen, disc, prefix, 2, 999);
    CHECK(one == two);
    for (std::size_t t = 2; t < cfg.length; ++t) CHECK(one[t] == 5);
}

TEST_CASE("replayed prefix states match the generation states") {
    auto cfg = toy_config();
    auto gen = Generator::init(cfg, 3);
    auto disc = Discriminator::init(toy_spec(), cfg.vocab_size, cfg.length, 4);
    FeatureExtractor fx(disc);
    auto trace = generate(gen, fx, 3, GenerationMode::Train, 5);
    auto state = replay_prefix(gen, fx, trace.tokens, 3);
    CHECK(state.t == 3);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t t = 0; t < 3; ++t) CHECK(state.tokens.at(r, t) == trace.tokens.at(r, t));
    CHECK(state.manager.goals.front() == trace.goals[2]);

    auto feats = prefix_features(fx, trace.tokens);
    REQUIRE(feats.size() == trace.features.size());
    for (std::size_t t = 0; t < feats.size(); ++t) CHECK(feats[t] == trace.features[t]);
    auto goals = manager_goals(gen, feats);
    for (std::size_t t = 0; t < goals.size(); ++t) CHECK(goals[t] == trace.goals[t]);
    auto sums = goal_sums(goals, cfg.horizon);
    for (std::size_t t = 0; t < sums.size(); ++t) CHECK(gen.worker().psi * sums[t] == trace.goal_embeddings[t]);
}
