#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "gradcheck.hpp"
#include "leakgan/training.hpp"

using namespace leakgan;
using leakgan::testing::check_gradient;

namespace {

ConvSpec toy_spec() {
    ConvSpec s;
    s.windows = {{1, 2}, {2, 2}, {3, 2}};
    s.embedding_dim = 4;
    return s;
}

GeneratorConfig toy_config(std::size_t vocab = 8, std::size_t T = 6, int horizon = 2) {
    GeneratorConfig c;
    c.vocab_size = vocab;
    c.length = T;
    c.feature_dim = 6;
    c.embedding_dim = 5;
    c.worker_hidden = 6;
    c.manager_hidden = 5;
    c.goal_dim = 4;
    c.horizon = horizon;
    return c;
}

std::vector<Matrix> random_features(std::size_t steps, Index d, Index B, Rng &rng) {
    std::vector<Matrix> f(steps, Matrix(d, B));
    for (auto &m : f) fill_normal(m, rng, 1.0);
    return f;
}

SequenceBatch random_tokens(std::size_t B, std::size_t T, std::size_t vocab, Rng &rng) {
    SequenceBatch b(B, T);
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t t = 0; t < T; ++t) b.at(r, t) = kFirstRealToken + static_cast<TokenId>(rng() % (vocab - 2));
    return b;
}

} // namespace

TEST_CASE("bootstrap rescale matches the worked example") {
    RewardMatrix r(4, 1);
    r << 0.9, 0.1, 0.5, 0.7;
    auto out = bootstrap_rescale(r, 12.0, RescaleActivation::Sigmoid);
    CHECK(out(0) == doctest::Approx(0.95257).epsilon(1e-5));
    CHECK(out(1) == doctest::Approx(0.00247).epsilon(1e-3));
    CHECK(std::abs(out(1) - 0.00247) < 1e-5);
    CHECK(std::abs(out(2) - 0.04743) < 1e-5);
    CHECK(std::abs(out(3) - 0.50000) < 1e-5);

    auto id = bootstrap_rescale(r, 12.0, RescaleActivation::Identity);
    CHECK(id(0) == doctest::Approx(3.0));
    CHECK(id(1) == doctest::Approx(-6.0));
}

TEST_CASE("bootstrap rescale: single row, ties, equivariance, moments") {
    RewardMatrix one(1, 3);
    one << 0.2, 5.0, -1.0;
    for (Index t = 0; t < 3; ++t) CHECK(bootstrap_rescale(one, 12, RescaleActivation::Sigmoid)(0, t) == sigmoid(-6.0));

    RewardMatrix tie(3, 1);
    tie << 0.5, 0.5, 0.1;
    auto tied = bootstrap_rescale(tie, 12, RescaleActivation::Sigmoid);
    CHECK(tied(0) > tied(1)); // earlier row ranks higher

    Rng rng(3);
    RewardMatrix r(16, 100);
    fill_normal(r, rng, 1.0);
    auto out = bootstrap_rescale(r, 12, RescaleActivation::Sigmoid);
    const double mean0 = out.col(0).mean();
    const double var0 = (out.col(0).array() - mean0).square().mean();
    for (Index t = 1; t < 100; ++t) {
        const double m = out.col(t).mean();
        CHECK(std::abs(m - mean0) < 1e-12);
        CHECK(std::abs((out.col(t).array() - m).square().mean() - var0) < 1e-12);
        for (Index i = 0; i < 16; ++i)
            for (Index j = 0; j < 16; ++j)
                if (r(i, t) > r(j, t)) CHECK(out(i, t) >= out(j, t));
    }

    std::vector<Index> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    RewardMatrix shuffled(16, 1);
    for (Index i = 0; i < 16; ++i) shuffled(i) = r(perm[i], 0);
    auto a = bootstrap_rescale(shuffled, 12, RescaleActivation::Sigmoid);
    for (Index i = 0; i < 16; ++i) CHECK(a(i) == out(perm[i], 0));
}

TEST_CASE("intrinsic reward fixed points and bounds") {
    const int c = 3;
    const std::size_t t = 5;
    Rng rng(2);
    std::vector<Vector> goals(t, Vector(4));
    for (auto &g : goals) {
        fill_normal(g, rng, 1.0);
        g.normalize();
    }
    auto features_with = [&](double sign) {
        std::vector<Vector> f(t + 1, Vector::Zero(4));
        fill_normal(f[t], rng, 1.0);
        for (int i = 1; i <= c; ++i) f[t - i] = f[t] - sign * (0.5 + i) * goals[t - i];
        return f;
    };
    auto aligned = features_with(1.0);
    CHECK(intrinsic_reward(aligned, goals, t, c) == doctest::Approx(1.0).epsilon(1e-12));
    auto anti = features_with(-1.0);
    CHECK(intrinsic_reward(anti, goals, t, c) == doctest::Approx(-1.0).epsilon(1e-12));

    std::vector<Vector> e(t, Vector::Zero(4));
    for (auto &g : e) g[0] = 1.0;
    std::vector<Vector> ortho(t + 1, Vector::Zero(4));
    for (std::size_t j = 0; j <= t; ++j) ortho[j][1] = static_cast<double>(j);
    CHECK(intrinsic_reward(ortho, e, t, c) == 0.0);

    // Terms before step 0 are zero, so early rewards are capped.
    CHECK(intrinsic_reward(aligned, goals, 1, c) <= 1.0 / c + 1e-12);

    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Vector> f(t + 1, Vector(4)), g(t, Vector(4));
        for (auto &v : f) fill_normal(v, rng, 1.0);
        for (auto &v : g) fill_normal(v, rng, 1.0);
        const double r = intrinsic_reward(f, g, t, c);
        CHECK(r >= -1.0);
        CHECK(r <= 1.0);
    }

    CHECK(cosine_similarity(Vector::Zero(3), Vector::Ones(3)) == 0.0);
    CHECK(cosine_similarity(Vector::Ones(3), Vector::Zero(3)) == 0.0);
}

TEST_CASE("batched intrinsic rewards agree with the scalar form") {
    Rng rng(4);
    auto f = random_features(7, 5, 3, rng);
    auto g = random_features(6, 5, 3, rng);
    auto R = intrinsic_rewards(f, g, 2);
    for (Index b = 0; b < 3; ++b) {
        std::vector<Vector> fb, gb;
        for (auto &m : f) fb.push_back(m.col(b));
        for (auto &m : g) gb.push_back(m.col(b));
        for (std::size_t t = 1; t <= 6; ++t)
            CHECK(R(b, static_cast<Index>(t - 1)) == doctest::Approx(intrinsic_reward(fb, gb, t, 2)).epsilon(1e-14));
    }
}

TEST_CASE("Monte Carlo Q estimates") {
    auto cfg = toy_config();
    auto gen = Generator::init(cfg, 3);
    auto disc = Discriminator::init(toy_spec(), cfg.vocab_size, cfg.length, 4);
    FeatureExtractor fx(disc);
    Rng rng(1);
    auto batch = random_tokens(4, cfg.length, cfg.vocab_size, rng);

    SequenceScorer constant = [](const SequenceBatch &b) { return Vector::Constant(static_cast<Index>(b.rows()), 0.7); };
    for (int n : {1, 3, 8})
        for (std::size_t t = 1; t <= cfg.length; ++t)
            CHECK(mc_q_estimate(gen, fx, constant, batch, t, n, 5) == Vector::Constant(4, 0.7));

    auto score = discriminator_scorer(fx);
    CHECK(mc_q_estimate(gen, fx, score, batch, cfg.length, 4, 1) == disc.classify(batch));
    CHECK_THROWS_AS(mc_q_estimate(gen, fx, score, batch, 0, 4, 1), Error);

    auto Q = mc_q_matrix(gen, fx, score, batch, 3, 21);
    for (std::size_t t = 1; t <= cfg.length; ++t)
        CHECK((Q.col(static_cast<Index>(t - 1)) - mc_q_estimate(gen, fx, score, batch, t, 3, 21)).cwiseAbs().maxCoeff() < 1e-14);

    // A deterministic policy makes every rollout identical.
    gen.manager().goal_weight.setZero();
    gen.manager().goal_bias.setZero();
    gen.manager().goal_bias[0] = 1.0;
    gen.worker().psi.setIdentity();
    gen.worker().out_weight.setZero();
    gen.worker().out_bias.setZero();
    gen.worker().out_bias[3 * cfg.goal_dim] = 100.0;
    for (std::size_t t = 1; t < cfg.length; ++t)
        CHECK((mc_q_estimate(gen, fx, score, batch, t, 1, 9) - mc_q_estimate(gen, fx, score, batch, t, 16, 10))
                  .cwiseAbs()
                  .maxCoeff() < 1e-14);
}

TEST_CASE("Manager loss gradient matches central differences") {
    auto cfg = toy_config(8, 6, 2);
    auto gen = Generator::init(cfg, 5);
    Rng rng(7);
    fill_normal(gen.manager().goal_bias, rng, 0.1);
    auto feats = random_features(cfg.length + 1, cfg.feature_dim, 3, rng);
    Matrix q(3, static_cast<Index>(cfg.length));
    fill_normal(q, rng, 1.0);

    auto grad = gen.manager().zeros_like();
    manager_loss(gen, feats, q, &grad);
    auto res = check_gradient(gen.manager_parameters(), grad.parameters(),
                              [&] { return manager_loss(gen, feats, q, nullptr); });
    CHECK(res.relative_error < 1e-6);
    CHECK(res.worst_entry < 1e-4);
}

TEST_CASE("Worker loss gradient matches central differences") {
    auto cfg = toy_config(8, 6, 2);
    auto gen = Generator::init(cfg, 6);
    Rng rng(8);
    fill_normal(gen.worker().out_bias, rng, 0.1);
    fill_normal(gen.worker().lstm.bias, rng, 0.1);
    auto tokens = random_tokens(3, cfg.length, cfg.vocab_size, rng);
    tokens.at(2, 5) = kPad; // padded target is skipped
    auto sums = random_features(cfg.length, cfg.goal_dim, 3, rng);
    Matrix weights(3, static_cast<Index>(cfg.length));
    fill_normal(weights, rng, 1.0);

    auto grad = gen.worker().zeros_like();
    worker_loss(gen, tokens, sums, weights, 1.5, &grad);
    auto res = check_gradient(gen.worker_parameters(), grad.parameters(),
                              [&] { return worker_loss(gen, tokens, sums, weights, 1.5, nullptr); });
    CHECK(res.relative_error < 1e-6);
    CHECK(res.worst_entry < 1e-4);
}

TEST_CASE("degenerate rewards give zero updates") {
    auto cfg = toy_config();
    auto gen = Generator::init(cfg, 5);
    Rng rng(9);
    auto feats = random_features(cfg.length + 1, cfg.feature_dim, 2, rng);

    auto g0 = gen.manager().zeros_like();
    manager_loss(gen, feats, Matrix::Zero(2, 6), &g0);
    for (const auto &v : g0.parameters()) CHECK(v.map().isZero(0));

    std::vector<Matrix> flat(cfg.length + 1, feats[0]);
    auto g1 = gen.manager().zeros_like();
    CHECK(manager_loss(gen, flat, Matrix::Ones(2, 6), &g1) == 0.0);
    for (const auto &v : g1.parameters()) CHECK(v.map().isZero(0));

    auto tokens = random_tokens(2, cfg.length, cfg.vocab_size, rng);
    auto sums = random_features(cfg.length, cfg.goal_dim, 2, rng);
    auto g2 = gen.worker().zeros_like();
    CHECK(worker_loss(gen, tokens, sums, Matrix::Zero(2, 6), 1.5, &g2) == 0.0);
    for (const auto &v : g2.parameters()) CHECK(v.map().isZero(0));

    auto single = Generator::init(toy_config(3), 1);
    SequenceBatch only(2, 6, kFirstRealToken);
    auto g3 = single.worker().zeros_like();
    CHECK(worker_loss(single, only, sums, Matrix::Ones(2, 6), 1.5, &g3) == 0.0);
    for (const auto &v : g3.parameters()) CHECK(v.map().norm() < 1e-15);
}

TEST_CASE("worker loss reproduces the sampled log-probabilities") {
    auto cfg = toy_config();
    auto gen = Generator::init(cfg, 2);
    auto disc = Discriminator::init(toy_spec(), cfg.vocab_size, cfg.length, 3);
    auto trace = generate(gen, disc, 4, GenerationMode::Sample, 1);
    const double loss = worker_loss(gen, trace.tokens, goal_sums(trace.goals, cfg.horizon), Matrix::Ones(4, 6),
                                    cfg.temperature_sample, nullptr);
    CHECK(loss == doctest::Approx(-trace.log_probs.mean()).epsilon(1e-12));
}

TEST_CASE("MLE loss closed forms") {
    auto cfg = toy_config(10);
    Generator uniform(cfg); // zero output layer: uniform over the 8 real tokens
    Rng rng(1);
    auto tokens = random_tokens(3, cfg.length, cfg.vocab_size, rng);
    auto sums = random_features(cfg.length, cfg.goal_dim, 3, rng);
    CHECK(worker_loss(uniform, tokens, sums, Matrix::Ones(3, 6), 1.5, nullptr) == doctest::Approx(std::log(8.0)));

    Generator sure(cfg);
    sure.worker().psi.setIdentity();
    sure.worker().out_bias[4 * cfg.goal_dim] = 1e3;
    SequenceBatch fours(2, cfg.length, 4);
    std::vector<Matrix> e0(cfg.length, Matrix::Zero(cfg.goal_dim, 2));
    for (auto &m : e0) m.row(0).setOnes();
    CHECK(worker_loss(sure, fours, e0, Matrix::Ones(2, 6), 1.0, nullptr) < 1e-12);
}

TEST_CASE("manager pre-training is the adversarial step with Q = 1") {
    auto cfg = toy_config();
    auto disc = Discriminator::init(toy_spec(), cfg.vocab_size, cfg.length, 3);
    FeatureExtractor fx(disc);
    Rng rng(4);
    auto real = random_tokens(5, cfg.length, cfg.vocab_size, rng);
    auto feats = prefix_features(fx, real);

    auto a = Generator::init(cfg, 8), b = Generator::init(cfg, 8);
    Optimizer oa({OptimizerKind::Sgd, 0.1}), ob({OptimizerKind::Sgd, 0.1});
    manager_pretrain_step(a, fx, real, oa);
    manager_adv_step(b, feats, Matrix::Ones(5, 6), ob);
    CHECK(param_digest(a.parameters()) == param_digest(b.parameters()));

    Optimizer opt({OptimizerKind::Adam, 0.01});
    const double first = manager_loss(a, feats, Matrix::Ones(5, 6), nullptr);
    double last = first;
    for (int i = 0; i < 50; ++i) {
        last = manager_pretrain_step(a, feats, opt, i);
        CHECK(last >= -static_cast<double>(cfg.length));
        CHECK(last <= static_cast<double>(cfg.length));
    }
    CHECK(last < first);
}

TEST_CASE("updates touch one module only") {
    auto cfg = toy_config();
    auto gen = Generator::init(cfg, 2);
    auto disc = Discriminator::init(toy_spec(), cfg.vocab_size, cfg.length, 3);
    auto trace = generate(gen, disc, 4, GenerationMode::Train, 1);
    Optimizer opt({OptimizerKind::Sgd, 0.1});

    const auto manager_before = param_digest(gen.manager_parameters());
    const auto worker_before = param_digest(gen.worker_parameters());
    worker_adv_step(gen, trace, Matrix::Ones(4, 6), opt);
    CHECK(param_digest(gen.manager_parameters()) == manager_before);
    CHECK(param_digest(gen.worker_parameters()) != worker_before);

    const auto worker_mid = param_digest(gen.worker_parameters());
    manager_adv_step(gen, trace.features, Matrix::Ones(4, 6), opt);
    CHECK(param_digest(gen.worker_parameters()) == worker_mid);
    CHECK(param_digest(gen.manager_parameters()) != manager_before);
}

TEST_CASE("non-finite losses abort with the phase") {
    auto cfg = toy_config();
    auto gen = Generator::init(cfg, 2);
    auto disc = Discriminator::init(toy_spec(), cfg.vocab_size, cfg.length, 3);
    auto trace = generate(gen, disc, 2, GenerationMode::Train, 1);
    Matrix bad = Matrix::Ones(2, 6);
    bad(0, 0) = std::nan("");
    Optimizer opt;
    try {
        worker_adv_step(gen, trace, bad, opt, 17);
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError &e) {
        CHECK(e.phase() == "worker_adversarial");
        CHECK(e.step() == 17);
    }
}

TEST_CASE("metrics rows") {
    MetricsRow row;
    row.epoch = 3;
    row.phase = "adv_g";
    row.step = 12;
    row.loss_worker = 0.5;
    row.q_mean = 1.0 / 3;
    CHECK(format_metrics_row(row) == "3,adv_g,12,,0.5,,,0.333333333,");
    CHECK(std::string(kMetricsHeader) ==
          "epoch,phase,step,loss_d,loss_worker,loss_manager,nll_oracle,q_mean,intrinsic_mean");
}

TEST_CASE("toy training run logs every phase and interleaves MLE") {
    auto cfg = toy_config(8, 6, 2);
    auto spec = toy_spec();
    auto disc = Discriminator::init(spec, cfg.vocab_size, cfg.length, 1);
    cfg.feature_dim = spec.feature_dim();
    auto gen = Generator::init(cfg, 2);
    auto oracle = Oracle::init(cfg.vocab_size, cfg.length, 6, 3);
    auto real = oracle.sample(40, 4);

    TrainConfig tc;
    tc.batch_size = 8;
    tc.rollout_num = 2;
    tc.g_steps = 1;
    tc.d_steps = 1;
    tc.d_epochs = 1;
    tc.disc_pretrain_steps = 1;
    tc.gen_pretrain_epochs = 2;
    tc.adversarial_epochs = 4;
    tc.interleave_period = 2;
    tc.nll_samples = 50;
    Trainer trainer(tc, gen, disc, real, &oracle);
    std::vector<std::string> tags;
    trainer.on_checkpoint([&](const std::string &tag) { tags.push_back(tag); }, 2);
    auto result = trainer.run();

    std::map<std::string, int> phases;
    std::vector<int> mle_epochs;
    for (const auto &r : result.rows) {
        ++phases[r.phase];
        if (r.phase == "adv_mle") mle_epochs.push_back(r.epoch);
    }
    CHECK(phases["init_eval"] == 1);
    CHECK(phases["pretrain_d"] == 1);
    CHECK(phases["pretrain_g"] == 2);
    CHECK(phases["adv_g"] == 4);
    CHECK(phases["adv_d"] == 4);
    CHECK(phases["adv_eval"] == 4);
    CHECK(mle_epochs == std::vector<int>{2, 4});
    CHECK(tags == std::vector<std::string>{"pretrain", "adv_epoch_2", "adv_epoch_4", "final"});
    REQUIRE(result.untrained_nll);
    REQUIRE(result.pretrain_best_nll);
    REQUIRE(result.adversarial_best_nll);
    CHECK(*result.adversarial_best_nll <= *result.adversarial_worst_nll);
}

TEST_CASE("train config validation") {
    TrainConfig tc;
    CHECK_NOTHROW(tc.validate());
    tc.rollout_num = 0;
    CHECK_THROWS_AS(tc.validate(), Error);
    tc = {};
    tc.rescale_delta = 0;
    CHECK_THROWS_AS(tc.validate(), Error);
    tc = {};
    tc.interleave_period = 0;
    CHECK_THROWS_AS(tc.validate(), Error);
}

TEST_CASE("pre-training ends on its best epoch") {
    auto cfg = toy_config(8, 6, 2);
    auto spec = toy_spec();
    auto disc = Discriminator::init(spec, cfg.vocab_size, cfg.length, 1);
    cfg.feature_dim = spec.feature_dim();
    auto gen = Generator::init(cfg, 2);
    auto oracle = Oracle::init(cfg.vocab_size, cfg.length, 6, 3);
    TrainConfig tc;
    tc.batch_size = 8;
    tc.d_steps = 1;
    tc.d_epochs = 1;
    tc.disc_pretrain_steps = 1;
    tc.gen_pretrain_epochs = 6;
    tc.nll_samples = 50;
    tc.gen_optimizer = {OptimizerKind::Adam, 0.05};
    Trainer trainer(tc, gen, disc, oracle.sample(40, 4), &oracle);
    trainer.pretrain();
    REQUIRE(trainer.result().pretrain_best_nll);
    CHECK(*trainer.evaluate_nll() == *trainer.result().pretrain_best_nll);
}
