#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "leakgan/config.hpp"

using namespace leakgan;

namespace {

std::filesystem::path write_temp(const std::string &name, const std::string &text) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream(path) << text;
    return path;
}

} // namespace

TEST_CASE("unknown keys and bad values are rejected") {
    ExperimentConfig c;
    CHECK_THROWS_WITH_AS(c.set("no_such_key", "1"), doctest::Contains("no_such_key"), Error);
    CHECK_THROWS_AS(c.set("seq_len", "abc"), Error);
    CHECK_THROWS_AS(c.set("highway", "maybe"), Error);
    CHECK_THROWS_AS(c.set("gen_optimizer", "rmsprop"), Error);
    CHECK_THROWS_AS(c.set_assignment("seq_len"), Error);
    CHECK_THROWS_AS(ExperimentConfig::preset("nope"), Error);
}

TEST_CASE("digest ignores number spelling") {
    ExperimentConfig a, b;
    a.set("gen_lr", "0.001");
    b.set("gen_lr", "1e-3");
    CHECK(a.digest() == b.digest());
    b.set("gen_lr", "0.002");
    CHECK(a.digest() != b.digest());
    CHECK(a.provenance() == "digest=" + a.digest() + " seed=1");
}

TEST_CASE("model digests only track shape keys") {
    ExperimentConfig a, b;
    b.set("gen_lr", "0.5");
    b.set("seed", "9");
    CHECK(a.model_digest("generator") == b.model_digest("generator"));
    CHECK(a.model_digest("oracle") == b.model_digest("oracle"));
    b.set("goal_dim", "8");
    CHECK(a.model_digest("generator") != b.model_digest("generator"));
    CHECK(a.model_digest("oracle") == b.model_digest("oracle"));
    b.set("oracle_hidden", "16");
    CHECK(a.model_digest("oracle") != b.model_digest("oracle"));
}

TEST_CASE("presets") {
    for (const auto &name : ExperimentConfig::preset_names()) CHECK_NOTHROW(ExperimentConfig::preset(name).validate());

    auto t20 = ExperimentConfig::preset("table1-20");
    CHECK(t20.conv_spec().feature_dim() == 1720);
    CHECK(t20.total_vocab() == 5002);
    CHECK(t20.generator_config().feature_dim == 1720);
    CHECK(ExperimentConfig::preset("table1-40").conv_spec().feature_dim() == 2040);

    auto desk = ExperimentConfig::preset("desk");
    CHECK(desk.total_vocab() == 102);
    CHECK(desk.get_count("seq_len") == 20);
    CHECK(desk.get_count("oracle_train_size") == 2000);
    CHECK(desk.get_count("worker_hidden") == 32);
    CHECK(desk.get_int("rollout_num") == 4);

    auto tc = t20.train_config();
    CHECK(tc.gen_optimizer.kind == OptimizerKind::Sgd);
    CHECK(tc.interleave_period == 15);
    CHECK(tc.rescale_delta == 12.0);
}

TEST_CASE("config files: comments, duplicates, precedence") {
    auto ok = write_temp("leakgan_cfg_ok.txt", "# comment\nseq_len = 10\nconv_windows = 1:4,2:4\n\nhighway=false # trailing\n");
    ExperimentConfig c = ExperimentConfig::preset("desk");
    c.load_file(ok);
    CHECK(c.get_count("seq_len") == 10);
    CHECK_FALSE(c.get_bool("highway"));
    CHECK(c.get_count("vocab_size") == 100); // preset value survives
    c.set_assignment("seq_len=12");          // flags come last and win
    CHECK(c.get_count("seq_len") == 12);

    auto dup = write_temp("leakgan_cfg_dup.txt", "seq_len = 10\nseq_len = 11\n");
    CHECK_THROWS_AS(ExperimentConfig().load_file(dup), Error);
    auto junk = write_temp("leakgan_cfg_junk.txt", "just words\n");
    CHECK_THROWS_AS(ExperimentConfig().load_file(junk), Error);
    std::filesystem::remove(ok);
    std::filesystem::remove(dup);
    std::filesystem::remove(junk);
}

TEST_CASE("validation catches inconsistent combinations") {
    ExperimentConfig c;
    c.set("seq_len", "30"); // no reference layout for T = 30
    CHECK_THROWS_AS(c.validate(), Error);
    c.set("conv_windows", "1:10,2:10");
    CHECK_NOTHROW(c.validate());
    CHECK_THROWS_AS((c.set("rollout_num", "0"), c.validate()), Error);
}

TEST_CASE("reference text lists every key") {
    const auto text = config_reference();
    for (const auto &k : ExperimentConfig::keys()) CHECK(text.find(k.name) != std::string::npos);
    CHECK(text.find("desk") != std::string::npos);
}
