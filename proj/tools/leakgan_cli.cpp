// leakgan command-line driver. Every subcommand reads and writes a single run
// directory; see README.md for the file layout.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "leakgan/checkpoint.hpp"
#include "leakgan/config.hpp"
#include "leakgan/corpus.hpp"
#include "leakgan/evaluation.hpp"
#include "leakgan/training.hpp"

namespace fs = std::filesystem;
using namespace leakgan;

namespace {

constexpr int kExitError = 1;
constexpr int kExitNonFinite = 3;

// Seed stream tags, one per independent random consumer.
enum : std::uint64_t {
    kOracleWeights = 1,
    kOracleTrain = 2,
    kOracleTest = 3,
    kGeneratorInit = 21,
    kDiscriminatorInit = 22,
    kSampleStream = 23,
    kTraceStream = 24,
    kInteractStream = 25,
    kNllStream = 26,
};

struct Options {
    std::string config_path;
    std::string preset = "table1-20";
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string candidates, references, baseline;
};

struct Run {
    ExperimentConfig config;
    fs::path dir;

    fs::path path(const std::string &name) const { return dir / name; }
};

Run open_run(const Options &o, const std::string &command) {
    Run run{ExperimentConfig::preset(o.preset), {}};
    if (!o.config_path.empty()) run.config.load_file(o.config_path);
    for (const auto &a : o.overrides) run.config.set_assignment(a);
    if (o.seed) run.config.set("seed", std::to_string(*o.seed));
    run.config.validate();

    std::string out = o.out;
    if (out.empty()) {
        const char *env = std::getenv("LEAKGAN_OUT");
        out = env && *env ? env : "run";
    }
    run.dir = out;
    fs::create_directories(run.dir);
    std::ofstream cfg(run.path("config." + command + ".txt"));
    cfg << kProvenancePrefix << ' ' << run.config.provenance() << '\n' << run.config.to_text();
    return run;
}

std::uint64_t stream(const Run &run, std::uint64_t tag) { return derive_seed(run.config.seed(), {tag}); }

void save(const Run &run, const std::string &file, const std::string &kind, const ParamList &params) {
    auto ckpt = Checkpoint::capture(kind, params);
    ckpt.model_digest = run.config.model_digest(kind);
    ckpt.config_digest = run.config.digest();
    ckpt.seed = run.config.seed();
    ckpt.save(run.path(file));
}

void load(const Run &run, const std::string &file, const std::string &kind, const ParamList &params) {
    const fs::path p = run.path(file);
    if (!fs::exists(p)) throw Error("missing checkpoint " + p.string() + " (run the earlier stage first)");
    auto ckpt = Checkpoint::load(p);
    if (ckpt.kind != kind) throw Error(p.string() + " holds a '" + ckpt.kind + "' checkpoint, expected '" + kind + "'");
    if (ckpt.model_digest != run.config.model_digest(kind))
        throw Error(p.string() + " was written for a different architecture (model digest " + ckpt.model_digest +
                    ", config needs " + run.config.model_digest(kind) + ")");
    ckpt.restore(params);
}

Vocabulary load_vocab(const Run &run) {
    auto vocab = Vocabulary::load(run.path("vocab.txt"));
    if (vocab.size() != run.config.total_vocab())
        throw Error("vocab.txt has " + std::to_string(vocab.size() - 2) + " real tokens but vocab_size = " +
                    run.config.get("vocab_size"));
    return vocab;
}

std::optional<Oracle> load_oracle(const Run &run, bool required) {
    if (!fs::exists(run.path("oracle.ckpt"))) {
        if (required) throw Error("missing checkpoint " + run.path("oracle.ckpt").string() + " (run oracle-gen)");
        return std::nullopt;
    }
    Oracle oracle(run.config.total_vocab(), run.config.get_count("seq_len"), run.config.get_count("oracle_hidden"));
    load(run, "oracle.ckpt", "oracle", oracle.parameters());
    return oracle;
}

struct Models {
    Generator gen;
    Discriminator disc;
};

Models fresh_models(const Run &run) {
    const auto &c = run.config;
    return {Generator::init(c.generator_config(), stream(run, kGeneratorInit)),
            Discriminator::init(c.conv_spec(), c.total_vocab(), c.get_count("seq_len"), stream(run, kDiscriminatorInit))};
}

Models load_models(const Run &run, const std::string &prefix) {
    Models m = fresh_models(run);
    load(run, prefix + "generator.ckpt", "generator", m.gen.parameters());
    load(run, prefix + "discriminator.ckpt", "discriminator", m.disc.parameters());
    return m;
}

void save_models(const Run &run, Models &m, const std::string &prefix) {
    save(run, prefix + "generator.ckpt", "generator", m.gen.parameters());
    save(run, prefix + "discriminator.ckpt", "discriminator", m.disc.parameters());
}

std::ofstream open_out(const Run &run, const std::string &name) {
    std::ofstream os(run.path(name));
    if (!os) throw Error("cannot write " + run.path(name).string());
    return os;
}

// ---------------------------------------------------------------------------

int cmd_oracle_gen(const Options &o) {
    Run run = open_run(o, "oracle-gen");
    const auto &c = run.config;
    const std::uint64_t os = c.get_count("oracle_seed");
    const std::size_t T = c.get_count("seq_len");
    Oracle oracle = Oracle::init(c.total_vocab(), T, c.get_count("oracle_hidden"), derive_seed(os, {kOracleWeights}));
    save(run, "oracle.ckpt", "oracle", oracle.parameters());
    auto vocab = Vocabulary::synthetic(c.total_vocab());
    vocab.save(run.path("vocab.txt"));
    auto train = oracle.sample(c.get_count("oracle_train_size"), derive_seed(os, {kOracleTrain}));
    write_batch(run.path("train.txt"), train, vocab, c.provenance());
    const std::size_t n_test = c.get_count("oracle_test_size");
    if (n_test > 0)
        write_batch(run.path("test.txt"), oracle.sample(n_test, derive_seed(os, {kOracleTest})), vocab, c.provenance());
    const auto self = oracle.nll(train);
    std::cout << "oracle: |V|=" << c.total_vocab() << " T=" << T << " train=" << train.rows() << " test=" << n_test
              << " self-NLL=" << self.per_sequence << " (per token " << self.per_token << ")\n";
    return 0;
}

std::unique_ptr<Trainer> make_trainer(const Run &run, Models &m, const Oracle *oracle, std::ofstream &metrics) {
    auto vocab = load_vocab(run);
    auto real = read_batch(run.path("train.txt"), vocab, run.config.get_count("seq_len"));
    auto trainer = std::make_unique<Trainer>(run.config.train_config(), m.gen, m.disc, std::move(real), oracle);
    metrics << kProvenancePrefix << ' ' << run.config.provenance() << '\n' << kMetricsHeader << '\n';
    trainer->on_row([&metrics](const MetricsRow &row) {
        metrics << format_metrics_row(row) << '\n';
        metrics.flush();
        std::cerr << format_metrics_row(row) << '\n';
    });
    return trainer;
}

int cmd_pretrain(const Options &o) {
    Run run = open_run(o, "pretrain");
    auto oracle = load_oracle(run, false);
    Models m = fresh_models(run);
    auto metrics = open_out(run, "metrics_pretrain.csv");
    auto trainer = make_trainer(run, m, oracle ? &*oracle : nullptr, metrics);
    trainer->pretrain();
    save_models(run, m, "pretrain_");
    return 0;
}

int cmd_train(const Options &o) {
    Run run = open_run(o, "train");
    auto oracle = load_oracle(run, false);
    const bool resume = fs::exists(run.path("pretrain_generator.ckpt"));
    Models m = resume ? load_models(run, "pretrain_") : fresh_models(run);
    auto metrics = open_out(run, "metrics_train.csv");
    auto trainer = make_trainer(run, m, oracle ? &*oracle : nullptr, metrics);
    const auto interval = static_cast<int>(run.config.get_count("checkpoint_interval"));
    trainer->on_checkpoint(
        [&](const std::string &tag) {
            if (tag == "final") save_models(run, m, "");
            else if (tag == "pretrain") save_models(run, m, "pretrain_");
            else save_models(run, m, tag + "_");
        },
        interval);
    if (!resume) trainer->pretrain();
    trainer->adversarial();
    return 0;
}

int cmd_sample(const Options &o) {
    Run run = open_run(o, "sample");
    Models m = load_models(run, "");
    auto vocab = load_vocab(run);
    auto trace = generate(m.gen, FeatureExtractor(m.disc), run.config.get_count("sample_count"),
                          GenerationMode::Sample, stream(run, kSampleStream));
    write_batch(run.path("samples.txt"), trace.tokens, vocab, run.config.provenance());
    std::cout << "wrote " << trace.tokens.rows() << " sentences to " << run.path("samples.txt").string() << '\n';
    return 0;
}

int cmd_eval_nll(const Options &o) {
    Run run = open_run(o, "eval-nll");
    auto oracle = load_oracle(run, true);
    Models m = load_models(run, "");
    const auto n = run.config.get_count("nll_samples");
    const auto est = eval_nll(m.gen, m.disc, *oracle, n, stream(run, kNllStream));
    auto os = open_out(run, "nll.csv");
    os << kProvenancePrefix << ' ' << run.config.provenance() << '\n'
       << "metric,value,samples\n"
       << "nll_oracle_per_sequence," << est.per_sequence << ',' << est.sequences << '\n'
       << "nll_oracle_per_token," << est.per_token << ',' << est.sequences << '\n';
    std::cout << "oracle NLL " << est.per_sequence << " per sequence, " << est.per_token << " per token ("
              << est.sequences << " samples)\n";
    return 0;
}

int cmd_eval_bleu(const Options &o) {
    Run run = open_run(o, "eval-bleu");
    const fs::path cand = o.candidates.empty() ? run.path("samples.txt") : fs::path(o.candidates);
    const fs::path refs = o.references.empty() ? run.path("test.txt") : fs::path(o.references);
    const auto candidates = read_sentences(cand);
    const auto references = read_sentences(refs);
    BleuReferences table(references, 5);
    auto os = open_out(run, "bleu.csv");
    os << kProvenancePrefix << ' ' << run.config.provenance() << " convention=\"" << kBleuConvention << "\"\n"
       << "metric,value,samples,brevity_penalty\n";
    for (int n = 2; n <= 5; ++n) {
        const auto r = bleu(candidates, table, n);
        for (const auto &w : r.warnings) std::cerr << "warning: " << w << '\n';
        os << "bleu" << n << ',' << r.score << ',' << candidates.size() << ',' << r.brevity_penalty << '\n';
        std::cout << "BLEU-" << n << " = " << r.score << '\n';
    }
    if (!o.baseline.empty()) {
        const auto base = read_sentences(o.baseline);
        const auto curve = relative_gain_curve(candidates, base, references, 4, run.config.get_count("gain_bucket_width"));
        for (const auto &note : curve.notes) std::cerr << "note: " << note << '\n';
        auto gs = open_out(run, "bleu_gain.csv");
        write_gain_csv(gs, curve, 4, run.config.provenance());
        std::cout << "relative gain curve: " << curve.points.size() << " buckets\n";
    }
    return 0;
}

int cmd_trace(const Options &o) {
    Run run = open_run(o, "trace");
    Models m = load_models(run, "");
    auto vocab = load_vocab(run);
    auto real = read_batch(run.path("train.txt"), vocab, run.config.get_count("seq_len"));
    const std::size_t n_real = std::min(real.rows(), run.config.get_count("trace_real"));
    std::vector<std::size_t> idx(n_real);
    for (std::size_t i = 0; i < n_real; ++i) idx[i] = i;
    auto trace = feature_trace(m.gen, m.disc, run.config.get_count("trace_sentences"), real.gather(idx),
                               stream(run, kTraceStream));
    auto os = open_out(run, "trace.csv");
    write_trace_csv(os, trace, run.config.provenance());
    write_batch(run.path("trace_sentences.txt"), trace.sentences, vocab, run.config.provenance());
    std::cout << "PCA explained variance " << trace.pca.explained_variance.transpose() << '\n';
    return 0;
}

int cmd_interact(const Options &o) {
    Run run = open_run(o, "interact");
    Models m = load_models(run, "");
    auto vocab = load_vocab(run);
    auto trace = generate(m.gen, m.disc, run.config.get_count("interact_sentences"), GenerationMode::Sample,
                          stream(run, kInteractStream), true);
    auto os = open_out(run, "interaction.csv");
    write_interaction_csv(os, interaction_export(m.gen, trace), &vocab, run.config.provenance());
    write_batch(run.path("interaction_sentences.txt"), trace.tokens, vocab, run.config.provenance());
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"LeakGAN: adversarial text generation with leaked discriminator features"};
    Options o;
    bool help_config = false;
    app.add_flag("--help-config", help_config, "Print every config key with its default and exit");
    app.add_option("--config", o.config_path, "Flat key = value config file")->check(CLI::ExistingFile);
    app.add_option("--preset", o.preset, "Base preset (desk, table1-20, table1-40)");
    app.add_option("--seed", o.seed, "Overrides the seed key");
    app.add_option("--out", o.out, "Run directory (default $LEAKGAN_OUT, else ./run)");
    app.add_option("--set", o.overrides, "key=value override, repeatable");
    app.fallthrough();
    app.require_subcommand(0, 1);

    struct Command {
        const char *name;
        const char *help;
        int (*fn)(const Options &);
    };
    const Command commands[] = {
        {"oracle-gen", "Create the synthetic oracle and its train/test corpora", cmd_oracle_gen},
        {"pretrain", "Pre-train D and G (MLE + Manager transition mimicking)", cmd_pretrain},
        {"train", "Adversarial training (runs pre-training first when no pre-trained checkpoints exist)", cmd_train},
        {"sample", "Write generator samples", cmd_sample},
        {"eval-nll", "Oracle NLL of generator samples", cmd_eval_nll},
        {"eval-bleu", "BLEU-2..5 of candidates against references", cmd_eval_bleu},
        {"trace", "Leaked-feature trace with a PCA plane fit on real text", cmd_trace},
        {"interact", "Per-step Manager x Worker interaction vectors", cmd_interact},
    };
    std::vector<std::pair<CLI::App *, const Command *>> subs;
    for (const auto &c : commands) {
        auto *sub = app.add_subcommand(c.name, c.help);
        if (std::string(c.name) == "eval-bleu") {
            sub->add_option("--candidates", o.candidates, "Candidate sentences (default <run>/samples.txt)");
            sub->add_option("--references", o.references, "Reference sentences (default <run>/test.txt)");
            sub->add_option("--baseline", o.baseline, "Second candidate set; writes the relative gain curve");
        }
        subs.emplace_back(sub, &c);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        if (help_config) {
            std::cout << config_reference();
            return 0;
        }
        return app.exit(e);
    }
    if (help_config) {
        std::cout << config_reference();
        return 0;
    }

    try {
        for (auto &[sub, cmd] : subs)
            if (sub->parsed()) return cmd->fn(o);
        std::cerr << app.help();
        return kExitError;
    } catch (const NonFiniteError &e) {
        std::cerr << "leakgan: aborted on non-finite value: " << e.what() << '\n';
        return kExitNonFinite;
    } catch (const std::exception &e) {
        std::cerr << "leakgan: " << e.what() << '\n';
        return kExitError;
    }
}
