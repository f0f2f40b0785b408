#include "leakgan/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace leakgan {

namespace {

constexpr unsigned kBoth = kOracleShape | kModelShape;

const std::vector<ConfigKey> kKeys = {
    {"seed", KeyType::Count, "1", "training, sampling and model-init seed"},
    {"oracle_seed", KeyType::Count, "7", "seed of the synthetic oracle weights and its corpora"},
    {"vocab_size", KeyType::Count, "5000", "real tokens; PAD and START come on top", kBoth},
    {"seq_len", KeyType::Count, "20", "sequence length T", kBoth},
    {"oracle_hidden", KeyType::Count, "32", "oracle LSTM width (embedding = hidden)", kOracleShape},
    {"oracle_train_size", KeyType::Count, "10000", "sequences in train.txt"},
    {"oracle_test_size", KeyType::Count, "2000", "sequences in test.txt (BLEU references)"},

    {"conv_windows", KeyType::Text, "reference", "w:count list, or 'reference' for the standard table at seq_len", kModelShape},
    {"disc_embedding_dim", KeyType::Count, "64", "discriminator token embedding", kModelShape},
    {"highway", KeyType::Bool, "true", "highway layer after pooling", kModelShape},
    {"dropout_keep", KeyType::Real, "0.75", "keep rate of feature dropout (D training only)"},
    {"l2_coeff", KeyType::Real, "1e-4", "L2 penalty on every discriminator parameter"},
    {"feature_source", KeyType::Choice, "post_highway", "which vector is leaked", kModelShape, "post_highway|pre_highway"},
    {"activation", KeyType::Choice, "relu", "nonlinearity after max-pooling", kModelShape, "relu|tanh|identity"},

    {"gen_embedding_dim", KeyType::Count, "32", "Worker token embedding", kModelShape},
    {"worker_hidden", KeyType::Count, "32", "Worker LSTM width", kModelShape},
    {"manager_hidden", KeyType::Count, "32", "Manager LSTM width", kModelShape},
    {"goal_dim", KeyType::Count, "16", "goal size k", kModelShape},
    {"horizon", KeyType::Count, "4", "goal duration c", kModelShape},
    {"temperature_train", KeyType::Real, "1.5", "alpha while training and in rollouts"},
    {"temperature_sample", KeyType::Real, "1.0", "alpha for samples and NLL evaluation"},

    {"batch_size", KeyType::Count, "64", "sequences per generator batch; D batches are half real, half fake"},
    {"rollout_num", KeyType::Count, "4", "Monte Carlo rollouts N per prefix"},
    {"rescale", KeyType::Bool, "true", "feed rank-rescaled (true) or raw Q to the Manager"},
    {"rescale_delta", KeyType::Real, "12", "delta of the rank rescale"},
    {"rescale_activation", KeyType::Choice, "sigmoid", "activation of the rank rescale", kRuntime, "sigmoid|identity"},
    {"worker_reward", KeyType::Choice, "intrinsic", "Worker REINFORCE weight", kRuntime, "intrinsic|intrinsic_times_q"},
    {"interleave_period", KeyType::Count, "15", "one MLE epoch after this many adversarial epochs"},
    {"g_steps", KeyType::Count, "1", "generator updates per adversarial epoch"},
    {"d_steps", KeyType::Count, "5", "negative-set refreshes per adversarial epoch"},
    {"d_epochs", KeyType::Count, "3", "passes over each negative set"},
    {"d_samples", KeyType::Count, "0", "negatives per refresh; 0 = size of the training set"},
    {"pretrain_rounds", KeyType::Count, "1", "alternations of D and G pre-training"},
    {"disc_pretrain_steps", KeyType::Count, "5", "negative-set refreshes per D pre-training round"},
    {"gen_pretrain_epochs", KeyType::Count, "80", "max MLE epochs per G pre-training round"},
    {"pretrain_patience", KeyType::Count, "5", "stop a G round after this many epochs without NLL improvement"},
    {"pretrain_restore_best", KeyType::Bool, "true", "end each G round on its best epoch"},
    {"adversarial_epochs", KeyType::Count, "100", "adversarial epochs"},
    {"nll_samples", KeyType::Count, "1000", "generator samples per oracle-NLL evaluation"},

    {"gen_optimizer", KeyType::Choice, "sgd", "Manager and Worker optimizer", kRuntime, "sgd|adam"},
    {"gen_lr", KeyType::Real, "0.001", "Manager and Worker learning rate"},
    {"adv_gen_lr", KeyType::Real, "0", "generator learning rate from the first adversarial epoch on; 0 keeps gen_lr"},
    {"gen_clip", KeyType::Real, "5", "global gradient-norm clip for G; 0 disables"},
    {"disc_optimizer", KeyType::Choice, "sgd", "discriminator optimizer", kRuntime, "sgd|adam"},
    {"disc_lr", KeyType::Real, "0.0001", "discriminator learning rate"},
    {"disc_clip", KeyType::Real, "0", "global gradient-norm clip for D; 0 disables"},
    {"adam_beta1", KeyType::Real, "0.9", "Adam beta1"},
    {"adam_beta2", KeyType::Real, "0.999", "Adam beta2"},
    {"adam_epsilon", KeyType::Real, "1e-8", "Adam epsilon"},

    {"checkpoint_interval", KeyType::Count, "0", "adversarial epochs between checkpoints; 0 = end only"},
    {"sample_count", KeyType::Count, "1000", "sentences written by `sample`"},
    {"trace_sentences", KeyType::Count, "8", "generated sentences in the feature trace"},
    {"trace_real", KeyType::Count, "1000", "real sentences used to fit the trace PCA"},
    {"interact_sentences", KeyType::Count, "4", "generated sentences in the interaction export"},
    {"gain_bucket_width", KeyType::Count, "1", "length bucket width of the relative BLEU gain curve"},
};

const std::map<std::string, std::vector<std::pair<std::string, std::string>>> kPresets = {
    {"table1-20", {}},
    {"table1-40", {{"seq_len", "40"}, {"gen_lr", "0.0005"}}},
    {"desk",
     {{"vocab_size", "100"},
      {"oracle_train_size", "2000"},
      {"oracle_test_size", "500"},
      {"conv_windows", "1:10,2:20,3:20,4:20,5:20,6:10,7:10,8:10,9:10,10:10,15:16,20:16"},
      {"disc_embedding_dim", "32"},
      {"disc_pretrain_steps", "3"},
      {"gen_pretrain_epochs", "40"},
      {"adversarial_epochs", "10"},
      {"interleave_period", "6"},
      {"g_steps", "3"},
      {"d_steps", "1"},
      {"d_epochs", "1"},
      {"nll_samples", "1000"},
      {"gen_optimizer", "adam"},
      {"disc_optimizer", "adam"},
      {"gen_lr", "0.005"},
      {"adv_gen_lr", "0.001"},
      {"disc_lr", "0.0001"}}},
};

const ConfigKey &find_key(const std::string &name) {
    for (const auto &k : kKeys)
        if (name == k.name) return k;
    throw Error("unknown config key '" + name + "'");
}

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string normalize(const ConfigKey &key, const std::string &raw) {
    const std::string v = trim(raw);
    const auto fail = [&](const std::string &what) -> std::string {
        throw Error("config key '" + std::string(key.name) + "': " + what + ", got '" + v + "'");
    };
    const char *first = v.data(), *last = v.data() + v.size();
    switch (key.type) {
    case KeyType::Int:
    case KeyType::Count: {
        long long x = 0;
        auto [ptr, ec] = std::from_chars(first, last, x);
        if (ec != std::errc() || ptr != last || v.empty()) return fail("expected an integer");
        if (key.type == KeyType::Count && x < 0) return fail("expected a non-negative integer");
        return std::to_string(x);
    }
    case KeyType::Real: {
        double x = 0;
        auto [ptr, ec] = std::from_chars(first, last, x);
        if (ec != std::errc() || ptr != last || v.empty() || !std::isfinite(x)) return fail("expected a finite number");
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof buf, x);
        return std::string(buf, res.ptr);
    }
    case KeyType::Bool:
        if (v == "true" || v == "1" || v == "yes") return "true";
        if (v == "false" || v == "0" || v == "no") return "false";
        return fail("expected true or false");
    case KeyType::Choice: {
        std::stringstream ss(key.choices);
        for (std::string c; std::getline(ss, c, '|');)
            if (c == v) return v;
        return fail(std::string("expected one of ") + key.choices);
    }
    case KeyType::Text:
        if (v.empty()) return fail("expected a value");
        return v;
    }
    return v;
}

OptimizerConfig optimizer(const ExperimentConfig &c, const std::string &prefix) {
    OptimizerConfig o;
    o.kind = c.get(prefix + "_optimizer") == "adam" ? OptimizerKind::Adam : OptimizerKind::Sgd;
    o.learning_rate = c.get_real(prefix + "_lr");
    o.clip_norm = c.get_real(prefix + "_clip");
    o.beta1 = c.get_real("adam_beta1");
    o.beta2 = c.get_real("adam_beta2");
    o.epsilon = c.get_real("adam_epsilon");
    return o;
}

int as_int(std::size_t v, const char *name) {
    if (v > 1'000'000'000) throw Error(std::string("config key '") + name + "' is out of range");
    return static_cast<int>(v);
}

} // namespace

ExperimentConfig::ExperimentConfig() {
    for (const auto &k : kKeys) values_[k.name] = normalize(k, k.default_value);
}

const std::vector<ConfigKey> &ExperimentConfig::keys() { return kKeys; }

std::vector<std::string> ExperimentConfig::preset_names() {
    std::vector<std::string> names;
    for (const auto &[name, _] : kPresets) names.push_back(name);
    return names;
}

ExperimentConfig ExperimentConfig::preset(const std::string &name) {
    auto it = kPresets.find(name);
    if (it == kPresets.end()) throw Error("unknown preset '" + name + "'");
    ExperimentConfig c;
    for (const auto &[k, v] : it->second) c.set(k, v);
    return c;
}

void ExperimentConfig::set(const std::string &key, const std::string &value) {
    values_[key] = normalize(find_key(key), value);
}

void ExperimentConfig::set_assignment(const std::string &assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw Error("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void ExperimentConfig::load_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file " + path.string());
    std::set<std::string> seen;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw Error(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!seen.insert(key).second) throw Error(where + ": duplicate key '" + key + "'");
        try {
            set(key, line.substr(eq + 1));
        } catch (const Error &e) {
            throw Error(where + ": " + e.what());
        }
    }
}

const std::string &ExperimentConfig::get(const std::string &key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error("unknown config key '" + key + "'");
    return it->second;
}

long ExperimentConfig::get_int(const std::string &key) const { return std::stol(get(key)); }
std::size_t ExperimentConfig::get_count(const std::string &key) const { return std::stoull(get(key)); }
double ExperimentConfig::get_real(const std::string &key) const {
    double x = 0;
    const auto &v = get(key);
    std::from_chars(v.data(), v.data() + v.size(), x);
    return x;
}
bool ExperimentConfig::get_bool(const std::string &key) const { return get(key) == "true"; }

std::string ExperimentConfig::to_text() const {
    std::string out;
    for (const auto &k : kKeys) out += std::string(k.name) + " = " + values_.at(k.name) + "\n";
    return out;
}

std::string ExperimentConfig::digest() const { return fnv1a_hex(to_text()); }

std::string ExperimentConfig::model_digest(const std::string &kind) const {
    const unsigned scope = kind == "oracle" ? kOracleShape : kModelShape;
    std::string text = kind == "oracle" ? "oracle\n" : "model\n";
    for (const auto &k : kKeys)
        if (k.scope & scope) text += std::string(k.name) + "=" + values_.at(k.name) + "\n";
    if (scope == kModelShape && get("conv_windows") == "reference") // resolve so equal layouts match
        text += "resolved=" + ConvSpec::format_windows(conv_spec().windows) + "\n";
    return fnv1a_hex(text);
}

std::string ExperimentConfig::provenance() const {
    return "digest=" + digest() + " seed=" + get("seed");
}

ConvSpec ExperimentConfig::conv_spec() const {
    ConvSpec s;
    const std::string &w = get("conv_windows");
    s.windows = w == "reference" ? ConvSpec::reference(get_count("seq_len")).windows : ConvSpec::parse_windows(w);
    s.embedding_dim = static_cast<Index>(get_count("disc_embedding_dim"));
    s.highway = get_bool("highway");
    s.dropout_keep = get_real("dropout_keep");
    s.l2_coeff = get_real("l2_coeff");
    s.feature_source = get("feature_source") == "pre_highway" ? FeatureSource::PreHighway : FeatureSource::PostHighway;
    const auto &a = get("activation");
    s.activation = a == "tanh" ? Activation::Tanh : a == "identity" ? Activation::Identity : Activation::Relu;
    return s;
}

GeneratorConfig ExperimentConfig::generator_config() const {
    GeneratorConfig g;
    g.vocab_size = total_vocab();
    g.length = get_count("seq_len");
    g.feature_dim = conv_spec().feature_dim();
    g.embedding_dim = static_cast<Index>(get_count("gen_embedding_dim"));
    g.worker_hidden = static_cast<Index>(get_count("worker_hidden"));
    g.manager_hidden = static_cast<Index>(get_count("manager_hidden"));
    g.goal_dim = static_cast<Index>(get_count("goal_dim"));
    g.horizon = as_int(get_count("horizon"), "horizon");
    g.temperature_train = get_real("temperature_train");
    g.temperature_sample = get_real("temperature_sample");
    return g;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.batch_size = get_count("batch_size");
    t.rollout_num = as_int(get_count("rollout_num"), "rollout_num");
    t.rescale = get_bool("rescale");
    t.rescale_delta = get_real("rescale_delta");
    t.rescale_activation = get("rescale_activation") == "identity" ? RescaleActivation::Identity : RescaleActivation::Sigmoid;
    t.worker_reward = get("worker_reward") == "intrinsic_times_q" ? WorkerReward::IntrinsicTimesQ : WorkerReward::Intrinsic;
    t.interleave_period = as_int(get_count("interleave_period"), "interleave_period");
    t.g_steps = as_int(get_count("g_steps"), "g_steps");
    t.d_steps = as_int(get_count("d_steps"), "d_steps");
    t.d_epochs = as_int(get_count("d_epochs"), "d_epochs");
    t.d_samples = get_count("d_samples");
    t.pretrain_rounds = as_int(get_count("pretrain_rounds"), "pretrain_rounds");
    t.disc_pretrain_steps = as_int(get_count("disc_pretrain_steps"), "disc_pretrain_steps");
    t.gen_pretrain_epochs = as_int(get_count("gen_pretrain_epochs"), "gen_pretrain_epochs");
    t.pretrain_patience = as_int(get_count("pretrain_patience"), "pretrain_patience");
    t.restore_best = get_bool("pretrain_restore_best");
    t.adversarial_epochs = as_int(get_count("adversarial_epochs"), "adversarial_epochs");
    t.nll_samples = get_count("nll_samples");
    t.gen_optimizer = optimizer(*this, "gen");
    t.adv_gen_lr = get_real("adv_gen_lr");
    t.disc_optimizer = optimizer(*this, "disc");
    t.seed = seed();
    return t;
}

void ExperimentConfig::validate() const {
    if (get_count("vocab_size") < 1) throw Error("config: vocab_size must be >= 1");
    if (get_count("oracle_hidden") < 1) throw Error("config: oracle_hidden must be >= 1");
    if (get_count("oracle_train_size") < 1) throw Error("config: oracle_train_size must be >= 1");
    const auto spec = conv_spec();
    spec.validate(get_count("seq_len"));
    if (!(spec.dropout_keep > 0.0 && spec.dropout_keep <= 1.0)) throw Error("config: dropout_keep must be in (0, 1]");
    if (spec.l2_coeff < 0.0) throw Error("config: l2_coeff must be >= 0");
    generator_config().validate();
    train_config().validate();
}

std::string config_reference() {
    std::ostringstream os;
    os << "# key = default    description\n";
    for (const auto &k : kKeys) {
        os << k.name << " = " << k.default_value << "    # " << k.doc;
        if (k.type == KeyType::Choice) os << " (" << k.choices << ")";
        os << '\n';
    }
    os << "# presets:";
    for (const auto &[name, overrides] : kPresets) {
        os << "\n#   " << name << ':';
        if (overrides.empty()) os << " defaults";
        for (const auto &[k, v] : overrides) os << ' ' << k << '=' << v;
    }
    os << '\n';
    return os.str();
}

} // namespace leakgan
