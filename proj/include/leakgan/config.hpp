#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "leakgan/discriminator.hpp"
#include "leakgan/generator.hpp"
#include "leakgan/training.hpp"

namespace leakgan {

enum class KeyType { Int, Count, Real, Bool, Text, Choice };

/// Which checkpoints a key shapes; such keys enter that kind's model digest.
enum KeyScope : unsigned { kRuntime = 0, kOracleShape = 1, kModelShape = 2 };

struct ConfigKey {
    const char *name;
    KeyType type;
    const char *default_value;
    const char *doc;
    unsigned scope = kRuntime;
    const char *choices = ""; // "|"-separated, Choice keys only
};

/// Flat key = value experiment configuration. Values are kept as normalized
/// text, so the digest does not depend on how a number was spelled.
class ExperimentConfig {
  public:
    ExperimentConfig(); // all defaults

    static const std::vector<ConfigKey> &keys();
    static std::vector<std::string> preset_names();
    static ExperimentConfig preset(const std::string &name);

    /// Throws on an unknown key or a value that does not parse.
    void set(const std::string &key, const std::string &value);
    /// "key=value"
    void set_assignment(const std::string &assignment);
    /// `key = value` lines; '#' starts a comment. Duplicate keys are rejected.
    void load_file(const std::filesystem::path &path);

    const std::string &get(const std::string &key) const;
    long get_int(const std::string &key) const;
    std::size_t get_count(const std::string &key) const;
    double get_real(const std::string &key) const;
    bool get_bool(const std::string &key) const;
    std::uint64_t seed() const { return static_cast<std::uint64_t>(get_count("seed")); }

    /// Canonical text, one `key = value` line per key in registry order.
    std::string to_text() const;
    /// FNV-1a of to_text().
    std::string digest() const;
    /// FNV-1a of the keys that shape the given checkpoint kind ("oracle" or a model).
    std::string model_digest(const std::string &kind) const;
    /// "digest=<digest> seed=<seed>"
    std::string provenance() const;

    /// Total vocabulary including PAD and START.
    std::size_t total_vocab() const { return get_count("vocab_size") + 2; }
    ConvSpec conv_spec() const;
    GeneratorConfig generator_config() const;
    TrainConfig train_config() const;

    /// Builds every derived config once so bad combinations fail early.
    void validate() const;

  private:
    std::map<std::string, std::string> values_;
};

/// Key list with defaults and docs, as printed by `leakgan --help-config`.
std::string config_reference();

} // namespace leakgan
