#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace leakgan {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

using TokenId = std::int32_t;

/// Reserved ids. Neither ever appears in real text.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kStart = 1;
inline constexpr TokenId kFirstRealToken = 2;

/// Base error for invalid input, bad files and contract violations.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised when a loss or gradient stops being finite. Carries the training
/// phase and step so the CLI can report where the run died.
class NonFiniteError : public Error {
  public:
    NonFiniteError(std::string phase, long step, const std::string &what);

    const std::string &phase() const { return phase_; }
    long step() const { return step_; }

  private:
    std::string phase_;
    long step_;
};

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Seed for a sub-stream identified by a path of indices, e.g.
/// derive_seed(base, {t, rollout, row}). Independent of evaluation order.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
double uniform01(Rng &rng);

/// Standard normal draw.
double standard_normal(Rng &rng);

/// Index i with cumulative(probs)[i] > u; probabilities must sum to ~1.
/// Zero-probability entries are never returned.
Index sample_categorical(const Eigen::Ref<const Vector> &probs, double u);

/// FNV-1a 64-bit hash rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

bool all_finite(const Eigen::Ref<const Matrix> &m);

} // namespace leakgan
