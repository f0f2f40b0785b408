#include "leakgan/common.hpp"

#include <cstdio>

namespace leakgan {

NonFiniteError::NonFiniteError(std::string phase, long step, const std::string &what)
    : Error("non-finite value in phase '" + phase + "' at step " + std::to_string(step) + ": " +
            what),
      phase_(std::move(phase)), step_(step) {}

std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = mix_seed(base);
    for (auto p : path) s = mix_seed(s ^ mix_seed(p + 0x632BE59BD9B4E019ULL));
    return s;
}

double uniform01(Rng &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(Rng &rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

Index sample_categorical(const Eigen::Ref<const Vector> &probs, double u) {
    double acc = 0.0;
    Index last = -1;
    for (Index i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last = i;
        if (u < acc) return i;
    }
    // rounding left u above the final cumulative sum
    if (last < 0) throw Error("sample_categorical: distribution has no support");
    return last;
}

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

bool all_finite(const Eigen::Ref<const Matrix> &m) { return m.allFinite(); }

} // namespace leakgan
