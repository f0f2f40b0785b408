#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "leakgan/nn.hpp"

namespace leakgan {

/// On-disk layout (little endian):
///   8 bytes  magic "LKGNCKPT"
///   u32      format version
///   str      kind ("oracle", "generator", "discriminator")
///   str      model digest (architecture keys only; gates compatibility)
///   str      config digest (full config; provenance)
///   u64      seed
///   u64      tensor count
///   per tensor: str name, u64 rows, u64 cols, rows*cols f64 in row-major order
/// where str = u64 length followed by raw bytes.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    struct Tensor {
        std::string name;
        std::uint64_t rows = 0;
        std::uint64_t cols = 0;
        std::vector<double> row_major;
    };

    std::string kind;
    std::string model_digest;
    std::string config_digest;
    std::uint64_t seed = 0;
    std::vector<Tensor> tensors;

    /// Snapshot of every view in params.
    static Checkpoint capture(std::string kind, const ParamList &params);

    /// Copies tensors into params by name. Throws on a missing tensor or a shape mismatch.
    void restore(const ParamList &params) const;

    void save(const std::filesystem::path &path) const;
    static Checkpoint load(const std::filesystem::path &path);
};

} // namespace leakgan
