#include "leakgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace leakgan {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little endian");

namespace {

constexpr char kMagic[8] = {'L', 'K', 'G', 'N', 'C', 'K', 'P', 'T'};

template <class T> void put(std::ostream &os, const T &v) {
    os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

void put_str(std::ostream &os, const std::string &s) {
    put<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T> T get(std::istream &is) {
    T v{};
    is.read(reinterpret_cast<char *>(&v), sizeof(T));
    if (!is) throw Error("checkpoint: truncated file");
    return v;
}

std::string get_str(std::istream &is) {
    auto n = get<std::uint64_t>(is);
    if (n > (1u << 20)) throw Error("checkpoint: corrupt string length");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw Error("checkpoint: truncated file");
    return s;
}

} // namespace

Checkpoint Checkpoint::capture(std::string kind, const ParamList &params) {
    Checkpoint ck;
    ck.kind = std::move(kind);
    for (const auto &p : params) {
        Tensor t{p.name, static_cast<std::uint64_t>(p.rows), static_cast<std::uint64_t>(p.cols), {}};
        t.row_major.reserve(p.size());
        auto m = p.map();
        for (Index i = 0; i < p.rows; ++i)
            for (Index j = 0; j < p.cols; ++j) t.row_major.push_back(m(i, j));
        ck.tensors.push_back(std::move(t));
    }
    return ck;
}

void Checkpoint::restore(const ParamList &params) const {
    std::unordered_map<std::string, const Tensor *> by_name;
    for (const auto &t : tensors) by_name.emplace(t.name, &t);
    for (const auto &p : params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) throw Error("checkpoint: missing tensor '" + p.name + "'");
        const Tensor &t = *it->second;
        if (t.rows != static_cast<std::uint64_t>(p.rows) ||
            t.cols != static_cast<std::uint64_t>(p.cols))
            throw Error("checkpoint: shape mismatch for '" + p.name + "': file has " +
                        std::to_string(t.rows) + "x" + std::to_string(t.cols) + ", model wants " +
                        std::to_string(p.rows) + "x" + std::to_string(p.cols));
        auto m = p.map();
        std::size_t k = 0;
        for (Index i = 0; i < p.rows; ++i)
            for (Index j = 0; j < p.cols; ++j) m(i, j) = t.row_major[k++];
    }
}

void Checkpoint::save(const std::filesystem::path &path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("checkpoint: cannot write " + path.string());
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, kVersion);
    put_str(os, kind);
    put_str(os, model_digest);
    put_str(os, config_digest);
    put<std::uint64_t>(os, seed);
    put<std::uint64_t>(os, tensors.size());
    for (const auto &t : tensors) {
        put_str(os, t.name);
        put<std::uint64_t>(os, t.rows);
        put<std::uint64_t>(os, t.cols);
        os.write(reinterpret_cast<const char *>(t.row_major.data()),
                 static_cast<std::streamsize>(t.row_major.size() * sizeof(double)));
    }
    if (!os) throw Error("checkpoint: write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("checkpoint: cannot open " + path.string());
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw Error("checkpoint: bad magic in " + path.string());
    auto version = get<std::uint32_t>(is);
    if (version != kVersion)
        throw Error("checkpoint: unsupported version " + std::to_string(version) + " in " +
                    path.string());
    Checkpoint ck;
    ck.kind = get_str(is);
    ck.model_digest = get_str(is);
    ck.config_digest = get_str(is);
    ck.seed = get<std::uint64_t>(is);
    auto count = get<std::uint64_t>(is);
    for (std::uint64_t n = 0; n < count; ++n) {
        Tensor t;
        t.name = get_str(is);
        t.rows = get<std::uint64_t>(is);
        t.cols = get<std::uint64_t>(is);
        if (t.rows * t.cols > (1ull << 32)) throw Error("checkpoint: corrupt tensor shape");
        t.row_major.resize(t.rows * t.cols);
        is.read(reinterpret_cast<char *>(t.row_major.data()),
                static_cast<std::streamsize>(t.row_major.size() * sizeof(double)));
        if (!is) throw Error("checkpoint: truncated tensor '" + t.name + "'");
        ck.tensors.push_back(std::move(t));
    }
    return ck;
}

} // namespace leakgan
