#pragma once

// Seeded streams whose output is fixed by the seed alone. The standard
// distribution adaptors are implementation-defined, so uniforms are built
// from raw 64-bit words and normals by inversion.

#include "foldmenu/normal.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace foldmenu {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform() {
        const std::uint64_t bits = engine_() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    double normal() { return normal::quantile(uniform()); }

    std::uint64_t next_u64() { return engine_(); }

    /// Index in [0, n).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    std::vector<double> uniforms(std::size_t n) {
        std::vector<double> out(n);
        for (auto& u : out) u = uniform();
        return out;
    }

    std::vector<double> normals(std::size_t n) {
        std::vector<double> out(n);
        for (auto& z : out) z = normal();
        return out;
    }

    /// Seed for an independent child stream (splitmix64 of the next word).
    std::uint64_t derive_seed() {
        std::uint64_t z = engine_() + 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace foldmenu
