#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rfslam {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seeded random stream. Substreams derived from a master seed and a list of
/// integer ids are stable across call order and thread count, which is what
/// keeps full simulations reproducible.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    static RngStream derive(std::uint64_t master, std::initializer_list<std::uint64_t> ids) {
        std::uint64_t s = splitmix64(master);
        for (std::uint64_t id : ids)
            s = splitmix64(s ^ splitmix64(id + 0x632be59bd9b4e019ULL));
        return RngStream(s);
    }

    std::mt19937_64& engine() { return engine_; }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double normal(double mean, double stddev) {
        if (stddev <= 0.0) return mean;
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        return std::poisson_distribution<int>(mean)(engine_);
    }

    std::size_t uniform_index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace rfslam
