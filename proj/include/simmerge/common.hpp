#pragma once

// Shared utilities: deterministic RNG with named substreams, summary
// statistics, small helpers used across the library.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace simmerge {

// All library errors are reported as SimmergeError with a one-line message.
class SimmergeError : public std::runtime_error {
public:
    explicit SimmergeError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw SimmergeError(msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        fail(msg);
    }
}

// FNV-1a, used for substream derivation and artifact hashes.
constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime  = 1099511628211ULL;

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : s) {
        h ^= static_cast<std::uint64_t>(c);
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xFFu;
        h *= kFnvPrime;
    }
    return h;
}

// Deterministic PRNG: xoshiro256++ seeded via splitmix64. Distributions are
// hand-rolled so streams do not depend on the standard library implementation.
// `split` derives an independent substream from a tag; adding substreams never
// perturbs draws from existing ones.
class Rng {
public:
    explicit Rng(std::uint64_t seed) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& s : state_) {
            s = splitmix64(x);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        require(n > 0, "uniform_int: n must be positive");
        // Rejection sampling to avoid modulo bias.
        const std::uint64_t threshold = (~n + 1) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) {
                return r % n;
            }
        }
    }

    // Standard normal via Box-Muller (fresh pair per call, cosine branch).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent substream keyed by (seed-derived state, tag).
    Rng split(std::string_view tag) const {
        std::uint64_t h = fnv1a(tag);
        h = fnv1a_u64(state_[0], h);
        h = fnv1a_u64(state_[1], h);
        return Rng(h);
    }

    Rng split(std::string_view tag, std::uint64_t index) const {
        std::uint64_t h = fnv1a(tag);
        h = fnv1a_u64(index, h);
        h = fnv1a_u64(state_[0], h);
        h = fnv1a_u64(state_[1], h);
        return Rng(h);
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
};

// Empirical quantile with linear interpolation between order statistics.
// `sorted` must be ascending and nonempty; q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

// mean / median / 25th / 75th / 90th percentile of a value set.
struct FiveSummary {
    double mean = 0.0;
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    double q90 = 0.0;
};

FiveSummary summarize(std::vector<double> values);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Cosine similarity, clamped to [-1, 1]. Zero-norm inputs are an error.
double cosine(std::span<const double> a, std::span<const double> b);

} // namespace simmerge
