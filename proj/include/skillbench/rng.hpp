#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace skillbench {

// Counter-style deterministic RNG. Every consumer owns its own stream,
// derived by hashing (parent seed, tag, index...), so results never depend
// on thread scheduling or evaluation order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(mix(seed ^ 0x9e3779b97f4a7c15ull)), state_(seed_) {}

    std::uint64_t next_u64()
    {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n)
    {
        // rejection sampling to kill modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit)
            v = next_u64();
        return v % n;
    }

    /// Standard normal via Box-Muller (second value cached).
    double normal()
    {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    /// Independent child stream; the parent's draw position is not consumed.
    Rng derive(std::uint64_t tag) const { return Rng(mix(seed_ ^ mix(tag ^ 0xd1b54a32d192ed03ull))); }

    Rng derive(std::uint64_t tag, std::uint64_t index) const
    {
        return Rng(mix(seed_ ^ mix(tag ^ 0xd1b54a32d192ed03ull) ^ mix(index * 0x2545f4914f6cdd1dull + 0x632be59bd9b4e019ull)));
    }

    std::uint64_t stream_seed() const { return seed_; }

    // checkpoint support
    std::uint64_t raw_state() const { return state_; }
    bool has_cached_normal() const { return has_cached_; }
    double cached_normal() const { return cached_; }
    static Rng restore(std::uint64_t seed, std::uint64_t state, bool has_cached, double cached)
    {
        Rng r(0);
        r.seed_ = seed;
        r.state_ = state;
        r.has_cached_ = has_cached;
        r.cached_ = cached;
        return r;
    }

private:
    static std::uint64_t mix(std::uint64_t z)
    {
        z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdull;
        z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ull;
        return z ^ (z >> 33);
    }

    std::uint64_t seed_;
    std::uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

// Tags carving up the seed space by purpose. Values are arbitrary but fixed;
// changing them changes every downstream stream.
namespace rng_tag {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSelection = 2;
inline constexpr std::uint64_t kVariation = 3;
inline constexpr std::uint64_t kEvaluation = 4;
inline constexpr std::uint64_t kLearner = 5;
inline constexpr std::uint64_t kEnvReset = 6;
inline constexpr std::uint64_t kPolicy = 7;
inline constexpr std::uint64_t kCvt = 8;
inline constexpr std::uint64_t kSkill = 9;
inline constexpr std::uint64_t kEval = 10;
inline constexpr std::uint64_t kMeta = 11;
}

} // namespace skillbench
