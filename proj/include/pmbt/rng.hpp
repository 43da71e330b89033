#pragma once

#include <cstdint>
#include <cmath>
#include <initializer_list>
#include <numbers>
#include <random>
#include <vector>

namespace pmbt {

/// SplitMix64 step; used to derive well-separated child seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives a child seed from a master seed and a tag path, e.g.
/// derive_seed(master, {kScenario, replicate}). The same path always yields
/// the same child, and distinct paths yield independent streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = master;
    std::uint64_t out = splitmix64(s);
    for (std::uint64_t t : tags) {
        s ^= t + 0x9e3779b97f4a7c15ULL + (out << 6) + (out >> 2);
        out = splitmix64(s);
    }
    return out;
}

// Stream-purpose tags for derive_seed paths.
namespace seed_tag {
inline constexpr std::uint64_t scenario = 0x5343454eULL;  // "SCEN"
inline constexpr std::uint64_t frame = 0x4652414dULL;     // "FRAM"
inline constexpr std::uint64_t filter = 0x46494c54ULL;    // "FILT"
}  // namespace seed_tag

/// Deterministic random stream. All draws go through uniform01(), which maps
/// the top 53 engine bits into the open interval (0,1); results depend only on
/// the seed, never on platform distribution implementations.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : eng_(seed) {}

    double uniform01() {
        return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer on [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform01() * (static_cast<double>(hi) - lo + 1.0));
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // Box-Muller
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    double rayleigh(double sigma) { return sigma * std::sqrt(-2.0 * std::log(uniform01())); }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Systematic resampling: draws n indices from the categorical distribution
/// given by `weights` (not necessarily normalized) with a single uniform.
inline std::vector<int> systematic_resample(const std::vector<double>& weights, int n,
                                            RandomStream& rng) {
    std::vector<int> idx;
    idx.reserve(n);
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0 || n <= 0) return idx;
    const double step = total / n;
    double pos = rng.uniform01() * step;
    double cum = 0.0;
    std::size_t i = 0;
    for (int k = 0; k < n; ++k) {
        while (i + 1 < weights.size() && cum + weights[i] < pos) {
            cum += weights[i];
            ++i;
        }
        idx.push_back(static_cast<int>(i));
        pos += step;
    }
    return idx;
}

}  // namespace pmbt
