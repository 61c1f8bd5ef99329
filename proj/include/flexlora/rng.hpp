#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <vector>

namespace flexlora {

/// Deterministic RNG. All distributions are implemented by hand on top of
/// the raw 64-bit stream so that a given seed produces the same sequence on
/// every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // warm up so nearby seeds decorrelate
        next_u64();
        next_u64();
    }

    /// Derives an independent stream from a root seed and a path of labels,
    /// e.g. Rng::derive(seed, {kClientData, client_id}).
    static Rng derive(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
        std::uint64_t h = root;
        for (std::uint64_t p : path) {
            h = splitmix(h ^ (p + 0x9e3779b97f4a7c15ULL));
        }
        return Rng(h);
    }

    std::uint64_t next_u64() {
        state_ = splitmix_step(state_);
        return splitmix_output(state_);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (one value per two uniforms, stateless).
    double gaussian() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling, unbiased
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Sample `count` elements from `pool` without replacement; order of the
    /// result is the draw order.
    std::vector<int> sample_without_replacement(std::vector<int> pool, std::size_t count) {
        std::vector<int> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t j = static_cast<std::size_t>(below(pool.size() - i)) ;
            out.push_back(pool[j]);
            std::swap(pool[j], pool[pool.size() - 1 - i]);
        }
        return out;
    }

    int categorical(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size()) - 1;
    }

    /// Gamma(alpha, 1) via Marsaglia-Tsang, with the U^(1/alpha) boost for
    /// alpha < 1.
    double gamma(double alpha) {
        if (alpha < 1.0) {
            double u = uniform();
            while (u <= 0.0) u = uniform();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = gaussian();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> dirichlet(double alpha, int k) {
        std::vector<double> g(k);
        double sum = 0.0;
        for (int i = 0; i < k; ++i) {
            g[i] = gamma(alpha);
            sum += g[i];
        }
        for (double& v : g) v /= sum;
        return g;
    }

private:
    static std::uint64_t splitmix_step(std::uint64_t s) { return s + 0x9e3779b97f4a7c15ULL; }

    static std::uint64_t splitmix_output(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t splitmix(std::uint64_t s) { return splitmix_output(splitmix_step(s)); }

    std::uint64_t state_;
};

// Stream labels for Rng::derive paths.
namespace streams {
inline constexpr std::uint64_t kWorldBase = 1;
inline constexpr std::uint64_t kWorldShared = 2;
inline constexpr std::uint64_t kWorldArchetype = 3;
inline constexpr std::uint64_t kWorldAssign = 4;
inline constexpr std::uint64_t kWorldSamples = 5;
inline constexpr std::uint64_t kClientData = 6;
inline constexpr std::uint64_t kResourceAssign = 7;
inline constexpr std::uint64_t kRoundSample = 8;
inline constexpr std::uint64_t kLocalTrain = 9;
inline constexpr std::uint64_t kAdapterInit = 10;
inline constexpr std::uint64_t kZeroShot = 11;
}  // namespace streams

}  // namespace flexlora
