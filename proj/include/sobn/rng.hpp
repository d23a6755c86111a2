#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace sobn {

// splitmix64, used to derive well-separated substream seeds
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic random stream. All sampling code in the library goes
/// through this class so that a (master seed, trial, stream) triple fully
/// determines every draw, independent of platform distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Substream for trial `trial`, purpose tag `stream`, derived from the
    /// master seed. Distinct triples give statistically independent streams.
    static Rng substream(std::uint64_t master, std::uint64_t trial, std::uint64_t stream) {
        std::uint64_t s = master;
        std::uint64_t a = splitmix64(s);
        s ^= trial * 0x9e3779b97f4a7c15ULL + 0x123456789abcdefULL;
        std::uint64_t b = splitmix64(s);
        s ^= stream + 0xdeadbeefcafef00dULL;
        std::uint64_t c = splitmix64(s);
        return Rng(a ^ (b * 3) ^ (c * 7));
    }

    std::uint64_t bits() { return gen_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    int uniform_int(int n) {
        // rejection to avoid modulo bias
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % static_cast<std::uint64_t>(n);
        std::uint64_t v;
        do { v = gen_(); } while (v >= limit);
        return static_cast<int>(v % static_cast<std::uint64_t>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    double exponential() {
        double u;
        do { u = uniform(); } while (u <= 0.0);
        return -std::log(u);
    }

    double normal() {
        // Box-Muller, fresh pair each call
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Marsaglia-Tsang gamma sampler, any shape > 0, unit scale.
    double gamma(double shape) {
        if (shape < 1.0) {
            double u;
            do { u = uniform(); } while (u <= 0.0);
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> dirichlet(std::span<const double> shapes) {
        std::vector<double> out(shapes.size());
        double total = 0.0;
        for (std::size_t i = 0; i < shapes.size(); ++i) {
            out[i] = shapes[i] == 1.0 ? exponential() : gamma(shapes[i]);
            total += out[i];
        }
        for (double& v : out) v /= total;
        return out;
    }

    /// Index drawn with probability proportional to probs[i].
    int categorical(std::span<const double> probs) {
        double total = 0.0;
        for (double p : probs) total += p;
        double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size()) - 1;
    }

private:
    std::mt19937_64 gen_;
};

} // namespace sobn
