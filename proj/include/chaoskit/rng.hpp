#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace chaoskit {

// Counter-style splittable generator: every consumer derives its own stream
// seed with seed_stream(), so replicate r of a run keyed by `master` draws
// from seed_stream(master, r) no matter which thread executes it.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t seed_stream(std::uint64_t master, std::uint64_t index) {
    return mix64(master ^ mix64(index + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t seed_stream(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    return seed_stream(seed_stream(master, a), b);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform on [0,1).
    double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0,1]; safe under log().
    double u01_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // Standard normal via Box-Muller; consumes exactly two uniforms.
    double normal() {
        double u = u01_pos();
        double v = u01();
        return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586476925287 * v);
    }

    // Poisson(mu). Sequential inversion below mean 30, Hörmann's PTRD
    // transformed rejection above it.
    std::int64_t poisson(double mu) {
        if (!(mu >= 0.0) || !std::isfinite(mu))
            throw std::invalid_argument("poisson: mean must be finite and nonnegative");
        if (mu == 0.0) return 0;
        if (mu < 30.0) return poisson_inversion(mu);
        return poisson_ptrd(mu);
    }

    // Gamma(shape, unit rate) via Marsaglia-Tsang squeeze; shapes below one
    // are boosted through the shape+1 sampler.
    double gamma(double shape) {
        if (!(shape > 0.0) || !std::isfinite(shape))
            throw std::invalid_argument("gamma: shape must be finite and positive");
        if (shape < 1.0) {
            double g = gamma(shape + 1.0);
            return g * std::pow(u01_pos(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double t = 1.0 + c * x;
            if (t <= 0.0) continue;
            double v = t * t * t;
            double u = u01_pos();
            double x2 = x * x;
            if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
            if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

  private:
    std::int64_t poisson_inversion(double mu) {
        double u = u01();
        double p = std::exp(-mu);
        double s = p;
        std::int64_t k = 0;
        while (u > s) {
            ++k;
            p *= mu / static_cast<double>(k);
            s += p;
            if (k > 2000) break;  // cumulative round-off guard; P is ~1 by here
        }
        return k;
    }

    std::int64_t poisson_ptrd(double mu) {
        const double smu = std::sqrt(mu);
        const double b = 0.931 + 2.53 * smu;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        const double log_mu = std::log(mu);
        for (;;) {
            double u = u01() - 0.5;
            double v = u01_pos();
            double us = 0.5 - std::fabs(u);
            double kf = std::floor((2.0 * a / us + b) * u + mu + 0.43);
            if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(kf);
            if (kf < 0.0 || (us < 0.013 && v > us)) continue;
            double k = kf;
            if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
                k * log_mu - mu - std::lgamma(k + 1.0))
                return static_cast<std::int64_t>(kf);
        }
    }

    std::uint64_t state_;
};

}  // namespace chaoskit
