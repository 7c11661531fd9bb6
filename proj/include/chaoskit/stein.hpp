#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "chaoskit/rng.hpp"
#include "chaoskit/special.hpp"
#include "chaoskit/summation.hpp"

namespace chaoskit {

// Approximation target: the standard normal law, or the centered Gamma law
// 2 X - nu with X ~ Gamma(nu/2, 1), which has mean 0 and variance 2 nu.
class Target {
  public:
    enum class Kind { Normal, CenteredGamma };

    static Target normal() { return Target(Kind::Normal, 0.0); }

    static Target centered_gamma(double nu) {
        if (!(nu > 0.0) || !std::isfinite(nu))
            throw std::invalid_argument("Target: gamma parameter must be positive and finite");
        return Target(Kind::CenteredGamma, nu);
    }

    Kind kind() const { return kind_; }
    bool is_normal() const { return kind_ == Kind::Normal; }
    double nu() const { return nu_; }

    double mean() const { return 0.0; }
    double variance() const { return is_normal() ? 1.0 : 2.0 * nu_; }

    // Lower edge of the support; the normal target is supported on all reals.
    double support_lower() const {
        return is_normal() ? -std::numeric_limits<double>::infinity() : -nu_;
    }

    double cdf(double x) const {
        if (is_normal()) return normal_cdf(x);
        if (x <= -nu_) return 0.0;
        return reg_lower_gamma(0.5 * nu_, 0.5 * (x + nu_));
    }

    double quantile(double p) const {
        if (!(p > 0.0) || !(p < 1.0)) throw std::invalid_argument("Target: quantile level must be in (0,1)");
        if (is_normal()) return normal_quantile(p);
        return 2.0 * gamma_quantile(0.5 * nu_, p) - nu_;
    }

    // Supremum of the density; infinite for the centered Gamma with nu < 2,
    // whose density blows up at the support edge.
    double density_bound() const {
        if (is_normal()) return 1.0 / kSqrt2Pi;
        double shape = 0.5 * nu_;
        if (shape < 1.0) return std::numeric_limits<double>::infinity();
        if (shape == 1.0) return 0.5;
        double m = shape - 1.0;  // mode of Gamma(shape, 1)
        return 0.5 * std::exp((shape - 1.0) * std::log(m) - m - std::lgamma(shape));
    }

    double sample(Rng& rng) const {
        if (is_normal()) return rng.normal();
        return 2.0 * rng.gamma(0.5 * nu_) - nu_;
    }

    static Target from_json(const nlohmann::json& j) {
        std::string type = j.at("type").get<std::string>();
        if (type == "normal") return normal();
        if (type == "gamma") return centered_gamma(j.at("nu").get<double>());
        throw std::invalid_argument("target JSON: type must be \"normal\" or \"gamma\"");
    }

    nlohmann::json to_json() const {
        if (is_normal()) return nlohmann::json{{"type", "normal"}};
        return nlohmann::json{{"type", "gamma"}, {"nu", nu_}};
    }

  private:
    Target(Kind k, double nu) : kind_(k), nu_(nu) {}
    Kind kind_;
    double nu_;
};

// A sample held in nondecreasing order.
class Sample {
  public:
    explicit Sample(std::vector<double> xs) : xs_(std::move(xs)) {
        if (xs_.empty()) throw std::invalid_argument("Sample: need at least one value");
        for (double v : xs_)
            if (!std::isfinite(v)) throw std::invalid_argument("Sample: values must be finite");
        std::sort(xs_.begin(), xs_.end());
    }

    std::size_t size() const { return xs_.size(); }
    const std::vector<double>& values() const { return xs_; }
    double operator[](std::size_t i) const { return xs_.at(i); }

  private:
    std::vector<double> xs_;
};

inline Sample sample_target(const Target& t, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_target: need at least one draw");
    std::vector<double> xs(n);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) xs[i] = t.sample(rng);
    return Sample(std::move(xs));
}

namespace detail {

// Integral of |G - c| over [a,b] for a nondecreasing CDF G, splitting at the
// crossing point so each piece has a constant sign.
template <class Cdf, class CdfIntegral>
double segment_l1(double a, double b, double c, const Cdf& G, const CdfIntegral& intG,
                  double quantile_at_c) {
    if (!(b > a)) return 0.0;
    double ga = G(a), gb = G(b);
    if (gb <= c) return c * (b - a) - intG(a, b);
    if (ga >= c) return intG(a, b) - c * (b - a);
    double t = std::clamp(quantile_at_c, a, b);
    return (c * (t - a) - intG(a, t)) + (intG(t, b) - c * (b - t));
}

}  // namespace detail

// Exact L1 distance between the empirical CDF of the sample and the target
// CDF. Normal pieces use the closed form int Phi = t Phi(t) + phi(t); Gamma
// pieces use adaptive quadrature with a 1e-9 absolute budget over the call.
inline double w1_distance(const Sample& s, const Target& target) {
    const std::vector<double>& xs = s.values();
    const std::size_t n = xs.size();
    const double dn = static_cast<double>(n);

    if (target.is_normal()) {
        auto A = [](double t) { return normal_cdf_antideriv(t); };
        double acc = A(xs.front());  // left tail: F_n = 0, integrand is Phi
        for (std::size_t i = 1; i < n; ++i) {
            double c = static_cast<double>(i) / dn;
            acc += detail::segment_l1(
                xs[i - 1], xs[i], c, [](double t) { return normal_cdf(t); },
                [&](double a, double b) { return A(b) - A(a); }, normal_quantile(c));
        }
        acc += A(xs.back()) - xs.back();  // right tail: integral of 1 - Phi
        return acc;
    }

    const double nu = target.nu();
    const double lower = -nu;
    // Beyond this point the survival function is below ~1e-14; the neglected
    // tail mass integrates to well under the quadrature budget.
    const double hi_cut = 2.0 * gamma_quantile(0.5 * nu, 1.0 - 1e-14) - nu;
    const double piece_tol = 1e-9 / static_cast<double>(n + 2);
    auto G = [&](double t) { return target.cdf(t); };
    auto intG = [&](double a, double b) { return integrate(G, a, b, piece_tol); };

    double acc = 0.0;
    if (xs.front() > lower) acc += intG(lower, xs.front());
    for (std::size_t i = 1; i < n; ++i) {
        double a = xs[i - 1], b = xs[i];
        if (!(b > a)) continue;
        double c = static_cast<double>(i) / dn;
        double split = (b <= lower) ? a : target.quantile(c);
        acc += detail::segment_l1(a, b, c, G, intG, split);
    }
    double t0 = xs.back();
    double t1 = std::max(hi_cut, t0) + 80.0;
    acc += integrate([&](double t) { return 1.0 - G(t); }, t0, t1, piece_tol);
    return acc;
}

// Kolmogorov distance via the two-sided scan over order statistics.
inline double ks_distance(const Sample& s, const Target& target) {
    const std::vector<double>& xs = s.values();
    const double dn = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double g = target.cdf(xs[i]);
        d = std::max(d, g - static_cast<double>(i) / dn);
        d = std::max(d, static_cast<double>(i + 1) / dn - g);
    }
    return d;
}

namespace detail {

// Smoothed ramp h(x) = s log cosh((x-a)/s): |h'| = |tanh| <= 1 and
// |h''| = sech^2 / s <= 1 for scales s >= 1.
inline double log_cosh(double u) {
    double a = std::fabs(u);
    return a + std::log1p(std::exp(-2.0 * a)) - 0.6931471805599453094172321214581766;
}

struct RampSpec {
    double center;
    double scale;
};

inline RampSpec ramp_member(const Target& target, int j, int k) {
    static const double scales[4] = {1.0, 2.0, 4.0, 8.0};
    int levels = (k + 3) / 4;
    int level_idx = j / 4;
    double p = (static_cast<double>(level_idx) + 0.5) / static_cast<double>(levels);
    return RampSpec{target.quantile(p), scales[j % 4]};
}

inline double ramp_value(const RampSpec& r, double x) {
    return r.scale * log_cosh((x - r.center) / r.scale);
}

// E h(Z) for the smoothed ramp. The normal case integrates h against the
// density directly; the Gamma case integrates h'(t)(1 - G(t)) from the
// support edge, which keeps the integrand bounded even where the density
// blows up.
inline double ramp_target_mean(const RampSpec& r, const Target& target) {
    if (target.is_normal()) {
        return integrate([&](double t) { return ramp_value(r, t) * normal_pdf(t); }, -16.0, 16.0,
                         1e-11);
    }
    double nu = target.nu();
    double lower = -nu;
    double hi = 2.0 * gamma_quantile(0.5 * nu, 1.0 - 1e-14) - nu + 80.0;
    double edge = ramp_value(r, lower);
    return edge + integrate(
                      [&](double t) {
                          return std::tanh((t - r.center) / r.scale) * (1.0 - target.cdf(t));
                      },
                      lower, hi, 1e-11);
}

}  // namespace detail

struct D2Detail {
    double value = 0.0;      // max over the family of |mean h(sample) - E h(target)|
    double se = 0.0;         // standard error of the maximizing family member
    double max_se = 0.0;     // largest standard error across the family
    int argmax = 0;
};

// Certified lower bound for the d2 distance: maximum discrepancy over a
// finite family of k smoothed ramps (translates at target quantiles, scales
// 1, 2, 4, 8). Every member has |h'| <= 1 and |h''| <= 1.
inline D2Detail d2_lower_bound_detail(const Sample& s, const Target& target, int k = 64,
                                      int threads = 1) {
    if (k < 1) throw std::invalid_argument("d2_lower_bound: family size must be positive");
    const std::vector<double>& xs = s.values();
    std::vector<double> diff(static_cast<std::size_t>(k));
    std::vector<double> se(static_cast<std::size_t>(k));
    parallel_for(static_cast<std::size_t>(k), threads, [&](std::size_t j) {
        detail::RampSpec r = detail::ramp_member(target, static_cast<int>(j), k);
        std::vector<double> hv(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) hv[i] = detail::ramp_value(r, xs[i]);
        MeanSe m = mean_se(hv);
        diff[j] = std::fabs(m.mean - detail::ramp_target_mean(r, target));
        se[j] = m.se;
    });
    D2Detail out;
    for (int j = 0; j < k; ++j) {
        out.max_se = std::max(out.max_se, se[static_cast<std::size_t>(j)]);
        if (diff[static_cast<std::size_t>(j)] > out.value) {
            out.value = diff[static_cast<std::size_t>(j)];
            out.se = se[static_cast<std::size_t>(j)];
            out.argmax = j;
        }
    }
    return out;
}

inline double d2_lower_bound(const Sample& s, const Target& target, int k = 64) {
    return d2_lower_bound_detail(s, target, k).value;
}

// Bounded solution of the unit-variance normal Stein equation
//   g'(w) - w g(w) = 1_{w <= x} - Phi(x),
// namely g_x(w) = sqrt(2 pi) e^{w^2/2} Phi(min(w,x)) (1 - Phi(max(w,x))).
// Each quadrant is evaluated through erfcx so the e^{w^2/2} factor never
// materializes.
inline double stein_g(double x, double w) {
    const double inv_sqrt2 = 0.70710678118654752440084436210484904;
    if (w <= x) {
        if (w <= 0.0)
            return kSqrt2Pi * 0.5 * erfcx_nonneg(-w * inv_sqrt2) * normal_cdf_c(x);
        return kSqrt2Pi * normal_cdf(w) * 0.5 * erfcx_nonneg(x * inv_sqrt2) *
               std::exp(0.5 * (w - x) * (w + x));
    }
    if (w >= 0.0) return kSqrt2Pi * 0.5 * erfcx_nonneg(w * inv_sqrt2) * normal_cdf(x);
    return kSqrt2Pi * normal_cdf_c(w) * 0.5 * erfcx_nonneg(-x * inv_sqrt2) *
           std::exp(0.5 * (w - x) * (w + x));
}

// Derivative of the Stein solution, with g'_x(x) := x g_x(x) + 1 - Phi(x)
// at the discontinuity of the right-hand side.
inline double stein_g_prime(double x, double w) {
    double g = stein_g(x, w);
    if (w <= x) return w * g + normal_cdf_c(x);
    return w * g - normal_cdf(x);
}

struct SteinPropertyReport {
    double max_eq_residual = 0.0;        // |g' - w g - (1_{w<=x} - Phi(x))|, w != x
    double min_g = std::numeric_limits<double>::infinity();
    double max_g = 0.0;                  // must stay in (0, sqrt(2 pi)/4]
    double max_abs_g_prime = 0.0;        // must stay <= 1
    double max_supnorm_violation = 0.0;  // |(w+u)g(w+u)-(w+v)g(w+v)| vs (|w|+sqrt(2pi)/4)(|u|+|v|)
    double max_forward_violation = 0.0;  // forward Taylor gap vs h^2/2 (|w|+sqrt(2pi)/4) + jump term
    double max_backward_violation = 0.0; // backward gap vs 3h^2/2 (|w-h|+sqrt(2pi)/4) + jump term
    std::size_t grid_points = 0;
    std::size_t tuples = 0;
};

namespace detail {

inline double half_open_indicator(double a, double b, double x) {
    return (a <= x && x < b) ? 1.0 : 0.0;
}

}  // namespace detail

// Property sweep for the Stein solution: pointwise bounds on a deterministic
// (x, w) grid plus inequality margins on randomized tuples.
inline SteinPropertyReport stein_property_report(int grid_side, std::size_t tuples,
                                                 std::uint64_t seed) {
    if (grid_side < 2) throw std::invalid_argument("stein_property_report: grid too small");
    SteinPropertyReport rep;
    const double quarter = kSqrt2Pi / 4.0;
    auto grid_at = [&](int i) {
        return -6.0 + 12.0 * static_cast<double>(i) / static_cast<double>(grid_side - 1);
    };
    for (int ix = 0; ix < grid_side; ++ix) {
        double x = grid_at(ix);
        double phix = normal_cdf(x);
        for (int iw = 0; iw < grid_side; ++iw) {
            double w = grid_at(iw);
            double g = stein_g(x, w);
            double gp = stein_g_prime(x, w);
            rep.min_g = std::min(rep.min_g, g);
            rep.max_g = std::max(rep.max_g, g);
            rep.max_abs_g_prime = std::max(rep.max_abs_g_prime, std::fabs(gp));
            if (w != x) {
                double ind = (w <= x) ? 1.0 : 0.0;
                rep.max_eq_residual =
                    std::max(rep.max_eq_residual, std::fabs(gp - w * g - (ind - phix)));
            }
            ++rep.grid_points;
        }
    }

    Rng rng(seed);
    for (std::size_t i = 0; i < tuples; ++i) {
        double x = -6.0 + 12.0 * rng.u01();
        double w = -6.0 + 12.0 * rng.u01();
        double u = -3.0 + 6.0 * rng.u01();
        double v = -3.0 + 6.0 * rng.u01();
        double h = -3.0 + 6.0 * rng.u01();

        double lhs_sup = std::fabs((w + u) * stein_g(x, w + u) - (w + v) * stein_g(x, w + v));
        double rhs_sup = (std::fabs(w) + quarter) * (std::fabs(u) + std::fabs(v));
        rep.max_supnorm_violation = std::max(rep.max_supnorm_violation, lhs_sup - rhs_sup);

        double g_w = stein_g(x, w);
        double gp_w = stein_g_prime(x, w);

        double lhs_f = std::fabs(stein_g(x, w + h) - g_w - gp_w * h);
        double rhs_f = 0.5 * h * h * (std::fabs(w) + quarter) +
                       std::fabs(h) * (detail::half_open_indicator(w, w + h, x) +
                                       detail::half_open_indicator(w + h, w, x));
        rep.max_forward_violation = std::max(rep.max_forward_violation, lhs_f - rhs_f);

        double lhs_b = std::fabs(g_w - stein_g(x, w - h) - gp_w * h);
        double rhs_b = 1.5 * h * h * (std::fabs(w - h) + quarter) +
                       std::fabs(h) * (detail::half_open_indicator(w - h, w, x) +
                                       detail::half_open_indicator(w, w - h, x));
        rep.max_backward_violation = std::max(rep.max_backward_violation, lhs_b - rhs_b);
        ++rep.tuples;
    }
    return rep;
}

}  // namespace chaoskit
