#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace chaoskit {

inline constexpr double kPi = 3.14159265358979323846264338327950288;
inline constexpr double kSqrt2Pi = 2.50662827463100050241576528481104525;

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / kSqrt2Pi; }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / 1.41421356237309504880168872420969808); }

// Upper tail 1 - Phi(x) without cancellation.
inline double normal_cdf_c(double x) { return 0.5 * std::erfc(x / 1.41421356237309504880168872420969808); }

// Antiderivative of Phi: d/dt [t*Phi(t) + phi(t)] = Phi(t); vanishes at -inf.
inline double normal_cdf_antideriv(double t) { return t * normal_cdf(t) + normal_pdf(t); }

// Scaled complementary error function exp(t^2) * erfc(t) for t >= 0.
// Direct product below t = 2; Laplace continued fraction above.
inline double erfcx_nonneg(double t) {
    if (t < 0.0) throw std::invalid_argument("erfcx_nonneg: negative argument");
    if (t < 2.0) return std::exp(t * t) * std::erfc(t);
    // erfc(t) e^{t^2} = (1/sqrt(pi)) / (t + (1/2)/(t + 1/(t + (3/2)/(t + ...))))
    const double tiny = 1e-300;
    double f = t;
    double c = f;
    double d = 0.0;
    for (int k = 1; k <= 200; ++k) {
        double a = 0.5 * k;
        d = t + a * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = t + a / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = c * d;
        f *= delta;
        if (std::fabs(delta - 1.0) < 1e-17) break;
    }
    return 1.0 / (f * std::sqrt(kPi));
}

// Inverse standard normal CDF. Acklam's rational approximation polished by a
// Halley step; absolute error far below the quadrature tolerances used here.
inline double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = normal_cdf(x) - p;
    double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

// Regularized lower incomplete gamma P(a,x); power series below a+1,
// Lentz continued fraction for the complement above.
inline double reg_lower_gamma(double a, double x) {
    if (!(a > 0.0)) throw std::invalid_argument("reg_lower_gamma: shape must be positive");
    if (x < 0.0) throw std::invalid_argument("reg_lower_gamma: negative argument");
    if (x == 0.0) return 0.0;
    const double log_pre = a * std::log(x) - x - std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a;
        double del = 1.0 / a;
        double sum = del;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-17) break;
        }
        return sum * std::exp(log_pre);
    }
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-17) break;
    }
    double q = std::exp(log_pre) * h;
    return 1.0 - q;
}

// Inverse of P(shape, .): bracketed Newton.
inline double gamma_quantile(double shape, double p) {
    if (!(p >= 0.0) || !(p < 1.0)) throw std::invalid_argument("gamma_quantile: p must be in [0,1)");
    if (p == 0.0) return 0.0;
    double z = normal_quantile(p);
    double t = 1.0 - 1.0 / (9.0 * shape) + z / (3.0 * std::sqrt(shape));
    double x = shape * t * t * t;  // Wilson-Hilferty start
    if (!(x > 0.0)) x = shape * std::exp((std::log(p) + std::lgamma(shape + 1.0)) / shape);
    if (!(x > 0.0) || !std::isfinite(x)) x = shape;
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
        double f = reg_lower_gamma(shape, x) - p;
        if (f > 0.0)
            hi = x;
        else
            lo = x;
        double logpdf = (shape - 1.0) * std::log(x) - x - std::lgamma(shape);
        double step = f * std::exp(-logpdf);
        double next = x - step;
        if (!(next > lo) || !(next < hi) || !std::isfinite(next))
            next = std::isfinite(hi) ? 0.5 * (lo + hi) : x * 2.0;
        if (std::fabs(next - x) <= 1e-14 * (1.0 + std::fabs(x))) return next;
        x = next;
    }
    return x;
}

namespace detail {

template <int N>
struct GaussLegendre {
    std::array<double, N> node{};
    std::array<double, N> weight{};
    GaussLegendre() {
        for (int i = 0; i < (N + 1) / 2; ++i) {
            double x = std::cos(kPi * (i + 0.75) / (N + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= N; ++k) {
                    double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = pk;
                }
                dp = N * (x * p1 - p0) / (x * x - 1.0);
                double dx = p1 / dp;
                x -= dx;
                if (std::fabs(dx) < 1e-16) break;
            }
            node[i] = -x;
            node[N - 1 - i] = x;
            double w = 2.0 / ((1.0 - x * x) * dp * dp);
            weight[i] = w;
            weight[N - 1 - i] = w;
        }
    }
};

template <int N, class F>
double gl_apply(const F& f, double a, double b) {
    static const GaussLegendre<N> rule;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += rule.weight[i] * f(mid + half * rule.node[i]);
    return s * half;
}

template <class F>
double adaptive_gl_rec(const F& f, double a, double b, double tol, int depth) {
    double coarse = gl_apply<7>(f, a, b);
    double fine = gl_apply<15>(f, a, b);
    if (std::fabs(fine - coarse) <= tol || depth >= 48) return fine;
    double mid = 0.5 * (a + b);
    return adaptive_gl_rec(f, a, mid, 0.5 * tol, depth + 1) +
           adaptive_gl_rec(f, mid, b, 0.5 * tol, depth + 1);
}

}  // namespace detail

// Adaptive Gauss-Legendre with absolute tolerance; pairs a 7- and a 15-node
// rule and bisects until they agree.
template <class F>
double integrate(const F& f, double a, double b, double tol) {
    if (!(b >= a)) throw std::invalid_argument("integrate: bad interval");
    if (a == b) return 0.0;
    return detail::adaptive_gl_rec(f, a, b, tol, 0);
}

}  // namespace chaoskit
