#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "chaoskit/chaos.hpp"
#include "chaoskit/kernels.hpp"
#include "chaoskit/malliavin.hpp"
#include "chaoskit/oracle.hpp"
#include "chaoskit/space.hpp"
#include "chaoskit/special.hpp"
#include "chaoskit/summation.hpp"

namespace chaoskit {

inline constexpr double kSqrt2OverPi = 0.79788456080286535587989211986876373;

namespace detail {

// Estimator noise can push a fourth-moment estimate below its theoretical
// floor of 3; the radicand is clamped at zero and the caller is told.
inline double clamped_sqrt_excess(double m4, bool* noise) {
    double rad = m4 - 3.0;
    if (rad < 0.0) {
        if (noise) *noise = true;
        rad = 0.0;
    }
    return std::sqrt(rad);
}

}  // namespace detail

// Wasserstein-distance bound for an order-q chaos element with unit variance:
// coefficient (sqrt(2/pi)(2q-1)/(2q) + sqrt(4q-1)/sqrt(q)) on sqrt(m4 - 3).
inline double fm_w1_rhs(int q, double m4, bool* noise = nullptr) {
    if (q < 1) throw std::invalid_argument("fm_w1_rhs: order must be positive");
    double dq = static_cast<double>(q);
    double coeff = kSqrt2OverPi * (2.0 * dq - 1.0) / (2.0 * dq) + std::sqrt(4.0 * dq - 1.0) / std::sqrt(dq);
    return coeff * detail::clamped_sqrt_excess(m4, noise);
}

// Order-free form of the same bound: (sqrt(2/pi) + 2) sqrt(m4 - 3).
inline double fm_w1_rhs_simple(double m4, bool* noise = nullptr) {
    return (kSqrt2OverPi + 2.0) * detail::clamped_sqrt_excess(m4, noise);
}

// Kolmogorov-distance bound: (11 + 2^{3/2}(m4^{1/2} + m4^{1/4})) sqrt(m4 - 3).
inline double fm_kol_rhs(double m4, bool* noise = nullptr) {
    double m4c = m4;
    if (m4c < 0.0) {
        if (noise) *noise = true;
        m4c = 0.0;
    }
    double coeff = 11.0 + 2.0 * 1.41421356237309504880168872420969808 *
                              (std::sqrt(m4c) + std::pow(m4c, 0.25));
    return coeff * detail::clamped_sqrt_excess(m4, noise);
}

inline double fm_gamma_c1(double nu) {
    if (!(nu > 0.0)) throw std::invalid_argument("fm_gamma_c1: parameter must be positive");
    return std::max(1.0, 2.0 / nu) / std::sqrt(3.0);
}

inline double fm_gamma_c2(double nu) {
    if (!(nu > 0.0)) throw std::invalid_argument("fm_gamma_c2: parameter must be positive");
    return std::max(1.0, 2.0 / nu) / std::sqrt(6.0) +
           std::max(std::sqrt(2.0 * nu), std::sqrt(2.0 / nu) + std::sqrt(0.5 * nu));
}

// d2 bound against the centered Gamma target for an order-q chaos element
// with E[F^2] = 2 nu:
//   C1(nu) sqrt(|m4 - 12 m3 - 12 nu^2 + 48 nu|) + C2(nu) sqrt(d4term / q),
// where d4term is the integrated fourth moment of the add-one cost.
inline double fm_gamma_rhs(double nu, int q, double m3, double m4, double d4term) {
    if (!(nu > 0.0)) throw std::invalid_argument("fm_gamma_rhs: parameter must be positive");
    if (q < 1) throw std::invalid_argument("fm_gamma_rhs: order must be positive");
    if (d4term < 0.0) throw std::invalid_argument("fm_gamma_rhs: fourth-cost term must be nonnegative");
    double bracket = m4 - 12.0 * m3 - 12.0 * nu * nu + 48.0 * nu;
    return fm_gamma_c1(nu) * std::sqrt(std::fabs(bracket)) +
           fm_gamma_c2(nu) * std::sqrt(d4term / static_cast<double>(q));
}

namespace detail {

// Per-(replicate, cell) contribution to the indicator supremum: the integrand
// equals mu a^2 exactly when x lies in [min(F, F + a), max(F, F + a)).
struct IndicatorEvents {
    std::vector<double> lo, hi, wt;  // one slot per (replicate, cell); wt 0 when inert
    int cells = 0;
    std::size_t n = 0;
};

struct IndicatorSup {
    double value = 0.0;
    double se = 0.0;
    double x = 0.0;
};

// Supremum over the 999 empirical permilles of F (the integrand is piecewise
// constant between order statistics, so this is a certified lower
// approximation of the true supremum).
inline IndicatorSup indicator_sweep(const IndicatorEvents& ev, std::vector<double> fvals) {
    const std::size_t n = ev.n;
    std::sort(fvals.begin(), fvals.end());
    std::vector<double> grid;
    grid.reserve(999);
    for (int k = 1; k <= 999; ++k) {
        std::size_t idx = std::min(n - 1, (static_cast<std::size_t>(k) * n) / 1000);
        double x = fvals[idx];
        if (grid.empty() || x > grid.back()) grid.push_back(x);
    }
    std::vector<double> add(grid.size() + 1, 0.0), sub(grid.size() + 1, 0.0);
    for (std::size_t e = 0; e < ev.wt.size(); ++e) {
        double w = ev.wt[e];
        if (w == 0.0) continue;
        auto ilo = std::lower_bound(grid.begin(), grid.end(), ev.lo[e]) - grid.begin();
        auto ihi = std::lower_bound(grid.begin(), grid.end(), ev.hi[e]) - grid.begin();
        if (ilo < ihi) {
            add[static_cast<std::size_t>(ilo)] += w;
            sub[static_cast<std::size_t>(ihi)] += w;
        }
    }
    double cum = 0.0, best = -1.0;
    std::size_t best_idx = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        cum += add[g] - sub[g];
        if (cum > best) {
            best = cum;
            best_idx = g;
        }
    }
    IndicatorSup out;
    if (grid.empty() || best <= 0.0) return out;
    out.x = grid[best_idx];
    // second pass: per-replicate totals at the maximizing x give mean and SE
    std::vector<double> slot(n, 0.0);
    const std::size_t m = static_cast<std::size_t>(ev.cells);
    for (std::size_t r = 0; r < n; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            std::size_t e = r * m + c;
            if (ev.wt[e] != 0.0 && ev.lo[e] <= out.x && out.x < ev.hi[e]) acc += ev.wt[e];
        }
        slot[r] = acc;
    }
    MeanSe ms = mean_se(slot);
    out.value = ms.mean;
    out.se = ms.se;
    return out;
}

}  // namespace detail

// Monte-Carlo estimates of every quantity the distance bounds consume.
// `gamma` denotes Gamma0(F, -L^{-1}F) throughout; for a pure order-q chaos
// element this coincides with q^{-1} Gamma0(F, F) pathwise.
struct Ingredients {
    int q = 0;
    double nu = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;

    MeanSe m1, m2, m3, m4;
    MeanSe gamma_mean;             // E[gamma]; equals E[F^2] in expectation
    MeanSe one_minus_gamma_abs;    // E|1 - gamma|
    VarSe gamma_var;               // Var(gamma)
    MeanSe mixed_term;             // int E[(D+F)^2 |D+ L^{-1}F|] dmu
    MeanSe d2_term;                // int E[(D+F)^2] dmu; equals q E[F^2] in expectation
    MeanSe d4_term;                // int E[(D+F)^4] dmu
    MeanSe sq_sq_term;             // E[(int (D+F)^2 dmu)^2]
    double indicator_sup = 0.0;    // sup_x E[int D+1_{F>x} |D+F| D+F dmu] over permilles
    double indicator_se = 0.0;
    double indicator_x = 0.0;
    MeanSe gamma_resid_abs;        // E|2(F + nu) - gamma|
    VarSe two_f_minus_gamma_var;   // Var(2F - gamma)

    // per-batch (m2, m3, m4, d4_term) means for batched RHS standard errors
    std::vector<std::array<double, 4>> moment_batches;
};

inline Ingredients estimate_ingredients(const DiscreteSpace& space, const ChaosFunctional& F,
                                        std::size_t n, std::uint64_t seed, int threads = 1,
                                        double nu = 0.0) {
    if (n < 32) throw std::invalid_argument("estimate_ingredients: need at least 32 replicates");
    const int q = F.top_order();
    if (q < 1) throw std::invalid_argument("estimate_ingredients: functional has no kernels");
    const int m = space.cells();
    if (static_cast<double>(n) * static_cast<double>(m) > 2e7)
        throw std::invalid_argument("estimate_ingredients: replicate-by-cell buffer too large");

    ChaosFunctional minus_linv = apply_Linv(F);
    minus_linv.scale(-1.0);
    ChaosEvaluator ev_f(space, F);
    ChaosEvaluator ev_g(space, minus_linv);

    std::vector<double> s_f(n), s_f2(n), s_f3(n), s_f4(n), s_gam(n), s_absg(n), s_mixed(n),
        s_d2(n), s_d4(n), s_sqsq(n), s_gres(n), s_tfg(n);
    detail::IndicatorEvents ev;
    ev.cells = m;
    ev.n = n;
    ev.lo.assign(n * static_cast<std::size_t>(m), 0.0);
    ev.hi.assign(n * static_cast<std::size_t>(m), 0.0);
    ev.wt.assign(n * static_cast<std::size_t>(m), 0.0);

    parallel_for(n, threads, [&](std::size_t r) {
        Rng rng(seed_stream(seed, r));
        PointConfig chi = sample_poisson(space, rng);
        double fv = ev_f(chi);
        double gv = ev_g(chi);
        double up_fg = 0.0, down_fg = 0.0, mixed = 0.0, d2 = 0.0, d4 = 0.0;
        PointConfig work = chi;
        for (int c = 0; c < m; ++c) {
            double mass = space.mass(c);
            if (mass > 0.0) {
                work.apply_delta(c, +1);
                double fp = ev_f(work);
                double gp = ev_g(work);
                work.apply_delta(c, -1);
                double af = fp - fv;
                double ag = gp - gv;
                up_fg += mass * af * ag;
                mixed += mass * af * af * std::fabs(ag);
                d2 += mass * af * af;
                d4 += mass * af * af * af * af;
                if (af != 0.0) {
                    std::size_t e = r * static_cast<std::size_t>(m) + static_cast<std::size_t>(c);
                    ev.lo[e] = std::min(fv, fp);
                    ev.hi[e] = std::max(fv, fp);
                    ev.wt[e] = mass * af * af;
                }
            }
            std::int64_t cnt = chi.count(c);
            if (cnt > 0) {
                work.apply_delta(c, -1);
                double bf = fv - ev_f(work);
                double bg = gv - ev_g(work);
                work.apply_delta(c, +1);
                down_fg += static_cast<double>(cnt) * bf * bg;
            }
        }
        double gam = 0.5 * (up_fg + down_fg);
        s_f[r] = fv;
        s_f2[r] = fv * fv;
        s_f3[r] = fv * fv * fv;
        s_f4[r] = fv * fv * fv * fv;
        s_gam[r] = gam;
        s_absg[r] = std::fabs(1.0 - gam);
        s_mixed[r] = mixed;
        s_d2[r] = d2;
        s_d4[r] = d4;
        s_sqsq[r] = d2 * d2;
        s_gres[r] = std::fabs(2.0 * (fv + nu) - gam);
        s_tfg[r] = 2.0 * fv - gam;
    });

    Ingredients out;
    out.q = q;
    out.nu = nu;
    out.n = n;
    out.seed = seed;
    out.m1 = mean_se(s_f);
    out.m2 = mean_se(s_f2);
    out.m3 = mean_se(s_f3);
    out.m4 = mean_se(s_f4);
    out.gamma_mean = mean_se(s_gam);
    out.one_minus_gamma_abs = mean_se(s_absg);
    out.gamma_var = variance_se(s_gam);
    out.mixed_term = mean_se(s_mixed);
    out.d2_term = mean_se(s_d2);
    out.d4_term = mean_se(s_d4);
    out.sq_sq_term = mean_se(s_sqsq);
    out.gamma_resid_abs = mean_se(s_gres);
    out.two_f_minus_gamma_var = variance_se(s_tfg);

    detail::IndicatorSup sup = detail::indicator_sweep(ev, s_f);
    out.indicator_sup = sup.value;
    out.indicator_se = sup.se;
    out.indicator_x = sup.x;

    const std::size_t batches = 16;
    const std::size_t bsz = n / batches;
    for (std::size_t b = 0; b < batches; ++b) {
        std::size_t lo = b * bsz;
        double inv = 1.0 / static_cast<double>(bsz);
        out.moment_batches.push_back(
            {pairwise_sum(s_f2.data() + lo, bsz) * inv, pairwise_sum(s_f3.data() + lo, bsz) * inv,
             pairwise_sum(s_f4.data() + lo, bsz) * inv, pairwise_sum(s_d4.data() + lo, bsz) * inv});
    }
    return out;
}

struct ValueSe {
    double value = 0.0;
    double se = 0.0;
};

namespace detail {

// Evaluates `stat` on the full-sample moment vector and takes the spread of
// its per-batch evaluations as the standard error.
template <class Stat>
ValueSe batched_statistic(const Ingredients& ing, const Stat& stat) {
    ValueSe out;
    out.value = stat(ing.m2.mean, ing.m3.mean, ing.m4.mean, ing.d4_term.mean);
    std::vector<double> per_batch;
    per_batch.reserve(ing.moment_batches.size());
    for (const auto& b : ing.moment_batches) per_batch.push_back(stat(b[0], b[1], b[2], b[3]));
    if (per_batch.size() >= 2) out.se = mean_se(per_batch).se;
    return out;
}

}  // namespace detail

inline ValueSe fm_w1_rhs_batched(int q, const Ingredients& ing, bool* noise = nullptr) {
    return detail::batched_statistic(
        ing, [&](double, double, double m4, double) { return fm_w1_rhs(q, m4, noise); });
}

inline ValueSe fm_w1_rhs_simple_batched(const Ingredients& ing, bool* noise = nullptr) {
    return detail::batched_statistic(
        ing, [&](double, double, double m4, double) { return fm_w1_rhs_simple(m4, noise); });
}

inline ValueSe fm_kol_rhs_batched(const Ingredients& ing, bool* noise = nullptr) {
    return detail::batched_statistic(
        ing, [&](double, double, double m4, double) { return fm_kol_rhs(m4, noise); });
}

inline ValueSe fm_gamma_rhs_batched(double nu, int q, const Ingredients& ing) {
    return detail::batched_statistic(ing, [&](double, double m3, double m4, double d4) {
        return fm_gamma_rhs(nu, q, m3, m4, std::max(0.0, d4));
    });
}

// Wasserstein bound from the mean absolute deviation of the carre-du-champ.
inline double w1_rhs_from_mean_abs(const Ingredients& g) {
    return kSqrt2OverPi * g.one_minus_gamma_abs.mean + g.mixed_term.mean;
}

// Wasserstein bound splitting the deviation into a centering gap and a
// variance term; never smaller than the mean-absolute form.
inline double w1_rhs_from_variance(const Ingredients& g) {
    return kSqrt2OverPi * std::fabs(1.0 - g.gamma_mean.mean) +
           kSqrt2OverPi * std::sqrt(std::max(0.0, g.gamma_var.var)) + g.mixed_term.mean;
}

// Wasserstein bound specialized to a pure order-q chaos element with unit
// variance; the mixed term collapses into the fourth add-one-cost moment.
inline double w1_rhs_chaos(const Ingredients& g) {
    return kSqrt2OverPi * std::sqrt(std::max(0.0, g.gamma_var.var)) +
           std::sqrt(std::max(0.0, g.d4_term.mean) / static_cast<double>(g.q));
}

// Kolmogorov bound for a pure order-q chaos element with unit variance.
inline double kol_rhs_chaos(const Ingredients& g) {
    double dq = static_cast<double>(g.q);
    double m4 = std::max(0.0, g.m4.mean);
    return std::sqrt(std::max(0.0, g.gamma_var.var)) +
           (1.0 / dq) * (1.0 + std::pow(m4, 0.25)) *
               std::pow(std::max(0.0, g.sq_sq_term.mean), 0.25) *
               std::sqrt(std::max(0.0, g.d4_term.mean)) +
           g.indicator_sup / dq;
}

// Centered-Gamma d2 bounds, general and chaos-specialized.
inline double gamma_rhs_from_mean_abs(const Ingredients& g) {
    double nu = g.nu;
    return std::max(1.0, 2.0 / nu) * g.gamma_resid_abs.mean +
           std::max(1.0, 1.0 / nu + 0.5) * g.mixed_term.mean;
}

inline double gamma_rhs_from_variance(const Ingredients& g) {
    double nu = g.nu;
    return std::max(1.0, 2.0 / nu) * std::fabs(2.0 * nu - g.gamma_mean.mean) +
           std::max(1.0, 2.0 / nu) * std::sqrt(std::max(0.0, g.two_f_minus_gamma_var.var)) +
           std::max(1.0, 1.0 / nu + 0.5) * g.mixed_term.mean;
}

inline double gamma_rhs_chaos(const Ingredients& g) {
    double nu = g.nu;
    return std::max(1.0, 2.0 / nu) * std::sqrt(std::max(0.0, g.two_f_minus_gamma_var.var)) +
           std::max(std::sqrt(2.0 * nu), std::sqrt(2.0 / nu) + std::sqrt(0.5 * nu)) *
               std::sqrt(std::max(0.0, g.d4_term.mean) / static_cast<double>(g.q));
}

struct BoundRow {
    std::string bound;
    double lhs = 0.0;
    double lhs_se = 0.0;
    double rhs = 0.0;
    double rhs_se = 0.0;

    double margin() const { return rhs - lhs - 3.0 * (lhs_se + rhs_se); }
};

struct BoundReport {
    std::string functional;
    Ingredients ingredients;
    std::vector<BoundRow> rows;

    nlohmann::json to_json() const {
        nlohmann::json jrows = nlohmann::json::array();
        for (const auto& r : rows)
            jrows.push_back({{"bound", r.bound},
                             {"lhs", r.lhs},
                             {"lhs_se", r.lhs_se},
                             {"rhs", r.rhs},
                             {"rhs_se", r.rhs_se},
                             {"margin", r.margin()}});
        return nlohmann::json{{"functional", functional},
                              {"q", ingredients.q},
                              {"n", ingredients.n},
                              {"seed", ingredients.seed},
                              {"m2", ingredients.m2.mean},
                              {"m3", ingredients.m3.mean},
                              {"m4", ingredients.m4.mean},
                              {"rows", std::move(jrows)}};
    }

    static std::string csv_header() { return "functional,bound,lhs,lhs_se,rhs,rhs_se,margin"; }

    std::string to_csv() const {
        std::string out = csv_header() + "\n";
        char buf[512];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          functional.c_str(), r.bound.c_str(), r.lhs, r.lhs_se, r.rhs, r.rhs_se,
                          r.margin());
            out += buf;
        }
        return out;
    }
};

enum class LemmaMode { Exact, MonteCarlo };

struct LemmaRow {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double se = 0.0;       // 0 for oracle-exact rows
    bool equality = false; // identity rows; inequality rows assert lhs <= rhs

    double residual() const { return lhs - rhs; }
    bool holds(double tol) const {
        if (equality) return std::fabs(lhs - rhs) <= std::max(3.0 * se, tol);
        return lhs <= rhs + 3.0 * se + tol;
    }
};

struct LemmaReport {
    int q = 0;
    double nu = 0.0;
    LemmaMode mode = LemmaMode::Exact;
    std::vector<LemmaRow> rows;

    const LemmaRow& row(const std::string& name) const {
        for (const auto& r : rows)
            if (r.name == name) return r;
        throw std::out_of_range("LemmaReport: no row named " + name);
    }

    nlohmann::json to_json() const {
        nlohmann::json jrows = nlohmann::json::array();
        for (const auto& r : rows)
            jrows.push_back({{"name", r.name},
                             {"lhs", r.lhs},
                             {"rhs", r.rhs},
                             {"se", r.se},
                             {"equality", r.equality}});
        return nlohmann::json{{"q", q},
                              {"nu", nu},
                              {"mode", mode == LemmaMode::Exact ? "exact" : "mc"},
                              {"rows", std::move(jrows)}};
    }
};

namespace detail {

inline const SymKernel& single_kernel(const ChaosFunctional& F) {
    if (F.constant() != 0.0 || F.kernels().size() != 1)
        throw std::invalid_argument("lemma_suite: functional must be a single centered integral");
    return F.kernels().begin()->second;
}

inline LemmaReport lemma_suite_exact(const DiscreteSpace& space, const ChaosFunctional& F,
                                     std::size_t n, std::uint64_t seed, int threads) {
    const SymKernel& f = single_kernel(F);
    const int q = f.order();
    const double dq = static_cast<double>(q);
    if (4 * q > CountPolynomial::kMaxDegree)
        throw std::invalid_argument("lemma_suite: instance too large in exact mode");

    CountPolynomial P = to_polynomial(space, F);
    double m2 = exact_moment(space, F, 2);
    double m3 = exact_moment(space, F, 3);
    double m4 = exact_moment(space, F, 4);
    double nu = 0.5 * m2;
    double excess = m4 - 3.0 * m2 * m2;

    CountPolynomial gam = gamma0_polynomial(space, P);
    double var_gq = exact_variance(space, gam) / (dq * dq);

    CountPolynomial P2 = P.multiplied(P);
    std::vector<double> vp(static_cast<std::size_t>(2 * q) + 1, 0.0);
    for (int p = 1; p <= 2 * q; ++p)
        vp[static_cast<std::size_t>(p)] = exact_projection_variance(space, P2, p);

    double decomp = 0.0, v1 = 0.0;
    for (int p = 1; p <= 2 * q - 1; ++p) {
        double w = 1.0 - static_cast<double>(p) / (2.0 * dq);
        decomp += w * w * vp[static_cast<std::size_t>(p)];
        if (p != q) v1 += w * w * vp[static_cast<std::size_t>(p)];
    }

    double e_g2 = exact_expectation(space, gam.multiplied(gam)) / (dq * dq);
    double e_f2g = exact_expectation(space, P2.multiplied(gam)) / dq;

    CountPolynomial d4poly = add_cost_fourth_polynomial(space, P);
    double d4 = exact_expectation(space, d4poly);

    CountPolynomial shifted(space.cells());
    shifted.add(P, 2.0);
    shifted.add(gam, -1.0 / dq);
    double var_shift = exact_variance(space, shifted);

    double v2_moment = 0.25 * vp[static_cast<std::size_t>(q)] + 8.0 * nu - 2.0 * m3;
    SymKernel hq = exact_extract_kernel(space, P2, q);
    SymKernel diff = hq;
    diff.axpy(-4.0, f);
    double v2_kernel = 0.25 * factorial(q) * inner(space, diff, diff);

    double bracket = m4 - 12.0 * m3 - 12.0 * nu * nu + 48.0 * nu;

    Ingredients ing = estimate_ingredients(space, F, n, seed, threads, nu);

    LemmaReport rep;
    rep.q = q;
    rep.nu = nu;
    rep.mode = LemmaMode::Exact;
    rep.rows = {
        {"carre_du_champ_variance_decomposition", var_gq, decomp, 0.0, true},
        {"carre_du_champ_variance_bound", var_gq,
         (2.0 * dq - 1.0) * (2.0 * dq - 1.0) / (4.0 * dq * dq) * excess, 0.0, false},
        {"carre_du_champ_second_moment_bound", e_g2, m4, 0.0, false},
        {"mixed_fourth_moment_bound", e_f2g, m4, 0.0, false},
        {"add_cost_fourth_moment_identity", d4 / (2.0 * dq), 3.0 * e_f2g - m4, 0.0, true},
        {"add_cost_fourth_moment_bound", d4 / (2.0 * dq),
         (4.0 * dq - 3.0) / (2.0 * dq) * excess, 0.0, false},
        {"indicator_supremum_bound", ing.indicator_sup / dq, 10.0 * std::sqrt(std::max(0.0, excess)),
         ing.indicator_se / dq, false},
        {"shifted_carre_du_champ_variance_decomposition", var_shift, v1 + v2_moment, 0.0, true},
        {"projection_residual_variance_forms", v2_kernel, v2_moment, 0.0, true},
        {"variance_sandwich_lower", bracket / (6.0 * dq) + d4 / (12.0 * dq * dq), var_shift, 0.0,
         false},
        {"variance_sandwich_upper", var_shift, bracket / 3.0 + d4 / (6.0 * dq), 0.0, false},
    };
    return rep;
}

// Column-major per-replicate iterated-difference values for every kernel
// order 1..pmax of the squared functional, reused across batch halves.
struct SquareKernelColumns {
    std::vector<MultisetIndexer> order_idx;             // index 0 unused
    std::vector<std::vector<std::vector<double>>> cols; // [p][entry][replicate]
};

template <class Fn>
SquareKernelColumns square_kernel_columns(const DiscreteSpace& space, const Fn& f_of_chi, int pmax,
                                          std::size_t n, std::uint64_t seed, int threads) {
    const int m = space.cells();
    PerturbationTable table(m, pmax);
    std::vector<MultisetIndexer> size_idx;
    for (int j = 0; j <= pmax; ++j) size_idx.emplace_back(m, j);

    double entries_total = 0.0;
    for (int p = 1; p <= pmax; ++p) entries_total += static_cast<double>(MultisetIndexer(m, p).size());
    if (entries_total * static_cast<double>(n) > 4e7)
        throw std::invalid_argument("lemma_suite: kernel column buffer too large");

    SquareKernelColumns out;
    out.order_idx.emplace_back(m, 0);
    out.cols.resize(static_cast<std::size_t>(pmax) + 1);
    for (int p = 1; p <= pmax; ++p) {
        out.order_idx.emplace_back(m, p);
        out.cols[static_cast<std::size_t>(p)].assign(out.order_idx.back().size(),
                                                     std::vector<double>(n, 0.0));
    }

    parallel_for(n, threads, [&](std::size_t r) {
        Rng rng(seed_stream(seed, r));
        PointConfig chi = sample_poisson(space, rng);
        std::vector<double> vals(table.tuples.size());
        PointConfig bumped = chi;
        for (std::size_t b = 0; b < table.tuples.size(); ++b) {
            for (int c : table.tuples[b]) bumped.apply_delta(c, +1);
            double v = f_of_chi(bumped);
            vals[b] = v * v;
            for (int c : table.tuples[b]) bumped.apply_delta(c, -1);
        }
        for (int p = 1; p <= pmax; ++p) {
            out.order_idx[static_cast<std::size_t>(p)].for_each(
                [&](const std::vector<int>& alpha, std::size_t rank) {
                    out.cols[static_cast<std::size_t>(p)][rank][r] =
                        iterated_from_values(alpha, [&](const std::vector<int>& beta) {
                            std::size_t j = beta.size();
                            return vals[table.offset[j] + size_idx[j].rank(beta)];
                        });
                });
        }
    });
    return out;
}

inline SymKernel column_mean_kernel(const DiscreteSpace& space, const SquareKernelColumns& cols,
                                    int p, std::size_t lo, std::size_t len) {
    SymKernel k(space.cells(), p);
    const double pf = factorial(p);
    for (std::size_t e = 0; e < cols.order_idx[static_cast<std::size_t>(p)].size(); ++e)
        k.at_rank(e) =
            pairwise_sum(cols.cols[static_cast<std::size_t>(p)][e].data() + lo, len) /
            (static_cast<double>(len) * pf);
    return k;
}

inline LemmaReport lemma_suite_mc(const DiscreteSpace& space, const ChaosFunctional& F,
                                  std::size_t n, std::uint64_t seed, int threads) {
    const SymKernel& f = single_kernel(F);
    const int q = f.order();
    const double dq = static_cast<double>(q);
    const std::size_t batches = 16;
    std::size_t bsz = n / batches;
    if (bsz < 16) throw std::invalid_argument("lemma_suite: too few replicates per batch");
    if (bsz % 2 == 1) --bsz;
    const std::size_t total = batches * bsz;
    const int m = space.cells();

    ChaosEvaluator ev_f(space, F);

    // pathwise slots (independent stream from the kernel-extraction pass)
    std::vector<double> s_f2(total), s_f3(total), s_f4(total), s_gq(total), s_gq2(total),
        s_f2g(total), s_d4(total), s_tfg(total), s_resid(total);
    detail::IndicatorEvents ev;
    ev.cells = m;
    ev.n = total;
    ev.lo.assign(total * static_cast<std::size_t>(m), 0.0);
    ev.hi.assign(total * static_cast<std::size_t>(m), 0.0);
    ev.wt.assign(total * static_cast<std::size_t>(m), 0.0);
    std::vector<double> s_fv(total);

    parallel_for(total, threads, [&](std::size_t r) {
        Rng rng(seed_stream(seed, 0, r));
        PointConfig chi = sample_poisson(space, rng);
        double fv = ev_f(chi);
        double up = 0.0, down = 0.0, d4 = 0.0;
        PointConfig work = chi;
        for (int c = 0; c < m; ++c) {
            double mass = space.mass(c);
            if (mass > 0.0) {
                work.apply_delta(c, +1);
                double af = ev_f(work) - fv;
                work.apply_delta(c, -1);
                up += mass * af * af;
                d4 += mass * af * af * af * af;
                if (af != 0.0) {
                    std::size_t e = r * static_cast<std::size_t>(m) + static_cast<std::size_t>(c);
                    ev.lo[e] = std::min(fv, fv + af);
                    ev.hi[e] = std::max(fv, fv + af);
                    ev.wt[e] = mass * af * af;
                }
            }
            std::int64_t cnt = chi.count(c);
            if (cnt > 0) {
                work.apply_delta(c, -1);
                double bf = fv - ev_f(work);
                work.apply_delta(c, +1);
                down += static_cast<double>(cnt) * bf * bf;
            }
        }
        double gq = 0.5 * (up + down) / dq;
        s_fv[r] = fv;
        s_f2[r] = fv * fv;
        s_f3[r] = fv * fv * fv;
        s_f4[r] = fv * fv * fv * fv;
        s_gq[r] = gq;
        s_gq2[r] = gq * gq;
        s_f2g[r] = fv * fv * gq;
        s_d4[r] = d4;
        s_tfg[r] = 2.0 * fv - gq;
        s_resid[r] = d4 / (2.0 * dq) - 3.0 * fv * fv * gq + fv * fv * fv * fv;
    });

    // kernel columns for the squared functional, separate stream
    SquareKernelColumns cols =
        square_kernel_columns(space, ev_f, 2 * q - 1, total, seed_stream(seed, 1, 0), threads);

    auto batch_mean = [&](const std::vector<double>& s, std::size_t b) {
        return pairwise_sum(s.data() + b * bsz, bsz) / static_cast<double>(bsz);
    };
    auto batch_var = [&](const std::vector<double>& s, std::size_t b) {
        double mu = batch_mean(s, b);
        std::vector<double> sq(bsz);
        for (std::size_t i = 0; i < bsz; ++i) {
            double d = s[b * bsz + i] - mu;
            sq[i] = d * d;
        }
        return pairwise_sum(sq) / static_cast<double>(bsz - 1);
    };

    std::vector<double> b_varg(batches), b_decomp(batches), b_bound1(batches), b_g2m(batches),
        b_m4(batches), b_f2g(batches), b_resid(batches), b_d4h(batches), b_bound3(batches),
        b_vtfg(batches), b_vdecomp(batches), b_v2k(batches), b_v2m(batches), b_brlo(batches),
        b_brhi(batches), b_ind_rhs(batches);

    for (std::size_t b = 0; b < batches; ++b) {
        double m2b = batch_mean(s_f2, b);
        double m3b = batch_mean(s_f3, b);
        double m4b = batch_mean(s_f4, b);
        double nub = 0.5 * m2b;
        double excess = m4b - 3.0 * m2b * m2b;
        b_varg[b] = batch_var(s_gq, b);
        b_bound1[b] = (2.0 * dq - 1.0) * (2.0 * dq - 1.0) / (4.0 * dq * dq) * excess;
        b_g2m[b] = batch_mean(s_gq2, b);
        b_m4[b] = m4b;
        b_f2g[b] = batch_mean(s_f2g, b);
        b_resid[b] = batch_mean(s_resid, b);
        b_d4h[b] = batch_mean(s_d4, b) / (2.0 * dq);
        b_bound3[b] = (4.0 * dq - 3.0) / (2.0 * dq) * excess;
        b_vtfg[b] = batch_var(s_tfg, b);
        b_ind_rhs[b] = 10.0 * std::sqrt(std::max(0.0, excess));

        std::size_t half = bsz / 2;
        double decomp = 0.0, v1 = 0.0, vq = 0.0;
        for (int p = 1; p <= 2 * q - 1; ++p) {
            SymKernel ka = column_mean_kernel(space, cols, p, b * bsz, half);
            SymKernel kb = column_mean_kernel(space, cols, p, b * bsz + half, half);
            double vhat = factorial(p) * inner(space, ka, kb);
            double w = 1.0 - static_cast<double>(p) / (2.0 * dq);
            decomp += w * w * vhat;
            if (p != q) v1 += w * w * vhat;
            if (p == q) {
                vq = vhat;
                SymKernel da = ka;
                da.axpy(-4.0, f);
                SymKernel db = kb;
                db.axpy(-4.0, f);
                b_v2k[b] = 0.25 * factorial(q) * inner(space, da, db);
            }
        }
        b_decomp[b] = decomp;
        double v2m = 0.25 * vq + 4.0 * m2b - 2.0 * m3b;
        b_v2m[b] = v2m;
        b_vdecomp[b] = v1 + v2m;
        double bracket = m4b - 12.0 * m3b - 12.0 * nub * nub + 48.0 * nub;
        double d4b = batch_mean(s_d4, b);
        b_brlo[b] = bracket / (6.0 * dq) + d4b / (12.0 * dq * dq);
        b_brhi[b] = bracket / 3.0 + d4b / (6.0 * dq);
    }

    detail::IndicatorSup sup = detail::indicator_sweep(ev, s_fv);

    auto paired_row = [&](std::string name, const std::vector<double>& lhs,
                          const std::vector<double>& rhs, bool equality) {
        std::vector<double> marg(batches);
        for (std::size_t b = 0; b < batches; ++b) marg[b] = lhs[b] - rhs[b];
        MeanSe l = mean_se(lhs), r = mean_se(rhs), d = mean_se(marg);
        return LemmaRow{std::move(name), l.mean, r.mean, d.se, equality};
    };

    MeanSe m2_all = mean_se(s_f2);
    LemmaReport rep;
    rep.q = q;
    rep.nu = 0.5 * m2_all.mean;
    rep.mode = LemmaMode::MonteCarlo;
    rep.rows.push_back(paired_row("carre_du_champ_variance_decomposition", b_varg, b_decomp, true));
    rep.rows.push_back(paired_row("carre_du_champ_variance_bound", b_varg, b_bound1, false));
    rep.rows.push_back(paired_row("carre_du_champ_second_moment_bound", b_g2m, b_m4, false));
    rep.rows.push_back(paired_row("mixed_fourth_moment_bound", b_f2g, b_m4, false));
    {
        MeanSe resid = mean_se(b_resid);
        MeanSe lhs = mean_se(b_d4h);
        LemmaRow row{"add_cost_fourth_moment_identity", lhs.mean, lhs.mean - resid.mean, resid.se,
                     true};
        rep.rows.push_back(row);
    }
    rep.rows.push_back(paired_row("add_cost_fourth_moment_bound", b_d4h, b_bound3, false));
    {
        MeanSe rhs = mean_se(b_ind_rhs);
        LemmaRow row{"indicator_supremum_bound", sup.value / dq, rhs.mean,
                     std::sqrt(sup.se * sup.se / (dq * dq) + rhs.se * rhs.se), false};
        rep.rows.push_back(row);
    }
    rep.rows.push_back(
        paired_row("shifted_carre_du_champ_variance_decomposition", b_vtfg, b_vdecomp, true));
    rep.rows.push_back(paired_row("projection_residual_variance_forms", b_v2k, b_v2m, true));
    rep.rows.push_back(paired_row("variance_sandwich_lower", b_brlo, b_vtfg, false));
    rep.rows.push_back(paired_row("variance_sandwich_upper", b_vtfg, b_brhi, false));
    return rep;
}

}  // namespace detail

// Identity-and-inequality suite for a single order-q integral. Exact mode
// computes both sides through the counting-polynomial oracle (except the
// indicator supremum, which has no polynomial form and stays Monte-Carlo);
// Monte-Carlo mode estimates each side with batched standard errors.
inline LemmaReport lemma_suite(const DiscreteSpace& space, const ChaosFunctional& F, LemmaMode mode,
                               std::size_t n, std::uint64_t seed, int threads = 1) {
    if (mode == LemmaMode::Exact) return detail::lemma_suite_exact(space, F, n, seed, threads);
    return detail::lemma_suite_mc(space, F, n, seed, threads);
}

}  // namespace chaoskit
