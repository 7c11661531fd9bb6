#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "chaoskit/chaos.hpp"
#include "chaoskit/space.hpp"
#include "chaoskit/summation.hpp"

namespace chaoskit {

// Add-one-point cost: F(chi + delta_z) - F(chi).
template <class Fn>
double add_one_cost(const Fn& f, const PointConfig& chi, int cell) {
    PointConfig bumped = chi;
    bumped.apply_delta(cell, +1);
    return f(bumped) - f(chi);
}

template <class Fn>
double add_one_cost(const Fn& f, const PointConfig& chi, int cell, double f_at_chi) {
    PointConfig bumped = chi;
    bumped.apply_delta(cell, +1);
    return f(bumped) - f_at_chi;
}

// Remove-one-point cost: F(chi) - F(chi - delta_z) on the support of chi,
// zero off it. Distinct from remove_point, which treats removal from an
// empty cell as a caller error.
template <class Fn>
double remove_one_cost(const Fn& f, const PointConfig& chi, int cell) {
    if (chi.count(cell) == 0) return 0.0;
    PointConfig reduced = chi;
    reduced.apply_delta(cell, -1);
    return f(chi) - f(reduced);
}

template <class Fn>
double remove_one_cost(const Fn& f, const PointConfig& chi, int cell, double f_at_chi) {
    if (chi.count(cell) == 0) return 0.0;
    PointConfig reduced = chi;
    reduced.apply_delta(cell, -1);
    return f_at_chi - f(reduced);
}

// Iterated add-one-cost at a tuple of cells (repeats allowed); symmetric in
// the tuple and computed by the signed sub-multiset expansion.
template <class Fn>
double iterated(const Fn& f, const PointConfig& chi, std::vector<int> cells) {
    if (cells.empty()) return f(chi);
    std::sort(cells.begin(), cells.end());
    PointConfig bumped = chi;
    return detail::iterated_from_values(cells, [&](const std::vector<int>& beta) {
        for (int c : beta) bumped.apply_delta(c, +1);
        double v = f(bumped);
        for (int c : beta) bumped.apply_delta(c, -1);
        return v;
    });
}

// Carré-du-champ evaluated pathwise from one-point costs:
//   Gamma0(F,G) = 1/2 [ sum_z D+F D+G mu(z) + sum over points z of D-F D-G ].
template <class FnF, class FnG>
double gamma0(const DiscreteSpace& space, const FnF& f, const FnG& g, const PointConfig& chi) {
    double f0 = f(chi);
    double g0 = g(chi);
    double up = 0.0, down = 0.0;
    PointConfig work = chi;
    for (int c = 0; c < space.cells(); ++c) {
        double m = space.mass(c);
        if (m > 0.0) {
            work.apply_delta(c, +1);
            up += (f(work) - f0) * (g(work) - g0) * m;
            work.apply_delta(c, -1);
        }
        std::int64_t n = chi.count(c);
        if (n > 0) {
            work.apply_delta(c, -1);
            down += static_cast<double>(n) * (f0 - f(work)) * (g0 - g(work));
            work.apply_delta(c, +1);
        }
    }
    return 0.5 * (up + down);
}

template <class Fn>
double gamma0(const DiscreteSpace& space, const Fn& f, const PointConfig& chi) {
    return gamma0(space, f, f, chi);
}

// Generator evaluated pathwise:
//   L F = sum_z D+F mu(z) - sum over points z of D-F.
template <class Fn>
double apply_L(const DiscreteSpace& space, const Fn& f, const PointConfig& chi) {
    double f0 = f(chi);
    double acc = 0.0;
    PointConfig work = chi;
    for (int c = 0; c < space.cells(); ++c) {
        double m = space.mass(c);
        if (m > 0.0) {
            work.apply_delta(c, +1);
            acc += (f(work) - f0) * m;
            work.apply_delta(c, -1);
        }
        std::int64_t n = chi.count(c);
        if (n > 0) {
            work.apply_delta(c, -1);
            acc -= static_cast<double>(n) * (f0 - f(work));
            work.apply_delta(c, +1);
        }
    }
    return acc;
}

// Pseudo-inverse of the generator on centered functionals: kernel of order p
// scales by -1/p.
inline ChaosFunctional apply_Linv(const ChaosFunctional& f) {
    if (f.constant() != 0.0)
        throw std::invalid_argument("apply_Linv: functional must be centered (zero constant)");
    ChaosFunctional out(0.0);
    for (const auto& [p, k] : f.kernels()) {
        SymKernel scaled = k;
        scaled.scale(-1.0 / static_cast<double>(p));
        out.set_kernel(p, std::move(scaled));
    }
    return out;
}

// Skorohod integral of a process u(chi, cell):
//   delta(u) = sum over points z of u(chi - delta_z, z) - sum_z u(chi, z) mu(z).
template <class U>
double skorohod(const DiscreteSpace& space, const U& u, const PointConfig& chi) {
    double acc = 0.0;
    PointConfig work = chi;
    for (int c = 0; c < space.cells(); ++c) {
        std::int64_t n = chi.count(c);
        if (n > 0) {
            work.apply_delta(c, -1);
            acc += static_cast<double>(n) * u(work, c);
            work.apply_delta(c, +1);
        }
        double m = space.mass(c);
        if (m > 0.0) acc -= u(chi, c) * m;
    }
    return acc;
}

struct CdcResult {
    double max_abs_residual = 0.0;
    double max_rel_residual = 0.0;
};

// Checks, over sampled configurations, that the carré-du-champ from one-point
// costs agrees with the generator form 1/2 (L(FG) - F LG - G LF).
template <class FnF, class FnG>
CdcResult cdcform_check(const DiscreteSpace& space, const FnF& f, const FnG& g, std::size_t n,
                        std::uint64_t seed, int threads = 1) {
    std::vector<double> abs_res(n), rel_res(n);
    parallel_for(n, threads, [&](std::size_t r) {
        Rng rng(seed_stream(seed, r));
        PointConfig chi = sample_poisson(space, rng);
        auto product = [&](const PointConfig& x) { return f(x) * g(x); };
        double lhs = gamma0(space, f, g, chi);
        double lfg = apply_L(space, product, chi);
        double lf = apply_L(space, f, chi);
        double lg = apply_L(space, g, chi);
        double rhs = 0.5 * (lfg - f(chi) * lg - g(chi) * lf);
        double denom = std::max({1.0, std::fabs(lhs), std::fabs(lfg)});
        abs_res[r] = std::fabs(lhs - rhs);
        rel_res[r] = std::fabs(lhs - rhs) / denom;
    });
    CdcResult out;
    for (std::size_t r = 0; r < n; ++r) {
        out.max_abs_residual = std::max(out.max_abs_residual, abs_res[r]);
        out.max_rel_residual = std::max(out.max_rel_residual, rel_res[r]);
    }
    return out;
}

}  // namespace chaoskit
