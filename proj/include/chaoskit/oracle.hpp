#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "chaoskit/chaos.hpp"
#include "chaoskit/kernels.hpp"
#include "chaoskit/space.hpp"

namespace chaoskit {

// Sparse polynomial in the per-cell counts; the exact-expectation oracle for
// everything a finite chaos expansion can produce pathwise.
class CountPolynomial {
  public:
    static constexpr std::size_t kTermBudget = 1000000;
    static constexpr int kMaxDegree = 16;

    explicit CountPolynomial(int cells) : cells_(cells) {
        if (cells < 1) throw std::invalid_argument("CountPolynomial: need at least one cell");
    }

    static CountPolynomial constant(int cells, double value) {
        CountPolynomial p(cells);
        if (value != 0.0) p.terms_[std::vector<int>(static_cast<std::size_t>(cells), 0)] = value;
        return p;
    }

    static CountPolynomial monomial(int cells, int cell, int power, double coef) {
        CountPolynomial p(cells);
        std::vector<int> e(static_cast<std::size_t>(cells), 0);
        e.at(static_cast<std::size_t>(cell)) = power;
        if (coef != 0.0) p.terms_[std::move(e)] = coef;
        return p;
    }

    int cells() const { return cells_; }
    const std::map<std::vector<int>, double>& terms() const { return terms_; }
    std::size_t term_count() const { return terms_.size(); }

    int degree() const {
        int d = 0;
        for (const auto& [e, c] : terms_) {
            int t = 0;
            for (int k : e) t += k;
            d = std::max(d, t);
        }
        return d;
    }

    int max_exponent() const {
        int d = 0;
        for (const auto& [e, c] : terms_)
            for (int k : e) d = std::max(d, k);
        return d;
    }

    CountPolynomial& add(const CountPolynomial& other, double scale = 1.0) {
        check_cells(other);
        for (const auto& [e, c] : other.terms_) {
            double& slot = terms_[e];
            slot += scale * c;
            if (slot == 0.0) terms_.erase(e);
        }
        guard();
        return *this;
    }

    CountPolynomial multiplied(const CountPolynomial& other) const {
        check_cells(other);
        CountPolynomial out(cells_);
        std::vector<int> e(static_cast<std::size_t>(cells_));
        for (const auto& [ea, ca] : terms_) {
            for (const auto& [eb, cb] : other.terms_) {
                for (std::size_t i = 0; i < e.size(); ++i) e[i] = ea[i] + eb[i];
                double& slot = out.terms_[e];
                slot += ca * cb;
                if (slot == 0.0) out.terms_.erase(e);
            }
            out.guard();
        }
        return out;
    }

    CountPolynomial power(int k) const {
        if (k < 0) throw std::invalid_argument("CountPolynomial: negative power");
        CountPolynomial out = constant(cells_, 1.0);
        for (int i = 0; i < k; ++i) out = out.multiplied(*this);
        return out;
    }

    // P(N + d) for an integer shift vector d, expanded binomially.
    CountPolynomial shifted(const std::vector<int>& d) const {
        if (static_cast<int>(d.size()) != cells_)
            throw std::invalid_argument("CountPolynomial: shift arity mismatch");
        CountPolynomial out(cells_);
        for (const auto& [e, c] : terms_) {
            std::vector<std::size_t> active;
            for (std::size_t i = 0; i < e.size(); ++i)
                if (e[i] > 0 && d[i] != 0) active.push_back(i);
            std::vector<int> j(active.size(), 0);
            std::vector<int> out_e(e);
            for (;;) {
                double coef = c;
                for (std::size_t a = 0; a < active.size(); ++a) {
                    int k = e[active[a]];
                    int take = j[a];  // surviving exponent
                    coef *= static_cast<double>(binom_u64(k, take)) *
                            std::pow(static_cast<double>(d[active[a]]), k - take);
                    out_e[active[a]] = take;
                }
                double& slot = out.terms_[out_e];
                slot += coef;
                if (slot == 0.0) out.terms_.erase(out_e);
                std::size_t a = 0;
                while (a < active.size() && j[a] == e[active[a]]) {
                    j[a] = 0;
                    ++a;
                }
                if (a == active.size()) break;
                ++j[a];
            }
        }
        out.guard();
        return out;
    }

    double evaluate(const PointConfig& chi) const {
        if (chi.cells() != cells_) throw std::invalid_argument("CountPolynomial: config arity mismatch");
        double acc = 0.0;
        for (const auto& [e, c] : terms_) {
            double t = c;
            for (std::size_t i = 0; i < e.size(); ++i) {
                double n = static_cast<double>(chi.count(static_cast<int>(i)));
                for (int k = 0; k < e[i]; ++k) t *= n;
            }
            acc += t;
        }
        return acc;
    }

  private:
    void check_cells(const CountPolynomial& other) const {
        if (other.cells_ != cells_) throw std::invalid_argument("CountPolynomial: cell count mismatch");
    }
    void guard() const {
        if (terms_.size() > kTermBudget)
            throw std::runtime_error("CountPolynomial: term budget exceeded");
    }

    int cells_;
    std::map<std::vector<int>, double> terms_;
};

namespace detail {

// Stirling numbers of the second kind up to degree 16; all values are exact
// integers below 2^53.
inline const std::array<std::array<double, 17>, 17>& stirling2_table() {
    static const auto table = [] {
        std::array<std::array<double, 17>, 17> s{};
        s[0][0] = 1.0;
        for (int n = 1; n <= 16; ++n)
            for (int k = 1; k <= n; ++k)
                s[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] =
                    static_cast<double>(k) * s[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(k)] +
                    s[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(k - 1)];
        return s;
    }();
    return table;
}

}  // namespace detail

// Raw Poisson moment E[N^n] at mean mu via the Stirling expansion
// sum_k S(n,k) mu^k.
inline double touchard(int n, double mu) {
    if (n < 0 || n > CountPolynomial::kMaxDegree)
        throw std::invalid_argument("touchard: degree must be in [0,16]");
    if (n == 0) return 1.0;
    const auto& s = detail::stirling2_table();
    double acc = 0.0;
    double mu_pow = 1.0;
    for (int k = 1; k <= n; ++k) {
        mu_pow *= mu;
        acc += s[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] * mu_pow;
    }
    return acc;
}

// Exact expectation of a counting polynomial under independent Poisson cells:
// monomials factor, E prod N_c^{k_c} = prod touchard(k_c, mu_c).
inline double exact_expectation(const DiscreteSpace& space, const CountPolynomial& p) {
    if (p.cells() != space.cells()) throw std::invalid_argument("exact_expectation: space mismatch");
    if (p.max_exponent() > CountPolynomial::kMaxDegree)
        throw std::invalid_argument("exact_expectation: exponent beyond Touchard table");
    double acc = 0.0;
    for (const auto& [e, c] : p.terms()) {
        double t = c;
        for (std::size_t i = 0; i < e.size(); ++i)
            if (e[i] > 0) t *= touchard(e[i], space.mass(static_cast<int>(i)));
        acc += t;
    }
    return acc;
}

// Falling factorial N_c (N_c - 1) ... (N_c - k + 1) as a polynomial.
inline CountPolynomial falling_factorial_poly(int cells, int cell, int k) {
    CountPolynomial acc = CountPolynomial::constant(cells, 1.0);
    for (int t = 0; t < k; ++t) {
        CountPolynomial lin = CountPolynomial::monomial(cells, cell, 1, 1.0);
        lin.add(CountPolynomial::constant(cells, -static_cast<double>(t)));
        acc = acc.multiplied(lin);
    }
    return acc;
}

// Symbolic version of the pathwise evaluator: the same factorial-moment
// expansion with falling factorials kept as polynomials in the counts.
inline CountPolynomial to_polynomial(const DiscreteSpace& space, const ChaosFunctional& f) {
    const int m = space.cells();
    CountPolynomial out = CountPolynomial::constant(m, f.constant());
    for (const auto& [p, kernel] : f.kernels()) {
        if (kernel.cells() != m) throw std::invalid_argument("to_polynomial: kernel/space cell mismatch");
        std::vector<SymKernel> tables;
        tables.push_back(kernel);
        for (int j = p; j >= 1; --j) tables.push_back(contract(space, tables.back()));
        std::reverse(tables.begin(), tables.end());
        for (int j = 0; j <= p; ++j) {
            const SymKernel& tj = tables[static_cast<std::size_t>(j)];
            double sign = ((p - j) % 2 == 0) ? 1.0 : -1.0;
            double outer = sign * static_cast<double>(binom_u64(p, j));
            tj.indexer().for_each([&](const std::vector<int>& tuple, std::size_t r) {
                double tv = tj.at_rank(r);
                if (tv == 0.0) return;
                double w = distinct_permutations(tuple);
                CountPolynomial term = CountPolynomial::constant(m, outer * w * tv);
                auto runs = detail::run_lengths(tuple);
                for (const auto& [cell, mult] : runs)
                    term = term.multiplied(falling_factorial_poly(m, cell, mult));
                out.add(term);
            });
        }
    }
    return out;
}

inline double exact_moment(const DiscreteSpace& space, const ChaosFunctional& f, int k) {
    CountPolynomial p = to_polynomial(space, f);
    return exact_expectation(space, p.power(k));
}

inline double exact_product_expectation(const DiscreteSpace& space, const ChaosFunctional& f,
                                        const ChaosFunctional& g) {
    CountPolynomial pf = to_polynomial(space, f);
    CountPolynomial pg = to_polynomial(space, g);
    return exact_expectation(space, pf.multiplied(pg));
}

// Exact kernel extraction: entry alpha of the order-p kernel is
// E[D^p_alpha F] / p!, with the iterated difference expanded into signed
// point-addition shifts of the counting polynomial.
inline SymKernel exact_extract_kernel(const DiscreteSpace& space, const CountPolynomial& poly, int p) {
    if (p < 1 || p > 8) throw std::invalid_argument("exact_extract_kernel: order must be in [1,8]");
    const int m = space.cells();
    SymKernel out(m, p);
    std::map<std::vector<int>, double> shifted_mean;  // multiset tuple -> E[P(N + beta)]
    auto mean_of = [&](const std::vector<int>& beta) {
        auto it = shifted_mean.find(beta);
        if (it != shifted_mean.end()) return it->second;
        std::vector<int> d(static_cast<std::size_t>(m), 0);
        for (int c : beta) d[static_cast<std::size_t>(c)] += 1;
        double v = exact_expectation(space, poly.shifted(d));
        shifted_mean.emplace(beta, v);
        return v;
    };
    const double pf = factorial(p);
    out.indexer().for_each([&](const std::vector<int>& alpha, std::size_t r) {
        out.at_rank(r) = detail::iterated_from_values(alpha, mean_of) / pf;
    });
    return out;
}

inline SymKernel exact_extract_kernel(const DiscreteSpace& space, const ChaosFunctional& f, int p) {
    return exact_extract_kernel(space, to_polynomial(space, f), p);
}

// Carré-du-champ as a counting polynomial:
// 1/2 [ sum_c mu_c (P(N+e_c)-P(N))^2 + sum_c N_c (P(N)-P(N-e_c))^2 ].
// The N_c factor kills the off-support branch, so the polynomial agrees with
// the pathwise value everywhere.
inline CountPolynomial gamma0_polynomial(const DiscreteSpace& space, const CountPolynomial& p) {
    const int m = space.cells();
    if (p.cells() != m) throw std::invalid_argument("gamma0_polynomial: space mismatch");
    CountPolynomial out(m);
    std::vector<int> d(static_cast<std::size_t>(m), 0);
    for (int c = 0; c < m; ++c) {
        double mass = space.mass(c);
        d[static_cast<std::size_t>(c)] = 1;
        CountPolynomial up = p.shifted(d);
        up.add(p, -1.0);
        if (mass != 0.0) out.add(up.multiplied(up), 0.5 * mass);
        d[static_cast<std::size_t>(c)] = -1;
        CountPolynomial down = p;
        down.add(p.shifted(d), -1.0);
        d[static_cast<std::size_t>(c)] = 0;
        CountPolynomial weighted = down.multiplied(down).multiplied(
            CountPolynomial::monomial(m, c, 1, 1.0));
        out.add(weighted, 0.5);
    }
    return out;
}

// sum_c mu_c (P(N+e_c) - P(N))^4: the exact fourth-power add-one-cost energy.
inline CountPolynomial add_cost_fourth_polynomial(const DiscreteSpace& space, const CountPolynomial& p) {
    const int m = space.cells();
    if (p.cells() != m) throw std::invalid_argument("add_cost_fourth_polynomial: space mismatch");
    CountPolynomial out(m);
    std::vector<int> d(static_cast<std::size_t>(m), 0);
    for (int c = 0; c < m; ++c) {
        double mass = space.mass(c);
        if (mass == 0.0) continue;
        d[static_cast<std::size_t>(c)] = 1;
        CountPolynomial up = p.shifted(d);
        d[static_cast<std::size_t>(c)] = 0;
        up.add(p, -1.0);
        CountPolynomial sq = up.multiplied(up);
        out.add(sq.multiplied(sq), mass);
    }
    return out;
}

inline double exact_variance(const DiscreteSpace& space, const CountPolynomial& p) {
    double mean = exact_expectation(space, p);
    return exact_expectation(space, p.multiplied(p)) - mean * mean;
}

// Variance of the order-p chaos projection of the functional given by `poly`:
// p! times the squared norm of the exactly extracted order-p kernel.
inline double exact_projection_variance(const DiscreteSpace& space, const CountPolynomial& poly, int p) {
    SymKernel h = exact_extract_kernel(space, poly, p);
    return factorial(p) * inner(space, h, h);
}

struct ProductTopKernelResult {
    double max_abs_diff;
    SymKernel extracted;
    SymKernel expected;
};

// The top-order kernel of a product of two single integrals must be the
// symmetrized tensor product of their kernels; both sides computed exactly.
inline ProductTopKernelResult product_top_kernel_check(const DiscreteSpace& space, const SymKernel& f,
                                                       const SymKernel& g) {
    CountPolynomial pf = to_polynomial(space, single_integral(f));
    CountPolynomial pg = to_polynomial(space, single_integral(g));
    CountPolynomial prod = pf.multiplied(pg);
    SymKernel extracted = exact_extract_kernel(space, prod, f.order() + g.order());
    SymKernel expected = sym_tensor_product(f, g);
    double diff = max_abs_diff(extracted, expected);
    return ProductTopKernelResult{diff, std::move(extracted), std::move(expected)};
}

}  // namespace chaoskit
