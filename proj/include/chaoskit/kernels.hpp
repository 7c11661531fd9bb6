#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chaoskit/space.hpp"

namespace chaoskit {

// Exact small binomial; every partial product is itself a binomial, so the
// stepwise division is exact.
inline std::uint64_t binom_u64(int n, int k) {
    if (k < 0 || n < 0 || k > n) return 0;
    if (k > n - k) k = n - k;
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    return r;
}

inline double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

// Sorted multi-indices (multisets of cells) of a fixed order, ranked in
// lexicographic order through the usual stars-and-bars bijection with
// combinations.
class MultisetIndexer {
  public:
    MultisetIndexer(int cells, int order) : cells_(cells), order_(order) {
        if (cells < 1) throw std::invalid_argument("MultisetIndexer: need at least one cell");
        if (order < 0) throw std::invalid_argument("MultisetIndexer: negative order");
        size_ = binom_u64(cells + order - 1, order);
    }

    int cells() const { return cells_; }
    int order() const { return order_; }
    std::size_t size() const { return static_cast<std::size_t>(size_); }

    std::size_t rank(const std::vector<int>& sorted_idx) const {
        if (static_cast<int>(sorted_idx.size()) != order_)
            throw std::invalid_argument("MultisetIndexer: tuple order mismatch");
        const int n = cells_ + order_ - 1;
        std::uint64_t r = 0;
        int prev = -1;
        for (int j = 0; j < order_; ++j) {
            int cj = sorted_idx[static_cast<std::size_t>(j)] + j;
            if (sorted_idx[static_cast<std::size_t>(j)] < 0 ||
                sorted_idx[static_cast<std::size_t>(j)] >= cells_)
                throw std::invalid_argument("MultisetIndexer: cell index out of range");
            if (j > 0 && sorted_idx[static_cast<std::size_t>(j)] < sorted_idx[static_cast<std::size_t>(j - 1)])
                throw std::invalid_argument("MultisetIndexer: tuple not sorted");
            for (int v = prev + 1; v < cj; ++v) r += binom_u64(n - 1 - v, order_ - 1 - j);
            prev = cj;
        }
        return static_cast<std::size_t>(r);
    }

    // Lexicographic odometer over nondecreasing tuples; visit order matches
    // rank order.
    template <class Fn>
    void for_each(Fn&& fn) const {
        std::vector<int> t(static_cast<std::size_t>(order_), 0);
        std::size_t r = 0;
        for (;;) {
            fn(static_cast<const std::vector<int>&>(t), r);
            ++r;
            int j = order_ - 1;
            while (j >= 0 && t[static_cast<std::size_t>(j)] == cells_ - 1) --j;
            if (j < 0) break;
            int v = t[static_cast<std::size_t>(j)] + 1;
            for (int k = j; k < order_; ++k) t[static_cast<std::size_t>(k)] = v;
        }
    }

  private:
    int cells_;
    int order_;
    std::uint64_t size_;
};

// Number of distinct permutations of a sorted tuple: order! / prod(mult!).
inline double distinct_permutations(const std::vector<int>& sorted_idx) {
    double numer = factorial(static_cast<int>(sorted_idx.size()));
    double denom = 1.0;
    std::size_t i = 0;
    while (i < sorted_idx.size()) {
        std::size_t j = i;
        while (j < sorted_idx.size() && sorted_idx[j] == sorted_idx[i]) ++j;
        denom *= factorial(static_cast<int>(j - i));
        i = j;
    }
    return numer / denom;
}

// Dense order-q array over cells, no symmetry assumed; row-major.
struct RawTensor {
    int cells = 0;
    int order = 0;
    std::vector<double> v;

    RawTensor(int cells_in, int order_in) : cells(cells_in), order(order_in) {
        if (cells < 1 || order < 0) throw std::invalid_argument("RawTensor: bad shape");
        double size = 1.0;
        for (int i = 0; i < order; ++i) size *= cells;
        if (size > 1e7) throw std::invalid_argument("RawTensor: dense size too large");
        v.assign(static_cast<std::size_t>(size), 0.0);
    }

    std::size_t flat(const std::vector<int>& idx) const {
        if (static_cast<int>(idx.size()) != order) throw std::invalid_argument("RawTensor: arity mismatch");
        std::size_t f = 0;
        for (int i : idx) {
            if (i < 0 || i >= cells) throw std::invalid_argument("RawTensor: index out of range");
            f = f * static_cast<std::size_t>(cells) + static_cast<std::size_t>(i);
        }
        return f;
    }

    double at(const std::vector<int>& idx) const { return v[flat(idx)]; }
    double& at(const std::vector<int>& idx) { return v[flat(idx)]; }
};

// Symmetric order-q kernel stored once per multiset of cell indices.
class SymKernel {
  public:
    SymKernel(int cells, int order)
        : indexer_(cells, order), vals_(indexer_.size(), 0.0) {}

    int cells() const { return indexer_.cells(); }
    int order() const { return indexer_.order(); }
    const MultisetIndexer& indexer() const { return indexer_; }

    double value(std::vector<int> idx) const {
        std::sort(idx.begin(), idx.end());
        return vals_[indexer_.rank(idx)];
    }

    void set(std::vector<int> idx, double val) {
        std::sort(idx.begin(), idx.end());
        vals_[indexer_.rank(idx)] = val;
    }

    double at_rank(std::size_t r) const { return vals_.at(r); }
    double& at_rank(std::size_t r) { return vals_.at(r); }
    const std::vector<double>& values() const { return vals_; }

    SymKernel& scale(double s) {
        for (double& x : vals_) x *= s;
        return *this;
    }

    SymKernel& axpy(double a, const SymKernel& other) {
        if (other.order() != order() || other.cells() != cells())
            throw std::invalid_argument("SymKernel: shape mismatch");
        for (std::size_t i = 0; i < vals_.size(); ++i) vals_[i] += a * other.vals_[i];
        return *this;
    }

  private:
    MultisetIndexer indexer_;
    std::vector<double> vals_;
};

// Average over all argument permutations. For each multiset this is the sum
// over distinct arrangements divided by their count.
inline SymKernel symmetrize(const RawTensor& raw) {
    SymKernel out(raw.cells, raw.order);
    out.indexer().for_each([&](const std::vector<int>& tuple, std::size_t r) {
        std::vector<int> perm = tuple;
        double sum = 0.0;
        double count = 0.0;
        do {
            sum += raw.at(perm);
            count += 1.0;
        } while (std::next_permutation(perm.begin(), perm.end()));
        out.at_rank(r) = sum / count;
    });
    return out;
}

// Plain tensor product; the result is generally not symmetric.
inline RawTensor tensor_product(const SymKernel& f, const SymKernel& g) {
    if (f.cells() != g.cells()) throw std::invalid_argument("tensor_product: cell mismatch");
    RawTensor out(f.cells(), f.order() + g.order());
    std::vector<int> idx(static_cast<std::size_t>(out.order), 0);
    std::vector<int> left(static_cast<std::size_t>(f.order()));
    std::vector<int> right(static_cast<std::size_t>(g.order()));
    for (std::size_t flat = 0; flat < out.v.size(); ++flat) {
        std::size_t rem = flat;
        for (int k = out.order - 1; k >= 0; --k) {
            idx[static_cast<std::size_t>(k)] = static_cast<int>(rem % static_cast<std::size_t>(out.cells));
            rem /= static_cast<std::size_t>(out.cells);
        }
        std::copy(idx.begin(), idx.begin() + f.order(), left.begin());
        std::copy(idx.begin() + f.order(), idx.end(), right.begin());
        out.v[flat] = f.value(left) * g.value(right);
    }
    return out;
}

namespace detail {

// Enumerates sub-multisets of size `want` of the run-length decomposition
// `runs` (pairs cell -> multiplicity), invoking fn with per-run take counts.
template <class Fn>
void for_each_submultiset(const std::vector<std::pair<int, int>>& runs, int want,
                          std::vector<int>& take, std::size_t at, int remaining, const Fn& fn) {
    if (at == runs.size()) {
        if (remaining == 0) fn(take);
        return;
    }
    int rest = 0;
    for (std::size_t k = at + 1; k < runs.size(); ++k) rest += runs[k].second;
    int hi = std::min(runs[at].second, remaining);
    int lo = std::max(0, remaining - rest);
    for (int c = lo; c <= hi; ++c) {
        take[at] = c;
        for_each_submultiset(runs, want, take, at + 1, remaining - c, fn);
    }
    take[at] = 0;
}

inline std::vector<std::pair<int, int>> run_lengths(const std::vector<int>& sorted_idx) {
    std::vector<std::pair<int, int>> runs;
    std::size_t i = 0;
    while (i < sorted_idx.size()) {
        std::size_t j = i;
        while (j < sorted_idx.size() && sorted_idx[j] == sorted_idx[i]) ++j;
        runs.emplace_back(sorted_idx[i], static_cast<int>(j - i));
        i = j;
    }
    return runs;
}

}  // namespace detail

// Symmetrized tensor product computed multiset-by-multiset: split each
// multiset into the part fed to f and the complement fed to g, weighting each
// split by how many of the (p+q)! argument orders realize it.
inline SymKernel sym_tensor_product(const SymKernel& f, const SymKernel& g) {
    if (f.cells() != g.cells()) throw std::invalid_argument("sym_tensor_product: cell mismatch");
    const int p = f.order();
    const int q = g.order();
    SymKernel out(f.cells(), p + q);
    const double norm = factorial(p) * factorial(q) / factorial(p + q);
    out.indexer().for_each([&](const std::vector<int>& tuple, std::size_t r) {
        auto runs = detail::run_lengths(tuple);
        std::vector<int> take(runs.size(), 0);
        double acc = 0.0;
        detail::for_each_submultiset(runs, p, take, 0, p, [&](const std::vector<int>& t) {
            double ways = 1.0;
            std::vector<int> left, right;
            left.reserve(static_cast<std::size_t>(p));
            right.reserve(static_cast<std::size_t>(q));
            for (std::size_t k = 0; k < runs.size(); ++k) {
                ways *= static_cast<double>(binom_u64(runs[k].second, t[k]));
                for (int c = 0; c < t[k]; ++c) left.push_back(runs[k].first);
                for (int c = 0; c < runs[k].second - t[k]; ++c) right.push_back(runs[k].first);
            }
            acc += ways * f.value(left) * g.value(right);
        });
        out.at_rank(r) = norm * acc;
    });
    return out;
}

// L2 inner product against the product intensity, summing ordered tuples via
// multiset weights.
inline double inner(const DiscreteSpace& space, const SymKernel& f, const SymKernel& g) {
    if (f.order() != g.order() || f.cells() != g.cells())
        throw std::invalid_argument("inner: shape mismatch");
    if (f.cells() != space.cells()) throw std::invalid_argument("inner: space mismatch");
    double acc = 0.0;
    f.indexer().for_each([&](const std::vector<int>& tuple, std::size_t r) {
        double w = distinct_permutations(tuple);
        double mass = 1.0;
        for (int c : tuple) mass *= space.mass(c);
        if (mass != 0.0) acc += w * mass * f.at_rank(r) * g.at_rank(r);
    });
    return acc;
}

inline double l2_norm(const DiscreteSpace& space, const SymKernel& f) {
    return std::sqrt(std::max(0.0, inner(space, f, f)));
}

// Integrates out one argument against the intensity: order drops by one.
inline SymKernel contract(const DiscreteSpace& space, const SymKernel& f) {
    if (f.order() < 1) throw std::invalid_argument("contract: order must be positive");
    if (f.cells() != space.cells()) throw std::invalid_argument("contract: space mismatch");
    SymKernel out(f.cells(), f.order() - 1);
    std::vector<int> ext(static_cast<std::size_t>(f.order()));
    out.indexer().for_each([&](const std::vector<int>& tuple, std::size_t r) {
        double acc = 0.0;
        for (int d = 0; d < f.cells(); ++d) {
            double m = space.mass(d);
            if (m == 0.0) continue;
            ext.assign(tuple.begin(), tuple.end());
            ext.push_back(d);
            acc += m * f.value(ext);
            ext.pop_back();
        }
        out.at_rank(r) = acc;
    });
    return out;
}

inline double max_abs_diff(const SymKernel& a, const SymKernel& b) {
    if (a.order() != b.order() || a.cells() != b.cells())
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i)
        m = std::max(m, std::fabs(a.at_rank(i) - b.at_rank(i)));
    return m;
}

// Entries are raw (unsymmetrized) tensor assignments; loading symmetrizes:
// each multiset value is the sum of matching entries divided by the count of
// distinct arrangements of that multiset.
inline SymKernel kernel_from_json(int cells, const nlohmann::json& j) {
    if (!j.contains("order")) throw std::invalid_argument("kernel JSON: missing \"order\"");
    int order = j.at("order").get<int>();
    if (order < 1 || order > 8) throw std::invalid_argument("kernel JSON: order must be in [1,8]");
    SymKernel out(cells, order);
    std::map<std::vector<int>, double> seen;
    if (j.contains("entries")) {
        for (const auto& e : j.at("entries")) {
            std::vector<int> idx = e.at("idx").get<std::vector<int>>();
            if (static_cast<int>(idx.size()) != order)
                throw std::invalid_argument("kernel JSON: entry arity mismatch");
            double val = e.at("val").get<double>();
            if (!seen.emplace(idx, val).second)
                throw std::invalid_argument("kernel JSON: duplicate entry index");
            std::vector<int> sorted = idx;
            std::sort(sorted.begin(), sorted.end());
            std::size_t r = out.indexer().rank(sorted);
            out.at_rank(r) += val / distinct_permutations(sorted);
        }
    }
    return out;
}

// Emits every distinct arrangement of each nonzero multiset so that loading
// (which symmetrizes) reproduces the kernel exactly.
inline nlohmann::json kernel_to_json(const SymKernel& f) {
    nlohmann::json entries = nlohmann::json::array();
    f.indexer().for_each([&](const std::vector<int>& tuple, std::size_t r) {
        double val = f.at_rank(r);
        if (val == 0.0) return;
        std::vector<int> perm = tuple;
        do {
            entries.push_back(nlohmann::json{{"idx", perm}, {"val", val}});
        } while (std::next_permutation(perm.begin(), perm.end()));
    });
    return nlohmann::json{{"order", f.order()}, {"entries", std::move(entries)}};
}

inline SymKernel make_random_kernel(int cells, int order, Rng& rng, double lo = -1.0, double hi = 1.0) {
    SymKernel out(cells, order);
    for (std::size_t r = 0; r < out.indexer().size(); ++r)
        out.at_rank(r) = lo + (hi - lo) * rng.u01();
    return out;
}

}  // namespace chaoskit
