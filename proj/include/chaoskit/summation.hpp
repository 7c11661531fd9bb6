#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <thread>
#include <vector>

namespace chaoskit {

// Pairwise reduction; the result depends only on the element order, never on
// how work was scheduled, which is what makes reports thread-count invariant.
inline double pairwise_sum(const double* a, std::size_t n) {
    if (n <= 16) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += a[i];
        return s;
    }
    std::size_t h = n / 2;
    return pairwise_sum(a, h) + pairwise_sum(a + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& a) { return pairwise_sum(a.data(), a.size()); }

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

// Two-pass mean and standard error of the mean.
inline MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe r;
    r.n = xs.size();
    if (r.n == 0) throw std::invalid_argument("mean_se: empty sample");
    r.mean = pairwise_sum(xs) / static_cast<double>(r.n);
    if (r.n == 1) return r;
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double d = xs[i] - r.mean;
        sq[i] = d * d;
    }
    double var = pairwise_sum(sq) / static_cast<double>(r.n - 1);
    r.se = std::sqrt(var / static_cast<double>(r.n));
    return r;
}

// Mean and standard error of the sample variance (moment estimator; the SE
// treats the squared deviations as the sample).
struct VarSe {
    double var = 0.0;
    double se = 0.0;
};

inline VarSe variance_se(const std::vector<double>& xs) {
    if (xs.size() < 2) throw std::invalid_argument("variance_se: need at least two values");
    double mean = pairwise_sum(xs) / static_cast<double>(xs.size());
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double d = xs[i] - mean;
        sq[i] = d * d;
    }
    MeanSe m = mean_se(sq);
    double correction =
        static_cast<double>(xs.size()) / static_cast<double>(xs.size() - 1);
    VarSe v;
    v.var = m.mean * correction;
    v.se = m.se * correction;
    return v;
}

// Runs fn(i) for i in [0, n) split into contiguous chunks across `threads`
// workers. Each index is visited exactly once; callers must write results
// into per-index slots so the outcome cannot depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, int threads, const Fn& fn) {
    if (threads < 1) threads = 1;
    if (threads == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    std::size_t chunk = (n + nt - 1) / nt;
    for (std::size_t t = 0; t < nt; ++t) {
        std::size_t lo = t * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace chaoskit
