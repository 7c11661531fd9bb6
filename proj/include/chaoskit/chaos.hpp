#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chaoskit/kernels.hpp"
#include "chaoskit/rng.hpp"
#include "chaoskit/space.hpp"
#include "chaoskit/summation.hpp"

namespace chaoskit {

// Finite chaos expansion: a constant plus one symmetric kernel per order.
class ChaosFunctional {
  public:
    explicit ChaosFunctional(double constant = 0.0) : constant_(constant) {}

    double constant() const { return constant_; }
    void set_constant(double c) { constant_ = c; }

    const std::map<int, SymKernel>& kernels() const { return kernels_; }

    void set_kernel(int order, SymKernel k) {
        if (order < 1 || order > 8)
            throw std::invalid_argument("ChaosFunctional: kernel order must be in [1,8]");
        if (k.order() != order) throw std::invalid_argument("ChaosFunctional: kernel order mismatch");
        if (!kernels_.empty() && kernels_.begin()->second.cells() != k.cells())
            throw std::invalid_argument("ChaosFunctional: kernel cell count mismatch");
        kernels_.erase(order);
        kernels_.emplace(order, std::move(k));
    }

    const SymKernel* kernel(int order) const {
        auto it = kernels_.find(order);
        return it == kernels_.end() ? nullptr : &it->second;
    }

    int top_order() const { return kernels_.empty() ? 0 : kernels_.rbegin()->first; }

    int cells() const {
        if (kernels_.empty()) throw std::logic_error("ChaosFunctional: no kernels");
        return kernels_.begin()->second.cells();
    }

    ChaosFunctional& scale(double s) {
        constant_ *= s;
        for (auto& [p, k] : kernels_) k.scale(s);
        return *this;
    }

    static ChaosFunctional from_json(int cells, const nlohmann::json& j) {
        ChaosFunctional f(j.value("constant", 0.0));
        if (j.contains("kernels")) {
            for (const auto& [key, kj] : j.at("kernels").items()) {
                int order = std::stoi(key);
                SymKernel k = kernel_from_json(cells, kj);
                if (k.order() != order)
                    throw std::invalid_argument("functional JSON: kernel order disagrees with its key");
                f.set_kernel(order, std::move(k));
            }
        }
        return f;
    }

    nlohmann::json to_json() const {
        nlohmann::json ks = nlohmann::json::object();
        for (const auto& [p, k] : kernels_) ks[std::to_string(p)] = kernel_to_json(k);
        return nlohmann::json{{"constant", constant_}, {"kernels", std::move(ks)}};
    }

  private:
    double constant_;
    std::map<int, SymKernel> kernels_;
};

// Pathwise evaluator. For a kernel of order p the integral against the
// compensated measure expands over subsets of arguments assigned to distinct
// configuration points, the rest integrated against the intensity:
//   I_p(f) = sum_{j=0..p} (-1)^{p-j} C(p,j) S_j,
//   S_j    = sum over cell multisets of size j of
//            (#arrangements) * prod_c falling(N_c, mult_c) * T_j(multiset),
// where T_j is f with p-j arguments integrated out. Falling factorials count
// ordered tuples of distinct points inside a cell.
class ChaosEvaluator {
  public:
    ChaosEvaluator(const DiscreteSpace& space, const ChaosFunctional& f)
        : space_(space), constant_(f.constant()) {
        for (const auto& [p, kernel] : f.kernels()) {
            if (kernel.cells() != space.cells())
                throw std::invalid_argument("ChaosEvaluator: kernel/space cell mismatch");
            std::vector<SymKernel> tables;
            tables.reserve(static_cast<std::size_t>(p) + 1);
            tables.push_back(kernel);  // order p at the back after reverse
            for (int j = p; j >= 1; --j) tables.push_back(contract(space, tables.back()));
            std::reverse(tables.begin(), tables.end());  // tables[j] has order j
            max_order_ = std::max(max_order_, p);
            per_kernel_.emplace_back(p, std::move(tables));
        }
        fact_[0] = 1.0;
        for (int i = 1; i < 17; ++i) fact_[static_cast<std::size_t>(i)] = fact_[static_cast<std::size_t>(i - 1)] * i;
    }

    const DiscreteSpace& space() const { return space_; }

    double operator()(const PointConfig& chi) const {
        if (chi.cells() != space_.cells())
            throw std::invalid_argument("ChaosEvaluator: config/space cell mismatch");
        const int m = space_.cells();
        const int K = max_order_;
        // falling factorial table ff[c][k] = N_c (N_c - 1) ... (N_c - k + 1)
        std::vector<double> ff(static_cast<std::size_t>(m) * static_cast<std::size_t>(K + 1));
        for (int c = 0; c < m; ++c) {
            double n = static_cast<double>(chi.count(c));
            double acc = 1.0;
            ff[static_cast<std::size_t>(c) * (K + 1)] = 1.0;
            for (int k = 1; k <= K; ++k) {
                acc *= (n - static_cast<double>(k - 1));
                ff[static_cast<std::size_t>(c) * (K + 1) + static_cast<std::size_t>(k)] = acc;
            }
        }
        double total = constant_;
        for (const auto& [p, tables] : per_kernel_) {
            double kernel_acc = 0.0;
            for (int j = 0; j <= p; ++j) {
                const SymKernel& tj = tables[static_cast<std::size_t>(j)];
                double s = 0.0;
                tj.indexer().for_each([&](const std::vector<int>& tuple, std::size_t r) {
                    double tv = tj.at_rank(r);
                    if (tv == 0.0) return;
                    double denom = 1.0;
                    double ffprod = 1.0;
                    std::size_t i = 0;
                    while (i < tuple.size()) {
                        int cell = tuple[i];
                        std::size_t k = 1;
                        while (i + k < tuple.size() && tuple[i + k] == cell) ++k;
                        denom *= fact_[k];
                        ffprod *= ff[static_cast<std::size_t>(cell) * (K + 1) + k];
                        i += k;
                    }
                    if (ffprod != 0.0) s += (fact_[static_cast<std::size_t>(j)] / denom) * ffprod * tv;
                });
                double sign = ((p - j) % 2 == 0) ? 1.0 : -1.0;
                kernel_acc += sign * static_cast<double>(binom_u64(p, j)) * s;
            }
            total += kernel_acc;
        }
        return total;
    }

  private:
    DiscreteSpace space_;
    double constant_;
    int max_order_ = 0;
    std::vector<std::pair<int, std::vector<SymKernel>>> per_kernel_;
    std::array<double, 17> fact_{};
};

inline double evaluate(const DiscreteSpace& space, const ChaosFunctional& f, const PointConfig& chi) {
    return ChaosEvaluator(space, f)(chi);
}

// Monte Carlo raw moments of a functional value under the Poisson measure.
template <class Fn>
std::map<int, MeanSe> estimate_moments(const DiscreteSpace& space, const Fn& f,
                                       const std::vector<int>& orders, std::size_t n,
                                       std::uint64_t seed, int threads = 1) {
    if (n < 2) throw std::invalid_argument("estimate_moments: need at least two replicates");
    for (int k : orders)
        if (k < 1 || k > 16) throw std::invalid_argument("estimate_moments: order must be in [1,16]");
    std::vector<double> vals(n);
    parallel_for(n, threads, [&](std::size_t r) {
        Rng rng(seed_stream(seed, r));
        vals[r] = f(sample_poisson(space, rng));
    });
    std::map<int, MeanSe> out;
    std::vector<double> powed(n);
    for (int k : orders) {
        for (std::size_t r = 0; r < n; ++r) {
            double v = vals[r];
            double p = v;
            for (int i = 1; i < k; ++i) p *= v;
            powed[r] = p;
        }
        out[k] = mean_se(powed);
    }
    return out;
}

inline std::map<int, MeanSe> estimate_moments(const DiscreteSpace& space, const ChaosFunctional& f,
                                              const std::vector<int>& orders, std::size_t n,
                                              std::uint64_t seed, int threads = 1) {
    ChaosEvaluator ev(space, f);
    return estimate_moments(space, ev, orders, n, seed, threads);
}

namespace detail {

// All multisets of size 0..max_order, flattened; beta_offset[j] is where the
// size-j block starts.
struct PerturbationTable {
    std::vector<std::vector<int>> tuples;
    std::vector<std::size_t> offset;  // offset[j] indexes the first size-j tuple

    PerturbationTable(int cells, int max_order) {
        offset.resize(static_cast<std::size_t>(max_order) + 2, 0);
        for (int j = 0; j <= max_order; ++j) {
            offset[static_cast<std::size_t>(j)] = tuples.size();
            MultisetIndexer idx(cells, j);
            idx.for_each([&](const std::vector<int>& t, std::size_t) { tuples.push_back(t); });
        }
        offset[static_cast<std::size_t>(max_order) + 1] = tuples.size();
    }
};

// Signed sum over sub-multisets turning point-addition values into an
// iterated add-one-cost difference:
//   D^p_alpha F(chi) = sum_{beta <= alpha} (-1)^{p-|beta|} prod_c C(mult_alpha(c), mult_beta(c)) F(chi + beta)
template <class Lookup>
double iterated_from_values(const std::vector<int>& alpha, const Lookup& value_of_beta) {
    auto runs = run_lengths(alpha);
    const int p = static_cast<int>(alpha.size());
    std::vector<int> take(runs.size(), 0);
    double acc = 0.0;
    // odometer over take vectors, 0 <= take[k] <= runs[k].second
    for (;;) {
        int size = 0;
        double ways = 1.0;
        std::vector<int> beta;
        for (std::size_t k = 0; k < runs.size(); ++k) {
            size += take[k];
            ways *= static_cast<double>(binom_u64(runs[k].second, take[k]));
            for (int c = 0; c < take[k]; ++c) beta.push_back(runs[k].first);
        }
        double sign = ((p - size) % 2 == 0) ? 1.0 : -1.0;
        acc += sign * ways * value_of_beta(beta);
        std::size_t k = 0;
        while (k < runs.size() && take[k] == runs[k].second) {
            take[k] = 0;
            ++k;
        }
        if (k == runs.size()) break;
        ++take[k];
    }
    return acc;
}

}  // namespace detail

struct KernelEstimate {
    SymKernel estimate;
    SymKernel se;
};

// Monte Carlo kernel extraction: the order-p kernel of F equals the expected
// p-fold iterated add-one-cost divided by p!. Each replicate evaluates F at
// chi plus every perturbation multiset of size <= p, then assembles all
// entries by signed binomial sums.
template <class Fn>
KernelEstimate extract_kernel(const DiscreteSpace& space, const Fn& f, int p, std::size_t n,
                              std::uint64_t seed, int threads = 1) {
    if (p < 1 || p > 8) throw std::invalid_argument("extract_kernel: order must be in [1,8]");
    if (n < 2) throw std::invalid_argument("extract_kernel: need at least two replicates");
    const int m = space.cells();
    MultisetIndexer entry_idx(m, p);
    const std::size_t entries = entry_idx.size();
    if (static_cast<double>(entries) * static_cast<double>(n) > 4e7)
        throw std::invalid_argument("extract_kernel: replicate-by-entry buffer too large");
    detail::PerturbationTable table(m, p);
    std::vector<MultisetIndexer> size_idx;
    for (int j = 0; j <= p; ++j) size_idx.emplace_back(m, j);
    // per-entry columns of iterated differences across replicates
    std::vector<std::vector<double>> cols(entries, std::vector<double>(n));
    parallel_for(n, threads, [&](std::size_t r) {
        Rng rng(seed_stream(seed, r));
        PointConfig chi = sample_poisson(space, rng);
        std::vector<double> vals(table.tuples.size());
        PointConfig bumped = chi;
        for (std::size_t b = 0; b < table.tuples.size(); ++b) {
            for (int c : table.tuples[b]) bumped.apply_delta(c, +1);
            vals[b] = f(bumped);
            for (int c : table.tuples[b]) bumped.apply_delta(c, -1);
        }
        entry_idx.for_each([&](const std::vector<int>& alpha, std::size_t rank) {
            double d = detail::iterated_from_values(alpha, [&](const std::vector<int>& beta) {
                std::size_t j = beta.size();
                return vals[table.offset[j] + size_idx[j].rank(beta)];
            });
            cols[rank][r] = d;
        });
    });
    KernelEstimate out{SymKernel(m, p), SymKernel(m, p)};
    const double pf = factorial(p);
    for (std::size_t e = 0; e < entries; ++e) {
        MeanSe ms = mean_se(cols[e]);
        out.estimate.at_rank(e) = ms.mean / pf;
        out.se.at_rank(e) = ms.se / pf;
    }
    return out;
}

inline KernelEstimate extract_kernel(const DiscreteSpace& space, const ChaosFunctional& f, int p,
                                     std::size_t n, std::uint64_t seed, int threads = 1) {
    ChaosEvaluator ev(space, f);
    return extract_kernel(space, ev, p, n, seed, threads);
}

// Convenience builders used across tests and scenarios.
inline ChaosFunctional single_integral(SymKernel k) {
    ChaosFunctional f(0.0);
    int order = k.order();
    f.set_kernel(order, std::move(k));
    return f;
}

}  // namespace chaoskit
