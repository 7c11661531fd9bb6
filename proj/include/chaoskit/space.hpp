#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chaoskit/rng.hpp"
#include "chaoskit/summation.hpp"

namespace chaoskit {

// Finite discrete base space: a list of cells with nonnegative intensity
// masses. All randomness downstream is a product of independent Poisson
// counts, one per cell.
class DiscreteSpace {
  public:
    explicit DiscreteSpace(std::vector<double> masses) : masses_(std::move(masses)) {
        if (masses_.empty()) throw std::invalid_argument("DiscreteSpace: at least one cell required");
        total_ = 0.0;
        for (double m : masses_) {
            if (!(m >= 0.0) || !std::isfinite(m))
                throw std::invalid_argument("DiscreteSpace: masses must be finite and nonnegative");
            total_ += m;
        }
        if (!std::isfinite(total_)) throw std::invalid_argument("DiscreteSpace: total mass must be finite");
    }

    int cells() const { return static_cast<int>(masses_.size()); }
    double mass(int cell) const { return masses_.at(static_cast<std::size_t>(cell)); }
    double total_mass() const { return total_; }
    const std::vector<double>& masses() const { return masses_; }

    static DiscreteSpace from_json(const nlohmann::json& j) {
        if (!j.contains("masses")) throw std::invalid_argument("space JSON: missing \"masses\"");
        return DiscreteSpace(j.at("masses").get<std::vector<double>>());
    }

    nlohmann::json to_json() const { return nlohmann::json{{"masses", masses_}}; }

  private:
    std::vector<double> masses_;
    double total_;
};

// A point configuration: per-cell counts. Points inside one cell are
// indistinguishable in position but act as distinguishable copies in every
// tuple enumeration, which is what the falling-factorial weights encode.
class PointConfig {
  public:
    explicit PointConfig(int cells) : counts_(static_cast<std::size_t>(cells), 0) {
        if (cells < 1) throw std::invalid_argument("PointConfig: at least one cell required");
    }
    explicit PointConfig(std::vector<std::int64_t> counts) : counts_(std::move(counts)) {
        if (counts_.empty()) throw std::invalid_argument("PointConfig: at least one cell required");
        for (auto c : counts_)
            if (c < 0) throw std::invalid_argument("PointConfig: counts must be nonnegative");
    }

    int cells() const { return static_cast<int>(counts_.size()); }
    std::int64_t count(int cell) const { return counts_.at(static_cast<std::size_t>(cell)); }
    const std::vector<std::int64_t>& counts() const { return counts_; }

    std::int64_t total_points() const {
        std::int64_t t = 0;
        for (auto c : counts_) t += c;
        return t;
    }

    // In-place count shift; the workhorse behind the pure add/remove wrappers
    // and the perturbation loops in the operators.
    void apply_delta(int cell, std::int64_t d) {
        auto& c = counts_.at(static_cast<std::size_t>(cell));
        if (c + d < 0) throw std::invalid_argument("PointConfig: removal from empty cell");
        c += d;
    }

    bool operator==(const PointConfig& o) const { return counts_ == o.counts_; }

  private:
    std::vector<std::int64_t> counts_;
};

inline PointConfig add_point(const PointConfig& chi, int cell) {
    PointConfig out = chi;
    out.apply_delta(cell, +1);
    return out;
}

inline PointConfig remove_point(const PointConfig& chi, int cell) {
    PointConfig out = chi;
    out.apply_delta(cell, -1);
    return out;
}

// Per-cell compensated evaluation: count minus mass.
class CompensatedEval {
  public:
    CompensatedEval(const DiscreteSpace& space, const PointConfig& chi) {
        if (space.cells() != chi.cells())
            throw std::invalid_argument("CompensatedEval: cell count mismatch");
        diffs_.resize(static_cast<std::size_t>(space.cells()));
        for (int c = 0; c < space.cells(); ++c)
            diffs_[static_cast<std::size_t>(c)] =
                static_cast<double>(chi.count(c)) - space.mass(c);
    }
    double operator[](int cell) const { return diffs_.at(static_cast<std::size_t>(cell)); }
    const std::vector<double>& diffs() const { return diffs_; }

  private:
    std::vector<double> diffs_;
};

inline PointConfig sample_poisson(const DiscreteSpace& space, Rng& rng) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(space.cells()));
    for (int c = 0; c < space.cells(); ++c)
        counts[static_cast<std::size_t>(c)] = rng.poisson(space.mass(c));
    return PointConfig(std::move(counts));
}

inline PointConfig sample_poisson(const DiscreteSpace& space, std::uint64_t seed) {
    Rng rng(seed);
    return sample_poisson(space, rng);
}

struct MeckeResult {
    MeanSe lhs;  // E sum_z h(chi + delta_z, z) mass(z)
    MeanSe rhs;  // E sum over points z of chi of h(chi, z)
};

// Monte Carlo check of the add-one-point identity
//   E int h(eta + delta_z, z) mu(dz)  =  E int h(eta, z) eta(dz).
// h is a callable (const PointConfig&, int cell) -> double.
template <class H>
MeckeResult mecke_check(const DiscreteSpace& space, const H& h, std::size_t n,
                        std::uint64_t seed, int threads = 1) {
    if (n < 2) throw std::invalid_argument("mecke_check: need at least two replicates");
    std::vector<double> lhs(n), rhs(n);
    parallel_for(n, threads, [&](std::size_t r) {
        Rng rng(seed_stream(seed, r));
        PointConfig chi = sample_poisson(space, rng);
        double l = 0.0, rr = 0.0;
        PointConfig bumped = chi;
        for (int c = 0; c < space.cells(); ++c) {
            double m = space.mass(c);
            if (m > 0.0) {
                bumped.apply_delta(c, +1);
                l += h(bumped, c) * m;
                bumped.apply_delta(c, -1);
            }
            if (chi.count(c) > 0) rr += static_cast<double>(chi.count(c)) * h(chi, c);
        }
        lhs[r] = l;
        rhs[r] = rr;
    });
    return MeckeResult{mean_se(lhs), mean_se(rhs)};
}

}  // namespace chaoskit
