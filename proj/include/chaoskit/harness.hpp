#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "chaoskit/bounds.hpp"
#include "chaoskit/chaos.hpp"
#include "chaoskit/kernels.hpp"
#include "chaoskit/malliavin.hpp"
#include "chaoskit/oracle.hpp"
#include "chaoskit/space.hpp"
#include "chaoskit/stein.hpp"
#include "chaoskit/summation.hpp"

namespace chaoskit {

inline constexpr const char* kVersion = "0.1.0";

struct ExperimentConfig {
    std::string scenario;
    std::optional<std::vector<std::string>> checks;  // absent: every check of the scenario
    std::uint64_t seed = 12345;
    std::size_t n = 10000;  // replicate size / sample count, scenario-dependent
    int replicates = 8;
    int threads = 1;
    std::string out_dir;  // empty: no files written
    double lambda = 25.0; // cell intensity for the sampling scenarios
    double nu = 2.0;      // centered-Gamma parameter
    int q = 2;            // top chaos order for generated functionals
    int cells = 4;
    std::optional<nlohmann::json> space_json;
    std::optional<nlohmann::json> functional_json;
    std::optional<nlohmann::json> target_json;

    void validate() const {
        if (scenario.empty()) throw std::invalid_argument("config: scenario must be set");
        if (n < 2) throw std::invalid_argument("config: n must be at least 2");
        if (replicates < 1) throw std::invalid_argument("config: replicates must be at least 1");
        if (threads < 1) throw std::invalid_argument("config: threads must be at least 1");
        if (!(lambda > 0.0)) throw std::invalid_argument("config: lambda must be positive");
        if (q < 1 || q > 8) throw std::invalid_argument("config: q must be in [1,8]");
        if (cells < 1) throw std::invalid_argument("config: cells must be positive");
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        static const std::set<std::string> known = {
            "scenario", "checks", "seed",  "n",     "replicates", "threads",    "out_dir",
            "lambda",   "nu",     "q",     "cells", "space",      "functional", "target"};
        for (const auto& [key, _] : j.items())
            if (!known.count(key)) throw std::invalid_argument("config: unknown key \"" + key + "\"");
        ExperimentConfig c;
        c.scenario = j.value("scenario", std::string());
        if (j.contains("checks")) c.checks = j.at("checks").get<std::vector<std::string>>();
        c.seed = j.value("seed", c.seed);
        c.n = j.value("n", c.n);
        c.replicates = j.value("replicates", c.replicates);
        c.threads = j.value("threads", c.threads);
        c.out_dir = j.value("out_dir", c.out_dir);
        c.lambda = j.value("lambda", c.lambda);
        c.nu = j.value("nu", c.nu);
        c.q = j.value("q", c.q);
        c.cells = j.value("cells", c.cells);
        if (j.contains("space")) c.space_json = j.at("space");
        if (j.contains("functional")) c.functional_json = j.at("functional");
        if (j.contains("target")) c.target_json = j.at("target");
        c.validate();
        return c;
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"scenario", scenario}, {"seed", seed},     {"n", n},
                         {"replicates", replicates}, {"threads", threads}, {"out_dir", out_dir},
                         {"lambda", lambda},     {"nu", nu},       {"q", q},
                         {"cells", cells}};
        if (checks) j["checks"] = *checks;
        if (space_json) j["space"] = *space_json;
        if (functional_json) j["functional"] = *functional_json;
        if (target_json) j["target"] = *target_json;
        return j;
    }
};

// pass if the estimate sits within 2 SE of the reference, fail beyond 4 SE.
inline std::string verdict_two_sided(double estimate, double reference, double se) {
    double d = std::fabs(estimate - reference);
    if (se == 0.0) return d == 0.0 ? "pass" : "fail";
    if (d <= 2.0 * se) return "pass";
    if (d >= 4.0 * se) return "fail";
    return "inconclusive";
}

// pass if the estimate is below the bound with 2 SE slack, fail beyond 4 SE.
inline std::string verdict_upper(double estimate, double rhs, double se) {
    if (estimate <= rhs + 2.0 * se) return "pass";
    if (estimate > rhs + 4.0 * se) return "fail";
    return "inconclusive";
}

struct CheckRow {
    std::string scenario;
    std::string check;
    double estimate = 0.0;
    double se = 0.0;
    std::optional<double> reference;
    std::optional<double> rhs;
    std::string verdict;
};

struct ExperimentReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::string version = kVersion;
    double wall_ms = 0.0;
    std::vector<CheckRow> rows;

    int exit_code() const {
        for (const auto& r : rows)
            if (r.verdict == "fail") return 1;
        return 0;
    }

    const CheckRow& row(const std::string& check) const {
        for (const auto& r : rows)
            if (r.check == check) return r;
        throw std::out_of_range("ExperimentReport: no check named " + check);
    }

    nlohmann::json to_json() const {
        nlohmann::json jrows = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json jr{{"check", r.check},
                              {"estimate", r.estimate},
                              {"se", r.se},
                              {"verdict", r.verdict}};
            jr["reference"] = r.reference ? nlohmann::json(*r.reference) : nlohmann::json();
            jr["rhs"] = r.rhs ? nlohmann::json(*r.rhs) : nlohmann::json();
            jrows.push_back(std::move(jr));
        }
        return nlohmann::json{{"scenario", scenario},
                              {"seed", seed},
                              {"version", version},
                              {"wall_ms", wall_ms},
                              {"rows", std::move(jrows)}};
    }

    static std::string csv_header() {
        return "scenario,check,estimate,se,reference,rhs,verdict,seed,wall_ms";
    }

    std::string to_csv() const {
        std::string out = csv_header() + "\n";
        char buf[640];
        auto opt = [](const std::optional<double>& v) {
            if (!v) return std::string();
            char b[64];
            std::snprintf(b, sizeof(b), "%.17g", *v);
            return std::string(b);
        };
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%s,%s,%s,%llu,%.17g\n",
                          r.scenario.c_str(), r.check.c_str(), r.estimate, r.se,
                          opt(r.reference).c_str(), opt(r.rhs).c_str(), r.verdict.c_str(),
                          static_cast<unsigned long long>(seed), wall_ms);
            out += buf;
        }
        return out;
    }

    static ExperimentReport from_csv(const std::string& text) {
        auto parse_double = [](const std::string& s) {
            const char* p = s.c_str();
            char* end = nullptr;
            double v = std::strtod(p, &end);
            if (end != p + s.size() || s.empty())
                throw std::invalid_argument("report CSV: bad numeric field \"" + s + "\"");
            return v;
        };
        std::vector<std::string> lines;
        std::string cur;
        for (char ch : text) {
            if (ch == '\n') {
                lines.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        if (!cur.empty()) lines.push_back(cur);
        if (lines.empty() || lines[0] != csv_header())
            throw std::invalid_argument("report CSV: bad header");
        ExperimentReport rep;
        bool first = true;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            std::vector<std::string> f;
            std::string field;
            for (char ch : lines[i]) {
                if (ch == ',') {
                    f.push_back(field);
                    field.clear();
                } else {
                    field += ch;
                }
            }
            f.push_back(field);
            if (f.size() != 9) throw std::invalid_argument("report CSV: row needs 9 fields");
            CheckRow row;
            row.scenario = f[0];
            row.check = f[1];
            row.estimate = parse_double(f[2]);
            row.se = parse_double(f[3]);
            if (!f[4].empty()) row.reference = parse_double(f[4]);
            if (!f[5].empty()) row.rhs = parse_double(f[5]);
            row.verdict = f[6];
            if (row.verdict != "pass" && row.verdict != "fail" && row.verdict != "inconclusive")
                throw std::invalid_argument("report CSV: bad verdict \"" + row.verdict + "\"");
            std::uint64_t seed = std::strtoull(f[7].c_str(), nullptr, 10);
            double wall = parse_double(f[8]);
            if (first) {
                rep.scenario = row.scenario;
                rep.seed = seed;
                rep.wall_ms = wall;
                first = false;
            } else if (seed != rep.seed) {
                throw std::invalid_argument("report CSV: inconsistent seed column");
            }
            rep.rows.push_back(std::move(row));
        }
        return rep;
    }

    // numeric equality ignoring wall time, for replay and thread-invariance checks
    bool same_numbers(const ExperimentReport& other) const {
        if (scenario != other.scenario || seed != other.seed || rows.size() != other.rows.size())
            return false;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const CheckRow& a = rows[i];
            const CheckRow& b = other.rows[i];
            if (a.check != b.check || a.verdict != b.verdict) return false;
            if (a.estimate != b.estimate || a.se != b.se) return false;
            if (a.reference.has_value() != b.reference.has_value() ||
                (a.reference && *a.reference != *b.reference))
                return false;
            if (a.rhs.has_value() != b.rhs.has_value() || (a.rhs && *a.rhs != *b.rhs)) return false;
        }
        return true;
    }
};

inline std::vector<std::string> list_scenarios() {
    return {"identities",       "moments",          "poisson-clt",
            "gamma-approx",     "stein-properties", "kernel-extraction"};
}

namespace detail {

inline DiscreteSpace config_space(const ExperimentConfig& c) {
    if (c.space_json) return DiscreteSpace::from_json(*c.space_json);
    Rng rng(seed_stream(c.seed, 9000));
    std::vector<double> masses(static_cast<std::size_t>(c.cells));
    for (double& m : masses) m = 0.2 + 1.3 * rng.u01();
    return DiscreteSpace(std::move(masses));
}

inline ChaosFunctional config_functional(const ExperimentConfig& c, const DiscreteSpace& space,
                                         std::uint64_t salt) {
    if (c.functional_json) return ChaosFunctional::from_json(space.cells(), *c.functional_json);
    Rng rng(seed_stream(c.seed, salt));
    ChaosFunctional f(0.25);
    for (int p = 1; p <= c.q; ++p)
        f.set_kernel(p, make_random_kernel(space.cells(), p, rng, -0.5, 0.5));
    return f;
}

inline CheckRow exact_row(const std::string& scenario, std::string check, double estimate,
                          double tol) {
    CheckRow r;
    r.scenario = scenario;
    r.check = std::move(check);
    r.estimate = estimate;
    r.rhs = tol;
    r.verdict = verdict_upper(estimate, tol, 0.0);
    return r;
}

inline CheckRow two_sided_row(const std::string& scenario, std::string check, double estimate,
                              double se, double reference) {
    CheckRow r;
    r.scenario = scenario;
    r.check = std::move(check);
    r.estimate = estimate;
    r.se = se;
    r.reference = reference;
    r.verdict = verdict_two_sided(estimate, reference, se);
    return r;
}

inline CheckRow upper_row(const std::string& scenario, std::string check, double estimate,
                          double se, double rhs) {
    CheckRow r;
    r.scenario = scenario;
    r.check = std::move(check);
    r.estimate = estimate;
    r.se = se;
    r.rhs = rhs;
    r.verdict = verdict_upper(estimate, rhs, se);
    return r;
}

// Pathwise product and power rules for the add-one and remove-one costs,
// exercised on freshly drawn functionals and configurations. Estimates are
// the worst relative residuals seen.
inline void scenario_identities(const ExperimentConfig& c, std::vector<CheckRow>& rows) {
    DiscreteSpace space = config_space(c);
    const int m = space.cells();
    const std::size_t n = c.n;
    enum { kAdd2, kAdd3, kRem2, kRem3, kAddProd, kRemProd, kCount };
    std::vector<std::array<double, kCount>> worst(n);

    parallel_for(n, c.threads, [&](std::size_t r) {
        Rng rng(seed_stream(c.seed, r));
        ChaosFunctional F(rng.u01() - 0.5), G(rng.u01() - 0.5);
        for (int p = 1; p <= c.q; ++p) {
            F.set_kernel(p, make_random_kernel(m, p, rng));
            G.set_kernel(p, make_random_kernel(m, p, rng));
        }
        ChaosEvaluator ef(space, F), eg(space, G);
        PointConfig chi = sample_poisson(space, rng);
        double f0 = ef(chi), g0 = eg(chi);
        std::array<double, kCount> w{};
        auto rel = [](double lhs, double rhs) {
            return std::fabs(lhs - rhs) / std::max({1.0, std::fabs(lhs), std::fabs(rhs)});
        };
        PointConfig work = chi;
        for (int z = 0; z < m; ++z) {
            work.apply_delta(z, +1);
            double fp = ef(work), gp = eg(work);
            work.apply_delta(z, -1);
            double a = fp - f0, ag = gp - g0;
            w[kAdd2] = std::max(w[kAdd2], rel(fp * fp - f0 * f0, a * a + 2.0 * f0 * a));
            w[kAdd3] = std::max(w[kAdd3], rel(fp * fp * fp - f0 * f0 * f0,
                                              a * a * a + 3.0 * f0 * f0 * a + 3.0 * f0 * a * a));
            w[kAddProd] = std::max(w[kAddProd], rel(fp * gp - f0 * g0, g0 * a + f0 * ag + a * ag));
            if (chi.count(z) > 0) {
                work.apply_delta(z, -1);
                double fm = ef(work), gm = eg(work);
                work.apply_delta(z, +1);
                double b = f0 - fm, bg = g0 - gm;
                w[kRem2] = std::max(w[kRem2], rel(f0 * f0 - fm * fm, -b * b + 2.0 * f0 * b));
                w[kRem3] = std::max(w[kRem3], rel(f0 * f0 * f0 - fm * fm * fm,
                                                  b * b * b + 3.0 * f0 * f0 * b - 3.0 * f0 * b * b));
                w[kRemProd] = std::max(w[kRemProd], rel(f0 * g0 - fm * gm, g0 * b + f0 * bg - b * bg));
            }
        }
        worst[r] = w;
    });

    std::array<double, kCount> acc{};
    for (const auto& w : worst)
        for (int i = 0; i < kCount; ++i) acc[static_cast<std::size_t>(i)] =
            std::max(acc[static_cast<std::size_t>(i)], w[static_cast<std::size_t>(i)]);
    const double tol = 1e-10;
    rows.push_back(exact_row(c.scenario, "add_cost_square", acc[kAdd2], tol));
    rows.push_back(exact_row(c.scenario, "add_cost_cube", acc[kAdd3], tol));
    rows.push_back(exact_row(c.scenario, "remove_cost_square", acc[kRem2], tol));
    rows.push_back(exact_row(c.scenario, "remove_cost_cube", acc[kRem3], tol));
    rows.push_back(exact_row(c.scenario, "add_cost_product", acc[kAddProd], tol));
    rows.push_back(exact_row(c.scenario, "remove_cost_product", acc[kRemProd], tol));
}

// Monte-Carlo moments against the counting-polynomial oracle; if the oracle
// overflows its degree or term budget the reference falls back to an
// independent Monte-Carlo run and the verdict uses the combined error.
inline void scenario_moments(const ExperimentConfig& c, std::vector<CheckRow>& rows) {
    DiscreteSpace space = config_space(c);
    ChaosFunctional F = config_functional(c, space, 9001);
    std::vector<int> orders = {1, 2, 3, 4};
    auto mc = estimate_moments(space, F, orders, c.n, c.seed, c.threads);
    for (int k : orders) {
        const MeanSe& est = mc.at(k);
        double reference;
        double se;
        try {
            reference = exact_moment(space, F, k);
            se = est.se;
        } catch (const std::runtime_error&) {
            auto mc2 = estimate_moments(space, F, {k}, c.n, seed_stream(c.seed, 7777), c.threads);
            reference = mc2.at(k).mean;
            se = std::sqrt(est.se * est.se + mc2.at(k).se * mc2.at(k).se);
        } catch (const std::invalid_argument&) {
            auto mc2 = estimate_moments(space, F, {k}, c.n, seed_stream(c.seed, 7777), c.threads);
            reference = mc2.at(k).mean;
            se = std::sqrt(est.se * est.se + mc2.at(k).se * mc2.at(k).se);
        }
        rows.push_back(two_sided_row(c.scenario, "moment_" + std::to_string(k), est.mean, se,
                                     reference));
    }
}

// Standardized Poisson counts against the normal target: moment checks plus
// the fourth-moment distance bounds, with the finite-sample distance bias
// removed by a same-size target-drawn baseline.
inline void scenario_poisson_clt(const ExperimentConfig& c, std::vector<CheckRow>& rows) {
    Target target = Target::normal();
    if (c.target_json) {
        target = Target::from_json(*c.target_json);
        if (!target.is_normal())
            throw std::invalid_argument("poisson-clt: target must be normal");
    }
    const double lambda = c.lambda;
    const double root = std::sqrt(lambda);
    const std::size_t R = static_cast<std::size_t>(c.replicates);
    std::vector<double> m2(R), m4(R), w1c(R), ksc(R);

    parallel_for(R, c.threads, [&](std::size_t r) {
        Rng rng(seed_stream(c.seed, r, 0));
        std::vector<double> xs(c.n), p2(c.n), p4(c.n);
        for (std::size_t i = 0; i < c.n; ++i) {
            double f = (static_cast<double>(rng.poisson(lambda)) - lambda) / root;
            xs[i] = f;
            p2[i] = f * f;
            p4[i] = f * f * f * f;
        }
        m2[r] = pairwise_sum(p2) / static_cast<double>(c.n);
        m4[r] = pairwise_sum(p4) / static_cast<double>(c.n);
        Sample s(std::move(xs));
        Sample base = sample_target(target, c.n, seed_stream(c.seed, r, 1));
        w1c[r] = std::max(0.0, w1_distance(s, target) - w1_distance(base, target));
        ksc[r] = std::max(0.0, ks_distance(s, target) - ks_distance(base, target));
    });

    double m4_true = 3.0 + 1.0 / lambda;
    MeanSe m2s = mean_se(m2), m4s = mean_se(m4), w1s = mean_se(w1c), kss = mean_se(ksc);
    rows.push_back(two_sided_row(c.scenario, "second_moment", m2s.mean, m2s.se, 1.0));
    rows.push_back(two_sided_row(c.scenario, "fourth_moment", m4s.mean, m4s.se, m4_true));
    rows.push_back(upper_row(c.scenario, "w1_upper", w1s.mean, w1s.se, fm_w1_rhs(1, m4_true)));
    rows.push_back(
        upper_row(c.scenario, "w1_upper_simple", w1s.mean, w1s.se, fm_w1_rhs_simple(m4_true)));
    rows.push_back(upper_row(c.scenario, "kol_upper", kss.mean, kss.se, fm_kol_rhs(m4_true)));
}

// Sum of independent standardized second-order integrals, one per cell, with
// E[F^2] = 2 nu by construction; compared against the centered-Gamma target.
inline void scenario_gamma_approx(const ExperimentConfig& c, std::vector<CheckRow>& rows) {
    double nu_round = std::round(c.nu);
    if (!(c.nu > 0.0) || std::fabs(c.nu - nu_round) > 1e-12 || nu_round < 1.0)
        throw std::invalid_argument("gamma-approx: nu must be a positive integer");
    const int k = static_cast<int>(nu_round);
    const double nu = nu_round;
    Target target = Target::centered_gamma(nu);
    if (c.target_json) {
        Target t = Target::from_json(*c.target_json);
        if (t.is_normal() || t.nu() != nu)
            throw std::invalid_argument("gamma-approx: target must match nu");
    }
    const double mass = c.lambda;

    DiscreteSpace space(std::vector<double>(static_cast<std::size_t>(k), mass));
    SymKernel f(k, 2);
    for (int i = 0; i < k; ++i) f.set({i, i}, 1.0 / mass);
    ChaosFunctional F;
    F.set_kernel(2, f);
    double m3 = exact_moment(space, F, 3);
    double m4 = exact_moment(space, F, 4);
    CountPolynomial P = to_polynomial(space, F);
    double d4term = exact_expectation(space, add_cost_fourth_polynomial(space, P));
    double rhs = fm_gamma_rhs(nu, 2, m3, m4, d4term);

    const std::size_t R = static_cast<std::size_t>(c.replicates);
    std::vector<double> m2(R), d2(R);
    parallel_for(R, c.threads, [&](std::size_t r) {
        Rng rng(seed_stream(c.seed, r, 0));
        std::vector<double> xs(c.n), p2(c.n);
        for (std::size_t i = 0; i < c.n; ++i) {
            double fv = 0.0;
            for (int cell = 0; cell < k; ++cell) {
                double nc = static_cast<double>(rng.poisson(mass));
                fv += ((nc - mass) * (nc - mass) - nc) / mass;
            }
            xs[i] = fv;
            p2[i] = fv * fv;
        }
        m2[r] = pairwise_sum(p2) / static_cast<double>(c.n);
        d2[r] = d2_lower_bound(Sample(std::move(xs)), target);
    });

    MeanSe m2s = mean_se(m2), d2s = mean_se(d2);
    rows.push_back(two_sided_row(c.scenario, "second_moment", m2s.mean, m2s.se, 2.0 * nu));
    rows.push_back(upper_row(c.scenario, "d2_upper", d2s.mean, d2s.se, rhs));

    Sample zs = sample_target(target, c.n, seed_stream(c.seed, 1234));
    std::vector<double> lcm(c.n);
    for (std::size_t i = 0; i < c.n; ++i) {
        double z = zs[i];
        lcm[i] = z * z * z * z - 12.0 * z * z * z;
    }
    MeanSe lcms = mean_se(lcm);
    rows.push_back(two_sided_row(c.scenario, "target_fourth_third_moment", lcms.mean, lcms.se,
                                 12.0 * nu * nu - 48.0 * nu));
}

inline void scenario_stein_properties(const ExperimentConfig& c, std::vector<CheckRow>& rows) {
    int side = std::max(32, static_cast<int>(std::lround(std::sqrt(static_cast<double>(c.n)))));
    SteinPropertyReport rep = stein_property_report(side, c.n, c.seed);
    rows.push_back(exact_row(c.scenario, "equation_residual", rep.max_eq_residual, 1e-10));
    rows.push_back(exact_row(c.scenario, "positivity_margin", -rep.min_g, 0.0));
    rows.push_back(exact_row(c.scenario, "supremum", rep.max_g, kSqrt2Pi / 4.0));
    rows.push_back(exact_row(c.scenario, "derivative_supremum", rep.max_abs_g_prime, 1.0));
    rows.push_back(exact_row(c.scenario, "product_lipschitz_margin", rep.max_supnorm_violation, 1e-12));
    rows.push_back(exact_row(c.scenario, "forward_expansion_margin", rep.max_forward_violation, 1e-12));
    rows.push_back(
        exact_row(c.scenario, "backward_expansion_margin", rep.max_backward_violation, 1e-12));
}

// Kernel recovery from iterated add-one costs: Monte-Carlo entries must sit
// within their standard errors of the truth, and the oracle route must be
// exact to rounding.
inline void scenario_kernel_extraction(const ExperimentConfig& c, std::vector<CheckRow>& rows) {
    DiscreteSpace space = config_space(c);
    ChaosFunctional F = config_functional(c, space, 9002);
    for (int p = 1; p <= c.q; ++p) {
        const SymKernel* truth = F.kernel(p);
        if (!truth) continue;
        KernelEstimate est = extract_kernel(space, F, p, c.n, seed_stream(c.seed, 300 + p),
                                            c.threads);
        double worst_z = 0.0;
        for (std::size_t rk = 0; rk < est.estimate.indexer().size(); ++rk) {
            double diff = std::fabs(est.estimate.at_rank(rk) - truth->at_rank(rk));
            // entries of the functional's top order have a constant iterated
            // difference, so their se collapses to float jitter; the floor
            // keeps pure roundoff from registering as a huge z
            double se = std::max(est.se.at_rank(rk), 1e-13);
            worst_z = std::max(worst_z, diff / se);
        }
        rows.push_back(upper_row(c.scenario, "mc_entry_z_order_" + std::to_string(p), worst_z, 0.0,
                                 3.0));
        SymKernel exact = exact_extract_kernel(space, F, p);
        rows.push_back(exact_row(c.scenario, "exact_order_" + std::to_string(p),
                                 max_abs_diff(exact, *truth), 1e-9));
    }
}

inline std::vector<CheckRow> build_rows(const ExperimentConfig& c) {
    std::vector<CheckRow> rows;
    if (c.scenario == "identities")
        scenario_identities(c, rows);
    else if (c.scenario == "moments")
        scenario_moments(c, rows);
    else if (c.scenario == "poisson-clt")
        scenario_poisson_clt(c, rows);
    else if (c.scenario == "gamma-approx")
        scenario_gamma_approx(c, rows);
    else if (c.scenario == "stein-properties")
        scenario_stein_properties(c, rows);
    else if (c.scenario == "kernel-extraction")
        scenario_kernel_extraction(c, rows);
    else
        throw std::invalid_argument("unknown scenario \"" + c.scenario + "\"");
    return rows;
}

}  // namespace detail

inline ExperimentReport run(const ExperimentConfig& cfg) {
    cfg.validate();
    auto scenarios = list_scenarios();
    if (std::find(scenarios.begin(), scenarios.end(), cfg.scenario) == scenarios.end())
        throw std::invalid_argument("unknown scenario \"" + cfg.scenario + "\"");
    auto t0 = std::chrono::steady_clock::now();
    ExperimentReport rep;
    rep.scenario = cfg.scenario;
    rep.seed = cfg.seed;
    if (!cfg.checks || !cfg.checks->empty()) {
        std::vector<CheckRow> rows = detail::build_rows(cfg);
        if (cfg.checks) {
            for (const std::string& want : *cfg.checks) {
                bool found = false;
                for (const auto& r : rows)
                    if (r.check == want) {
                        rep.rows.push_back(r);
                        found = true;
                    }
                if (!found)
                    throw std::invalid_argument("unknown check \"" + want + "\" for scenario " +
                                                cfg.scenario);
            }
        } else {
            rep.rows = std::move(rows);
        }
    }
    auto t1 = std::chrono::steady_clock::now();
    rep.wall_ms = std::max(0.001, std::chrono::duration<double, std::milli>(t1 - t0).count());
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream js(std::filesystem::path(cfg.out_dir) / "report.json");
        js << rep.to_json().dump(2) << "\n";
        std::ofstream cs(std::filesystem::path(cfg.out_dir) / "report.csv");
        cs << rep.to_csv();
        if (!js || !cs) throw std::runtime_error("failed to write report files to " + cfg.out_dir);
    }
    return rep;
}

}  // namespace chaoskit
