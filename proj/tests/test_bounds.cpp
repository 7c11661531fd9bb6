#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "chaoskit/bounds.hpp"
#include "chaoskit/chaos.hpp"
#include "chaoskit/kernels.hpp"
#include "chaoskit/oracle.hpp"
#include "chaoskit/rng.hpp"

using namespace chaoskit;

TEST_CASE("theorem constants at benchmark fourth moments") {
    REQUIRE(kSqrt2OverPi == Catch::Approx(0.7978845608028654).margin(1e-15));
    // order 1 at m4 = 4: sqrt(2/pi)/2 + sqrt(3)
    REQUIRE(fm_w1_rhs(1, 4.0) == Catch::Approx(2.1309930879703052).margin(1e-11));
    // order-free form at m4 = 4: sqrt(2/pi) + 2
    REQUIRE(fm_w1_rhs_simple(4.0) == Catch::Approx(2.7978845608028654).margin(1e-11));
    // Kolmogorov form at m4 = 4: 11 + 2 sqrt(2) (2 + sqrt(2)) = 15 + 4 sqrt(2)
    REQUIRE(fm_kol_rhs(4.0) == Catch::Approx(20.656854249492380).margin(1e-11));
    REQUIRE(fm_gamma_c1(2.0) == Catch::Approx(0.5773502691896258).margin(1e-14));
    REQUIRE(fm_gamma_c2(2.0) == Catch::Approx(2.4082482904638630).margin(1e-14));
    REQUIRE(fm_gamma_c1(1.0) == Catch::Approx(1.1547005383792517).margin(1e-14));
    REQUIRE(fm_gamma_c2(1.0) == Catch::Approx(2.9378169244873694).margin(1e-14));
}

TEST_CASE("bounds vanish at the fourth-moment floor and flag estimator noise below it") {
    for (int q : {1, 2, 5}) REQUIRE(fm_w1_rhs(q, 3.0) == 0.0);
    REQUIRE(fm_w1_rhs_simple(3.0) == 0.0);
    REQUIRE(fm_kol_rhs(3.0) == 0.0);

    bool noise = false;
    REQUIRE(fm_w1_rhs(2, 2.9, &noise) == 0.0);
    REQUIRE(noise);
    noise = false;
    REQUIRE(fm_w1_rhs(2, 3.1, &noise) > 0.0);
    REQUIRE_FALSE(noise);
    noise = false;
    REQUIRE(fm_kol_rhs(-0.5, &noise) == 0.0);
    REQUIRE(noise);
}

TEST_CASE("bounds are monotone in the fourth moment") {
    double prev_w = -1.0, prev_k = -1.0;
    for (double m4 = 3.0; m4 <= 9.0; m4 += 0.5) {
        double w = fm_w1_rhs(2, m4);
        double k = fm_kol_rhs(m4);
        REQUIRE(w >= prev_w);
        REQUIRE(k >= prev_k);
        prev_w = w;
        prev_k = k;
    }
}

TEST_CASE("invalid bound parameters are rejected") {
    REQUIRE_THROWS_AS(fm_w1_rhs(0, 4.0), std::invalid_argument);
    REQUIRE_THROWS_AS(fm_gamma_c1(0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(fm_gamma_c2(-2.0), std::invalid_argument);
    REQUIRE_THROWS_AS(fm_gamma_rhs(2.0, 2, 0.0, 10.0, -1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(fm_gamma_rhs(0.0, 2, 0.0, 10.0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(fm_gamma_rhs(2.0, 0, 0.0, 10.0, 1.0), std::invalid_argument);
}

TEST_CASE("gamma bound closed form, including a negative bracket") {
    // bracket = 100 - 24 - 48 + 96 = 124, second term sqrt(8/2) = 2
    REQUIRE(fm_gamma_rhs(2.0, 2, 2.0, 100.0, 8.0) ==
            Catch::Approx(0.5773502691896258 * std::sqrt(124.0) +
                          2.4082482904638630 * 2.0)
                .margin(1e-11));
    // bracket = 1 - 120 - 48 + 96 = -71; the absolute value enters the root
    REQUIRE(fm_gamma_rhs(2.0, 2, 10.0, 1.0, 0.0) ==
            Catch::Approx(0.5773502691896258 * std::sqrt(71.0)).margin(1e-11));
}

TEST_CASE("ingredient estimates on a normalized first-order integral") {
    DiscreteSpace space({0.5, 1.0, 1.5});
    double raw[3] = {0.8, -0.3, 0.4};
    double norm2 = 0.5 * 0.64 + 1.0 * 0.09 + 1.5 * 0.16;
    SymKernel k(3, 1);
    for (int c = 0; c < 3; ++c) k.set({c}, raw[c] / std::sqrt(norm2));
    ChaosFunctional F;
    F.set_kernel(1, k);

    Ingredients ing = estimate_ingredients(space, F, 4096, 2024);
    REQUIRE(ing.q == 1);
    REQUIRE(ing.n == 4096);
    REQUIRE(ing.moment_batches.size() == 16);

    REQUIRE(std::fabs(ing.m2.mean - 1.0) <= 3.0 * ing.m2.se);
    REQUIRE(std::fabs(ing.gamma_mean.mean - 1.0) <= 3.0 * ing.gamma_mean.se);

    // for a first-order integral the add-one cost is deterministic, so the
    // squared- and mixed-cost integrals are exact constants
    double d2_exact = 0.0, mixed_exact = 0.0;
    for (int c = 0; c < 3; ++c) {
        double a = raw[c] / std::sqrt(norm2);
        d2_exact += space.mass(c) * a * a;
        mixed_exact += space.mass(c) * a * a * std::fabs(a);
    }
    REQUIRE(ing.d2_term.mean == Catch::Approx(d2_exact).margin(1e-12));
    REQUIRE(ing.d2_term.se <= 1e-12);
    REQUIRE(ing.mixed_term.mean == Catch::Approx(mixed_exact).margin(1e-12));
    REQUIRE(ing.mixed_term.se <= 1e-12);

    // triangle inequality between the two empirical bound routes
    REQUIRE(w1_rhs_from_mean_abs(ing) <= w1_rhs_from_variance(ing) + 1e-12);

    // batched right-hand sides evaluate the closed form at the pooled moments
    ValueSe w1b = fm_w1_rhs_batched(1, ing);
    REQUIRE(w1b.value == fm_w1_rhs(1, ing.m4.mean));
    REQUIRE(w1b.se > 0.0);
    ValueSe kb = fm_kol_rhs_batched(ing);
    REQUIRE(kb.value == fm_kol_rhs(ing.m4.mean));
    ValueSe gb = fm_gamma_rhs_batched(0.5, 1, ing);
    REQUIRE(gb.value ==
            fm_gamma_rhs(0.5, 1, ing.m3.mean, ing.m4.mean, std::max(0.0, ing.d4_term.mean)));
}

TEST_CASE("indicator sweep on handcrafted events") {
    detail::IndicatorEvents ev;
    ev.cells = 1;
    ev.n = 4;
    ev.lo = {0.5, 1.0, 0.0, 0.0};
    ev.hi = {2.5, 1.8, 0.0, 0.0};
    ev.wt = {2.0, 1.0, 0.0, 0.0};
    detail::IndicatorSup sup = detail::indicator_sweep(ev, {0.0, 1.0, 2.0, 3.0});
    // permille grid over four values is {0,1,2,3}; totals are 0, 3, 2, 0
    REQUIRE(sup.x == 1.0);
    REQUIRE(sup.value == Catch::Approx(0.75).margin(1e-14));
    // replicate totals at x = 1 are {2, 1, 0, 0}
    REQUIRE(sup.se == Catch::Approx(0.47871355387816905).margin(1e-12));
}

TEST_CASE("indicator sweep equals a brute-force scan over the value grid") {
    const std::size_t n = 500;
    const int m = 3;
    Rng rng(97531);
    detail::IndicatorEvents ev;
    ev.cells = m;
    ev.n = n;
    ev.lo.assign(n * m, 0.0);
    ev.hi.assign(n * m, 0.0);
    ev.wt.assign(n * m, 0.0);
    std::vector<double> fvals(n);
    for (std::size_t r = 0; r < n; ++r) {
        double fv = rng.normal();
        fvals[r] = fv;
        for (int c = 0; c < m; ++c) {
            if (rng.u01() < 0.3) continue;  // inert slot
            double a = rng.normal();
            std::size_t e = r * m + static_cast<std::size_t>(c);
            ev.lo[e] = std::min(fv, fv + a);
            ev.hi[e] = std::max(fv, fv + a);
            ev.wt[e] = 0.5 * a * a;
        }
    }
    detail::IndicatorSup sup = detail::indicator_sweep(ev, fvals);

    // same grid, rebuilt independently: deduplicated empirical permilles
    std::vector<double> sorted = fvals;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> grid;
    for (int kk = 1; kk <= 999; ++kk) {
        std::size_t idx = std::min(n - 1, (static_cast<std::size_t>(kk) * n) / 1000);
        if (grid.empty() || sorted[idx] > grid.back()) grid.push_back(sorted[idx]);
    }
    double best = -1.0, best_x = 0.0;
    for (double x : grid) {
        double tot = 0.0;
        for (std::size_t e = 0; e < ev.wt.size(); ++e)
            if (ev.wt[e] != 0.0 && ev.lo[e] <= x && x < ev.hi[e]) tot += ev.wt[e];
        tot /= static_cast<double>(n);
        if (tot > best) {
            best = tot;
            best_x = x;
        }
    }
    REQUIRE(sup.value == Catch::Approx(best).margin(1e-10));
    REQUIRE(sup.x == best_x);
}

namespace {

void check_lemma_rows(const LemmaReport& rep) {
    REQUIRE(rep.rows.size() == 11);
    for (const auto& row : rep.rows) {
        INFO(row.name << " lhs=" << row.lhs << " rhs=" << row.rhs << " se=" << row.se);
        if (row.equality) {
            REQUIRE(std::fabs(row.residual()) <=
                    std::max(3.0 * row.se, 1e-9 * std::max(1.0, std::fabs(row.rhs))));
        } else {
            REQUIRE(row.lhs <= row.rhs + 3.0 * row.se + 1e-9);
        }
    }
}

}  // namespace

TEST_CASE("exact lemma suite certifies identities and inequalities") {
    DiscreteSpace space({0.9, 1.2, 0.4, 0.7});
    Rng rng(777);
    ChaosFunctional F;
    F.set_kernel(2, make_random_kernel(4, 2, rng));
    LemmaReport rep = lemma_suite(space, F, LemmaMode::Exact, 2000, 515151);
    REQUIRE(rep.mode == LemmaMode::Exact);
    REQUIRE(rep.q == 2);
    check_lemma_rows(rep);
    // equality rows are oracle-exact and carry no standard error
    REQUIRE(rep.row("carre_du_champ_variance_decomposition").se == 0.0);
    REQUIRE(rep.row("projection_residual_variance_forms").se == 0.0);
    REQUIRE(rep.row("indicator_supremum_bound").se > 0.0);

    DiscreteSpace space3({0.8, 1.1, 0.5});
    ChaosFunctional F3;
    F3.set_kernel(3, make_random_kernel(3, 3, rng, -0.6, 0.6));
    LemmaReport rep3 = lemma_suite(space3, F3, LemmaMode::Exact, 800, 626262);
    REQUIRE(rep3.q == 3);
    check_lemma_rows(rep3);
}

TEST_CASE("monte carlo lemma suite holds and matches the exact oracle") {
    DiscreteSpace space({0.9, 1.2, 0.4});
    Rng rng(4141);
    ChaosFunctional F;
    F.set_kernel(2, make_random_kernel(3, 2, rng));
    LemmaReport rep = lemma_suite(space, F, LemmaMode::MonteCarlo, 6400, 888);
    REQUIRE(rep.mode == LemmaMode::MonteCarlo);
    check_lemma_rows(rep);

    // cross-route agreement: independent sampling pass against the counting
    // oracle for every reusable ingredient
    CountPolynomial P = to_polynomial(space, F);
    double m2 = exact_moment(space, F, 2);
    double m4 = exact_moment(space, F, 4);
    CountPolynomial gam = gamma0_polynomial(space, P);
    double var_gq = exact_variance(space, gam) / 4.0;
    double d4 = exact_expectation(space, add_cost_fourth_polynomial(space, P));
    CountPolynomial shifted(space.cells());
    shifted.add(P, 2.0);
    shifted.add(gam, -0.5);
    double var_shift = exact_variance(space, shifted);

    Ingredients ing = estimate_ingredients(space, F, 20000, 999);
    REQUIRE(std::fabs(ing.m2.mean - m2) <= 4.0 * ing.m2.se);
    REQUIRE(std::fabs(ing.m4.mean - m4) <= 4.0 * ing.m4.se);
    REQUIRE(std::fabs(ing.gamma_var.var - var_gq) <= 5.0 * ing.gamma_var.se);
    REQUIRE(std::fabs(ing.d4_term.mean - d4) <= 4.0 * ing.d4_term.se);
    REQUIRE(std::fabs(ing.two_f_minus_gamma_var.var - var_shift) <=
            5.0 * ing.two_f_minus_gamma_var.se);
    REQUIRE(std::fabs(ing.d2_term.mean - 2.0 * m2) <= 4.0 * ing.d2_term.se);
}

TEST_CASE("lemma suite is thread invariant") {
    DiscreteSpace space({0.9, 1.2, 0.4});
    Rng rng(4242);
    ChaosFunctional F;
    F.set_kernel(2, make_random_kernel(3, 2, rng));
    LemmaReport a = lemma_suite(space, F, LemmaMode::MonteCarlo, 1600, 777, 1);
    LemmaReport b = lemma_suite(space, F, LemmaMode::MonteCarlo, 1600, 777, 8);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        REQUIRE(a.rows[i].lhs == b.rows[i].lhs);
        REQUIRE(a.rows[i].rhs == b.rows[i].rhs);
        REQUIRE(a.rows[i].se == b.rows[i].se);
    }
}

TEST_CASE("bound rows and reports serialize with stable fields") {
    BoundRow row{"demo_bound", 1.0, 0.1, 2.0, 0.2};
    REQUIRE(row.margin() == Catch::Approx(0.1).margin(1e-15));

    BoundReport rep;
    rep.functional = "demo";
    rep.ingredients.q = 2;
    rep.ingredients.n = 64;
    rep.rows = {row, BoundRow{"other", 0.5, 0.0, 0.4, 0.0}};
    std::string csv = rep.to_csv();
    REQUIRE(csv.rfind("functional,bound,lhs,lhs_se,rhs,rhs_se,margin\n", 0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 3);
    REQUIRE(csv.find("demo,demo_bound,1,0.1") != std::string::npos);

    nlohmann::json j = rep.to_json();
    REQUIRE(j.at("functional") == "demo");
    REQUIRE(j.at("rows").size() == 2);
    REQUIRE(j.at("rows")[1].at("margin").get<double>() ==
            Catch::Approx(-0.1).margin(1e-15));
}

TEST_CASE("estimator guards reject undersized and oversized requests") {
    DiscreteSpace space({0.5, 1.0, 1.5});
    Rng rng(11);
    ChaosFunctional F;
    F.set_kernel(1, make_random_kernel(3, 1, rng));
    REQUIRE_THROWS_AS(estimate_ingredients(space, F, 16, 1), std::invalid_argument);

    std::vector<double> many(11, 1.0);
    DiscreteSpace wide(many);
    ChaosFunctional G;
    G.set_kernel(1, make_random_kernel(11, 1, rng));
    REQUIRE_THROWS_AS(estimate_ingredients(wide, G, 2000000, 1), std::invalid_argument);

    // exact mode refuses instances beyond the polynomial degree cap
    DiscreteSpace tiny({0.7, 0.9});
    ChaosFunctional H;
    H.set_kernel(5, make_random_kernel(2, 5, rng));
    REQUIRE_THROWS_AS(lemma_suite(tiny, H, LemmaMode::Exact, 100, 1), std::invalid_argument);

    // monte carlo mode refuses kernel column buffers past the memory cap
    std::vector<double> masses60(60, 0.5);
    DiscreteSpace big(masses60);
    ChaosFunctional W;
    W.set_kernel(2, make_random_kernel(60, 2, rng));
    REQUIRE_THROWS_AS(lemma_suite(big, W, LemmaMode::MonteCarlo, 1024, 1),
                      std::invalid_argument);

    // the suite is defined for a single centered integral only
    ChaosFunctional mixed(0.5);
    mixed.set_kernel(2, make_random_kernel(3, 2, rng));
    REQUIRE_THROWS_AS(lemma_suite(space, mixed, LemmaMode::Exact, 100, 1),
                      std::invalid_argument);
}
