#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "chaoskit/chaos.hpp"
#include "chaoskit/malliavin.hpp"
#include "chaoskit/oracle.hpp"

using namespace chaoskit;

namespace {

DiscreteSpace test_space() { return DiscreteSpace({0.9, 1.2, 0.4}); }

}  // namespace

TEST_CASE("polynomial arithmetic on counts") {
    CountPolynomial a = CountPolynomial::monomial(2, 0, 1, 2.0);  // 2 n0
    CountPolynomial b = CountPolynomial::monomial(2, 1, 1, 1.0);  // n1
    CountPolynomial c = a.multiplied(b);
    PointConfig chi(std::vector<std::int64_t>{3, 5});
    REQUIRE(c.evaluate(chi) == 30.0);
    c.add(CountPolynomial::constant(2, 4.0));
    REQUIRE(c.evaluate(chi) == 34.0);
    REQUIRE(c.degree() == 2);
    CountPolynomial shifted = c.shifted({1, 2});
    PointConfig base(std::vector<std::int64_t>{2, 3});
    REQUIRE(shifted.evaluate(base) == 34.0);
}

TEST_CASE("poisson moments of counts match the exponential-polynomial values") {
    // E N = mu, E N^2 = mu + mu^2, E N^3 = mu + 3 mu^2 + mu^3
    REQUIRE(touchard(1, 2.0) == Catch::Approx(2.0).epsilon(1e-14));
    REQUIRE(touchard(2, 2.0) == Catch::Approx(6.0).epsilon(1e-14));
    REQUIRE(touchard(3, 2.0) == Catch::Approx(22.0).epsilon(1e-14));
    REQUIRE(touchard(0, 5.0) == 1.0);

    // falling factorial expectations collapse to powers of the mass
    DiscreteSpace space({1.7});
    for (int k : {1, 2, 3, 4}) {
        CountPolynomial p = falling_factorial_poly(1, 0, k);
        REQUIRE(exact_expectation(space, p) ==
                Catch::Approx(std::pow(1.7, k)).epsilon(1e-12));
    }
}

TEST_CASE("second moment of a pure integral is the weighted squared norm") {
    DiscreteSpace space = test_space();
    Rng rng(7);
    for (int q : {1, 2, 3}) {
        SymKernel k = make_random_kernel(3, q, rng);
        ChaosFunctional f;
        f.set_kernel(q, k);
        double lhs = exact_moment(space, f, 2);
        double rhs = factorial(q) * inner(space, k, k);
        REQUIRE(std::fabs(lhs - rhs) <= 1e-9 * std::max(1.0, std::fabs(rhs)));
    }
}

TEST_CASE("integrals of different orders are orthogonal") {
    DiscreteSpace space = test_space();
    Rng rng(11);
    for (int p = 1; p <= 3; ++p)
        for (int q = 1; q <= 3; ++q) {
            if (p == q) continue;
            ChaosFunctional f, g;
            f.set_kernel(p, make_random_kernel(3, p, rng));
            g.set_kernel(q, make_random_kernel(3, q, rng));
            REQUIRE(std::fabs(exact_product_expectation(space, f, g)) <= 1e-9);
        }
}

TEST_CASE("fourth moment of a first-order integral has its closed form") {
    DiscreteSpace space = test_space();
    Rng rng(13);
    SymKernel k = make_random_kernel(3, 1, rng);
    ChaosFunctional f;
    f.set_kernel(1, k);
    double norm2 = inner(space, k, k);
    double fourth = 0.0;
    for (int c = 0; c < 3; ++c) fourth += space.mass(c) * std::pow(k.value({c}), 4);
    double expect = 3.0 * norm2 * norm2 + fourth;
    REQUIRE(exact_moment(space, f, 4) ==
            Catch::Approx(expect).epsilon(1e-9));
}

TEST_CASE("top kernel of a product of integrals is the symmetrized tensor product") {
    DiscreteSpace space({0.9, 1.2, 0.4, 0.7, 1.1});
    Rng rng(17);
    for (auto [p, q] : std::vector<std::pair<int, int>>{{1, 1}, {1, 2}, {2, 2}}) {
        SymKernel f = make_random_kernel(5, p, rng);
        SymKernel g = make_random_kernel(5, q, rng);
        ProductTopKernelResult r = product_top_kernel_check(space, f, g);
        REQUIRE(r.max_abs_diff <= 1e-9);
    }
}

TEST_CASE("kernel extraction through the oracle is exact") {
    DiscreteSpace space = test_space();
    Rng rng(19);
    ChaosFunctional f(0.6);
    for (int p = 1; p <= 3; ++p) f.set_kernel(p, make_random_kernel(3, p, rng));
    for (int p = 1; p <= 3; ++p) {
        SymKernel got = exact_extract_kernel(space, f, p);
        REQUIRE(max_abs_diff(got, *f.kernel(p)) <= 1e-10);
    }
}

TEST_CASE("oracle variance and projection variances split a squared integral") {
    DiscreteSpace space = test_space();
    Rng rng(23);
    SymKernel k = make_random_kernel(3, 2, rng);
    ChaosFunctional f;
    f.set_kernel(2, k);
    CountPolynomial P = to_polynomial(space, f);
    REQUIRE(exact_variance(space, P) ==
            Catch::Approx(factorial(2) * inner(space, k, k)).epsilon(1e-10));
    // projections of F itself: everything sits at order two
    REQUIRE(exact_projection_variance(space, P, 2) ==
            Catch::Approx(exact_variance(space, P)).epsilon(1e-10));
    REQUIRE(std::fabs(exact_projection_variance(space, P, 1)) <= 1e-10);
    // projection variances of F^2 add up to its variance
    CountPolynomial P2 = P.multiplied(P);
    double total = 0.0;
    for (int p = 1; p <= 4; ++p) total += exact_projection_variance(space, P2, p);
    REQUIRE(total == Catch::Approx(exact_variance(space, P2)).epsilon(1e-9));
}

TEST_CASE("carre du champ polynomial reproduces the pathwise operator") {
    DiscreteSpace space = test_space();
    Rng rng(29);
    ChaosFunctional f(0.0);
    f.set_kernel(2, make_random_kernel(3, 2, rng));
    CountPolynomial P = to_polynomial(space, f);
    CountPolynomial G = gamma0_polynomial(space, P);
    ChaosEvaluator ev(space, f);
    for (int rep = 0; rep < 200; ++rep) {
        PointConfig chi = sample_poisson(space, rng);
        REQUIRE(G.evaluate(chi) ==
                Catch::Approx(gamma0(space, ev, chi)).epsilon(1e-9).margin(1e-9));
    }
    // mean of the carre du champ is the order times the second moment
    REQUIRE(exact_expectation(space, G) ==
            Catch::Approx(2.0 * exact_moment(space, f, 2)).epsilon(1e-10));
}

TEST_CASE("integrated fourth cost polynomial matches a direct Monte Carlo pass") {
    DiscreteSpace space = test_space();
    Rng rng(31);
    ChaosFunctional f(0.0);
    f.set_kernel(2, make_random_kernel(3, 2, rng));
    CountPolynomial P = to_polynomial(space, f);
    double truth = exact_expectation(space, add_cost_fourth_polynomial(space, P));
    ChaosEvaluator ev(space, f);
    const std::size_t n = 60000;
    std::vector<double> slot(n);
    parallel_for(n, 2, [&](std::size_t r) {
        Rng rr(seed_stream(888, r));
        PointConfig chi = sample_poisson(space, rr);
        double f0 = ev(chi);
        double acc = 0.0;
        for (int z = 0; z < 3; ++z) {
            double a = add_one_cost(ev, chi, z, f0);
            acc += space.mass(z) * a * a * a * a;
        }
        slot[r] = acc;
    });
    MeanSe m = mean_se(slot);
    REQUIRE(std::fabs(m.mean - truth) <= 3.0 * m.se);
}

TEST_CASE("term budget overflow raises instead of silently truncating") {
    // product of (1 + n_c) over all cells has 2^cells terms
    auto build = [](int cells) {
        CountPolynomial big = CountPolynomial::constant(cells, 1.0);
        for (int c = 0; c < cells; ++c) {
            CountPolynomial factor = CountPolynomial::constant(cells, 1.0);
            factor.add(CountPolynomial::monomial(cells, c, 1, 1.0));
            big = big.multiplied(factor);
        }
        return big;
    };
    REQUIRE(build(16).term_count() == (1u << 16));
    REQUIRE_THROWS_AS(build(24), std::runtime_error);
}
