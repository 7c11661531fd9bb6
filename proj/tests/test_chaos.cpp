#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "chaoskit/chaos.hpp"
#include "chaoskit/oracle.hpp"

using namespace chaoskit;

namespace {

DiscreteSpace test_space() { return DiscreteSpace({0.6, 1.4, 0.9}); }

ChaosFunctional mixed_functional(std::uint64_t seed, int top) {
    Rng rng(seed);
    ChaosFunctional f(0.4);
    for (int p = 1; p <= top; ++p) f.set_kernel(p, make_random_kernel(3, p, rng));
    return f;
}

}  // namespace

TEST_CASE("functional accessors and scaling") {
    ChaosFunctional f = mixed_functional(3, 2);
    REQUIRE(f.top_order() == 2);
    REQUIRE(f.cells() == 3);
    double k11 = f.kernel(1)->value({1});
    f.scale(-2.0);
    REQUIRE(f.constant() == -0.8);
    REQUIRE(f.kernel(1)->value({1}) == -2.0 * k11);
    REQUIRE(f.kernel(5) == nullptr);
}

TEST_CASE("functional JSON round trip") {
    ChaosFunctional f = mixed_functional(29, 3);
    ChaosFunctional back = ChaosFunctional::from_json(3, f.to_json());
    REQUIRE(back.constant() == f.constant());
    for (int p = 1; p <= 3; ++p)
        REQUIRE(max_abs_diff(*back.kernel(p), *f.kernel(p)) == 0.0);
}

TEST_CASE("pathwise evaluation agrees with the counting-polynomial route") {
    DiscreteSpace space = test_space();
    ChaosFunctional f = mixed_functional(7, 3);
    ChaosEvaluator ev(space, f);
    CountPolynomial poly = to_polynomial(space, f);
    Rng rng(123);
    for (int rep = 0; rep < 400; ++rep) {
        PointConfig chi = sample_poisson(space, rng);
        double a = ev(chi);
        double b = poly.evaluate(chi);
        REQUIRE(a == Catch::Approx(b).epsilon(1e-11).margin(1e-11));
    }
}

TEST_CASE("first-order integral is the compensated sum") {
    DiscreteSpace space = test_space();
    Rng rng(31);
    SymKernel k = make_random_kernel(3, 1, rng);
    ChaosFunctional f = single_integral(k);
    ChaosEvaluator ev(space, f);
    for (int rep = 0; rep < 100; ++rep) {
        PointConfig chi = sample_poisson(space, rng);
        CompensatedEval d(space, chi);
        double direct = 0.0;
        for (int c = 0; c < 3; ++c) direct += k.value({c}) * d[c];
        REQUIRE(ev(chi) == Catch::Approx(direct).margin(1e-12));
    }
}

TEST_CASE("moment estimation is unbiased against oracle moments") {
    DiscreteSpace space = test_space();
    ChaosFunctional f = mixed_functional(41, 2);
    auto mc = estimate_moments(space, f, {1, 2, 3, 4}, 40000, 99, 2);
    for (int k : {1, 2, 3, 4}) {
        double truth = exact_moment(space, f, k);
        REQUIRE(std::fabs(mc.at(k).mean - truth) <= 4.0 * mc.at(k).se);
    }
}

TEST_CASE("moment estimation is bit-identical across thread counts") {
    DiscreteSpace space = test_space();
    ChaosFunctional f = mixed_functional(43, 2);
    auto one = estimate_moments(space, f, {2, 4}, 5000, 7, 1);
    auto many = estimate_moments(space, f, {2, 4}, 5000, 7, 8);
    for (int k : {2, 4}) {
        REQUIRE(one.at(k).mean == many.at(k).mean);
        REQUIRE(one.at(k).se == many.at(k).se);
    }
}

TEST_CASE("kernel extraction recovers a planted second-order kernel") {
    DiscreteSpace space = test_space();
    ChaosFunctional f = mixed_functional(47, 2);
    KernelEstimate est = extract_kernel(space, f, 2, 30000, 424242, 2);
    const SymKernel& truth = *f.kernel(2);
    est.estimate.indexer().for_each([&](const std::vector<int>&, std::size_t r) {
        double diff = std::fabs(est.estimate.at_rank(r) - truth.at_rank(r));
        // top-order entries are deterministic (constant second difference), so
        // their se collapses to float jitter; allow a roundoff floor
        REQUIRE(diff <= 4.0 * est.se.at_rank(r) + 1e-12);
    });
}

TEST_CASE("iterated difference of a first-order integral is its kernel") {
    DiscreteSpace space = test_space();
    Rng rng(53);
    SymKernel k = make_random_kernel(3, 1, rng);
    ChaosEvaluator ev(space, single_integral(k));
    PointConfig chi = sample_poisson(space, rng);
    for (int z = 0; z < 3; ++z) {
        double cost = ev(add_point(chi, z)) - ev(chi);
        REQUIRE(cost == Catch::Approx(k.value({z})).margin(1e-12));
    }
}

TEST_CASE("perturbation table blocks are contiguous and complete") {
    detail::PerturbationTable table(3, 2);
    REQUIRE(table.offset[0] == 0);
    REQUIRE(table.offset[1] == 1);   // one empty tuple
    REQUIRE(table.offset[2] == 4);   // three singletons
    REQUIRE(table.offset[3] == 10);  // six pairs with repetition
    REQUIRE(table.tuples.size() == 10);
}
