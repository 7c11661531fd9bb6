#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "chaoskit/space.hpp"

using namespace chaoskit;

TEST_CASE("space and configuration validation") {
    REQUIRE_THROWS_AS(DiscreteSpace(std::vector<double>{}), std::invalid_argument);
    REQUIRE_THROWS_AS(DiscreteSpace({1.0, -0.5}), std::invalid_argument);
    DiscreteSpace s({0.5, 0.0, 2.5});
    REQUIRE(s.cells() == 3);
    REQUIRE(s.mass(1) == 0.0);
    REQUIRE(s.total_mass() == 3.0);

    PointConfig chi(3);
    chi.apply_delta(0, 2);
    REQUIRE(chi.count(0) == 2);
    REQUIRE(chi.total_points() == 2);
    REQUIRE_THROWS_AS(chi.apply_delta(1, -1), std::invalid_argument);
    PointConfig plus = add_point(chi, 2);
    REQUIRE(plus.count(2) == 1);
    REQUIRE(chi.count(2) == 0);
    REQUIRE(remove_point(plus, 2) == chi);
}

TEST_CASE("space JSON round trip") {
    DiscreteSpace s({0.25, 1.75});
    DiscreteSpace back = DiscreteSpace::from_json(s.to_json());
    REQUIRE(back.masses() == s.masses());
    REQUIRE_THROWS_AS(DiscreteSpace::from_json(nlohmann::json{{"cells", 3}}),
                      std::invalid_argument);
}

TEST_CASE("compensated evaluation subtracts the intensity") {
    DiscreteSpace s({1.5, 0.5});
    PointConfig chi(std::vector<std::int64_t>{3, 0});
    CompensatedEval d(s, chi);
    REQUIRE(d[0] == 1.5);
    REQUIRE(d[1] == -0.5);
}

TEST_CASE("poisson configurations have matching per-cell mean and variance") {
    DiscreteSpace s({0.4, 3.0});
    const std::size_t n = 200000;
    std::vector<double> c0(n), c1(n);
    parallel_for(n, 2, [&](std::size_t r) {
        Rng rng(seed_stream(21, r));
        PointConfig chi = sample_poisson(s, rng);
        c0[r] = static_cast<double>(chi.count(0));
        c1[r] = static_cast<double>(chi.count(1));
    });
    for (int cell = 0; cell < 2; ++cell) {
        const std::vector<double>& xs = cell == 0 ? c0 : c1;
        MeanSe m = mean_se(xs);
        VarSe v = variance_se(xs);
        REQUIRE(std::fabs(m.mean - s.mass(cell)) <= 4.0 * m.se);
        REQUIRE(std::fabs(v.var - s.mass(cell)) <= 4.0 * v.se);
    }
}

TEST_CASE("add-one-point identity holds with closed-form sides") {
    // h(chi, z) = chi(B) on B: both sides equal mu(B) + mu(B)^2; 6 at mass 2
    DiscreteSpace s2({2.0});
    auto h_linear = [](const PointConfig& chi, int) { return static_cast<double>(chi.count(0)); };
    MeckeResult r = mecke_check(s2, h_linear, 100000, 5150, 2);
    REQUIRE(std::fabs(r.lhs.mean - 6.0) <= 3.0 * r.lhs.se);
    REQUIRE(std::fabs(r.rhs.mean - 6.0) <= 3.0 * r.rhs.se);
    REQUIRE(std::fabs(r.lhs.mean - r.rhs.mean) <=
            3.0 * std::sqrt(r.lhs.se * r.lhs.se + r.rhs.se * r.rhs.se));

    // h(chi, z) = chi(B)^2 on B at unit mass: both sides equal E[(N+1)^2] = 5
    DiscreteSpace s1({1.0});
    auto h_square = [](const PointConfig& chi, int) {
        double n = static_cast<double>(chi.count(0));
        return n * n;
    };
    MeckeResult r2 = mecke_check(s1, h_square, 100000, 5151, 2);
    REQUIRE(std::fabs(r2.lhs.mean - 5.0) <= 3.0 * r2.lhs.se);
    REQUIRE(std::fabs(r2.rhs.mean - 5.0) <= 3.0 * r2.rhs.se);
}

TEST_CASE("add-one-point identity across a family of polynomial functionals") {
    DiscreteSpace s({0.8, 1.7, 0.3});
    for (int variant = 0; variant < 6; ++variant) {
        auto h = [variant](const PointConfig& chi, int z) {
            double a = static_cast<double>(chi.count(0));
            double b = static_cast<double>(chi.count(1));
            double c = static_cast<double>(chi.count(2));
            double base = 0.0;
            switch (variant % 3) {
                case 0: base = a + 0.5 * b * c; break;
                case 1: base = b * b - a; break;
                default: base = a * b + c * c * 0.25; break;
            }
            return base * (1.0 + 0.3 * static_cast<double>(z));
        };
        MeckeResult r = mecke_check(s, h, 60000, 777 + static_cast<std::uint64_t>(variant), 2);
        double se = std::sqrt(r.lhs.se * r.lhs.se + r.rhs.se * r.rhs.se);
        REQUIRE(std::fabs(r.lhs.mean - r.rhs.mean) <= 3.0 * se);
    }
}
