#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "chaoskit/kernels.hpp"
#include "chaoskit/space.hpp"

using namespace chaoskit;

namespace {

// every tuple in [cells]^order, for brute-force comparisons
std::vector<std::vector<int>> all_tuples(int cells, int order) {
    std::vector<std::vector<int>> out;
    std::vector<int> t(static_cast<std::size_t>(order), 0);
    for (;;) {
        out.push_back(t);
        int k = order - 1;
        while (k >= 0 && ++t[static_cast<std::size_t>(k)] == cells) {
            t[static_cast<std::size_t>(k)] = 0;
            --k;
        }
        if (k < 0) break;
    }
    return out;
}

}  // namespace

TEST_CASE("multiset indexer is a bijection onto its range") {
    for (int cells : {1, 3, 5}) {
        for (int order : {0, 1, 2, 4}) {
            MultisetIndexer idx(cells, order);
            REQUIRE(idx.size() == binom_u64(cells + order - 1, order));
            std::size_t seen = 0;
            idx.for_each([&](const std::vector<int>& tuple, std::size_t r) {
                REQUIRE(r == seen);
                REQUIRE(std::is_sorted(tuple.begin(), tuple.end()));
                REQUIRE(idx.rank(tuple) == r);
                ++seen;
            });
            REQUIRE(seen == idx.size());
        }
    }
}

TEST_CASE("distinct permutation counts") {
    REQUIRE(distinct_permutations({0, 0, 1}) == 3.0);
    REQUIRE(distinct_permutations({0, 1, 2}) == 6.0);
    REQUIRE(distinct_permutations({2, 2, 2}) == 1.0);
    REQUIRE(distinct_permutations({}) == 1.0);
}

TEST_CASE("symmetric storage reads any argument ordering") {
    SymKernel k(3, 2);
    k.set({2, 0}, 1.5);
    REQUIRE(k.value({0, 2}) == 1.5);
    REQUIRE(k.value({2, 0}) == 1.5);
    REQUIRE(k.value({1, 1}) == 0.0);
    k.scale(2.0);
    REQUIRE(k.value({0, 2}) == 3.0);
    SymKernel other(3, 2);
    other.set({0, 2}, 1.0);
    k.axpy(-3.0, other);
    REQUIRE(k.value({0, 2}) == 0.0);
}

TEST_CASE("symmetrization averages over all argument orders") {
    RawTensor raw(2, 2);
    raw.at({0, 1}) = 4.0;
    raw.at({1, 0}) = 2.0;
    raw.at({0, 0}) = 7.0;
    SymKernel s = symmetrize(raw);
    REQUIRE(s.value({0, 1}) == 3.0);
    REQUIRE(s.value({0, 0}) == 7.0);
    REQUIRE(s.value({1, 1}) == 0.0);
}

TEST_CASE("symmetrized tensor product agrees with the raw-product route") {
    Rng rng(5);
    SymKernel f = make_random_kernel(3, 2, rng);
    SymKernel g = make_random_kernel(3, 1, rng);
    SymKernel direct = sym_tensor_product(f, g);
    SymKernel via_raw = symmetrize(tensor_product(f, g));
    REQUIRE(max_abs_diff(direct, via_raw) <= 1e-14);
    REQUIRE(direct.order() == 3);
}

TEST_CASE("inner product and norm match the brute-force tuple sum") {
    DiscreteSpace space({0.7, 1.3});
    Rng rng(11);
    SymKernel f = make_random_kernel(2, 2, rng);
    SymKernel g = make_random_kernel(2, 2, rng);
    double brute = 0.0;
    for (const auto& t : all_tuples(2, 2)) {
        double mass = 1.0;
        for (int c : t) mass *= space.mass(c);
        brute += mass * f.value(t) * g.value(t);
    }
    REQUIRE(inner(space, f, g) == Catch::Approx(brute).epsilon(1e-13));
    REQUIRE(l2_norm(space, f) == Catch::Approx(std::sqrt(inner(space, f, f))).epsilon(1e-13));
}

TEST_CASE("contraction integrates out exactly one argument") {
    DiscreteSpace space({0.7, 1.3, 0.0});
    Rng rng(13);
    SymKernel f = make_random_kernel(3, 2, rng);
    SymKernel c = contract(space, f);
    REQUIRE(c.order() == 1);
    for (int x = 0; x < 3; ++x) {
        double brute = 0.0;
        for (int y = 0; y < 3; ++y) brute += space.mass(y) * f.value({x, y});
        REQUIRE(c.value({x}) == Catch::Approx(brute).margin(1e-14));
    }
}

TEST_CASE("kernel JSON serialization is exact and symmetrizes raw entries") {
    Rng rng(17);
    for (int order : {1, 2, 3}) {
        SymKernel f = make_random_kernel(3, order, rng);
        SymKernel back = kernel_from_json(3, kernel_to_json(f));
        REQUIRE(max_abs_diff(f, back) == 0.0);
    }
    // asymmetric raw entries land on their multiset average
    nlohmann::json e1, e2;
    e1["idx"] = std::vector<int>{0, 1};
    e1["val"] = 4.0;
    e2["idx"] = std::vector<int>{1, 0};
    e2["val"] = 2.0;
    nlohmann::json j;
    j["order"] = 2;
    j["entries"] = nlohmann::json::array({e1, e2});
    SymKernel s = kernel_from_json(2, j);
    REQUIRE(s.value({0, 1}) == 3.0);

    nlohmann::json d1 = e1, d2 = e1;
    d1["idx"] = std::vector<int>{0};
    d2["idx"] = std::vector<int>{0};
    nlohmann::json dup;
    dup["order"] = 1;
    dup["entries"] = nlohmann::json::array({d1, d2});
    REQUIRE_THROWS_AS(kernel_from_json(2, dup), std::invalid_argument);
}
