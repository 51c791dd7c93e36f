#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "ridnet/graph_conv.hpp"

using namespace ridnet;
using oracle::random_tensor;

namespace {

GraphConfig graph(std::size_t window, std::size_t k) {
    GraphConfig c;
    c.window = window;
    c.k = k;
    return c;
}

/// Single-centre edge set over explicit neighbours of a [C,H,W] map.
EdgeSet one_centre(const Tensor<double>& map, std::size_t centre, const std::vector<std::uint32_t>& nb) {
    EdgeSet e;
    e.neighbors = nb;
    e.offsets = {0, nb.size()};
    const auto c = oracle::feature(map, 0, centre);
    for (auto j : nb) e.distances.push_back(oracle::distance(c, oracle::feature(map, 0, j)));
    e.weights = edge_weights<double>(e.distances);
    return e;
}

}  // namespace

TEST_CASE("feature distance") {
    const std::vector<double> a{1, 0, 0, 0}, z{0, 0, 0, 0};
    CHECK(feature_distance<double>(a, a) == 0.0);
    CHECK(feature_distance<double>(a, z) == 0.5);
    rng::CounterRng g(1, rng::test_data);
    for (int i = 0; i < 20; ++i) {
        std::vector<double> u(5), v(5);
        for (auto& x : u) x = g.uniform(-1, 1);
        for (auto& x : v) x = g.uniform(-1, 1);
        CHECK(std::abs(feature_distance<double>(u, v) - oracle::distance(u, v)) < 1e-12);
    }
    CHECK_THROWS_AS(feature_distance<double>(std::vector<double>{1, 2}, std::vector<double>{1}), std::invalid_argument);
}

TEST_CASE("knn selection equals an exhaustive sort on 200 random maps") {
    std::size_t compared = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        rng::CounterRng g(s, rng::test_data);
        const std::size_t C = 1 + g.below(4), H = 6 + g.below(9), W = 6 + g.below(9);
        const std::size_t window = 5 + 2 * g.below(3), k = 2 + g.below(11);
        const auto map = random_tensor({C, H, W}, g);
        const auto cfg = graph(window, k);
        const auto idx = plane_edges(map, cfg);
        REQUIRE(idx.centers() == H * W);
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < W; ++c) {
                const auto want = oracle::knn(map, r, c, window, k);
                const std::size_t i = r * W + c;
                const std::vector<std::uint32_t> got(idx.neighbors.begin() + static_cast<std::ptrdiff_t>(idx.offsets[i]),
                                                     idx.neighbors.begin() + static_cast<std::ptrdiff_t>(idx.offsets[i + 1]));
                CHECK(got == want);
                CHECK(knn_neighbors(map, r, c, cfg) == want);
                ++compared;
            }
    }
    CHECK(compared > 10000);
}

TEST_CASE("knn neighbours stay in the window and skip the adjacent ring") {
    rng::CounterRng g(7, rng::test_data);
    const auto map = random_tensor({3, 12, 12}, g);
    const auto idx = plane_edges(map, graph(9, 8));
    for (std::size_t i = 0; i < idx.centers(); ++i) {
        CHECK(idx.degree(i) == 7);
        for (std::size_t e = idx.offsets[i]; e < idx.offsets[i + 1]; ++e) {
            const long dr = static_cast<long>(idx.neighbors[e] / 12) - static_cast<long>(i / 12);
            const long dc = static_cast<long>(idx.neighbors[e] % 12) - static_cast<long>(i % 12);
            CHECK(std::max(std::abs(dr), std::abs(dc)) >= 2);
            CHECK(std::max(std::abs(dr), std::abs(dc)) <= 4);
        }
    }
}

TEST_CASE("knn: identical features win, constant maps fall back to flat order") {
    rng::CounterRng g(8, rng::test_data);
    auto map = random_tensor({2, 9, 9}, g);
    // pixel (1,6) gets the features of the centre (4,4)
    for (std::size_t c = 0; c < 2; ++c) map[c * 81 + 1 * 9 + 6] = map[c * 81 + 4 * 9 + 4];
    const auto nb = knn_neighbors(map, 4, 4, graph(9, 2));
    REQUIRE(nb.size() == 1);
    CHECK(nb[0] == 1 * 9 + 6);

    const Tensor<double> flat(Shape{1, 9, 9}, 0.5);
    const auto f = knn_neighbors(flat, 4, 4, graph(5, 4));
    CHECK(f == std::vector<std::uint32_t>{2 * 9 + 2, 2 * 9 + 3, 2 * 9 + 4});
}

TEST_CASE("knn records the deficit of a clipped window") {
    rng::CounterRng g(9, rng::test_data);
    const auto map = random_tensor({1, 5, 5}, g);
    std::size_t deficit = 0;
    const auto nb = knn_neighbors(map, 0, 0, graph(5, 8), &deficit);
    CHECK(nb.size() == 5);
    CHECK(deficit == 2);
}

TEST_CASE("edge weights") {
    const auto u = edge_weights<double>(std::vector<double>{0.3, 0.3, 0.3, 0.3});
    for (double w : u) CHECK(w == doctest::Approx(0.25).epsilon(1e-15));
    const auto w = edge_weights<double>(std::vector<double>{0.0, std::log(2.0)});
    CHECK(std::abs(w[0] - 2.0 / 3.0) < 1e-15);
    CHECK(std::abs(w[1] - 1.0 / 3.0) < 1e-15);
    CHECK_THROWS_AS(edge_weights<double>(std::vector<double>{}), std::invalid_argument);
    // large distances underflow without max-subtraction
    const auto big = edge_weights<double>(std::vector<double>{1000.0, 1001.0});
    CHECK(std::abs(big[0] + big[1] - 1.0) < 1e-12);
}

TEST_CASE("edge weights are invariant to shifting every distance") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        rng::CounterRng g(s, rng::test_data);
        std::vector<double> e(1 + g.below(12));
        for (auto& x : e) x = g.uniform(0, 5);
        const double c = g.uniform(0, 10);
        auto shifted = e;
        for (auto& x : shifted) x += c;
        const auto a = edge_weights<double>(e), b = edge_weights<double>(shifted);
        double sum = 0;
        for (std::size_t j = 0; j < e.size(); ++j) {
            CHECK(std::abs(a[j] - b[j]) < 1e-12);
            sum += a[j];
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("ecc aggregation: identity network averages, one neighbour is a single term") {
    rng::CounterRng g(11, rng::test_data);
    const auto map = random_tensor({3, 8, 8}, g);
    const auto id = EccParams<double>::identity(3, ThetaMode::full);
    const auto e = one_centre(map, 27, {1, 5, 40, 63});
    const auto s = ecc_aggregate(e, 0, map, id);
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0;
        for (auto j : e.neighbors) mean += map[c * 64 + j] / 4.0;
        CHECK(std::abs(s[c] - mean) < 1e-14);
    }
    const auto p = EccParams<double>::random(3, ThetaMode::full, 5, g);
    const auto single = one_centre(map, 27, {40});
    const auto s1 = ecc_aggregate(single, 0, map, p);
    const auto theta = oracle::theta(p, 1.0);
    for (std::size_t r = 0; r < 3; ++r) {
        double want = p.bias[r];
        for (std::size_t c = 0; c < 3; ++c) want += theta[r * 3 + c] * map[c * 64 + 40];
        CHECK(std::abs(s1[r] - want) < 1e-14);
    }
}

TEST_CASE("ecc aggregation matches the per-edge matrix-vector loop") {
    for (std::uint64_t s = 0; s < 40; ++s) {
        rng::CounterRng g(s, rng::test_data);
        const std::size_t C = 1 + g.below(5);
        const auto mode = s % 2 ? ThetaMode::diagonal : ThetaMode::full;
        const auto map = random_tensor({C, 7, 7}, g);
        const auto p = EccParams<double>::random(C, mode, 1 + g.below(8), g);
        std::vector<std::uint32_t> nb;
        for (std::size_t j = 0, n = 1 + g.below(10); j < n; ++j) nb.push_back(static_cast<std::uint32_t>(g.below(49)));
        const auto e = one_centre(map, 24, nb);
        std::vector<std::vector<double>> v;
        for (auto j : nb) v.push_back(oracle::feature(map, 0, j));
        const auto want = oracle::aggregate(v, e.weights, p);
        const auto got = ecc_aggregate(e, 0, map, p);
        for (std::size_t c = 0; c < C; ++c) CHECK(std::abs(got[c] - want[c]) < 1e-10);
    }
}

TEST_CASE("ecc aggregation is invariant to neighbour order") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        rng::CounterRng g(s + 500, rng::test_data);
        const std::size_t C = 1 + g.below(4);
        const auto map = random_tensor({C, 6, 6}, g);
        const auto p = EccParams<double>::random(C, s % 2 ? ThetaMode::diagonal : ThetaMode::full, 4, g);
        std::vector<std::uint32_t> nb;
        for (std::size_t j = 0, n = 2 + g.below(8); j < n; ++j) nb.push_back(static_cast<std::uint32_t>(g.below(36)));
        const auto e = one_centre(map, 14, nb);
        // Fisher-Yates with the counter generator, carrying weights along.
        std::vector<std::size_t> perm(nb.size());
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[g.below(i)]);
        EdgeSet q = e;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            q.neighbors[i] = e.neighbors[perm[i]];
            q.distances[i] = e.distances[perm[i]];
            q.weights[i] = e.weights[perm[i]];
        }
        const auto a = ecc_aggregate(e, 0, map, p), b = ecc_aggregate(q, 0, map, p);
        for (std::size_t c = 0; c < C; ++c) CHECK(std::abs(a[c] - b[c]) < 1e-12);
    }
}

TEST_CASE("plane module matches the monolithic reference on 16x16 maps") {
    for (auto mode : {ThetaMode::full, ThetaMode::diagonal}) {
        for (std::uint64_t s = 0; s < 3; ++s) {
            rng::CounterRng g(s + 40, rng::test_data);
            const auto map = random_tensor({4, 16, 16}, g);
            const auto p = EccParams<double>::random(4, mode, 6, g);
            EdgeSet inspect;
            const auto got = plane_gcn_forward(map, graph(9, 8), p, &inspect);
            CHECK(oracle::max_abs_diff(got, oracle::plane_forward(map, 9, 8, p)) < 1e-10);
            for (std::size_t i = 0; i < inspect.centers(); ++i) {
                double sum = 0;
                for (std::size_t e = inspect.offsets[i]; e < inspect.offsets[i + 1]; ++e) sum += inspect.weights[e];
                CHECK(std::abs(sum - 1.0) < 1e-6);
            }
        }
    }
}

TEST_CASE("plane module: constant input and identity network give the input back") {
    const Tensor<double> flat(Shape{3, 10, 10}, -0.25);
    const auto out = plane_gcn_forward(flat, graph(9, 8), EccParams<double>::identity(3, ThetaMode::full));
    CHECK(out.shape() == flat.shape());
    CHECK(oracle::max_abs_diff(out, flat) < 1e-15);
}

TEST_CASE("plane module output at a pixel ignores pixels outside its window") {
    rng::CounterRng g(55, rng::test_data);
    auto map = random_tensor({2, 14, 14}, g);
    const auto p = EccParams<double>::random(2, ThetaMode::full, 4, g);
    const auto before = plane_gcn_forward(map, graph(5, 6), p);
    // (2,2) has its window in rows/cols 0..4; perturb (10,11).
    for (std::size_t c = 0; c < 2; ++c) map[c * 196 + 10 * 14 + 11] += 3.0;
    const auto after = plane_gcn_forward(map, graph(5, 6), p);
    for (std::size_t c = 0; c < 2; ++c) CHECK(before[c * 196 + 2 * 14 + 2] == after[c * 196 + 2 * 14 + 2]);
    double changed = 0;
    for (std::size_t c = 0; c < 2; ++c) changed += std::abs(before[c * 196 + 10 * 14 + 11] - after[c * 196 + 10 * 14 + 11]);
    CHECK(changed > 0);
}

TEST_CASE("depth module matches the per-pixel reference") {
    for (auto mode : {ThetaMode::full, ThetaMode::diagonal}) {
        rng::CounterRng g(mode == ThetaMode::full ? 60 : 61, rng::test_data);
        const auto stack = random_tensor({3, 3, 7, 9}, g);
        const auto p = EccParams<double>::random(3, mode, 5, g);
        EdgeSet inspect;
        const auto got = depth_gcn_forward(stack, graph(9, 8), p, &inspect);
        CHECK(got.shape() == Shape{3, 7, 9});
        CHECK(oracle::max_abs_diff(got, oracle::depth_forward(stack, p)) < 1e-10);
        for (std::size_t i = 0; i < inspect.centers(); ++i) CHECK(inspect.degree(i) == 2);
    }
}

TEST_CASE("depth module: identical slices and equidistant neighbours") {
    rng::CounterRng g(62, rng::test_data);
    const auto slice = random_tensor({2, 1, 5, 5}, g);
    Tensor<double> stack(Shape{2, 3, 5, 5});
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t p = 0; p < 25; ++p) stack[(c * 3 + s) * 25 + p] = slice[c * 25 + p];
    const auto out = depth_gcn_forward(stack, graph(9, 8), EccParams<double>::identity(2, ThetaMode::full));
    CHECK(oracle::max_abs_diff(out, slice.reshaped({2, 5, 5})) < 1e-15);

    // slices centre+d and centre-d
    auto sym = stack.clone();
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t p = 0; p < 25; ++p) {
            sym[(c * 3 + 0) * 25 + p] += 0.3;
            sym[(c * 3 + 2) * 25 + p] -= 0.3;
        }
    EdgeSet inspect;
    depth_gcn_forward(sym, graph(9, 8), EccParams<double>::identity(2, ThetaMode::full), &inspect);
    for (double w : inspect.weights) CHECK(std::abs(w - 0.5) < 1e-15);
}

TEST_CASE("graph config validation") {
    CHECK_THROWS_AS(graph(4, 8).validate(), std::invalid_argument);
    CHECK_THROWS_AS(graph(5, 20).validate(), std::invalid_argument);
    GraphConfig m1 = graph(9, 8);
    m1.m = 1;
    CHECK_THROWS_AS(m1.validate(), std::invalid_argument);
    CHECK_NOTHROW(graph(9, 8).validate());
}
