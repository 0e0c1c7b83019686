#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "knntest/error.hpp"
#include "knntest/knn_graph.hpp"
#include "oracles.hpp"

using namespace knntest;

namespace {

std::vector<std::vector<VertexId>> lists(const DirectedKnnGraph& g) {
    std::vector<std::vector<VertexId>> out(g.num_vertices());
    for (std::size_t v = 0; v < g.num_vertices(); ++v) {
        auto s = g.out_neighbors(v);
        out[v].assign(s.begin(), s.end());
    }
    return out;
}

std::vector<double> random_coords(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    std::normal_distribution<double> z;
    std::vector<double> c(n * d);
    for (auto& v : c) v = z(rng);
    return c;
}

}  // namespace

TEST(KnnGraph, OneDimensionalExample) {
    const PointCloud cloud(1, {0.0, 1.0, 3.0});
    for (const auto& g : {build_knn_graph_brute(cloud, 1), build_knn_graph_indexed(cloud, 1)}) {
        const std::vector<std::vector<VertexId>> expected{{1}, {0}, {1}};
        EXPECT_EQ(lists(g), expected);
        EXPECT_EQ(max_in_degree(g), 2u);
        EXPECT_EQ(g.in_neighbors(1).size(), 2u);
    }
}

TEST(KnnGraph, SquareWithFarPoint) {
    const PointCloud cloud(2, {0, 0, 1, 0, 0, 1, 5, 5});
    const auto g = build_knn_graph_brute(cloud, 2);
    auto far = g.out_neighbors(3);
    std::vector<VertexId> got(far.begin(), far.end());
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, (std::vector<VertexId>{1, 2}));
    EXPECT_EQ(build_knn_graph_indexed(cloud, 2), g);
}

TEST(KnnGraph, LargeKGivesCompleteDigraph) {
    std::mt19937_64 rng(3);
    const std::size_t n = 9;
    const PointCloud cloud(3, random_coords(rng, n, 3));
    for (std::size_t k : {n - 1, n, n + 20}) {
        const auto g = build_knn_graph_indexed(cloud, k);
        EXPECT_EQ(g.num_edges(), n * (n - 1));
        EXPECT_EQ(g.k(), n - 1);
        EXPECT_EQ(g.requested_k(), k);
        EXPECT_EQ(max_in_degree(g), n - 1);
        for (VertexId u = 0; u < n; ++u) {
            for (VertexId v = 0; v < n; ++v) EXPECT_EQ(g.has_edge(u, v), u != v);
        }
    }
}

TEST(KnnGraph, TiesBrokenBySmallerIndex) {
    // Vertex 0 is equidistant from 1, 2, 3 and 4.
    const PointCloud cloud(2, {0, 0, 0, 1, 1, 0, 0, -1, -1, 0});
    const auto g = build_knn_graph_brute(cloud, 2);
    EXPECT_EQ(lists(g)[0], (std::vector<VertexId>{1, 2}));
    EXPECT_EQ(build_knn_graph_indexed(cloud, 2), g);
}

TEST(KnnGraph, IntegerGridTiesMatchOracle) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> coord(0, 3);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t d = 1 + rep % 3;
        const std::size_t n = 2 + rng() % 60;
        const std::size_t k = 1 + rng() % 10;
        std::vector<double> c(n * d);
        for (auto& v : c) v = coord(rng);
        const PointCloud cloud(d, c);
        const auto brute = build_knn_graph_brute(cloud, k);
        EXPECT_EQ(lists(brute), oracle::knn_lists(c, d, k));
        EXPECT_EQ(build_knn_graph_indexed(cloud, k), brute);
    }
}

TEST(KnnGraph, IndexedMatchesBruteOnRandomClouds) {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 60; ++rep) {
        const std::size_t d = std::vector<std::size_t>{1, 2, 6, 25}[rep % 4];
        const std::size_t n = 2 + rng() % 400;
        const std::size_t k = 1 + rng() % 30;
        const auto c = random_coords(rng, n, d);
        const PointCloud cloud(d, c);
        const auto brute = build_knn_graph_brute(cloud, k);
        ASSERT_EQ(build_knn_graph_indexed(cloud, k), brute) << "d=" << d << " n=" << n << " k=" << k;
        EXPECT_EQ(lists(brute), oracle::knn_lists(c, d, k));
    }
}

TEST(KnnGraph, OutDegreeAndTranspose) {
    std::mt19937_64 rng(8);
    const std::size_t n = 300, d = 4, k = 7;
    const auto g = build_knn_graph_indexed(PointCloud(d, random_coords(rng, n, d)), k);
    std::size_t in_total = 0;
    for (VertexId v = 0; v < n; ++v) {
        EXPECT_EQ(g.out_neighbors(v).size(), k);
        for (VertexId u : g.out_neighbors(v)) {
            EXPECT_NE(u, v);
            auto in = g.in_neighbors(u);
            EXPECT_NE(std::find(in.begin(), in.end(), v), in.end());
        }
        for (VertexId w : g.in_neighbors(v)) EXPECT_TRUE(g.has_edge(w, v));
        in_total += g.in_neighbors(v).size();
    }
    EXPECT_EQ(in_total, n * k);
}

TEST(KnnGraph, OutListsSortedByDistance) {
    std::mt19937_64 rng(9);
    const std::size_t n = 200, d = 3, k = 12;
    const auto c = random_coords(rng, n, d);
    const PointCloud cloud(d, c);
    const auto g = build_knn_graph_indexed(cloud, k);
    for (VertexId v = 0; v < n; ++v) {
        auto out = g.out_neighbors(v);
        double last = -1.0;
        double worst = 0.0;
        for (VertexId u : out) {
            const double s = squared_distance(cloud.point(v).data(), cloud.point(u).data(), d);
            EXPECT_GE(s, last);
            last = s;
            worst = s;
        }
        for (VertexId w = 0; w < n; ++w) {
            if (w == v || std::find(out.begin(), out.end(), w) != out.end()) continue;
            EXPECT_GE(squared_distance(cloud.point(v).data(), cloud.point(w).data(), d), worst);
        }
    }
}

TEST(KnnGraph, PermutationEquivariance) {
    std::mt19937_64 rng(21);
    const std::size_t n = 150, d = 2, k = 5;
    const auto c = random_coords(rng, n, d);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> pc(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) pc[perm[i] * d + j] = c[i * d + j];
    }
    const auto g = build_knn_graph_indexed(PointCloud(d, c), k);
    const auto h = build_knn_graph_indexed(PointCloud(d, pc), k);
    for (VertexId v = 0; v < n; ++v) {
        auto a = g.out_neighbors(v);
        auto b = h.out_neighbors(perm[v]);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t r = 0; r < a.size(); ++r) EXPECT_EQ(perm[a[r]], b[r]);
    }
}

TEST(KnnGraph, InDegreeBoundedByConeConstant) {
    EXPECT_EQ(cone_covering_constant(1), 2.0);
    EXPECT_EQ(cone_covering_constant(2), 6.0);
    EXPECT_EQ(cone_covering_constant(3), std::ceil(std::pow(1.0 + 1.0 / std::sin(std::numbers::pi / 12), 3)));
    std::mt19937_64 rng(4);
    for (std::size_t d : {1, 2, 3, 6}) {
        for (std::size_t k : {1, 3, 10}) {
            const auto g = build_knn_graph_indexed(PointCloud(d, random_coords(rng, 500, d)), k);
            EXPECT_LE(static_cast<double>(max_in_degree(g)), cone_covering_constant(d) * static_cast<double>(k));
        }
    }
    // A hub surrounded by a ring: the hub collects in-edges from everyone.
    std::vector<double> ring{0.0, 0.0};
    for (int i = 0; i < 5; ++i) {
        ring.push_back(std::cos(i * 2 * std::numbers::pi / 5 + 0.01));
        ring.push_back(std::sin(i * 2 * std::numbers::pi / 5 + 0.01));
    }
    const auto g = build_knn_graph_brute(PointCloud(2, ring), 1);
    EXPECT_EQ(max_in_degree(g), 5u);
    EXPECT_LE(5.0, cone_covering_constant(2));
}

TEST(KnnGraph, LargeUniformCloudEdgeCount) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u;
    const std::size_t n = 20000, d = 6, k = 200;
    std::vector<double> c(n * d);
    for (auto& v : c) v = u(rng);
    const auto g = build_knn_graph_indexed(PointCloud(d, c), k);
    EXPECT_EQ(g.num_edges(), n * k);
}

TEST(KnnGraph, Errors) {
    EXPECT_THROW(build_knn_graph_brute(PointCloud(2, {0.0, 1.0}), 1), DegenerateInputError);
    EXPECT_THROW(build_knn_graph_indexed(PointCloud(2, {0.0, 1.0}), 1), DegenerateInputError);
    EXPECT_THROW(build_knn_graph_brute(PointCloud(1, {0.0, 1.0}), 0), ValidationError);
    EXPECT_THROW(PointCloud(1, {0.0, std::nan("")}), ValidationError);
    EXPECT_THROW(PointCloud(2, {0.0, 1.0, 2.0}), ValidationError);
    EXPECT_THROW(DirectedKnnGraph::from_out_lists({{0}}), ValidationError);
    EXPECT_THROW(DirectedKnnGraph::from_out_lists({{1, 1}, {}}), ValidationError);
    EXPECT_THROW(DirectedKnnGraph::from_out_lists({{2}, {}}), ValidationError);
}
