#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <vector>

#include "raretok/graph.hpp"
#include "raretok/synth.hpp"

using namespace raretok;

namespace {

WeightedGraph graph_from_edges(int n, const std::vector<std::tuple<int, int, double>>& edges) {
    WeightedGraph g;
    g.weights = Matrix::Zero(n, n);
    for (auto [a, b, w] : edges) {
        g.weights(a, b) = w;
        g.weights(b, a) = w;
    }
    return g;
}

WeightedGraph two_triangles() {
    return graph_from_edges(6, {{0, 1, 1.0},
                                {1, 2, 1.0},
                                {0, 2, 1.0},
                                {3, 4, 1.0},
                                {4, 5, 1.0},
                                {3, 5, 1.0}});
}

double modularity_double_sum(const WeightedGraph& g, const std::vector<int>& labels,
                             double resolution) {
    const int n = g.node_count();
    std::vector<double> degree(n, 0.0);
    double two_m = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            degree[i] += g.weights(i, j);
            two_m += g.weights(i, j);
        }
    double q = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (labels[i] != labels[j]) continue;
            q += g.weights(i, j) - resolution * degree[i] * degree[j] / two_m;
        }
    return q / two_m;
}

WeightedGraph random_graph(int n, std::uint64_t seed, double density = 0.5) {
    NormalSampler rng(seed);
    WeightedGraph g;
    g.weights = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            if (rng.uniform() >= density) continue;
            double w = 0.25 + rng.uniform();
            g.weights(i, j) = w;
            g.weights(j, i) = w;
        }
    return g;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::map<std::pair<int, int>, bool> seen;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j)
            if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    return true;
}

}  // namespace

TEST_CASE("modularity of a frozen fixture") {
    auto g = graph_from_edges(
        5, {{0, 1, 2.0}, {0, 2, 1.0}, {1, 2, 1.5}, {2, 3, 0.4}, {3, 4, 1.2}});
    std::vector<int> labels{0, 0, 0, 1, 1};
    CHECK(modularity(g, labels) == doctest::Approx(0.28809459822628325).epsilon(1e-12));
    CHECK(modularity(g, labels, 1.5) ==
          doctest::Approx(-0.035071217414673506).epsilon(1e-12));
}

TEST_CASE("one community always scores zero") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        auto g = random_graph(7, seed);
        std::vector<int> one(7, 0);
        CHECK(modularity(g, one) == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("modularity matches the naive double sum") {
    NormalSampler rng(17);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto g = random_graph(9, seed, 0.6);
        std::vector<int> labels(9);
        for (auto& l : labels) l = static_cast<int>(rng.next_u64() % 3);
        for (double res : {1.0, 0.7, 1.4}) {
            CHECK(modularity(g, labels, res) ==
                  doctest::Approx(modularity_double_sum(g, labels, res)).epsilon(1e-12));
        }
    }
}

TEST_CASE("two disconnected triangles split cleanly") {
    auto g = two_triangles();
    std::vector<int> planted{0, 0, 0, 1, 1, 1};
    CHECK(modularity(g, planted) == doctest::Approx(0.5).epsilon(1e-12));

    auto part = louvain(g, 1.0, 10, 1);
    CHECK(part.q == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(part.community_count() == 2);
    CHECK(same_partition(part.community, planted));
    CHECK(part.mean_community_size() == 3.0);
}

TEST_CASE("louvain q equals an independent recompute") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        auto g = random_graph(12, seed, 0.4);
        auto part = louvain(g, 1.0, 10, seed);
        CHECK(part.q == doctest::Approx(modularity(g, part.community)).epsilon(1e-12));
    }
    auto blocks = make_block_graph({6, 6, 6}, 0.9, 0.05, 3);
    auto part = louvain(blocks, 1.3, 10, 3);
    CHECK(part.q == doctest::Approx(modularity(blocks, part.community, 1.3)).epsilon(1e-12));
}

TEST_CASE("louvain matches brute force on small graphs") {
    auto g6 = two_triangles();
    auto best6 = best_partition_brute_force(g6);
    CHECK(best6.q == doctest::Approx(0.5).epsilon(1e-12));

    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        auto g = random_graph(8, seed, 0.5);
        auto lv = louvain(g, 1.0, 10, seed);
        auto bf = best_partition_brute_force(g);
        CHECK(lv.q <= bf.q + 1e-12);
        CHECK(bf.q - lv.q <= 0.02);
    }
}

TEST_CASE("complete graph prefers the trivial partition") {
    auto g = graph_from_edges(5, {});
    g.weights = Matrix::Constant(5, 5, 1.0);
    g.weights.diagonal().setZero();
    std::vector<int> one(5, 0);
    CHECK(modularity(g, one) == doctest::Approx(0.0).epsilon(1e-12));
    auto part = louvain(g, 1.0, 10, 2);
    CHECK(part.q <= 1e-9);
}

TEST_CASE("louvain is deterministic in the seed") {
    auto g = make_block_graph({5, 5, 5, 5}, 0.8, 0.1, 9);
    auto a = louvain(g, 1.0, 10, 42);
    auto b = louvain(g, 1.0, 10, 42);
    CHECK(a.q == b.q);
    CHECK(a.community == b.community);
}

TEST_CASE("planted blocks are recovered up to relabeling") {
    std::vector<int> sizes{10, 10, 10, 10};
    auto g = make_block_graph(sizes, 0.9, 0.05, 7);
    auto part = louvain(g, 1.0, 10, 7);
    std::vector<int> planted;
    for (std::size_t b = 0; b < sizes.size(); ++b)
        planted.insert(planted.end(), sizes[b], static_cast<int>(b));
    CHECK(same_partition(part.community, planted));
}

TEST_CASE("fully assortative two-block graph") {
    auto g = make_block_graph({6, 6}, 1.0, 0.0, 4);
    std::vector<int> planted(12, 0);
    std::fill(planted.begin() + 6, planted.end(), 1);
    auto part = louvain(g, 1.0, 10, 4);
    CHECK(part.q == doctest::Approx(modularity(g, planted)).epsilon(1e-12));
    CHECK(same_partition(part.community, planted));
}

TEST_CASE("graph validation catches malformed matrices") {
    WeightedGraph asym;
    asym.weights = Matrix::Zero(3, 3);
    asym.weights(0, 1) = 1.0;
    CHECK_THROWS_AS(asym.validate(), Error);

    WeightedGraph neg;
    neg.weights = Matrix::Zero(2, 2);
    neg.weights(0, 1) = -1.0;
    neg.weights(1, 0) = -1.0;
    CHECK_THROWS_AS(neg.validate(), Error);

    WeightedGraph selfloop;
    selfloop.weights = Matrix::Constant(2, 2, 1.0);
    CHECK_THROWS_AS(selfloop.validate(), Error);

    WeightedGraph weightless;
    weightless.weights = Matrix::Zero(4, 4);
    CHECK_THROWS_AS(louvain(weightless, 1.0, 10, 1), Error);
    CHECK_THROWS_AS(modularity(weightless, std::vector<int>(4, 0)), Error);

    auto ok = two_triangles();
    CHECK_NOTHROW(ok.validate());
    CHECK(ok.total_weight() == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("block graph generator properties") {
    auto g = make_block_graph({4, 4}, 1.0, 0.0, 1);
    CHECK_NOTHROW(g.validate());
    CHECK(g.node_count() == 8);
    // p_in 1, p_out 0: edges exactly within blocks
    for (int i = 0; i < 4; ++i)
        for (int j = 4; j < 8; ++j) CHECK(g.weights(i, j) == 0.0);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) CHECK(g.weights(i, j) > 0.0);

    CHECK_THROWS_AS(make_block_graph({}, 0.5, 0.1, 1), Error);
    CHECK_THROWS_AS(make_block_graph({4, 4}, 1.5, 0.1, 1), Error);
}
