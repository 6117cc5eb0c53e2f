#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "raretok/stats.hpp"

using namespace raretok;

namespace {

// Expected values in this file were computed with an independent
// implementation (scipy 1.15 / numpy 2.2) and frozen as literals.

std::vector<double> midranks_naive(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double below = 0.0, equal = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (v[j] < v[i]) below += 1.0;
            if (v[j] == v[i]) equal += 1.0;
        }
        out[i] = below + (equal + 1.0) / 2.0;
    }
    return out;
}

}  // namespace

TEST_CASE("gini closed forms") {
    std::vector<double> uniform{0.25, 0.25, 0.25, 0.25};
    CHECK(gini(uniform) == -0.25);
    CHECK(gini(uniform, true) == 0.0);

    std::vector<double> onehot{0.0, 0.0, 1.0, 0.0};
    CHECK(gini(onehot) == 0.5);
}

TEST_CASE("gini matches direct summation") {
    std::vector<double> w{0.6, 0.1, 0.1, 0.2};
    CHECK(gini(w) == doctest::Approx(0.15).epsilon(1e-12));

    std::vector<double> w7{0.05, 0.3, 0.02, 0.18, 0.22, 0.03, 0.2};
    CHECK(gini(w7) == doctest::Approx(0.2485714285714286).epsilon(1e-12));
}

TEST_CASE("gini is scale invariant") {
    std::vector<double> w{3.0, 1.0, 7.0, 2.0, 5.0};
    std::vector<double> scaled;
    for (double v : w) scaled.push_back(1234.5 * v);
    CHECK(gini(scaled) == doctest::Approx(gini(w)).epsilon(1e-12));
}

TEST_CASE("gini rejects bad input") {
    std::vector<double> neg{0.5, -0.1, 0.6};
    CHECK_THROWS_AS(gini(neg), Error);
    std::vector<double> zeros{0.0, 0.0};
    CHECK_THROWS_AS(gini(zeros), Error);
    std::vector<double> empty;
    CHECK_THROWS_AS(gini(empty), Error);
}

TEST_CASE("midranks handle ties by averaging") {
    std::vector<double> v{3.0, 1.0, 4.0, 1.0, 5.0};
    std::vector<double> expect{3.0, 1.5, 4.0, 1.5, 5.0};
    auto got = midranks(v);
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expect[i]);
}

TEST_CASE("midranks agree with quadratic-time counting") {
    NormalSampler rng(42);
    std::vector<double> v(200);
    for (auto& x : v) x = std::floor(rng() * 4.0);  // plenty of ties
    auto fast = midranks(v);
    auto slow = midranks_naive(v);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i)
        CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
}

TEST_CASE("spearman on frozen fixtures") {
    std::vector<double> x{3.1, 1.2, 5.5, 2.2, 4.0, 0.7};
    std::vector<double> y{2.0, 1.1, 4.9, 2.1, 3.5, 1.3};
    auto r = spearman(x, y);
    REQUIRE(r.has_value());
    CHECK(*r == doctest::Approx(0.8857142857142858).epsilon(1e-12));

    std::vector<double> xt{1, 2, 2, 3, 4, 4, 5};
    std::vector<double> yt{0.5, 1.5, 1.0, 2.5, 2.0, 3.5, 3.0};
    auto rt = spearman(xt, yt);
    REQUIRE(rt.has_value());
    CHECK(*rt == doctest::Approx(0.8728715609439697).epsilon(1e-12));
}

TEST_CASE("spearman extremes and invariance") {
    std::vector<double> inc{1.0, 2.5, 3.1, 8.0, 20.0};
    std::vector<double> dec(inc.rbegin(), inc.rend());
    CHECK(*spearman(inc, inc) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(*spearman(inc, dec) == doctest::Approx(-1.0).epsilon(1e-15));

    // strictly monotone transform of either argument leaves ranks alone
    std::vector<double> x{3.1, 1.2, 5.5, 2.2, 4.0, 0.7};
    std::vector<double> y{2.0, 1.1, 4.9, 2.1, 3.5, 1.3};
    std::vector<double> ex, cy;
    for (double v : x) ex.push_back(std::exp(v));
    for (double v : y) cy.push_back(v * v * v);
    CHECK(*spearman(ex, cy) == doctest::Approx(*spearman(x, y)).epsilon(1e-15));
}

TEST_CASE("spearman degenerate inputs") {
    std::vector<double> c{2.0, 2.0, 2.0, 2.0};
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK_FALSE(spearman(c, v).has_value());
    CHECK_FALSE(spearman(v, c).has_value());

    std::vector<double> shorter{1.0, 2.0};
    CHECK_THROWS_AS(spearman(shorter, v), Error);
    std::vector<double> one{1.0};
    CHECK_THROWS_AS(spearman(one, one), Error);
}

TEST_CASE("pearson on frozen fixture") {
    std::vector<double> x{3.1, 1.2, 5.5, 2.2, 4.0, 0.7};
    std::vector<double> y{2.0, 1.1, 4.9, 2.1, 3.5, 1.3};
    CHECK(pearson(x, y) == doctest::Approx(0.9590167569774694).epsilon(1e-12));
}

TEST_CASE("welch t on frozen fixture") {
    std::vector<double> a{2.1, 2.5, 1.9, 2.3, 2.7, 2.2};
    std::vector<double> b{1.8, 1.6, 2.0, 1.7};
    auto r = welch_t(a, b);
    CHECK(r.t == doctest::Approx(3.515981547995831).epsilon(1e-12));
    CHECK(r.df == doctest::Approx(7.976704055220018).epsilon(1e-12));
    CHECK(r.p == doctest::Approx(0.0079288751029198).epsilon(1e-8));

    auto flipped = welch_t(b, a);
    CHECK(flipped.t == doctest::Approx(-r.t).epsilon(1e-15));
    CHECK(flipped.p == doctest::Approx(r.p).epsilon(1e-12));
}

TEST_CASE("welch t identical and separated samples") {
    std::vector<double> s{1.0, 2.0, 3.0, 4.0};
    auto same = welch_t(s, s);
    CHECK(same.t == 0.0);
    CHECK(same.p == 1.0);

    std::vector<double> lo{0.0, 0.0, 0.0, 0.0};
    std::vector<double> hi{10.0, 10.0, 10.0, 10.0001};
    auto sep = welch_t(lo, hi);
    CHECK(sep.p < 0.001);
}

TEST_CASE("welch t rejects tiny samples") {
    std::vector<double> one{1.0};
    std::vector<double> ok{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(welch_t(one, ok), Error);
    CHECK_THROWS_AS(welch_t(ok, one), Error);
}

TEST_CASE("one-sample t on frozen fixture") {
    std::vector<double> sample{1.2, 1.8, 1.4, 1.6, 1.5};
    auto r = one_sample_t(2.0, sample);
    CHECK(r.t == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(r.df == 4.0);
    CHECK(r.p == doctest::Approx(0.007490433881274529).epsilon(1e-8));

    auto centered = one_sample_t(1.5, sample);
    CHECK(centered.t == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("one-sample t degenerate baseline") {
    std::vector<double> constant{2.0, 2.0, 2.0};
    CHECK_THROWS_AS(one_sample_t(3.0, constant), Error);
    std::vector<double> single{2.0};
    CHECK_THROWS_AS(one_sample_t(3.0, single), Error);
}

TEST_CASE("incomplete beta against reference values") {
    CHECK(incomplete_beta(2.0, 3.0, 0.3) == doctest::Approx(0.34829999999999994).epsilon(1e-10));
    CHECK(incomplete_beta(0.5, 4.5, 0.7) == doctest::Approx(0.9986770494157323).epsilon(1e-10));
    CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
}

TEST_CASE("student t p-values against reference values") {
    CHECK(student_t_two_sided_p(2.5, 7.0) == doctest::Approx(0.040992218585752874).epsilon(1e-8));
    CHECK(student_t_two_sided_p(1.2, 3.0) == doctest::Approx(0.3162621146981049).epsilon(1e-8));
    CHECK(student_t_two_sided_p(0.0, 10.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(student_t_two_sided_p(-2.5, 7.0) ==
          doctest::Approx(student_t_two_sided_p(2.5, 7.0)).epsilon(1e-12));
}

TEST_CASE("mutual information on frozen permutation fixture") {
    // two fixed permutations of 0..59; y mixes both so MI(x, y) is
    // strictly between 0 and log2(3)
    std::vector<double> x{28, 55, 18, 24, 7,  17, 27, 50, 59, 39, 44, 5,  57, 25, 29,
                          31, 37, 20, 52, 49, 42, 54, 48, 4,  26, 15, 32, 23, 40, 9,
                          56, 21, 16, 3,  34, 30, 10, 46, 53, 6,  38, 11, 51, 41, 22,
                          19, 35, 0,  47, 45, 12, 43, 14, 58, 2,  36, 33, 1,  13, 8};
    std::vector<double> p{11, 2,  15, 17, 16, 4,  3,  48, 46, 0,  37, 43, 30, 59, 20,
                          40, 24, 49, 12, 28, 47, 50, 34, 13, 25, 44, 18, 19, 33, 36,
                          39, 6,  8,  14, 27, 9,  38, 21, 41, 54, 56, 45, 58, 35, 7,
                          23, 5,  26, 32, 22, 51, 10, 57, 53, 29, 31, 55, 52, 1,  42};
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = 0.9 * x[i] + 0.3 * p[i];

    auto r = mutual_information(x, y, 3);
    CHECK_FALSE(r.degenerate);
    CHECK(r.bits == doctest::Approx(0.8740119435949956).epsilon(1e-12));
}

TEST_CASE("mutual information of exact copy saturates") {
    std::vector<double> x(60);
    std::iota(x.begin(), x.end(), 0.0);
    std::vector<double> y = x;
    auto r = mutual_information(x, y, 3);
    CHECK(r.bits == doctest::Approx(std::log2(3.0)).epsilon(1e-12));

    // monotone-decreasing copy hits the same bound under quantile bins
    std::vector<double> neg;
    for (double v : x) neg.push_back(-v);
    auto rn = mutual_information(x, neg, 3);
    CHECK(rn.bits == doctest::Approx(std::log2(3.0)).epsilon(1e-12));
}

TEST_CASE("mutual information is symmetric bit for bit") {
    NormalSampler rng(9);
    std::vector<double> x(640), y(640);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng();
        y[i] = 0.4 * x[i] + rng();
    }
    auto ab = mutual_information(x, y, 16);
    auto ba = mutual_information(y, x, 16);
    CHECK(ab.bits == ba.bits);
}

TEST_CASE("mutual information degenerate and invalid inputs") {
    std::vector<double> c(64, 1.0);
    std::vector<double> v(64);
    std::iota(v.begin(), v.end(), 0.0);
    auto r = mutual_information(c, v, 2);
    CHECK(r.degenerate);
    CHECK(r.bits == 0.0);

    CHECK_THROWS_AS(mutual_information(v, v, 1), Error);  // bins < 2
    std::vector<double> tiny{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(mutual_information(tiny, tiny, 2), Error);  // too few samples
    std::vector<double> mismatched(63, 0.0);
    CHECK_THROWS_AS(mutual_information(c, mismatched, 2), Error);
}

TEST_CASE("mean and variance basics") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(mean(v) == 2.5);
    CHECK(variance(v) == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
}
