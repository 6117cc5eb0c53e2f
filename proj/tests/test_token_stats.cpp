#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <vector>

#include "raretok/synth.hpp"
#include "raretok/token_stats.hpp"

using namespace raretok;

namespace {

TokenStream stream_of(std::vector<std::uint32_t> ids, std::uint32_t vocab) {
    TokenStream s;
    s.ids = std::move(ids);
    s.vocab_size = vocab;
    if (!s.ids.empty()) s.doc_boundaries = {s.ids.size()};
    return s;
}

// curve with one smooth bend centered at rank 230 of 301
std::vector<double> bend_curve() {
    const int n = 301;
    std::vector<double> curv(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double d = static_cast<double>(i - 230);
        curv[i] = 0.01 * std::exp(-d * d / 72.0);
    }
    std::vector<double> slope(n, 0.0);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += curv[i];
        slope[i] = acc;
    }
    std::vector<double> f(n);
    double drop = 0.0;
    for (int i = 0; i < n; ++i) {
        drop += slope[i];
        f[i] = 5.0 - 0.002 * i - drop;
    }
    return f;
}

}  // namespace

TEST_CASE("count frequencies") {
    auto s = stream_of({1, 1, 2}, 4);
    auto freq = count_frequencies(s);
    REQUIRE(freq.size() == 4);
    CHECK(freq[0] == 0);
    CHECK(freq[1] == 2);
    CHECK(freq[2] == 1);
    CHECK(freq[3] == 0);

    auto empty = stream_of({}, 3);
    auto zeros = count_frequencies(empty);
    CHECK(std::accumulate(zeros.begin(), zeros.end(), std::int64_t{0}) == 0);
}

TEST_CASE("descending log frequencies") {
    std::vector<std::int64_t> freq{3, 0, 12, 1, 0, 5};
    auto curve = descending_log_frequencies(freq);
    REQUIRE(curve.size() == 4);  // zero counts dropped
    CHECK(curve[0] == doctest::Approx(std::log(12.0)).epsilon(1e-15));
    CHECK(curve[1] == doctest::Approx(std::log(5.0)).epsilon(1e-15));
    CHECK(curve[2] == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    CHECK(curve[3] == doctest::Approx(std::log(1.0)).epsilon(1e-15));
}

TEST_CASE("zipf stream recovers its exponent") {
    PlantSpec spec;
    auto planted = make_planted_bundle(spec);
    auto freq = count_frequencies(planted.stream);
    auto curve = descending_log_frequencies(freq);
    // slope over the head of the rank-frequency curve should be near -1.1
    std::size_t hi = std::min<std::size_t>(200, curve.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t r = 1; r <= hi; ++r) {
        double x = std::log(static_cast<double>(r));
        double y = curve[r - 1];
        sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    double n = static_cast<double>(hi);
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope == doctest::Approx(-1.1).epsilon(0.1));
}

TEST_CASE("elbow detection on a planted bend") {
    auto f = bend_curve();
    auto r = detect_elbow(f, 11);
    CHECK(r.found);
    CHECK(r.rank == 229);  // discrete curvature peak, frozen
}

TEST_CASE("straight line has no elbow") {
    std::vector<double> line(301);
    for (std::size_t i = 0; i < line.size(); ++i)
        line[i] = 10.0 - 0.01 * static_cast<double>(i);
    auto r = detect_elbow(line, 11);
    CHECK_FALSE(r.found);
    CHECK(r.rank == static_cast<std::int64_t>(line.size()) - 1);
}

TEST_CASE("two bends pick the sharper one") {
    const int n = 400;
    std::vector<double> curv(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double d1 = static_cast<double>(i - 250);
        double d2 = static_cast<double>(i - 330);
        curv[i] = 0.004 * std::exp(-d1 * d1 / 72.0) + 0.015 * std::exp(-d2 * d2 / 72.0);
    }
    std::vector<double> f(n);
    double acc = 0.0, drop = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += curv[i];
        drop += acc;
        f[i] = 8.0 - 0.001 * i - drop;
    }
    auto r = detect_elbow(f, 11);
    CHECK(r.found);
    CHECK(std::llabs(r.rank - 330) <= 6);
}

TEST_CASE("elbow rejects short curves") {
    std::vector<double> tiny{3.0, 2.0, 1.0};
    CHECK_THROWS_AS(detect_elbow(tiny, 11), Error);
}

TEST_CASE("split classes on a hand fixture") {
    std::vector<std::int64_t> freq{100, 60, 40, 20, 10, 4, 3, 0};
    ElbowResult elbow{4, true};  // cutoff at the 5th ranked positive count

    auto split = split_classes(freq, elbow, 0.25);
    CHECK(split.elbow_rank == 4);
    CHECK(split.percentile_cut == 0.25);
    CHECK(split.classes[4] == TokenClass::Rare);
    for (int id : {0, 1, 2, 3}) CHECK(split.classes[id] == TokenClass::Common);
    for (int id : {5, 6, 7}) CHECK(split.classes[id] == TokenClass::Excluded);

    auto wider = split_classes(freq, elbow, 0.5);
    CHECK(wider.classes[3] == TokenClass::Rare);
    CHECK(wider.classes[4] == TokenClass::Rare);
    for (int id : {0, 1, 2}) CHECK(wider.classes[id] == TokenClass::Common);
}

TEST_CASE("split partitions the vocabulary") {
    PlantSpec spec;
    spec.stream_length = 30000;
    spec.min_rare_targets = 50;
    auto planted = make_planted_bundle(spec);
    auto freq = count_frequencies(planted.stream);
    auto curve = descending_log_frequencies(freq);
    auto elbow = detect_elbow(curve);
    auto split = split_classes(freq, elbow, 0.15);

    REQUIRE(split.classes.size() == freq.size());
    auto rare = split.ids_in_class(TokenClass::Rare);
    auto common = split.ids_in_class(TokenClass::Common);
    auto excluded = split.ids_in_class(TokenClass::Excluded);
    CHECK(rare.size() + common.size() + excluded.size() == freq.size());
    CHECK(split.class_size(TokenClass::Rare) == static_cast<std::int64_t>(rare.size()));
    CHECK(!rare.empty());
    CHECK(!common.empty());

    // every rare token is less frequent than every common token
    std::int64_t max_rare = 0, min_common = INT64_MAX;
    for (auto id : rare) max_rare = std::max(max_rare, freq[id]);
    for (auto id : common) min_common = std::min(min_common, freq[id]);
    CHECK(max_rare < min_common);
}

TEST_CASE("raising the percentile never shrinks the rare set") {
    PlantSpec spec;
    spec.stream_length = 30000;
    spec.min_rare_targets = 50;
    auto planted = make_planted_bundle(spec);
    auto freq = count_frequencies(planted.stream);
    auto elbow = detect_elbow(descending_log_frequencies(freq));

    auto r10 = split_classes(freq, elbow, 0.10).ids_in_class(TokenClass::Rare);
    auto r15 = split_classes(freq, elbow, 0.15).ids_in_class(TokenClass::Rare);
    auto r20 = split_classes(freq, elbow, 0.20).ids_in_class(TokenClass::Rare);
    auto subset = [](const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
        return std::includes(b.begin(), b.end(), a.begin(), a.end());
    };
    CHECK(subset(r10, r15));
    CHECK(subset(r15, r20));
}

TEST_CASE("token id relabeling permutes classes identically") {
    std::vector<std::int64_t> freq{100, 60, 40, 20, 10, 4, 3, 2};
    ElbowResult elbow{4, true};
    auto base = split_classes(freq, elbow, 0.25);

    // swap ids 1 and 4
    std::vector<std::int64_t> permuted = freq;
    std::swap(permuted[1], permuted[4]);
    auto swapped = split_classes(permuted, elbow, 0.25);
    CHECK(swapped.classes[1] == base.classes[4]);
    CHECK(swapped.classes[4] == base.classes[1]);
    for (int id : {0, 2, 3, 5, 6, 7}) CHECK(swapped.classes[id] == base.classes[id]);
}

TEST_CASE("split rejects bad parameters") {
    std::vector<std::int64_t> freq{10, 5, 3, 1};
    ElbowResult elbow{3, true};
    CHECK_THROWS_AS(split_classes(freq, elbow, 0.0), Error);
    CHECK_THROWS_AS(split_classes(freq, elbow, 1.0), Error);
    CHECK_THROWS_AS(split_classes(freq, elbow, -0.2), Error);

    std::vector<std::int64_t> allzero(8, 0);
    CHECK_THROWS_AS(split_classes(allzero, elbow, 0.15), Error);
}

TEST_CASE("split json round trip") {
    std::vector<std::int64_t> freq{100, 60, 40, 20, 10, 4, 3, 0};
    auto split = split_classes(freq, ElbowResult{4, true}, 0.25);
    auto text = split_to_json(split);
    auto back = split_from_json(text);
    CHECK(back.elbow_rank == split.elbow_rank);
    CHECK(back.elbow_found == split.elbow_found);
    CHECK(back.percentile_cut == split.percentile_cut);
    CHECK(back.classes == split.classes);

    CHECK_THROWS_AS(split_from_json("not json"), Error);
    CHECK_THROWS_AS(split_from_json("{\"elbow_rank\": 1}"), Error);
}

TEST_CASE("split file round trip") {
    std::vector<std::int64_t> freq{100, 60, 40, 20, 10, 4, 3, 0};
    auto split = split_classes(freq, ElbowResult{4, true}, 0.15);
    auto path = std::filesystem::temp_directory_path() / "raretok_split_test.json";
    save_split(split, path.string());
    auto back = load_split(path.string());
    CHECK(back.classes == split.classes);
    CHECK(back.percentile_cut == split.percentile_cut);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_split("/nonexistent/raretok/split.json"), Error);
}

TEST_CASE("class names round trip") {
    CHECK(token_class_name(TokenClass::Rare) == std::string("rare"));
    CHECK(token_class_from_name("common") == TokenClass::Common);
    CHECK(token_class_from_name("excluded") == TokenClass::Excluded);
    CHECK_THROWS_AS(token_class_from_name("bogus"), Error);
}
