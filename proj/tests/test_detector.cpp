#include "postwatch/detector.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <random>

using namespace postwatch;
using test::TempDir;

TEST_SUITE_BEGIN("detector");

namespace {

FamilyModel make_model(const std::string& family, std::array<double, 3> c,
                       double limit_sq) {
    FamilyModel m;
    m.family = family;
    m.centroid = c;
    m.d_min_sq = 0;
    m.d_max_sq = limit_sq;
    m.d_limit_sq = limit_sq;
    m.trained_on = 1;
    return m;
}

// independent re-implementation used as the oracle
long double oracle_distance_sq(const TripleVector& v,
                               const std::array<double, 3>& c) {
    long double acc = 0;
    const long double vals[3] = {(long double)v.s1, (long double)v.s2,
                                 (long double)v.s3};
    for (int i = 0; i < 3; ++i) {
        long double diff = vals[i] - (long double)c[i];
        acc += diff * diff;
    }
    return acc;
}

} // namespace

TEST_CASE("squared distance matches the hand-worked values") {
    CHECK(distance_sq(TripleVector{910, 810, 770}, {900, 800, 775}) == 225.0);
    CHECK(distance_sq(TripleVector{5, 6, 7}, {5, 6, 7}) == 0.0);
    CHECK(distance_sq(TripleVector{0, 0, 0}, {3, 4, 0}) == 25.0);
}

TEST_CASE("distance is symmetric, permutation-stable and scales as k^2") {
    std::array<double, 3> a{12, 34, 56};
    std::array<double, 3> b{78, 9, 10};
    CHECK(distance_sq(a, b) == distance_sq(b, a));
    std::array<double, 3> ap{34, 56, 12};
    std::array<double, 3> bp{9, 10, 78};
    CHECK(distance_sq(a, b) == distance_sq(ap, bp));
    std::array<double, 3> a3{36, 102, 168};
    std::array<double, 3> b3{234, 27, 30};
    CHECK(distance_sq(a3, b3) == 9.0 * distance_sq(a, b));
    CHECK(distance_sq(a, a) == 0.0);
}

TEST_CASE("worked example: triple inside the limit is malicious") {
    auto model = make_model("locky", {900, 800, 775}, 400);
    Verdict v = classify(TripleVector{910, 810, 770}, {&model, 1});
    CHECK(v.malicious);
    CHECK(v.family == "locky");
    REQUIRE(v.distance_sq.has_value());
    CHECK(*v.distance_sq == 225.0);
}

TEST_CASE("distance exactly at the limit stays benign (strict inequality)") {
    auto model = make_model("f", {0, 0, 0}, 400);
    Verdict v = classify(TripleVector{20, 0, 0}, {&model, 1}); // d2 == 400
    CHECK_FALSE(v.malicious);
    CHECK(*v.distance_sq == 400.0);
    Verdict inside = classify(TripleVector{19, 0, 0}, {&model, 1});
    CHECK(inside.malicious);
}

TEST_CASE("1000 random triples agree with an independent oracle") {
    std::mt19937_64 rng(2024);
    auto model_a = make_model("aaa", {900, 800, 775}, 90000);
    auto model_b = make_model("bbb", {120, 40, 77}, 2500);
    std::vector<FamilyModel> models{model_a, model_b};
    for (int i = 0; i < 1000; ++i) {
        TripleVector t{rng() % 1500, rng() % 1500, rng() % 1500};
        Verdict v = classify(t, models);
        // oracle: brute force over models with long double arithmetic
        bool expect_malicious = false;
        long double best = -1;
        std::string best_family;
        for (const auto& m : models) {
            long double d = oracle_distance_sq(t, m.centroid);
            bool match = d < (long double)*m.d_limit_sq;
            if (match && !expect_malicious) {
                expect_malicious = true;
                best = -1;
            }
            if (match != expect_malicious)
                continue;
            if (best < 0 || d < best) {
                best = d;
                best_family = m.family;
            }
        }
        CAPTURE(i);
        CHECK(v.malicious == expect_malicious);
        CHECK(v.family == best_family);
        CHECK((long double)*v.distance_sq == best);
    }
}

TEST_CASE("exact distance ties break toward the smaller family name") {
    auto m1 = make_model("zeta", {10, 10, 10}, 100);
    auto m2 = make_model("alpha", {10, 10, 10}, 100);
    std::vector<FamilyModel> models{m1, m2};
    Verdict v = classify(TripleVector{11, 10, 10}, models);
    CHECK(v.malicious);
    CHECK(v.family == "alpha");
    std::vector<FamilyModel> reversed{m2, m1};
    Verdict v2 = classify(TripleVector{11, 10, 10}, reversed);
    CHECK(v2.family == "alpha");
}

TEST_CASE("no models: benign verdict with distance unset") {
    Verdict v = classify(TripleVector{1, 2, 3}, {});
    CHECK_FALSE(v.malicious);
    CHECK_FALSE(v.distance_sq.has_value());
}

TEST_CASE("raising the limit never flips malicious to benign") {
    std::mt19937_64 rng(55);
    for (int i = 0; i < 200; ++i) {
        auto model = make_model("m", {500, 500, 500}, 1 + double(rng() % 100000));
        TripleVector t{rng() % 1000, rng() % 1000, rng() % 1000};
        Verdict before = classify(t, {&model, 1});
        model.d_limit_sq = *model.d_limit_sq * (1 + double(rng() % 5));
        Verdict after = classify(t, {&model, 1});
        if (before.malicious)
            CHECK(after.malicious);
    }
}

TEST_CASE("untuned models never match but report their distance") {
    auto tuned = make_model("far", {1000, 1000, 1000}, 50);
    FamilyModel untuned = make_model("near", {10, 10, 10}, 1);
    untuned.d_limit_sq.reset();
    std::vector<FamilyModel> models{tuned, untuned};
    Verdict v = classify(TripleVector{10, 10, 11}, models);
    CHECK_FALSE(v.malicious);
    CHECK(v.family == "near"); // nearest overall
    CHECK(*v.distance_sq == 1.0);
}

TEST_CASE("model files round-trip and reject bad unit tags") {
    TempDir dir("models");
    auto path = dir.file("m.json");
    FamilyModel m = make_model("locky", {900.25, 800.5, 775}, 260000);
    m.d_min_sq = 6914;
    m.d_max_sq = 274370;
    m.trained_on = 150;
    m.created_unix = 42;
    m.tuned_policy = "youden-triples";
    m.tuned_grid_steps = 200;
    m.tuned_manifest_digests = {"fnv1a64:0011223344556677"};
    save_model(m, path);
    FamilyModel r = load_model(path);
    CHECK(r.family == m.family);
    CHECK(r.centroid == m.centroid);
    CHECK(r.d_min_sq == m.d_min_sq);
    CHECK(r.d_max_sq == m.d_max_sq);
    CHECK(*r.d_limit_sq == *m.d_limit_sq);
    CHECK(r.trained_on == 150);
    CHECK(r.created_unix == 42);
    CHECK(r.tuned_policy == "youden-triples");
    CHECK(r.tuned_manifest_digests == m.tuned_manifest_digests);
}

TEST_CASE("loader rejects wrong or missing distance units and bad fields") {
    TempDir dir("badmodels");
    auto write = [&dir](const char* name, const std::string& body) {
        auto p = dir.file(name);
        test::write_text(p, body);
        return p;
    };
    CHECK_THROWS(load_model(write("no_units.json",
        R"({"family":"f","centroid":[1,2,3],"d_min_sq":0,"d_max_sq":1,"trained_on":1})")));
    CHECK_THROWS(load_model(write("wrong_units.json",
        R"({"family":"f","centroid":[1,2,3],"d_min_sq":0,"d_max_sq":1,"distance_units":"bytes","trained_on":1})")));
    CHECK_THROWS(load_model(write("short_centroid.json",
        R"({"family":"f","centroid":[1,2],"d_min_sq":0,"d_max_sq":1,"distance_units":"squared_bytes"})")));
    CHECK_THROWS(load_model(write("min_above_max.json",
        R"({"family":"f","centroid":[1,2,3],"d_min_sq":5,"d_max_sq":1,"distance_units":"squared_bytes"})")));
    CHECK_THROWS(load_model(write("zero_limit.json",
        R"({"family":"f","centroid":[1,2,3],"d_min_sq":0,"d_max_sq":1,"d_limit_sq":0,"distance_units":"squared_bytes"})")));
    CHECK_THROWS(load_model(write("not_json.json", "hello world")));
    CHECK_THROWS(load_model(dir.file("missing.json")));

    // the paper-valued models are accepted
    auto ok = write("locky.json",
        R"({"family":"locky","centroid":[900,800,775],"d_min_sq":6914,"d_max_sq":274370,"d_limit_sq":260000,"distance_units":"squared_bytes","trained_on":150})");
    FamilyModel locky = load_model(ok);
    CHECK(*locky.d_limit_sq == 260000.0);
}

TEST_SUITE_END();
