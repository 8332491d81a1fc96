#include "postwatch/trainer.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace postwatch;

TEST_SUITE_BEGIN("trainer");

namespace {

PostEvent ev(const std::string& key, uint64_t size, double t) {
    return PostEvent{key, size, t};
}

LearningSample sample(uint64_t a, uint64_t b, uint64_t c) {
    return LearningSample{"s", TripleVector{a, b, c}};
}

// naive second implementation of fit used as the oracle
struct NaiveFit {
    std::array<double, 3> centroid{};
    double d_min_sq = 0, d_max_sq = 0;
};

NaiveFit naive_fit(const std::vector<LearningSample>& samples) {
    NaiveFit out;
    for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (const auto& s : samples)
            acc += s.triple.as_doubles()[size_t(c)];
        out.centroid[size_t(c)] = acc / double(samples.size());
    }
    bool first = true;
    for (const auto& s : samples) {
        auto v = s.triple.as_doubles();
        double d = 0;
        for (int c = 0; c < 3; ++c)
            d += (v[size_t(c)] - out.centroid[size_t(c)]) *
                 (v[size_t(c)] - out.centroid[size_t(c)]);
        if (first) {
            out.d_min_sq = out.d_max_sq = d;
            first = false;
        } else {
            out.d_min_sq = std::min(out.d_min_sq, d);
            out.d_max_sq = std::max(out.d_max_sq, d);
        }
    }
    return out;
}

} // namespace

TEST_CASE("first three POSTs toward the first-contacted key") {
    std::vector<PostEvent> events{ev("cc.test", 101, 0), ev("cc.test", 55, 1),
                                  ev("cc.test", 94, 2)};
    auto s = extract_learning_sample("t1", events);
    REQUIRE(s.has_value());
    CHECK(s->triple == TripleVector{101, 55, 94});
    CHECK(s->trace_id == "t1");
}

TEST_CASE("traces with fewer than three POSTs are rejected with a reason") {
    std::vector<PostEvent> two{ev("cc.test", 1, 0), ev("cc.test", 2, 1)};
    std::string reason;
    CHECK_FALSE(extract_learning_sample("t", two, &reason).has_value());
    CHECK_FALSE(reason.empty());
    std::string reason2;
    CHECK_FALSE(
        extract_learning_sample("t", {}, &reason2).has_value());
    CHECK_FALSE(reason2.empty());
}

TEST_CASE("five POSTs: only the first three count") {
    std::vector<PostEvent> events;
    for (uint64_t i = 1; i <= 5; ++i)
        events.push_back(ev("cc.test", i * 10, double(i)));
    auto s = extract_learning_sample("t", events);
    REQUIRE(s.has_value());
    CHECK(s->triple == TripleVector{10, 20, 30});
}

TEST_CASE("multi-key trace: the key of the trace's first POST wins") {
    std::vector<PostEvent> events{
        ev("cc.test", 7, 0),  ev("noise.example", 999, 1),
        ev("cc.test", 8, 2),  ev("noise.example", 998, 3),
        ev("cc.test", 9, 4),  ev("cc.test", 10, 5)};
    auto s = extract_learning_sample("t", events);
    REQUIRE(s.has_value());
    CHECK(s->triple == TripleVector{7, 8, 9});
}

TEST_CASE("multi-key trace without three POSTs to the first key is rejected") {
    std::vector<PostEvent> events{ev("a.test", 1, 0), ev("b.test", 2, 1),
                                  ev("b.test", 3, 2), ev("b.test", 4, 3)};
    CHECK_FALSE(extract_learning_sample("t", events).has_value());
}

TEST_CASE("single sample: centroid is the sample, distances zero") {
    std::vector<LearningSample> samples{sample(101, 55, 94)};
    FamilyModel m = fit(samples, "locky");
    CHECK(m.centroid == std::array<double, 3>{101, 55, 94});
    CHECK(m.d_min_sq == 0);
    CHECK(m.d_max_sq == 0);
    CHECK(m.trained_on == 1);
    CHECK_FALSE(m.d_limit_sq.has_value());
}

TEST_CASE("two symmetric samples") {
    std::vector<LearningSample> samples{sample(0, 0, 0), sample(2, 2, 2)};
    FamilyModel m = fit(samples, "f");
    CHECK(m.centroid == std::array<double, 3>{1, 1, 1});
    CHECK(m.d_min_sq == 3);
    CHECK(m.d_max_sq == 3);
}

TEST_CASE("empty sample list is an error") {
    CHECK_THROWS_AS(fit({}, "f"), std::invalid_argument);
}

TEST_CASE("150 Locky-scale samples match the naive oracle") {
    std::mt19937_64 rng(9);
    std::vector<LearningSample> samples;
    for (int i = 0; i < 150; ++i)
        samples.push_back(sample(900 + rng() % 500, 800 + rng() % 500,
                                 775 + rng() % 500));
    FamilyModel m = fit(samples, "locky");
    NaiveFit oracle = naive_fit(samples);
    for (int c = 0; c < 3; ++c)
        CHECK(m.centroid[size_t(c)] ==
              doctest::Approx(oracle.centroid[size_t(c)]).epsilon(1e-12));
    CHECK(m.d_min_sq == doctest::Approx(oracle.d_min_sq).epsilon(1e-12));
    CHECK(m.d_max_sq == doctest::Approx(oracle.d_max_sq).epsilon(1e-12));
    CHECK(m.trained_on == 150);
}

TEST_CASE("fit is invariant under sample order") {
    std::mt19937_64 rng(10);
    std::vector<LearningSample> samples;
    for (int i = 0; i < 40; ++i)
        samples.push_back(sample(rng() % 1000, rng() % 1000, rng() % 1000));
    FamilyModel a = fit(samples, "f");
    std::shuffle(samples.begin(), samples.end(), rng);
    FamilyModel b = fit(samples, "f");
    CHECK(a.centroid == b.centroid);
    CHECK(a.d_min_sq == b.d_min_sq);
    CHECK(a.d_max_sq == b.d_max_sq);
}

TEST_CASE("centroid minimizes the sum of squared distances (+-1 probes)") {
    std::mt19937_64 rng(11);
    std::vector<LearningSample> samples;
    for (int i = 0; i < 60; ++i)
        samples.push_back(sample(rng() % 3000, rng() % 3000, rng() % 3000));
    FamilyModel m = fit(samples, "f");
    auto sum_sq = [&samples](const std::array<double, 3>& c) {
        double acc = 0;
        for (const auto& s : samples)
            acc += distance_sq(s.triple, c);
        return acc;
    };
    double at_centroid = sum_sq(m.centroid);
    for (int comp = 0; comp < 3; ++comp) {
        for (double delta : {-1.0, 1.0}) {
            auto shifted = m.centroid;
            shifted[size_t(comp)] += delta;
            CHECK(sum_sq(shifted) >= at_centroid);
        }
    }
}

TEST_CASE("d_min_sq <= mean squared distance <= d_max_sq") {
    std::mt19937_64 rng(12);
    for (int round = 0; round < 10; ++round) {
        std::vector<LearningSample> samples;
        size_t n = 1 + rng() % 50;
        for (size_t i = 0; i < n; ++i)
            samples.push_back(sample(rng() % 800, rng() % 800, rng() % 800));
        FamilyModel m = fit(samples, "f");
        double mean = 0;
        for (const auto& s : samples)
            mean += distance_sq(s.triple, m.centroid);
        mean /= double(n);
        CHECK(m.d_min_sq <= mean + 1e-9);
        CHECK(mean <= m.d_max_sq + 1e-9);
    }
}

TEST_SUITE_END();
