#include "postwatch/tuner.hpp"

#include "postwatch/tracker.hpp"

#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <stdexcept>

using namespace postwatch;

TEST_SUITE_BEGIN("tuner");

namespace {

FamilyModel stats_model(std::array<double, 3> c, double dmin, double dmax) {
    FamilyModel m;
    m.family = "fam";
    m.centroid = c;
    m.d_min_sq = dmin;
    m.d_max_sq = dmax;
    m.trained_on = 10;
    return m;
}

std::vector<PostEvent> trace_of(const std::string& key,
                                std::vector<uint64_t> sizes) {
    std::vector<PostEvent> events;
    for (size_t i = 0; i < sizes.size(); ++i)
        events.push_back({key, sizes[i], double(i)});
    return events;
}

// Brute-force re-flagging oracle, structured independently of sweep():
// per threshold, walk every trace and recompute everything.
struct OracleCounts {
    uint64_t pos_flagged = 0;
    uint64_t neg_triples = 0;
    uint64_t neg_keys = 0;
};

OracleCounts oracle_at(const FamilyModel& model, double threshold,
                       const std::vector<std::vector<PostEvent>>& positives,
                       const std::vector<std::vector<PostEvent>>& negatives) {
    OracleCounts out;
    for (const auto& trace : positives) {
        std::map<std::string, std::vector<uint64_t>> lists;
        for (const auto& ev : trace)
            lists[ev.server_key].push_back(ev.size);
        bool flagged = false;
        for (const auto& [key, sizes] : lists)
            for (const auto& t : triples_of(sizes))
                if (distance_sq(t, model.centroid) < threshold)
                    flagged = true;
        if (flagged)
            ++out.pos_flagged;
    }
    for (const auto& trace : negatives) {
        std::map<std::string, std::vector<uint64_t>> lists;
        for (const auto& ev : trace)
            lists[ev.server_key].push_back(ev.size);
        for (const auto& [key, sizes] : lists) {
            bool key_flagged = false;
            for (const auto& t : triples_of(sizes)) {
                if (distance_sq(t, model.centroid) < threshold) {
                    ++out.neg_triples;
                    key_flagged = true;
                }
            }
            if (key_flagged)
                ++out.neg_keys;
        }
    }
    return out;
}

} // namespace

TEST_CASE("threshold zero flags nothing (strict inequality)") {
    auto model = stats_model({100, 100, 100}, 0, 500);
    std::vector<std::vector<PostEvent>> pos{
        trace_of("cc.test", {100, 100, 100})}; // distance exactly 0
    std::vector<std::vector<PostEvent>> neg{
        trace_of("w.example", {100, 100, 100, 90})};
    std::vector<double> grid{0.0};
    auto counts = sweep(model, pos, neg, grid);
    auto points = counts.points();
    REQUIRE(points.size() == 1);
    CHECK(points[0].tpr == 0.0);
    CHECK(points[0].fpr_triples == 0.0);
    CHECK(points[0].fpr_domains == 0.0);
}

TEST_CASE("a saturating threshold flags every trace and key with triples") {
    auto model = stats_model({100, 100, 100}, 0, 500);
    std::vector<std::vector<PostEvent>> pos{
        trace_of("a.test", {1, 2, 3}), trace_of("b.test", {900, 5, 80, 70})};
    std::vector<std::vector<PostEvent>> neg{
        trace_of("w.example", {5000, 6000, 7000}),
        trace_of("v.example", {1, 500, 1000, 2000})};
    std::vector<double> grid{1e18};
    auto points = sweep(model, pos, neg, grid).points();
    CHECK(points[0].tpr == 1.0);
    CHECK(points[0].fpr_triples == 1.0);
    CHECK(points[0].fpr_domains == 1.0);
}

TEST_CASE("positive traces without any triple can never be flagged") {
    auto model = stats_model({10, 10, 10}, 0, 100);
    std::vector<std::vector<PostEvent>> pos{
        trace_of("a.test", {10, 10, 10}), trace_of("b.test", {10, 10})};
    std::vector<std::vector<PostEvent>> neg{
        trace_of("w.example", {10, 10, 10})};
    std::vector<double> grid{1e9};
    auto points = sweep(model, pos, neg, grid).points();
    CHECK(points[0].tpr == 0.5); // the 2-POST trace stays unflagged
}

TEST_CASE("rates are non-decreasing along random sweeps and match the oracle") {
    std::mt19937_64 rng(31);
    for (int round = 0; round < 5; ++round) {
        auto model = stats_model({double(rng() % 500), double(rng() % 500),
                                  double(rng() % 500)},
                                 0, 1000);
        std::vector<std::vector<PostEvent>> pos, neg;
        size_t npos = 3 + rng() % 10, nneg = 2 + rng() % 5;
        for (size_t i = 0; i < npos; ++i) {
            std::vector<uint64_t> sizes;
            for (size_t j = 0; j < 3 + rng() % 6; ++j)
                sizes.push_back(rng() % 1000);
            pos.push_back(trace_of("cc" + std::to_string(i) + ".test", sizes));
        }
        for (size_t i = 0; i < nneg; ++i) {
            std::vector<PostEvent> trace;
            for (size_t k = 0; k < 1 + rng() % 8; ++k) {
                std::string key = "w" + std::to_string(k) + ".example";
                size_t posts = 1 + rng() % 7;
                for (size_t j = 0; j < posts; ++j)
                    trace.push_back({key, rng() % 1200, double(j)});
            }
            neg.push_back(std::move(trace));
        }
        std::vector<double> grid;
        for (int g = 0; g < 30; ++g)
            grid.push_back(double(rng() % 2000000));
        std::sort(grid.begin(), grid.end());

        SweepCounts counts;
        try {
            counts = sweep(model, pos, neg, grid);
        } catch (const std::invalid_argument&) {
            continue; // a draw without negative triples is legitimately rejected
        }
        auto points = counts.points();
        for (size_t i = 1; i < points.size(); ++i) {
            CHECK(points[i].tpr >= points[i - 1].tpr);
            CHECK(points[i].fpr_triples >= points[i - 1].fpr_triples);
            CHECK(points[i].fpr_domains >= points[i - 1].fpr_domains);
        }
        for (size_t i = 0; i < grid.size(); ++i) {
            OracleCounts expect = oracle_at(model, grid[i], pos, neg);
            CAPTURE(round);
            CAPTURE(i);
            CHECK(counts.pos_traces_flagged[i] == expect.pos_flagged);
            CHECK(counts.neg_triples_flagged[i] == expect.neg_triples);
            CHECK(counts.neg_keys_flagged[i] == expect.neg_keys);
        }
    }
}

TEST_CASE("sweep rejects empty positives and negatives without triples") {
    auto model = stats_model({1, 1, 1}, 0, 10);
    std::vector<std::vector<PostEvent>> pos{trace_of("a.test", {1, 1, 1})};
    std::vector<std::vector<PostEvent>> no_triples{
        trace_of("w.example", {1, 2})};
    std::vector<double> grid{1.0};
    CHECK_THROWS_AS(sweep(model, {}, no_triples, grid), std::invalid_argument);
    CHECK_THROWS_AS(sweep(model, pos, no_triples, grid),
                    std::invalid_argument);
    std::vector<double> unsorted{5.0, 1.0};
    std::vector<std::vector<PostEvent>> neg{
        trace_of("w.example", {1, 2, 3})};
    CHECK_THROWS_AS(sweep(model, pos, neg, unsorted), std::invalid_argument);
}

TEST_CASE("default grid contains the published endpoints exactly") {
    auto locky = stats_model({0, 0, 0}, 6914, 274370);
    auto grid = default_threshold_grid(locky, 200);
    CHECK(std::count(grid.begin(), grid.end(), 6914.0) == 1);
    CHECK(std::count(grid.begin(), grid.end(), 274370.0) == 1);
    CHECK(grid.front() == 6914.0);
    CHECK(grid.back() == doctest::Approx(1.1 * 274370.0));
    CHECK(std::is_sorted(grid.begin(), grid.end()));

    auto cryptowall = stats_model({0, 0, 0}, 25, 893);
    auto grid2 = default_threshold_grid(cryptowall, 200);
    CHECK(std::count(grid2.begin(), grid2.end(), 25.0) == 1);
    CHECK(std::count(grid2.begin(), grid2.end(), 893.0) == 1);
}

TEST_CASE("degenerate grid when the distance statistics coincide") {
    auto model = stats_model({0, 0, 0}, 50, 50);
    auto grid = default_threshold_grid(model, 200);
    REQUIRE(grid.size() == 3);
    CHECK(grid[0] == 0.0);
    CHECK(grid[1] == 50.0);
    CHECK(grid[2] == doctest::Approx(55.0));
}

TEST_CASE("youden selection: perfect point wins under either policy") {
    std::vector<RocPoint> curve{
        {10, 0.2, 0.0, 0.0}, {20, 1.0, 0.0, 0.0}, {30, 1.0, 0.5, 0.4}};
    for (auto kind : {SelectionPolicy::Kind::youden_triples,
                      SelectionPolicy::Kind::youden_domains}) {
        Selection sel = select_threshold(curve, {kind, 0.0});
        CHECK(sel.threshold_sq == 20.0);
        CHECK(sel.at.tpr == 1.0);
    }
}

TEST_CASE("equal Youden J breaks toward the smaller threshold") {
    std::vector<RocPoint> curve{
        {100, 0.8, 0.1, 0.1}, {50, 0.8, 0.1, 0.1}, {200, 0.3, 0.0, 0.0}};
    Selection sel = select_threshold(
        curve, {SelectionPolicy::Kind::youden_triples, 0.0});
    CHECK(sel.threshold_sq == 50.0);
}

TEST_CASE("selection is invariant under curve reordering") {
    std::mt19937_64 rng(77);
    std::vector<RocPoint> curve;
    for (int i = 0; i < 50; ++i)
        curve.push_back({double(rng() % 10000),
                         double(rng() % 100) / 100.0,
                         double(rng() % 100) / 100.0,
                         double(rng() % 100) / 100.0});
    Selection a = select_threshold(
        curve, {SelectionPolicy::Kind::youden_domains, 0.0});
    std::shuffle(curve.begin(), curve.end(), rng);
    Selection b = select_threshold(
        curve, {SelectionPolicy::Kind::youden_domains, 0.0});
    CHECK(a.threshold_sq == b.threshold_sq);
}

TEST_CASE("manual policy accepts out-of-range values with a warning") {
    std::vector<RocPoint> curve{{10, 0.5, 0.1, 0.1}, {20, 0.9, 0.2, 0.1}};
    Selection inside =
        select_threshold(curve, {SelectionPolicy::Kind::manual, 15.0});
    CHECK_FALSE(inside.outside_range);
    CHECK(inside.threshold_sq == 15.0);
    Selection outside =
        select_threshold(curve, {SelectionPolicy::Kind::manual, 500.0});
    CHECK(outside.outside_range);
    CHECK(outside.threshold_sq == 500.0); // operator override
}

TEST_CASE("policy strings parse exactly") {
    CHECK(SelectionPolicy::parse("youden-triples").has_value());
    CHECK(SelectionPolicy::parse("youden-domains").has_value());
    auto manual = SelectionPolicy::parse("manual:260000");
    REQUIRE(manual.has_value());
    CHECK(manual->kind == SelectionPolicy::Kind::manual);
    CHECK(manual->manual_value == 260000.0);
    CHECK_FALSE(SelectionPolicy::parse("bogus").has_value());
    CHECK_FALSE(SelectionPolicy::parse("manual:").has_value());
    CHECK_FALSE(SelectionPolicy::parse("manual:-5").has_value());
}

TEST_CASE("merging pools counts instead of averaging rates") {
    SweepCounts a;
    a.grid = {100.0};
    a.pos_traces_flagged = {1};
    a.neg_triples_flagged = {1};
    a.neg_keys_flagged = {1};
    a.pos_traces_total = 2;
    a.neg_triples_total = 10;
    a.neg_keys_total = 5;
    SweepCounts b = a;
    b.pos_traces_flagged = {0};
    b.neg_triples_flagged = {0};
    b.neg_keys_flagged = {0};
    b.pos_traces_total = 8;
    b.neg_triples_total = 90;
    b.neg_keys_total = 15;
    SweepCounts merged = merge_curves(a, b);
    auto points = merged.points();
    CHECK(points[0].fpr_triples == doctest::Approx(0.01)); // not 0.05
    CHECK(points[0].tpr == doctest::Approx(0.1));
    CHECK(points[0].fpr_domains == doctest::Approx(0.05));
}

TEST_CASE("merging a curve with itself keeps the rates") {
    SweepCounts a;
    a.grid = {1.0, 2.0, 3.0};
    a.pos_traces_flagged = {0, 1, 2};
    a.neg_triples_flagged = {0, 3, 9};
    a.neg_keys_flagged = {0, 1, 4};
    a.pos_traces_total = 2;
    a.neg_triples_total = 9;
    a.neg_keys_total = 4;
    auto doubled = merge_curves(a, a).points();
    auto single = a.points();
    for (size_t i = 0; i < single.size(); ++i) {
        CHECK(doubled[i].tpr == single[i].tpr);
        CHECK(doubled[i].fpr_triples == single[i].fpr_triples);
        CHECK(doubled[i].fpr_domains == single[i].fpr_domains);
    }
}

TEST_CASE("Table-3-shaped merge sums the denominators") {
    SweepCounts alexa;
    alexa.grid = {10.0};
    alexa.pos_traces_flagged = {0};
    alexa.neg_triples_flagged = {0};
    alexa.neg_keys_flagged = {0};
    alexa.pos_traces_total = 100;
    alexa.neg_triples_total = 11950;
    alexa.neg_keys_total = 8187;
    SweepCounts maccdc = alexa;
    maccdc.neg_triples_total = 15862;
    maccdc.neg_keys_total = 761;
    maccdc.pos_traces_total = 0;
    SweepCounts merged = merge_curves(alexa, maccdc);
    CHECK(merged.neg_triples_total == 27812);
    CHECK(merged.neg_keys_total == 8948);
}

TEST_CASE("grid mismatch is an error") {
    SweepCounts a;
    a.grid = {1.0, 2.0};
    SweepCounts b;
    b.grid = {1.0, 2.5};
    CHECK_THROWS_AS(merge_curves(a, b), std::invalid_argument);
}

TEST_SUITE_END();
