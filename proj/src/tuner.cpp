#include "postwatch/tuner.hpp"

#include "postwatch/tracker.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace postwatch {

std::vector<RocPoint> SweepCounts::points() const {
    std::vector<RocPoint> out(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        out[i].threshold_sq = grid[i];
        out[i].tpr = double(pos_traces_flagged[i]) / double(pos_traces_total);
        out[i].fpr_triples =
            double(neg_triples_flagged[i]) / double(neg_triples_total);
        out[i].fpr_domains =
            neg_keys_total == 0
                ? 0.0
                : double(neg_keys_flagged[i]) / double(neg_keys_total);
    }
    return out;
}

namespace {

// Squared distances of every overlapping triple in one tracker session.
void session_distances(const std::vector<PostEvent>& events,
                       const std::array<double, 3>& centroid,
                       std::vector<double>* all,
                       std::map<std::string, double>* per_key_min) {
    FeatureTracker tracker;
    for (const auto& ev : events) {
        auto triple = tracker.observe(ev);
        if (!triple)
            continue;
        double d = distance_sq(*triple, centroid);
        if (all)
            all->push_back(d);
        if (per_key_min) {
            auto [it, inserted] = per_key_min->try_emplace(ev.server_key, d);
            if (!inserted)
                it->second = std::min(it->second, d);
        }
    }
}

// Count of values strictly below t in a sorted vector.
uint64_t count_below(const std::vector<double>& sorted, double t) {
    return uint64_t(std::lower_bound(sorted.begin(), sorted.end(), t) -
                    sorted.begin());
}

} // namespace

SweepCounts sweep(const FamilyModel& model,
                  std::span<const std::vector<PostEvent>> positives,
                  std::span<const std::vector<PostEvent>> negatives,
                  std::span<const double> thresholds) {
    if (positives.empty())
        throw std::invalid_argument("sweep: no positive traces");
    if (!std::is_sorted(thresholds.begin(), thresholds.end()))
        throw std::invalid_argument("sweep: thresholds must be ascending");

    // Positive traces: minimum triple distance decides flagging.
    std::vector<double> pos_mins;
    pos_mins.reserve(positives.size());
    for (const auto& trace : positives) {
        std::vector<double> d;
        session_distances(trace, model.centroid, &d, nullptr);
        pos_mins.push_back(d.empty()
                               ? std::numeric_limits<double>::infinity()
                               : *std::min_element(d.begin(), d.end()));
    }

    std::vector<double> neg_triple_d;
    std::vector<double> neg_key_mins;
    for (const auto& trace : negatives) {
        std::map<std::string, double> per_key;
        session_distances(trace, model.centroid, &neg_triple_d, &per_key);
        for (const auto& [key, dmin] : per_key)
            neg_key_mins.push_back(dmin);
    }
    if (neg_triple_d.empty())
        throw std::invalid_argument("sweep: negatives contain no triples");

    std::sort(pos_mins.begin(), pos_mins.end());
    std::sort(neg_triple_d.begin(), neg_triple_d.end());
    std::sort(neg_key_mins.begin(), neg_key_mins.end());

    SweepCounts counts;
    counts.grid.assign(thresholds.begin(), thresholds.end());
    counts.pos_traces_total = positives.size();
    counts.neg_triples_total = neg_triple_d.size();
    counts.neg_keys_total = neg_key_mins.size();
    counts.pos_traces_flagged.reserve(thresholds.size());
    counts.neg_triples_flagged.reserve(thresholds.size());
    counts.neg_keys_flagged.reserve(thresholds.size());
    for (double t : thresholds) {
        counts.pos_traces_flagged.push_back(count_below(pos_mins, t));
        counts.neg_triples_flagged.push_back(count_below(neg_triple_d, t));
        counts.neg_keys_flagged.push_back(count_below(neg_key_mins, t));
    }
    return counts;
}

std::vector<double> default_threshold_grid(const FamilyModel& model,
                                           size_t steps) {
    std::vector<double> grid;
    if (model.d_min_sq == model.d_max_sq) {
        double d = model.d_max_sq;
        grid = {0.0, d, 1.1 * d};
    } else {
        if (steps < 2)
            steps = 2;
        double lo = model.d_min_sq;
        double hi = 1.1 * model.d_max_sq;
        grid.reserve(steps + 1);
        for (size_t i = 0; i < steps; ++i)
            grid.push_back(lo + (hi - lo) * double(i) / double(steps - 1));
        grid.push_back(model.d_max_sq); // exact endpoint, grid rounds past it
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

std::optional<SelectionPolicy> SelectionPolicy::parse(const std::string& text) {
    if (text == "youden-triples")
        return SelectionPolicy{Kind::youden_triples, 0.0};
    if (text == "youden-domains")
        return SelectionPolicy{Kind::youden_domains, 0.0};
    if (text.rfind("manual:", 0) == 0) {
        try {
            size_t used = 0;
            double v = std::stod(text.substr(7), &used);
            if (used == text.size() - 7 && v >= 0)
                return SelectionPolicy{Kind::manual, v};
        } catch (...) {
        }
    }
    return std::nullopt;
}

std::string SelectionPolicy::name() const {
    switch (kind) {
    case Kind::youden_triples:
        return "youden-triples";
    case Kind::youden_domains:
        return "youden-domains";
    case Kind::manual:
        return "manual:" + std::to_string(manual_value);
    }
    return "?";
}

Selection select_threshold(std::span<const RocPoint> curve,
                           const SelectionPolicy& policy) {
    if (curve.empty())
        throw std::invalid_argument("select_threshold: empty curve");
    Selection sel;
    if (policy.kind == SelectionPolicy::Kind::manual) {
        double lo = curve.front().threshold_sq, hi = lo;
        const RocPoint* nearest = &curve.front();
        for (const auto& p : curve) {
            lo = std::min(lo, p.threshold_sq);
            hi = std::max(hi, p.threshold_sq);
            if (std::abs(p.threshold_sq - policy.manual_value) <
                std::abs(nearest->threshold_sq - policy.manual_value))
                nearest = &p;
        }
        sel.threshold_sq = policy.manual_value;
        sel.at = *nearest;
        sel.outside_range =
            policy.manual_value < lo || policy.manual_value > hi;
        return sel;
    }
    const bool domains = policy.kind == SelectionPolicy::Kind::youden_domains;
    const RocPoint* best = nullptr;
    double best_j = 0.0;
    for (const auto& p : curve) {
        double j = p.tpr - (domains ? p.fpr_domains : p.fpr_triples);
        if (!best || j > best_j ||
            (j == best_j && p.threshold_sq < best->threshold_sq)) {
            best = &p;
            best_j = j;
        }
    }
    sel.threshold_sq = best->threshold_sq;
    sel.at = *best;
    return sel;
}

SweepCounts merge_curves(const SweepCounts& a, const SweepCounts& b) {
    if (a.grid != b.grid)
        throw std::invalid_argument("merge_curves: threshold grids differ");
    SweepCounts m;
    m.grid = a.grid;
    m.pos_traces_total = a.pos_traces_total + b.pos_traces_total;
    m.neg_triples_total = a.neg_triples_total + b.neg_triples_total;
    m.neg_keys_total = a.neg_keys_total + b.neg_keys_total;
    m.pos_traces_flagged.resize(m.grid.size());
    m.neg_triples_flagged.resize(m.grid.size());
    m.neg_keys_flagged.resize(m.grid.size());
    for (size_t i = 0; i < m.grid.size(); ++i) {
        m.pos_traces_flagged[i] =
            a.pos_traces_flagged[i] + b.pos_traces_flagged[i];
        m.neg_triples_flagged[i] =
            a.neg_triples_flagged[i] + b.neg_triples_flagged[i];
        m.neg_keys_flagged[i] = a.neg_keys_flagged[i] + b.neg_keys_flagged[i];
    }
    return m;
}

void write_roc_csv(const std::string& path, std::span<const RocPoint> points) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write ROC csv: " + path);
    out << "threshold_sq,tpr,fpr_triples,fpr_domains\n";
    char buf[160];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g\n",
                      p.threshold_sq, p.tpr, p.fpr_triples, p.fpr_domains);
        out << buf;
    }
}

} // namespace postwatch
