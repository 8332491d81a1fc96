#ifndef POSTWATCH_TUNER_HPP
#define POSTWATCH_TUNER_HPP

#include "postwatch/detector.hpp"
#include "postwatch/types.hpp"

#include <span>

namespace postwatch {

struct RocPoint {
    double threshold_sq = 0.0;
    double tpr = 0.0;
    double fpr_triples = 0.0;
    double fpr_domains = 0.0;
};

// Raw flagging counts per grid threshold. Rates are always recomputed from
// these so curves from different datasets can be pooled, never averaged.
struct SweepCounts {
    std::vector<double> grid; // ascending
    std::vector<uint64_t> pos_traces_flagged;
    std::vector<uint64_t> neg_triples_flagged;
    std::vector<uint64_t> neg_keys_flagged;
    uint64_t pos_traces_total = 0;
    uint64_t neg_triples_total = 0;
    uint64_t neg_keys_total = 0; // keys that produced at least one triple

    std::vector<RocPoint> points() const;
};

// One tracker session per trace; a positive trace is flagged at threshold t
// when any of its triples sits at squared distance < t. Negative rates are
// counted over all triples and over keys with at least one flagged triple.
// Throws std::invalid_argument on empty positives, zero negative triples,
// or an unsorted grid.
SweepCounts sweep(const FamilyModel& model,
                  std::span<const std::vector<PostEvent>> positives,
                  std::span<const std::vector<PostEvent>> negatives,
                  std::span<const double> thresholds);

// Inclusive grid from d_min_sq to 1.1 * d_max_sq containing both statistics
// exactly; degenerates to {0, d, 1.1d} when they coincide.
std::vector<double> default_threshold_grid(const FamilyModel& model,
                                           size_t steps = 200);

struct SelectionPolicy {
    enum class Kind { youden_triples, youden_domains, manual } kind;
    double manual_value = 0.0;

    static std::optional<SelectionPolicy> parse(const std::string& text);
    std::string name() const;
};

struct Selection {
    double threshold_sq = 0.0;
    RocPoint at;                // curve point nearest the chosen threshold
    bool outside_range = false; // manual value off the swept range (warned)
};

// youden_* maximizes tpr - fpr at the stated granularity, ties toward the
// smaller threshold; manual accepts the operator's value after a range
// check. Throws std::invalid_argument on an empty curve.
Selection select_threshold(std::span<const RocPoint> curve,
                           const SelectionPolicy& policy);

// Pooled counts (numerators and denominators summed); grids must match
// exactly or std::invalid_argument is thrown.
SweepCounts merge_curves(const SweepCounts& a, const SweepCounts& b);

// CSV: header threshold_sq,tpr,fpr_triples,fpr_domains, one row per point.
void write_roc_csv(const std::string& path, std::span<const RocPoint> points);

} // namespace postwatch

#endif
