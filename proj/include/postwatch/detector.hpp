#ifndef POSTWATCH_DETECTOR_HPP
#define POSTWATCH_DETECTOR_HPP

#include "postwatch/types.hpp"

#include <span>

namespace postwatch {

// Per-family nearest-centroid model. All distance statistics and the limit
// are in SQUARED byte units; model files are tagged with the unit and
// rejected on mismatch so squared vs unsquared values can never be mixed.
struct FamilyModel {
    std::string family;
    std::array<double, 3> centroid{};
    double d_min_sq = 0.0;
    double d_max_sq = 0.0;
    std::optional<double> d_limit_sq; // unset until tuned
    uint64_t trained_on = 0;
    uint64_t created_unix = 0;

    // provenance, present on tuned models
    std::string tuned_policy;
    std::vector<std::string> tuned_manifest_digests;
    size_t tuned_grid_steps = 0;
};

struct Verdict {
    bool malicious = false;
    std::string family;                // matched family, or best-guess when benign
    std::optional<double> distance_sq; // unset only when no model was given
    TripleVector triple;
    std::string server_key;
    double t = 0.0;
};

// (v1-c1)^2 + (v2-c2)^2 + (v3-c3)^2; square roots are never taken.
double distance_sq(const std::array<double, 3>& v,
                   const std::array<double, 3>& c);
double distance_sq(const TripleVector& v, const std::array<double, 3>& c);

// Malicious iff distance_sq < d_limit_sq for some model (strict). The
// matched family is the smallest distance among matches; exact ties break
// by family name. Models without d_limit_sq never match but still
// contribute the reported benign distance.
Verdict classify(const TripleVector& v, std::span<const FamilyModel> models);

// ---- model file I/O (JSON, one document per family) ----

// Throws std::runtime_error on unreadable file, malformed JSON, missing
// fields, violated invariants, or distance_units != "squared_bytes".
FamilyModel load_model(const std::string& path);
void save_model(const FamilyModel& model, const std::string& path);

} // namespace postwatch

#endif
