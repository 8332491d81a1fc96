#include "postwatch/detector.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace postwatch {

double distance_sq(const std::array<double, 3>& v,
                   const std::array<double, 3>& c) {
    double d0 = v[0] - c[0];
    double d1 = v[1] - c[1];
    double d2 = v[2] - c[2];
    return d0 * d0 + d1 * d1 + d2 * d2;
}

double distance_sq(const TripleVector& v, const std::array<double, 3>& c) {
    return distance_sq(v.as_doubles(), c);
}

Verdict classify(const TripleVector& v, std::span<const FamilyModel> models) {
    Verdict verdict;
    verdict.triple = v;
    if (models.empty())
        return verdict; // benign, distance unset: caller should diagnose

    bool have_best = false;
    double best_d = 0.0;
    const FamilyModel* best = nullptr; // best among matches, else overall
    for (const auto& m : models) {
        double d = distance_sq(v, m.centroid);
        bool match = m.d_limit_sq && d < *m.d_limit_sq; // strictly smaller
        if (match && !verdict.malicious) {
            // first match supersedes any benign best
            verdict.malicious = true;
            have_best = false;
        }
        if (match != verdict.malicious)
            continue; // benign candidates do not compete with matches
        if (!have_best || d < best_d ||
            (d == best_d && m.family < best->family)) {
            have_best = true;
            best_d = d;
            best = &m;
        }
    }
    verdict.distance_sq = best_d;
    verdict.family = best->family;
    return verdict;
}

namespace {

using nlohmann::json;

double require_number(const json& j, const char* field, const std::string& path) {
    if (!j.contains(field) || !j[field].is_number())
        throw std::runtime_error("model file " + path + ": missing numeric '" +
                                 std::string(field) + "'");
    return j[field].get<double>();
}

} // namespace

FamilyModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read model file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("model file " + path + ": " + e.what());
    }
    if (!j.contains("distance_units") || !j["distance_units"].is_string() ||
        j["distance_units"].get<std::string>() != "squared_bytes")
        throw std::runtime_error(
            "model file " + path +
            ": distance_units missing or not 'squared_bytes'");
    FamilyModel m;
    if (!j.contains("family") || !j["family"].is_string() ||
        j["family"].get<std::string>().empty())
        throw std::runtime_error("model file " + path + ": missing 'family'");
    m.family = j["family"].get<std::string>();
    if (!j.contains("centroid") || !j["centroid"].is_array() ||
        j["centroid"].size() != 3)
        throw std::runtime_error("model file " + path +
                                 ": centroid must have 3 components");
    for (int i = 0; i < 3; ++i)
        m.centroid[size_t(i)] = j["centroid"][size_t(i)].get<double>();
    m.d_min_sq = require_number(j, "d_min_sq", path);
    m.d_max_sq = require_number(j, "d_max_sq", path);
    if (m.d_min_sq < 0 || m.d_max_sq < 0 || m.d_min_sq > m.d_max_sq)
        throw std::runtime_error("model file " + path +
                                 ": requires 0 <= d_min_sq <= d_max_sq");
    if (j.contains("d_limit_sq")) {
        double lim = require_number(j, "d_limit_sq", path);
        if (!(lim > 0))
            throw std::runtime_error("model file " + path +
                                     ": d_limit_sq must be > 0");
        m.d_limit_sq = lim;
    }
    m.trained_on = j.value("trained_on", uint64_t(0));
    m.created_unix = j.value("created_unix", uint64_t(0));
    if (j.contains("tuning")) {
        const json& t = j["tuning"];
        m.tuned_policy = t.value("policy", std::string());
        m.tuned_grid_steps = t.value("grid_steps", size_t(0));
        if (t.contains("manifest_digests"))
            for (const auto& d : t["manifest_digests"])
                m.tuned_manifest_digests.push_back(d.get<std::string>());
    }
    return m;
}

void save_model(const FamilyModel& model, const std::string& path) {
    json j;
    j["family"] = model.family;
    j["centroid"] = {model.centroid[0], model.centroid[1], model.centroid[2]};
    j["d_min_sq"] = model.d_min_sq;
    j["d_max_sq"] = model.d_max_sq;
    if (model.d_limit_sq)
        j["d_limit_sq"] = *model.d_limit_sq;
    j["distance_units"] = "squared_bytes";
    j["trained_on"] = model.trained_on;
    j["created_unix"] = model.created_unix;
    if (!model.tuned_policy.empty()) {
        json t;
        t["policy"] = model.tuned_policy;
        t["grid_steps"] = model.tuned_grid_steps;
        t["manifest_digests"] = model.tuned_manifest_digests;
        j["tuning"] = t;
    }
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write model file: " + path);
    out << j.dump(2) << "\n";
}

} // namespace postwatch
