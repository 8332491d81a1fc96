#include "postwatch/trainer.hpp"

#include <algorithm>
#include <stdexcept>

namespace postwatch {

std::optional<LearningSample>
extract_learning_sample(const std::string& trace_id,
                        std::span<const PostEvent> events,
                        std::string* reject_reason) {
    if (events.empty()) {
        if (reject_reason)
            *reject_reason = "no POST events";
        return std::nullopt;
    }
    const std::string& key = events.front().server_key;
    std::array<uint64_t, 3> sizes{};
    size_t got = 0;
    for (const auto& ev : events) {
        if (ev.server_key != key)
            continue;
        sizes[got++] = ev.size;
        if (got == 3)
            break;
    }
    if (got < 3) {
        if (reject_reason)
            *reject_reason = "only " + std::to_string(got) +
                             " POSTs toward first-contacted key '" + key + "'";
        return std::nullopt;
    }
    return LearningSample{trace_id, {sizes[0], sizes[1], sizes[2]}};
}

FamilyModel fit(std::span<const LearningSample> samples,
                const std::string& family) {
    if (samples.empty())
        throw std::invalid_argument("fit: empty sample list");
    FamilyModel m;
    m.family = family;
    m.trained_on = samples.size();

    std::array<double, 3> sum{};
    for (const auto& s : samples) {
        auto v = s.triple.as_doubles();
        for (int i = 0; i < 3; ++i)
            sum[size_t(i)] += v[size_t(i)];
    }
    for (int i = 0; i < 3; ++i)
        m.centroid[size_t(i)] = sum[size_t(i)] / double(samples.size());

    double dmin = 0, dmax = 0;
    bool first = true;
    for (const auto& s : samples) {
        double d = distance_sq(s.triple, m.centroid);
        if (first) {
            dmin = dmax = d;
            first = false;
        } else {
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
        }
    }
    m.d_min_sq = dmin;
    m.d_max_sq = dmax;
    return m;
}

} // namespace postwatch
