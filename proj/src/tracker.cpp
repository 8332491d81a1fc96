#include "postwatch/tracker.hpp"

#include <algorithm>

namespace postwatch {

std::vector<TripleVector> triples_of(std::span<const uint64_t> sizes) {
    std::vector<TripleVector> out;
    if (sizes.size() < 3)
        return out;
    out.reserve(sizes.size() - 2);
    for (size_t i = 0; i + 2 < sizes.size(); ++i)
        out.push_back({sizes[i], sizes[i + 1], sizes[i + 2]});
    return out;
}

std::optional<TripleVector> FeatureTracker::observe(const PostEvent& ev) {
    History& h = histories_[ev.server_key];
    h.sizes.push_back(ev.size);
    ++h.total;
    if (h.sizes.size() > history_cap_)
        h.sizes.pop_front();
    if (h.sizes.size() < 3)
        return std::nullopt;
    size_t n = h.sizes.size();
    return TripleVector{h.sizes[n - 3], h.sizes[n - 2], h.sizes[n - 1]};
}

void FeatureTracker::mark_flagged(const std::string& key) {
    histories_[key].flagged = true; // monotone: never reset
}

bool FeatureTracker::is_flagged(const std::string& key) const {
    auto it = histories_.find(key);
    return it != histories_.end() && it->second.flagged;
}

uint64_t FeatureTracker::count(const std::string& key) const {
    auto it = histories_.find(key);
    return it == histories_.end() ? 0 : it->second.total;
}

std::vector<std::string> FeatureTracker::keys_sorted() const {
    std::vector<std::string> keys;
    keys.reserve(histories_.size());
    for (const auto& [key, h] : histories_)
        keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    return keys;
}

} // namespace postwatch
