#ifndef POSTWATCH_TRACKER_HPP
#define POSTWATCH_TRACKER_HPP

#include "postwatch/types.hpp"

#include <deque>
#include <span>
#include <unordered_map>

namespace postwatch {

// All overlapping width-3 windows, oldest first; n sizes yield max(0, n-2).
std::vector<TripleVector> triples_of(std::span<const uint64_t> sizes);

// Per-server-key POST size histories with sliding-window triple extraction.
class FeatureTracker {
  public:
    // Oldest sizes beyond this per-key count are evicted; only the last
    // three matter for detection, longer retention aids reporting.
    explicit FeatureTracker(size_t history_cap = 1024)
        : history_cap_(history_cap) {}

    // Appends the event's size to its key's history; returns the triple of
    // the last three sizes once the history holds at least three.
    std::optional<TripleVector> observe(const PostEvent& ev);

    void mark_flagged(const std::string& key);
    bool is_flagged(const std::string& key) const;

    // Total sizes ever observed for the key (eviction does not reduce it).
    uint64_t count(const std::string& key) const;
    size_t key_count() const { return histories_.size(); }

    // Keys in sorted order, for deterministic reporting.
    std::vector<std::string> keys_sorted() const;

  private:
    struct History {
        std::deque<uint64_t> sizes;
        uint64_t total = 0;
        bool flagged = false;
    };
    size_t history_cap_;
    std::unordered_map<std::string, History> histories_;
};

} // namespace postwatch

#endif
