#ifndef POSTWATCH_DATASET_HPP
#define POSTWATCH_DATASET_HPP

#include "postwatch/reassembly.hpp"
#include "postwatch/types.hpp"

#include <string>
#include <vector>

namespace postwatch {

// Text fixture: one event per line, `timestamp server_key size`, `#`
// comments ignored. Malformed lines are skipped with a warning; negative
// sizes are rejected lines.
struct FixtureDiagnostics {
    uint64_t lines_total = 0;
    uint64_t lines_skipped = 0;
    std::vector<std::string> warnings; // one per skipped line
};

std::vector<PostEvent> read_post_events(const std::string& path,
                                        FixtureDiagnostics* diag = nullptr);
void write_post_events(const std::string& path,
                       const std::vector<PostEvent>& events);

// Labeled trace file: family name, or benign when `family` is empty.
struct ManifestEntry {
    std::string path;
    std::string family; // empty = benign

    bool benign() const { return family.empty(); }
};

// Lines `path label` where label is a family name or "benign". Relative
// paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::string& path);

enum class TraceFormat { pcap, events };

// One labeled trace, already reduced to its ordered POST events.
struct TraceSet {
    std::string origin;
    TraceFormat format = TraceFormat::events;
    std::string family; // empty = benign
    std::vector<PostEvent> events;
};

// Sniffs the format (pcap magic vs text) and runs pcap input through
// reassembly. Throws std::runtime_error on unreadable files. Warnings
// from fixture parsing land in `warnings` when given.
TraceSet load_trace(const std::string& path, const std::string& family,
                    ReassemblyDiagnostics* rdiag = nullptr,
                    std::vector<std::string>* warnings = nullptr);

} // namespace postwatch

#endif
