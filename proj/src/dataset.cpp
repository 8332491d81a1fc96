#include "postwatch/dataset.hpp"

#include "postwatch/pcap.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace postwatch {

std::vector<PostEvent> read_post_events(const std::string& path,
                                        FixtureDiagnostics* diag) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read event fixture: " + path);
    FixtureDiagnostics local;
    std::vector<PostEvent> events;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#')
            continue;
        ++local.lines_total;
        std::istringstream ls(line);
        double t;
        std::string key, size_text;
        if (!(ls >> t >> key >> size_text) || size_text.empty() ||
            size_text[0] == '-' ||
            size_text.find_first_not_of("0123456789") != std::string::npos) {
            ++local.lines_skipped;
            local.warnings.push_back(path + ":" + std::to_string(lineno) +
                                     ": malformed event line skipped");
            continue;
        }
        errno = 0;
        uint64_t size = std::strtoull(size_text.c_str(), nullptr, 10);
        if (errno != 0) {
            ++local.lines_skipped;
            local.warnings.push_back(path + ":" + std::to_string(lineno) +
                                     ": size out of range, line skipped");
            continue;
        }
        events.push_back({normalize_server_key(key), size, t});
    }
    if (diag)
        *diag = local;
    return events;
}

void write_post_events(const std::string& path,
                       const std::vector<PostEvent>& events) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write event fixture: " + path);
    char buf[64];
    for (const auto& ev : events) {
        std::snprintf(buf, sizeof(buf), "%.6f", ev.t);
        out << buf << " " << ev.server_key << " " << ev.size << "\n";
    }
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read manifest: " + path);
    std::filesystem::path base = std::filesystem::path(path).parent_path();
    std::vector<ManifestEntry> entries;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#')
            continue;
        std::istringstream ls(line);
        std::string file, label;
        if (!(ls >> file >> label))
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": manifest line needs `path label`");
        ManifestEntry e;
        std::filesystem::path p(file);
        e.path = p.is_absolute() ? p.string() : (base / p).string();
        if (label != "benign")
            e.family = label;
        entries.push_back(std::move(e));
    }
    return entries;
}

TraceSet load_trace(const std::string& path, const std::string& family,
                    ReassemblyDiagnostics* rdiag,
                    std::vector<std::string>* warnings) {
    TraceSet trace;
    trace.origin = path;
    trace.family = family;

    std::ifstream probe(path, std::ios::binary);
    if (!probe)
        throw std::runtime_error("cannot read trace file: " + path);
    uint8_t magic[4] = {};
    probe.read(reinterpret_cast<char*>(magic), 4);
    bool is_pcap = probe.gcount() == 4 &&
                   ((magic[0] == 0xd4 && magic[1] == 0xc3 && magic[2] == 0xb2 &&
                     magic[3] == 0xa1) ||
                    (magic[0] == 0xa1 && magic[1] == 0xb2 && magic[2] == 0xc3 &&
                     magic[3] == 0xd4));
    probe.close();

    if (is_pcap) {
        trace.format = TraceFormat::pcap;
        PcapReader reader(path);
        Reassembler rs;
        while (auto pkt = reader.next()) {
            auto events = rs.feed(*pkt);
            trace.events.insert(trace.events.end(), events.begin(),
                                events.end());
        }
        rs.flush();
        if (rdiag)
            *rdiag = rs.diagnostics();
    } else {
        trace.format = TraceFormat::events;
        FixtureDiagnostics fdiag;
        trace.events = read_post_events(path, &fdiag);
        if (warnings)
            warnings->insert(warnings->end(), fdiag.warnings.begin(),
                             fdiag.warnings.end());
    }
    return trace;
}

} // namespace postwatch
