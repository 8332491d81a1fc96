#ifndef POSTWATCH_PCAP_HPP
#define POSTWATCH_PCAP_HPP

#include "postwatch/types.hpp"

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace postwatch {

// Classic libpcap layout only: 24-byte global header, 16-byte record
// headers, link type Ethernet. pcapng is out of scope.

struct PcapDiagnostics {
    uint64_t frames = 0;          // records yielded
    uint64_t ipv6_skipped = 0;    // IPv6 frames dropped from the stream
    uint64_t truncated = 0;       // records with parse_ok=false
    bool stopped_corrupt = false; // stream ended on a malformed record header
    std::string note;             // human-readable diagnostic for the above
};

// Streaming reader; yields frames in file order.
class PcapReader {
  public:
    explicit PcapReader(const std::string& path); // throws on unreadable /
                                                  // bad global header
    ~PcapReader();
    PcapReader(PcapReader&&) noexcept;
    PcapReader& operator=(PcapReader&&) noexcept;

    // Next frame, or nullopt at end of stream (including a corrupt-header
    // stop; check diagnostics()).
    std::optional<PacketRecord> next();

    const PcapDiagnostics& diagnostics() const { return diag_; }

  private:
    std::FILE* f_ = nullptr;
    bool swapped_ = false;
    bool done_ = false;
    PcapDiagnostics diag_;
};

// Convenience: whole file at once.
std::vector<PacketRecord> read_pcap(const std::string& path,
                                    PcapDiagnostics* diag = nullptr);

class PcapWriter {
  public:
    explicit PcapWriter(const std::string& path); // throws on open failure
    ~PcapWriter();

    // Raw Ethernet frame bytes.
    void write_frame(uint32_t ts_sec, uint32_t ts_usec, const Bytes& frame);
    // Builds Ethernet+IPv4+TCP from the record's fields.
    void write_packet(const PacketRecord& pkt);
    void close();

  private:
    std::FILE* f_ = nullptr;
};

// Ethernet/IPv4/TCP codec used by the writer and by synth.
Bytes encode_tcp_frame(const PacketRecord& pkt);
PacketRecord parse_frame(const Bytes& frame, uint32_t ts_sec, uint32_t ts_usec,
                         bool truncated, bool* is_ipv6 = nullptr);

} // namespace postwatch

#endif
