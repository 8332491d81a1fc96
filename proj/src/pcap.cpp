#include "postwatch/pcap.hpp"

#include <cstring>
#include <stdexcept>

namespace postwatch {

namespace {

constexpr uint32_t kMagicUsec = 0xA1B2C3D4u;
constexpr uint32_t kMagicUsecSwapped = 0xD4C3B2A1u;
constexpr uint32_t kLinkEthernet = 1;
constexpr uint32_t kMaxSaneFrame = 256 * 1024; // record-header sanity bound

uint32_t bswap32(uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

uint16_t load_be16(const uint8_t* p) { return uint16_t(p[0]) << 8 | p[1]; }
uint32_t load_be32(const uint8_t* p) {
    return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 |
           p[3];
}
void store_be16(uint8_t* p, uint16_t v) {
    p[0] = uint8_t(v >> 8);
    p[1] = uint8_t(v);
}
void store_be32(uint8_t* p, uint32_t v) {
    p[0] = uint8_t(v >> 24);
    p[1] = uint8_t(v >> 16);
    p[2] = uint8_t(v >> 8);
    p[3] = uint8_t(v);
}
void store_le16(uint8_t* p, uint16_t v) {
    p[0] = uint8_t(v);
    p[1] = uint8_t(v >> 8);
}
void store_le32(uint8_t* p, uint32_t v) {
    p[0] = uint8_t(v);
    p[1] = uint8_t(v >> 8);
    p[2] = uint8_t(v >> 16);
    p[3] = uint8_t(v >> 24);
}

// 16-bit one's-complement sum over a header block.
uint16_t inet_checksum(const uint8_t* data, size_t len) {
    uint32_t sum = 0;
    for (size_t i = 0; i + 1 < len; i += 2)
        sum += uint32_t(data[i]) << 8 | data[i + 1];
    if (len & 1)
        sum += uint32_t(data[len - 1]) << 8;
    while (sum >> 16)
        sum = (sum & 0xffff) + (sum >> 16);
    return uint16_t(~sum);
}

} // namespace

PcapReader::PcapReader(const std::string& path) {
    f_ = std::fopen(path.c_str(), "rb");
    if (!f_)
        throw std::runtime_error("cannot open pcap file: " + path);
    uint8_t hdr[24];
    if (std::fread(hdr, 1, 24, f_) != 24) {
        std::fclose(f_);
        f_ = nullptr;
        throw std::runtime_error("not a pcap file (short global header): " +
                                 path);
    }
    uint32_t magic;
    std::memcpy(&magic, hdr, 4);
    if (magic == kMagicUsec)
        swapped_ = false;
    else if (magic == kMagicUsecSwapped)
        swapped_ = true;
    else {
        std::fclose(f_);
        f_ = nullptr;
        throw std::runtime_error("not a pcap file (bad magic): " + path);
    }
    uint32_t network;
    std::memcpy(&network, hdr + 20, 4);
    if (swapped_)
        network = bswap32(network);
    if (network != kLinkEthernet) {
        std::fclose(f_);
        f_ = nullptr;
        throw std::runtime_error("unsupported pcap link type (want Ethernet): " +
                                 path);
    }
}

PcapReader::~PcapReader() {
    if (f_)
        std::fclose(f_);
}

PcapReader::PcapReader(PcapReader&& o) noexcept
    : f_(o.f_), swapped_(o.swapped_), done_(o.done_), diag_(std::move(o.diag_)) {
    o.f_ = nullptr;
}

PcapReader& PcapReader::operator=(PcapReader&& o) noexcept {
    if (this != &o) {
        if (f_)
            std::fclose(f_);
        f_ = o.f_;
        swapped_ = o.swapped_;
        done_ = o.done_;
        diag_ = std::move(o.diag_);
        o.f_ = nullptr;
    }
    return *this;
}

std::optional<PacketRecord> PcapReader::next() {
    while (!done_) {
        uint8_t rh[16];
        size_t got = std::fread(rh, 1, 16, f_);
        if (got == 0) { // clean end of file
            done_ = true;
            return std::nullopt;
        }
        if (got != 16) {
            diag_.stopped_corrupt = true;
            diag_.note = "short record header at end of file";
            done_ = true;
            return std::nullopt;
        }
        uint32_t ts_sec, ts_usec, incl_len, orig_len;
        std::memcpy(&ts_sec, rh, 4);
        std::memcpy(&ts_usec, rh + 4, 4);
        std::memcpy(&incl_len, rh + 8, 4);
        std::memcpy(&orig_len, rh + 12, 4);
        if (swapped_) {
            ts_sec = bswap32(ts_sec);
            ts_usec = bswap32(ts_usec);
            incl_len = bswap32(incl_len);
            orig_len = bswap32(orig_len);
        }
        if (incl_len > kMaxSaneFrame || incl_len > orig_len) {
            diag_.stopped_corrupt = true;
            diag_.note = "malformed record header (incl_len " +
                         std::to_string(incl_len) + ")";
            done_ = true;
            return std::nullopt;
        }
        Bytes frame(incl_len);
        if (incl_len > 0 && std::fread(frame.data(), 1, incl_len, f_) != incl_len) {
            diag_.stopped_corrupt = true;
            diag_.note = "record body shorter than declared incl_len";
            done_ = true;
            return std::nullopt;
        }
        bool is_ipv6 = false;
        PacketRecord rec =
            parse_frame(frame, ts_sec, ts_usec, incl_len < orig_len, &is_ipv6);
        if (is_ipv6) {
            ++diag_.ipv6_skipped;
            continue;
        }
        ++diag_.frames;
        if (!rec.parse_ok)
            ++diag_.truncated;
        return rec;
    }
    return std::nullopt;
}

std::vector<PacketRecord> read_pcap(const std::string& path,
                                    PcapDiagnostics* diag) {
    PcapReader rd(path);
    std::vector<PacketRecord> out;
    while (auto rec = rd.next())
        out.push_back(std::move(*rec));
    if (diag)
        *diag = rd.diagnostics();
    return out;
}

PcapWriter::PcapWriter(const std::string& path) {
    f_ = std::fopen(path.c_str(), "wb");
    if (!f_)
        throw std::runtime_error("cannot create pcap file: " + path);
    uint8_t hdr[24] = {};
    store_le32(hdr, kMagicUsec);
    store_le16(hdr + 4, 2);  // version 2.4
    store_le16(hdr + 6, 4);
    store_le32(hdr + 16, 65535); // snaplen
    store_le32(hdr + 20, kLinkEthernet);
    std::fwrite(hdr, 1, 24, f_);
}

PcapWriter::~PcapWriter() { close(); }

void PcapWriter::close() {
    if (f_) {
        std::fclose(f_);
        f_ = nullptr;
    }
}

void PcapWriter::write_frame(uint32_t ts_sec, uint32_t ts_usec,
                             const Bytes& frame) {
    uint8_t rh[16];
    store_le32(rh, ts_sec);
    store_le32(rh + 4, ts_usec);
    store_le32(rh + 8, uint32_t(frame.size()));
    store_le32(rh + 12, uint32_t(frame.size()));
    std::fwrite(rh, 1, 16, f_);
    if (!frame.empty())
        std::fwrite(frame.data(), 1, frame.size(), f_);
}

void PcapWriter::write_packet(const PacketRecord& pkt) {
    write_frame(pkt.ts_sec, pkt.ts_usec, encode_tcp_frame(pkt));
}

Bytes encode_tcp_frame(const PacketRecord& pkt) {
    const size_t ip_len = 20 + 20 + pkt.payload.size();
    Bytes frame(14 + ip_len);
    uint8_t* p = frame.data();
    // Ethernet
    std::memcpy(p, pkt.eth_dst.data(), 6);
    std::memcpy(p + 6, pkt.eth_src.data(), 6);
    store_be16(p + 12, 0x0800);
    // IPv4, no options
    uint8_t* ip = p + 14;
    ip[0] = 0x45;
    ip[1] = 0;
    store_be16(ip + 2, uint16_t(ip_len));
    store_be16(ip + 4, 0); // id
    store_be16(ip + 6, 0x4000); // DF
    ip[8] = 64; // ttl
    ip[9] = 6;  // TCP
    store_be16(ip + 10, 0);
    store_be32(ip + 12, pkt.src_ip);
    store_be32(ip + 16, pkt.dst_ip);
    store_be16(ip + 10, inet_checksum(ip, 20));
    // TCP, no options
    uint8_t* tcp = ip + 20;
    store_be16(tcp, pkt.src_port);
    store_be16(tcp + 2, pkt.dst_port);
    store_be32(tcp + 4, pkt.tcp_seq);
    store_be32(tcp + 8, 0); // ack number not modeled
    tcp[12] = 5 << 4;       // data offset
    tcp[13] = pkt.tcp_flags;
    store_be16(tcp + 14, 65535); // window
    store_be16(tcp + 16, 0);     // checksum left zero (not validated on read)
    store_be16(tcp + 18, 0);
    if (!pkt.payload.empty())
        std::memcpy(tcp + 20, pkt.payload.data(), pkt.payload.size());
    return frame;
}

PacketRecord parse_frame(const Bytes& frame, uint32_t ts_sec, uint32_t ts_usec,
                         bool truncated, bool* is_ipv6) {
    PacketRecord rec;
    rec.ts_sec = ts_sec;
    rec.ts_usec = ts_usec;
    rec.frame_len = uint32_t(frame.size());
    if (is_ipv6)
        *is_ipv6 = false;
    if (truncated || frame.size() < 14)
        return rec; // parse_ok stays false
    const uint8_t* p = frame.data();
    std::memcpy(rec.eth_dst.data(), p, 6);
    std::memcpy(rec.eth_src.data(), p + 6, 6);
    uint16_t ethertype = load_be16(p + 12);
    rec.parse_ok = true;
    if (ethertype == 0x86DD) {
        if (is_ipv6)
            *is_ipv6 = true;
        rec.parse_ok = false;
        return rec;
    }
    if (ethertype != 0x0800)
        return rec; // non-IP frame: L2 fields only
    const uint8_t* ip = p + 14;
    size_t avail = frame.size() - 14;
    if (avail < 20 || (ip[0] >> 4) != 4) {
        rec.parse_ok = false;
        return rec;
    }
    size_t ihl = size_t(ip[0] & 0x0f) * 4;
    size_t total_len = load_be16(ip + 2);
    if (ihl < 20 || avail < ihl || total_len < ihl || total_len > avail) {
        rec.parse_ok = false;
        return rec;
    }
    rec.has_ipv4 = true;
    rec.src_ip = load_be32(ip + 12);
    rec.dst_ip = load_be32(ip + 16);
    if (ip[9] != 6)
        return rec; // non-TCP: transport fields absent
    const uint8_t* tcp = ip + ihl;
    size_t tcp_avail = total_len - ihl;
    if (tcp_avail < 20) {
        rec.parse_ok = false;
        return rec;
    }
    size_t doff = size_t(tcp[12] >> 4) * 4;
    if (doff < 20 || doff > tcp_avail) {
        rec.parse_ok = false;
        return rec;
    }
    rec.has_tcp = true;
    rec.src_port = load_be16(tcp);
    rec.dst_port = load_be16(tcp + 2);
    rec.tcp_seq = load_be32(tcp + 4);
    rec.tcp_flags = tcp[13];
    rec.payload.assign(tcp + doff, tcp + tcp_avail);
    return rec;
}

} // namespace postwatch
