#ifndef POSTWATCH_TYPES_HPP
#define POSTWATCH_TYPES_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace postwatch {

using Bytes = std::vector<uint8_t>;
using MacAddr = std::array<uint8_t, 6>;

// TCP flag bits as they appear in the header's flags octet.
namespace tcpflag {
inline constexpr uint8_t fin = 0x01;
inline constexpr uint8_t syn = 0x02;
inline constexpr uint8_t rst = 0x04;
inline constexpr uint8_t psh = 0x08;
inline constexpr uint8_t ack = 0x10;
} // namespace tcpflag

// One captured frame. parse_ok=false means the frame was truncated or
// otherwise unparseable and no protocol field is meaningful. has_ipv4 /
// has_tcp gate the network and transport fields.
struct PacketRecord {
    uint32_t ts_sec = 0;
    uint32_t ts_usec = 0;
    uint32_t frame_len = 0; // captured frame bytes (0 for hand-built packets)
    bool parse_ok = false;
    bool has_ipv4 = false;
    bool has_tcp = false;
    MacAddr eth_src{};
    MacAddr eth_dst{};
    uint32_t src_ip = 0; // host byte order
    uint32_t dst_ip = 0;
    uint16_t src_port = 0;
    uint16_t dst_port = 0;
    uint8_t tcp_flags = 0;
    uint32_t tcp_seq = 0;
    Bytes payload; // TCP payload only

    double timestamp() const { return double(ts_sec) + double(ts_usec) * 1e-6; }
};

// One reassembled outgoing HTTP POST.
struct PostEvent {
    std::string server_key; // lowercased Host domain, else dotted-quad dst IP
    uint64_t size = 0;      // request content size in bytes
    double t = 0.0;         // seconds since epoch
};

// Sizes of three consecutive POSTs to one server key, oldest first.
struct TripleVector {
    uint64_t s1 = 0;
    uint64_t s2 = 0;
    uint64_t s3 = 0;

    std::array<double, 3> as_doubles() const {
        return {double(s1), double(s2), double(s3)};
    }
    bool operator==(const TripleVector&) const = default;
};

// Direction-sensitive TCP flow identity (client -> server).
struct FlowKey {
    uint32_t src_ip = 0;
    uint32_t dst_ip = 0;
    uint16_t src_port = 0;
    uint16_t dst_port = 0;

    auto operator<=>(const FlowKey&) const = default;
};

struct FlowKeyHash {
    size_t operator()(const FlowKey& k) const {
        uint64_t h = 1469598103934665603ull;
        auto mix = [&h](uint64_t v) {
            h ^= v;
            h *= 1099511628211ull;
        };
        mix(k.src_ip);
        mix(k.dst_ip);
        mix(uint64_t(k.src_port) << 16 | k.dst_port);
        return size_t(h);
    }
};

// ---- small formatting / parsing helpers ----

std::string ipv4_to_string(uint32_t ip_host_order);
std::optional<uint32_t> parse_ipv4(const std::string& dotted);

std::string mac_to_string(const MacAddr& mac);
std::optional<MacAddr> parse_mac(const std::string& text);

// Lowercases and strips any :port suffix; canonical form used as server key.
std::string normalize_server_key(std::string key);

// FNV-1a 64-bit, used for provenance digests of input files.
uint64_t fnv1a64(const uint8_t* data, size_t len);
uint64_t fnv1a64_file(const std::string& path); // throws on unreadable file

} // namespace postwatch

#endif
