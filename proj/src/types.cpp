#include "postwatch/types.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace postwatch {

std::string ipv4_to_string(uint32_t ip) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", (ip >> 24) & 0xff,
                  (ip >> 16) & 0xff, (ip >> 8) & 0xff, ip & 0xff);
    return buf;
}

std::optional<uint32_t> parse_ipv4(const std::string& dotted) {
    unsigned a, b, c, d;
    char tail;
    if (std::sscanf(dotted.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &tail) != 4)
        return std::nullopt;
    if (a > 255 || b > 255 || c > 255 || d > 255)
        return std::nullopt;
    return (a << 24) | (b << 16) | (c << 8) | d;
}

std::string mac_to_string(const MacAddr& mac) {
    char buf[18];
    std::snprintf(buf, sizeof(buf), "%02x:%02x:%02x:%02x:%02x:%02x", mac[0],
                  mac[1], mac[2], mac[3], mac[4], mac[5]);
    return buf;
}

std::optional<MacAddr> parse_mac(const std::string& text) {
    MacAddr mac{};
    unsigned v[6];
    char tail;
    if (std::sscanf(text.c_str(), "%x:%x:%x:%x:%x:%x%c", &v[0], &v[1], &v[2],
                    &v[3], &v[4], &v[5], &tail) != 6)
        return std::nullopt;
    for (int i = 0; i < 6; ++i) {
        if (v[i] > 255)
            return std::nullopt;
        mac[i] = uint8_t(v[i]);
    }
    return mac;
}

std::string normalize_server_key(std::string key) {
    for (auto& ch : key)
        ch = char(std::tolower(static_cast<unsigned char>(ch)));
    // Host headers may carry a :port suffix; the key is the bare name.
    auto colon = key.rfind(':');
    if (colon != std::string::npos &&
        key.find_first_not_of("0123456789", colon + 1) == std::string::npos &&
        colon + 1 < key.size())
        key.erase(colon);
    return key;
}

uint64_t fnv1a64(const uint8_t* data, size_t len) {
    uint64_t h = 1469598103934665603ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read file: " + path);
    uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        auto n = size_t(in.gcount());
        for (size_t i = 0; i < n; ++i) {
            h ^= uint8_t(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

} // namespace postwatch
