#include "postwatch/synth.hpp"

#include "postwatch/detector.hpp"
#include "postwatch/pcap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace postwatch::synth {

uint64_t Rng::uniform_u64(uint64_t n) {
    if (n == 0)
        return 0;
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    return lo + int64_t(uniform_u64(uint64_t(hi - lo) + 1));
}

double Rng::uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    // u1 in (0,1] so the log is finite.
    double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
}

double Rng::lognormal(double mu, double sigma) {
    return std::exp(mu + sigma * normal());
}

namespace {

using nlohmann::json;

constexpr uint64_t kBenignSeedBit = 1ull << 63;

MacAddr make_mac(uint8_t a, uint8_t b, uint32_t idx) {
    return {a, b, uint8_t(idx >> 24), uint8_t(idx >> 16), uint8_t(idx >> 8),
            uint8_t(idx)};
}

uint64_t nonneg_round(double v) {
    if (!(v > 0))
        return 0;
    return uint64_t(std::llround(v));
}

// First triple at squared distance <= spread_sq from the cluster centroid.
TripleVector sample_first_triple(Rng& rng, const std::array<double, 3>& c,
                                 double spread_sq) {
    auto rounded = [&c]() {
        return TripleVector{nonneg_round(c[0]), nonneg_round(c[1]),
                            nonneg_round(c[2])};
    };
    int64_t r = int64_t(std::floor(std::sqrt(std::max(0.0, spread_sq))));
    if (r == 0)
        return rounded();
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::array<int64_t, 3> off{rng.uniform_int(-r, r),
                                   rng.uniform_int(-r, r),
                                   rng.uniform_int(-r, r)};
        TripleVector t{nonneg_round(c[0] + double(off[0])),
                       nonneg_round(c[1] + double(off[1])),
                       nonneg_round(c[2] + double(off[2]))};
        if (distance_sq(t, c) <= spread_sq)
            return t;
    }
    return rounded(); // unsatisfiable spread after rounding
}

uint64_t sample_follow_up(Rng& rng, const std::array<double, 3>& c,
                          double spread_sq, uint64_t post_index) {
    int64_t r = int64_t(std::floor(std::sqrt(std::max(0.0, spread_sq))));
    double base = c[post_index % 3];
    return nonneg_round(base + double(r ? rng.uniform_int(-r, r) : 0));
}

void require(bool cond, const std::string& origin, const std::string& msg) {
    if (!cond)
        throw std::runtime_error("synth spec " + origin + ": " + msg);
}

} // namespace

SynthSpec SynthSpec::from_json_text(const std::string& text,
                                    const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error("synth spec " + origin + ": " + e.what());
    }
    SynthSpec spec;
    spec.seed = j.value("seed", uint64_t(0));
    if (j.contains("family_clusters")) {
        require(j["family_clusters"].is_array(), origin,
                "family_clusters must be an array");
        for (const auto& cj : j["family_clusters"]) {
            ClusterSpec c;
            require(cj.contains("family") && cj["family"].is_string(), origin,
                    "cluster needs a family name");
            c.family = cj["family"].get<std::string>();
            require(cj.contains("centroid") && cj["centroid"].is_array() &&
                        cj["centroid"].size() == 3,
                    origin, "cluster centroid must have 3 components");
            for (size_t i = 0; i < 3; ++i)
                c.centroid[i] = cj["centroid"][i].get<double>();
            c.spread_sq = cj.value("spread_sq", 0.0);
            require(c.spread_sq >= 0, origin, "spread_sq must be >= 0");
            c.traces = cj.value("traces", uint64_t(0));
            c.posts_per_trace = cj.value("posts_per_trace", uint64_t(3));
            require(c.traces == 0 || c.posts_per_trace >= 3, origin,
                    "posts_per_trace must be >= 3");
            spec.clusters.push_back(std::move(c));
        }
    }
    if (j.contains("benign")) {
        const json& bj = j["benign"];
        spec.benign.keys = bj.value("keys", uint64_t(0));
        if (bj.contains("posts_per_key")) {
            spec.benign.posts_per_key_min =
                bj["posts_per_key"].value("min", uint64_t(1));
            spec.benign.posts_per_key_max =
                bj["posts_per_key"].value("max", uint64_t(1));
        }
        require(spec.benign.posts_per_key_min >= 1 &&
                    spec.benign.posts_per_key_min <=
                        spec.benign.posts_per_key_max,
                origin, "posts_per_key needs 1 <= min <= max");
        if (bj.contains("size_lognormal")) {
            spec.benign.lognormal_mu = bj["size_lognormal"].value("mu", 6.0);
            spec.benign.lognormal_sigma =
                bj["size_lognormal"].value("sigma", 1.0);
        }
        require(spec.benign.lognormal_sigma >= 0, origin,
                "size_lognormal.sigma must be >= 0");
    }
    return spec;
}

SynthSpec SynthSpec::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read synth spec: " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return from_json_text(text, path);
}

std::vector<TraceSet> generate(const SynthSpec& spec) {
    std::vector<TraceSet> traces;
    uint64_t trace_index = 0;
    for (const auto& cluster : spec.clusters) {
        for (uint64_t k = 0; k < cluster.traces; ++k, ++trace_index) {
            Rng rng(spec.seed ^ trace_index);
            TraceSet trace;
            trace.family = cluster.family;
            trace.format = TraceFormat::events;
            trace.origin = "synth:" + cluster.family + ":" +
                           std::to_string(trace_index);
            std::string key = "c2-" + std::to_string(trace_index) + "." +
                              cluster.family + ".test";
            double t0 = 1.6e9 + double(trace_index) * 1000.0;
            TripleVector first =
                sample_first_triple(rng, cluster.centroid, cluster.spread_sq);
            std::vector<uint64_t> sizes{first.s1, first.s2, first.s3};
            for (uint64_t p = 3; p < cluster.posts_per_trace; ++p)
                sizes.push_back(sample_follow_up(rng, cluster.centroid,
                                                 cluster.spread_sq, p));
            for (size_t p = 0; p < sizes.size(); ++p)
                trace.events.push_back(
                    {key, sizes[p], t0 + double(p) * 1.0});
            traces.push_back(std::move(trace));
        }
    }
    if (spec.benign.keys > 0) {
        TraceSet benign;
        benign.family.clear();
        benign.format = TraceFormat::events;
        benign.origin = "synth:benign";
        for (uint64_t i = 0; i < spec.benign.keys; ++i) {
            Rng rng(spec.seed ^ (kBenignSeedBit | i));
            std::string key = "www" + std::to_string(i) + ".example";
            uint64_t posts = uint64_t(
                rng.uniform_int(int64_t(spec.benign.posts_per_key_min),
                                int64_t(spec.benign.posts_per_key_max)));
            for (uint64_t p = 0; p < posts; ++p) {
                uint64_t size = nonneg_round(rng.lognormal(
                    spec.benign.lognormal_mu, spec.benign.lognormal_sigma));
                // unique, interleaving timestamps across keys
                double t = 1.7e9 + double(p) * double(spec.benign.keys) +
                           double(i);
                benign.events.push_back({key, size, t});
            }
        }
        std::stable_sort(benign.events.begin(), benign.events.end(),
                         [](const PostEvent& a, const PostEvent& b) {
                             return a.t < b.t;
                         });
        traces.push_back(std::move(benign));
    }
    return traces;
}

namespace {

PacketRecord base_packet(const ConnectionSpec& c, bool from_client, double t) {
    PacketRecord p;
    p.parse_ok = true;
    p.has_ipv4 = true;
    p.has_tcp = true;
    double sec = std::floor(t);
    p.ts_sec = uint32_t(sec);
    p.ts_usec = uint32_t(std::llround((t - sec) * 1e6));
    if (p.ts_usec >= 1000000) {
        p.ts_usec -= 1000000;
        ++p.ts_sec;
    }
    if (from_client) {
        p.eth_src = c.client_mac;
        p.eth_dst = c.server_mac;
        p.src_ip = c.client_ip;
        p.dst_ip = c.server_ip;
        p.src_port = c.client_port;
        p.dst_port = 80;
    } else {
        p.eth_src = c.server_mac;
        p.eth_dst = c.client_mac;
        p.src_ip = c.server_ip;
        p.dst_ip = c.client_ip;
        p.src_port = 80;
        p.dst_port = c.client_port;
    }
    return p;
}

} // namespace

void append_http_connection(std::vector<PacketRecord>& out,
                            const ConnectionSpec& c, size_t segment_bytes) {
    if (segment_bytes == 0)
        segment_bytes = 1000;
    uint32_t cseq = c.client_isn;
    uint32_t sseq = c.server_isn;
    double t = c.t0 - 0.010;

    PacketRecord syn = base_packet(c, true, t);
    syn.tcp_flags = tcpflag::syn;
    syn.tcp_seq = cseq;
    out.push_back(syn);
    cseq += 1;

    PacketRecord synack = base_packet(c, false, t + 0.001);
    synack.tcp_flags = tcpflag::syn | tcpflag::ack;
    synack.tcp_seq = sseq;
    out.push_back(synack);
    sseq += 1;

    PacketRecord ack = base_packet(c, true, t + 0.002);
    ack.tcp_flags = tcpflag::ack;
    ack.tcp_seq = cseq;
    out.push_back(ack);

    static const std::string response =
        "HTTP/1.1 200 OK\r\nContent-Length: 0\r\n\r\n";
    for (size_t i = 0; i < c.post_sizes.size(); ++i) {
        double pt = c.t0 + double(i) * c.dt;
        std::string head = "POST /main.php HTTP/1.1\r\n";
        if (!c.host.empty())
            head += "Host: " + c.host + "\r\n";
        head += "Content-Length: " + std::to_string(c.post_sizes[i]) +
                "\r\n\r\n";
        Bytes request(head.begin(), head.end());
        for (uint64_t b = 0; b < c.post_sizes[i]; ++b)
            request.push_back(uint8_t('a' + (b % 26)));

        size_t off = 0;
        size_t seg_index = 0;
        while (off < request.size()) {
            size_t n = std::min(segment_bytes, request.size() - off);
            PacketRecord data =
                base_packet(c, true, pt + double(seg_index) * 1e-4);
            data.tcp_seq = cseq;
            data.tcp_flags = tcpflag::ack;
            if (off + n == request.size())
                data.tcp_flags |= tcpflag::psh;
            data.payload.assign(request.begin() + long(off),
                                request.begin() + long(off + n));
            out.push_back(std::move(data));
            cseq += uint32_t(n);
            off += n;
            ++seg_index;
        }

        PacketRecord resp = base_packet(c, false, pt + c.dt * 0.5);
        resp.tcp_seq = sseq;
        resp.tcp_flags = tcpflag::ack | tcpflag::psh;
        resp.payload.assign(response.begin(), response.end());
        out.push_back(std::move(resp));
        sseq += uint32_t(response.size());
    }

    double tend = c.t0 + double(c.post_sizes.size()) * c.dt;
    PacketRecord fin = base_packet(c, true, tend);
    fin.tcp_flags = tcpflag::fin | tcpflag::ack;
    fin.tcp_seq = cseq;
    out.push_back(fin);

    PacketRecord finack = base_packet(c, false, tend + 0.001);
    finack.tcp_flags = tcpflag::fin | tcpflag::ack;
    finack.tcp_seq = sseq;
    out.push_back(finack);

    PacketRecord lastack = base_packet(c, true, tend + 0.002);
    lastack.tcp_flags = tcpflag::ack;
    lastack.tcp_seq = cseq + 1;
    out.push_back(lastack);
}

ConnectionSpec endpoints_for(const TraceSet& trace, size_t trace_index,
                             size_t conn_index, const std::string& key) {
    ConnectionSpec c;
    uint32_t t = uint32_t(trace_index);
    uint32_t k = uint32_t(conn_index);
    if (trace.family.empty()) {
        c.client_ip = 0x0A010000u + 2 + k;        // 10.1.0.0/16 clients
        c.server_ip = 0xC6120000u + (k & 0xFFFF); // 198.18.0.0/16 servers
        c.client_mac = make_mac(0x02, 0x10, k + 2);
        c.server_mac = make_mac(0x02, 0x20, k + 2);
    } else {
        c.client_ip = 0x0A000000u + 2 + t;        // 10.0.0.0/16 victims
        c.server_ip = 0xC6130000u + (t & 0xFFFF); // 198.19.0.0/16 C&C
        c.client_mac = make_mac(0x02, 0x00, t + 2);
        c.server_mac = make_mac(0x02, 0xFF, t + 2);
    }
    c.client_port = uint16_t(49152 + (conn_index % 16000));
    c.host = key;
    return c;
}

std::vector<PacketRecord> render_packets(const TraceSet& trace,
                                         size_t trace_index,
                                         const RenderOptions& opt,
                                         uint64_t seed) {
    // Group events per key, one connection per key, ordered by first use.
    std::vector<std::string> key_order;
    std::map<std::string, std::vector<const PostEvent*>> by_key;
    for (const auto& ev : trace.events) {
        auto [it, inserted] = by_key.try_emplace(ev.server_key);
        if (inserted)
            key_order.push_back(ev.server_key);
        it->second.push_back(&ev);
    }
    std::vector<PacketRecord> out;
    std::vector<std::pair<size_t, size_t>> conn_spans; // [begin, end) indices
    size_t conn_index = 0;
    for (const auto& key : key_order) {
        const auto& events = by_key[key];
        ConnectionSpec c = endpoints_for(trace, trace_index, conn_index, key);
        c.t0 = events.front()->t;
        for (const auto* ev : events)
            c.post_sizes.push_back(ev->size);
        size_t begin = out.size();
        append_http_connection(out, c, opt.segment_bytes);
        conn_spans.emplace_back(begin, out.size());
        ++conn_index;
    }
    if (opt.shuffle) {
        // Permute each connection's client data segments among their own
        // slots; the handshake stays ahead of them so the stream base is
        // always anchored before data arrives.
        Rng rng(seed ^ (uint64_t(trace_index) * 0x9E3779B97F4A7C15ull) ^
                0x72656E64ull);
        for (const auto& [begin, end] : conn_spans) {
            std::vector<size_t> data_idx;
            for (size_t i = begin; i < end; ++i)
                if (out[i].dst_port == 80 && !out[i].payload.empty())
                    data_idx.push_back(i);
            for (size_t i = data_idx.size(); i > 1; --i) {
                size_t j = rng.uniform_u64(i);
                std::swap(out[data_idx[i - 1]], out[data_idx[j]]);
            }
        }
    }
    return out;
}

void render_pcap(const TraceSet& trace, size_t trace_index,
                 const std::string& path, const RenderOptions& opt,
                 uint64_t seed) {
    auto packets = render_packets(trace, trace_index, opt, seed);
    PcapWriter writer(path);
    for (const auto& pkt : packets)
        writer.write_packet(pkt);
    writer.close();
}

} // namespace postwatch::synth
