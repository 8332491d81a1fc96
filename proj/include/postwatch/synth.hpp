#ifndef POSTWATCH_SYNTH_HPP
#define POSTWATCH_SYNTH_HPP

#include "postwatch/dataset.hpp"
#include "postwatch/types.hpp"

#include <random>
#include <span>

namespace postwatch::synth {

// Deterministic random source: mt19937_64 with hand-rolled samplers so the
// byte stream depends only on the engine, which the C++ standard pins down.
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }
    // Unbiased value in [0, n) by rejection.
    uint64_t uniform_u64(uint64_t n);
    int64_t uniform_int(int64_t lo, int64_t hi); // inclusive
    double uniform01();                          // [0, 1), 53-bit
    double normal();                             // Box-Muller
    double lognormal(double mu, double sigma);

  private:
    std::mt19937_64 eng_;
};

struct ClusterSpec {
    std::string family;
    std::array<double, 3> centroid{};
    double spread_sq = 0.0; // max squared distance of each first triple
    uint64_t traces = 0;
    uint64_t posts_per_trace = 3;
};

struct BenignSpec {
    uint64_t keys = 0;
    uint64_t posts_per_key_min = 1;
    uint64_t posts_per_key_max = 1;
    double lognormal_mu = 6.0;
    double lognormal_sigma = 1.0;
};

struct SynthSpec {
    uint64_t seed = 0;
    std::vector<ClusterSpec> clusters;
    BenignSpec benign;

    // Throws std::runtime_error on unreadable/invalid spec files.
    static SynthSpec from_json_file(const std::string& path);
    static SynthSpec from_json_text(const std::string& text,
                                    const std::string& origin);
};

// Malicious traces in cluster order (one TraceSet each, one C&C key per
// trace, first triple within spread_sq of the cluster centroid), then one
// benign TraceSet holding every benign key, events interleaved by time.
// Deterministic: trace k draws from seed XOR k, benign key i from
// seed XOR (i | 1<<63).
std::vector<TraceSet> generate(const SynthSpec& spec);

// ---- pcap rendering ----

struct ConnectionSpec {
    uint32_t client_ip = 0;
    MacAddr client_mac{};
    uint16_t client_port = 49152;
    uint32_t server_ip = 0;
    MacAddr server_mac{};
    std::string host; // Host header value; empty omits the header
    std::vector<uint64_t> post_sizes;
    double t0 = 0.0;
    double dt = 1.0; // spacing between consecutive POSTs
    uint32_t client_isn = 1000;
    uint32_t server_isn = 5000;
};

// Appends a full TCP connection: handshake, one POST per size (each
// followed by a minimal 200 response), then FIN teardown.
void append_http_connection(std::vector<PacketRecord>& out,
                            const ConnectionSpec& conn, size_t segment_bytes);

struct RenderOptions {
    size_t segment_bytes = 1000;
    bool shuffle = false; // permute client data segments (file order only)
};

// Deterministic per-trace endpoint assignment; exposed so fixtures built in
// tests line up with rendered captures.
ConnectionSpec endpoints_for(const TraceSet& trace, size_t trace_index,
                             size_t conn_index, const std::string& key);

std::vector<PacketRecord> render_packets(const TraceSet& trace,
                                         size_t trace_index,
                                         const RenderOptions& opt,
                                         uint64_t seed);
void render_pcap(const TraceSet& trace, size_t trace_index,
                 const std::string& path, const RenderOptions& opt,
                 uint64_t seed);

} // namespace postwatch::synth

#endif
