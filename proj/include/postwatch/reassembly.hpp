#ifndef POSTWATCH_REASSEMBLY_HPP
#define POSTWATCH_REASSEMBLY_HPP

#include "postwatch/types.hpp"

#include <map>
#include <memory>
#include <unordered_map>

namespace postwatch {

struct ReassemblyLimits {
    size_t buffer_cap = 1 << 20; // per-flow out-of-order byte budget
    size_t head_cap = 64 << 10;  // request head size bound
};

struct ReassemblyDiagnostics {
    uint64_t flows_seen = 0;
    uint64_t flows_abandoned = 0; // closed or flushed mid-request
    uint64_t flows_over_buffer_cap = 0;
    uint64_t flows_head_too_big = 0;
    uint64_t flows_bad_http = 0;
    uint64_t bytes_discarded = 0;
    uint64_t duplicate_segments = 0;
    uint64_t requests_completed = 0;
    uint64_t posts_emitted = 0;
};

// Reconstructs outgoing HTTP requests from client->server port-80 TCP
// segments and emits one PostEvent per completed POST. Sequence-number
// based: out-of-order and duplicated segments are handled (first copy
// wins); window tracking, SACK and timestamps are not modeled. Event
// timestamps are the max packet timestamp over the segments that carried
// the request, so any arrival order yields identical events.
class Reassembler {
  public:
    explicit Reassembler(ReassemblyLimits limits = {});
    ~Reassembler();
    Reassembler(Reassembler&&) noexcept;
    Reassembler& operator=(Reassembler&&) noexcept;

    // Packets that are not parseable TCP to port 80 are ignored.
    std::vector<PostEvent> feed(const PacketRecord& pkt);

    // End of input: incomplete requests are dropped (never emitted) and
    // counted. Returns the final diagnostics.
    const ReassemblyDiagnostics& flush();

    const ReassemblyDiagnostics& diagnostics() const { return diag_; }

  private:
    struct Flow;
    void insert_segment(Flow& f, int64_t off, const uint8_t* data, size_t len,
                        double ts);
    void drain(Flow& f, std::vector<PostEvent>& out);
    void adopt_stash(Flow& f);
    void maybe_commit_base(Flow& f);
    void parser_feed(Flow& f, const uint8_t* data, size_t len, double ts,
                     std::vector<PostEvent>& out);
    bool parse_head(Flow& f);
    void complete_request(Flow& f, std::vector<PostEvent>& out, uint64_t size);
    void finalize_close(Flow& f, std::vector<PostEvent>& out);
    void kill_flow(Flow& f, uint64_t ReassemblyDiagnostics::*counter);

    ReassemblyLimits limits_;
    ReassemblyDiagnostics diag_;
    std::unordered_map<FlowKey, std::unique_ptr<Flow>, FlowKeyHash> flows_;
};

} // namespace postwatch

#endif
