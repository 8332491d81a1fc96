#ifndef POSTWATCH_FLOW_ENGINE_HPP
#define POSTWATCH_FLOW_ENGINE_HPP

#include "postwatch/detector.hpp"
#include "postwatch/reassembly.hpp"
#include "postwatch/tracker.hpp"
#include "postwatch/types.hpp"

#include <iosfwd>
#include <map>
#include <span>

namespace postwatch {

// Simulated flow-table entry. Block rules are installed in bidirectional
// pairs: one matching the hostile IP as destination, one as source.
struct FlowRule {
    uint32_t match_ip = 0;
    bool match_src = false; // false: match dst_ip, true: match src_ip
    int priority = 100;
    uint64_t installed_at_pkt = 0;
    std::string reason; // verdict summary, or "preblocked"
    uint64_t packets = 0;
    uint64_t bytes = 0;
};

inline constexpr int kBlockPriority = 100;
inline constexpr int kL2Priority = 1; // implicit learning-switch default

struct SwitchState {
    std::map<MacAddr, uint16_t> mac_table;
    std::vector<FlowRule> flow_table;

    bool has_block_for(uint32_t ip) const;
    std::string dump() const; // deterministic text rendering
};

// Appends the pair at block priority; re-installing an existing pair is a
// no-op (idempotent).
void install_rules(SwitchState& sw, std::span<const FlowRule> rules);

// Bidirectional pair for one hostile server IP.
std::vector<FlowRule> block_pair(uint32_t server_ip, const std::string& reason,
                                 uint64_t pkt_index);

struct ControllerDiagnostics {
    uint64_t escalated = 0; // packets passing all four checks
    uint64_t posts_seen = 0;
    uint64_t triples_checked = 0;
    uint64_t malicious_verdicts = 0;
};

// The controller application: check pipeline feeding reassembly, the
// per-server tracker and the detector. Owns all models.
class Controller {
  public:
    explicit Controller(std::vector<FamilyModel> models);

    // Four escalation checks: parses, TCP, destination port 80, payload
    // bytes present. A packet failing any is never inspected.
    static bool should_inspect(const PacketRecord& pkt);

    // Runs the detection pipeline; returns block rules (possibly empty)
    // for a confirmed C&C server. The triggering packet itself is not
    // retroactively dropped.
    std::vector<FlowRule> inspect(const PacketRecord& pkt, uint64_t pkt_index);

    const ControllerDiagnostics& diagnostics() const { return diag_; }
    const std::vector<Verdict>& verdicts() const { return verdicts_; }

  private:
    std::vector<FamilyModel> models_;
    Reassembler reassembler_;
    FeatureTracker tracker_;
    ControllerDiagnostics diag_;
    std::vector<Verdict> verdicts_;
};

struct Decision {
    enum class Action { forward, flood, drop } action = Action::flood;
    uint16_t out_port = 0;   // meaningful for forward
    std::string note;        // matched rule reason / install event
    size_t rules_installed = 0;

    const char* action_name() const;
};

// One switch + one controller, packets processed serially (deterministic
// replay). Matching drop rules win over L2 forwarding; escalation happens
// alongside forwarding, never instead of it.
class SdnSimulation {
  public:
    explicit SdnSimulation(std::vector<FamilyModel> models);

    void preblock(uint32_t server_ip);
    Decision handle_packet(const PacketRecord& pkt, uint16_t in_port);

    const SwitchState& switch_state() const { return switch_; }
    const Controller& controller() const { return controller_; }
    uint64_t packets_processed() const { return pkt_index_; }

  private:
    SwitchState switch_;
    Controller controller_;
    uint64_t pkt_index_ = 0;
};

// ---- replay driver ----

// Text lines `mac port`; `#` comments ignored.
std::map<MacAddr, uint16_t> read_ports_file(const std::string& path);

struct SimulationSummary {
    uint64_t packets = 0;
    uint64_t forwarded = 0;
    uint64_t flooded = 0;
    uint64_t dropped = 0;
    uint64_t rules_installed = 0;
    uint64_t unmapped_src_macs = 0;
};

// Replays a capture, writing one decision row per packet:
// `pkt_index,action,rule_reason`.
SimulationSummary run_simulation(const std::string& pcap_path,
                                 const std::map<MacAddr, uint16_t>& ports,
                                 SdnSimulation& sim, std::ostream& decision_log);

} // namespace postwatch

#endif
