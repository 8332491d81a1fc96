#include "postwatch/flow_engine.hpp"

#include "postwatch/pcap.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace postwatch {

namespace {

const MacAddr kBroadcast{0xff, 0xff, 0xff, 0xff, 0xff, 0xff};

std::string verdict_note(const Verdict& v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v.distance_sq.value_or(0.0));
    return "family=" + v.family + " d2=" + buf + " key=" + v.server_key;
}

} // namespace

bool SwitchState::has_block_for(uint32_t ip) const {
    return std::any_of(flow_table.begin(), flow_table.end(),
                       [ip](const FlowRule& r) { return r.match_ip == ip; });
}

std::string SwitchState::dump() const {
    std::ostringstream out;
    out << "flow_table entries=" << flow_table.size() << "\n";
    for (size_t i = 0; i < flow_table.size(); ++i) {
        const FlowRule& r = flow_table[i];
        out << "  " << i << ": drop "
            << (r.match_src ? "src_ip=" : "dst_ip=")
            << ipv4_to_string(r.match_ip) << " priority=" << r.priority
            << " packets=" << r.packets << " bytes=" << r.bytes
            << " installed_at_pkt=" << r.installed_at_pkt << " reason=\""
            << r.reason << "\"\n";
    }
    out << "mac_table entries=" << mac_table.size() << "\n";
    for (const auto& [mac, port] : mac_table)
        out << "  " << mac_to_string(mac) << " -> port " << port << "\n";
    return out.str();
}

std::vector<FlowRule> block_pair(uint32_t server_ip, const std::string& reason,
                                 uint64_t pkt_index) {
    FlowRule to_server;
    to_server.match_ip = server_ip;
    to_server.match_src = false;
    to_server.priority = kBlockPriority;
    to_server.installed_at_pkt = pkt_index;
    to_server.reason = reason;
    FlowRule from_server = to_server;
    from_server.match_src = true;
    return {to_server, from_server};
}

void install_rules(SwitchState& sw, std::span<const FlowRule> rules) {
    for (const auto& rule : rules) {
        bool exists = std::any_of(
            sw.flow_table.begin(), sw.flow_table.end(),
            [&rule](const FlowRule& r) {
                return r.match_ip == rule.match_ip &&
                       r.match_src == rule.match_src;
            });
        if (!exists)
            sw.flow_table.push_back(rule);
    }
}

Controller::Controller(std::vector<FamilyModel> models)
    : models_(std::move(models)) {}

bool Controller::should_inspect(const PacketRecord& pkt) {
    return pkt.parse_ok && pkt.has_tcp && pkt.dst_port == 80 &&
           !pkt.payload.empty();
}

std::vector<FlowRule> Controller::inspect(const PacketRecord& pkt,
                                          uint64_t pkt_index) {
    ++diag_.escalated;
    std::vector<FlowRule> rules;
    for (const PostEvent& ev : reassembler_.feed(pkt)) {
        ++diag_.posts_seen;
        auto triple = tracker_.observe(ev);
        if (!triple)
            continue;
        ++diag_.triples_checked;
        Verdict v = classify(*triple, models_);
        v.server_key = ev.server_key;
        v.t = ev.t;
        if (!v.malicious)
            continue;
        ++diag_.malicious_verdicts;
        tracker_.mark_flagged(ev.server_key);
        verdicts_.push_back(v);
        // Block by the hostile server's address even when the key was a
        // domain: the rule uses the triggering packet's destination IP.
        auto pair = block_pair(pkt.dst_ip, verdict_note(v), pkt_index);
        rules.insert(rules.end(), pair.begin(), pair.end());
    }
    return rules;
}

SdnSimulation::SdnSimulation(std::vector<FamilyModel> models)
    : controller_(std::move(models)) {}

void SdnSimulation::preblock(uint32_t server_ip) {
    auto pair = block_pair(server_ip, "preblocked", 0);
    install_rules(switch_, pair);
}

Decision SdnSimulation::handle_packet(const PacketRecord& pkt,
                                      uint16_t in_port) {
    const uint64_t index = pkt_index_++;
    Decision d;

    // 1. Installed drop rules shadow everything else.
    if (pkt.parse_ok && pkt.has_ipv4) {
        for (auto& rule : switch_.flow_table) {
            uint32_t field = rule.match_src ? pkt.src_ip : pkt.dst_ip;
            if (field != rule.match_ip)
                continue;
            ++rule.packets;
            rule.bytes += pkt.frame_len ? pkt.frame_len
                                        : uint64_t(pkt.payload.size());
            d.action = Decision::Action::drop;
            d.note = "block " + ipv4_to_string(rule.match_ip);
            return d;
        }
    }

    // 2. L2 learning switch.
    if (pkt.parse_ok)
        switch_.mac_table[pkt.eth_src] = in_port;
    auto dst = pkt.parse_ok ? switch_.mac_table.find(pkt.eth_dst)
                            : switch_.mac_table.end();
    if (pkt.parse_ok && pkt.eth_dst != kBroadcast &&
        dst != switch_.mac_table.end()) {
        d.action = Decision::Action::forward;
        d.out_port = dst->second;
    } else {
        d.action = Decision::Action::flood;
    }

    // 3. Escalate alongside forwarding; a failed check skips inspection,
    //    never the forwarding itself.
    if (Controller::should_inspect(pkt)) {
        auto rules = controller_.inspect(pkt, index);
        if (!rules.empty()) {
            size_t before = switch_.flow_table.size();
            install_rules(switch_, rules);
            d.rules_installed = switch_.flow_table.size() - before;
            if (d.rules_installed > 0)
                d.note = "install " + ipv4_to_string(rules.front().match_ip) +
                         " " + rules.front().reason;
        }
    }
    return d;
}

const char* Decision::action_name() const {
    switch (action) {
    case Action::forward:
        return "forward";
    case Action::flood:
        return "flood";
    case Action::drop:
        return "drop";
    }
    return "?";
}

std::map<MacAddr, uint16_t> read_ports_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read ports file: " + path);
    std::map<MacAddr, uint16_t> ports;
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
        std::string mac_text;
        unsigned port;
        if (!(ls >> mac_text >> port) || port > 65535)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": ports line needs `mac port`");
        auto mac = parse_mac(mac_text);
        if (!mac)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": bad MAC address");
        ports[*mac] = uint16_t(port);
    }
    return ports;
}

SimulationSummary run_simulation(const std::string& pcap_path,
                                 const std::map<MacAddr, uint16_t>& ports,
                                 SdnSimulation& sim,
                                 std::ostream& decision_log) {
    SimulationSummary summary;
    decision_log << "pkt_index,action,rule_reason\n";
    PcapReader reader(pcap_path);
    while (auto pkt = reader.next()) {
        uint16_t in_port = 0;
        auto it = ports.find(pkt->eth_src);
        if (it != ports.end())
            in_port = it->second;
        else
            ++summary.unmapped_src_macs;
        Decision d = sim.handle_packet(*pkt, in_port);
        switch (d.action) {
        case Decision::Action::forward:
            ++summary.forwarded;
            break;
        case Decision::Action::flood:
            ++summary.flooded;
            break;
        case Decision::Action::drop:
            ++summary.dropped;
            break;
        }
        summary.rules_installed += d.rules_installed;
        decision_log << summary.packets << "," << d.action_name() << ","
                     << d.note << "\n";
        ++summary.packets;
    }
    return summary;
}

} // namespace postwatch
