#include "postwatch/reassembly.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <string>

namespace postwatch {

namespace {

constexpr uint16_t kHttpPort = 80;

bool is_token_char(uint8_t c) {
    if (std::isalnum(c))
        return true;
    return std::strchr("!#$%&'*+-.^_`|~", c) != nullptr;
}

// Heuristic used when no SYN was seen (controller mode): a stream start
// looks like "METHOD SP ...".
bool looks_like_request_start(const Bytes& payload) {
    size_t n = std::min<size_t>(payload.size(), 16);
    for (size_t i = 0; i < n; ++i) {
        if (payload[i] == ' ')
            return i > 0;
        if (!is_token_char(payload[i]))
            return false;
    }
    return false;
}

// Serial (wrap-safe) difference a - b.
int32_t seq_diff(uint32_t a, uint32_t b) { return int32_t(a - b); }

std::string trim_ows(const std::string& s) {
    size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos)
        return "";
    size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    for (auto& c : s)
        c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

enum class HttpState {
    head,
    body_cl,
    chunk_size,
    chunk_data,
    chunk_data_end, // the CRLF after a chunk's data
    chunk_trailer,
    body_until_close,
};

} // namespace

struct Reassembler::Flow {
    struct Segment {
        Bytes data;
        double ts = 0.0; // timestamp of the packet that carried these bytes
    };
    struct Stashed {
        uint32_t seq = 0;
        Bytes data;
        double ts = 0.0;
    };

    FlowKey key;
    bool have_base = false;
    uint32_t base_seq = 0; // absolute seq of relative offset 0
    int64_t next_off = 0;  // next relative offset to consume
    std::map<int64_t, Segment> pending;
    size_t pending_bytes = 0;
    std::vector<Stashed> stash; // segments seen before the base was known
    size_t stash_bytes = 0;
    std::optional<uint32_t> stash_fin_end; // absolute seq just past FIN data
    std::optional<int64_t> fin_off;
    bool dead = false;
    bool closed = false;

    // current request parse
    HttpState state = HttpState::head;
    double req_max_ts = 0.0; // max segment ts over this request's bytes
    std::string head_buf;
    std::string method;
    std::string host;
    std::optional<uint64_t> content_length;
    bool chunked = false;
    uint64_t body_observed = 0;
    uint64_t chunk_remaining = 0;
    std::string line_buf;
    uint8_t crlf_need = 0;

    void reset_request() {
        state = HttpState::head;
        req_max_ts = 0.0;
        head_buf.clear();
        method.clear();
        host.clear();
        content_length.reset();
        chunked = false;
        body_observed = 0;
        chunk_remaining = 0;
        line_buf.clear();
        crlf_need = 0;
    }

    bool mid_request() const {
        return state != HttpState::head || !head_buf.empty();
    }
};

Reassembler::Reassembler(ReassemblyLimits limits) : limits_(limits) {}
Reassembler::~Reassembler() = default;
Reassembler::Reassembler(Reassembler&&) noexcept = default;
Reassembler& Reassembler::operator=(Reassembler&&) noexcept = default;

std::vector<PostEvent> Reassembler::feed(const PacketRecord& pkt) {
    std::vector<PostEvent> out;
    if (!(pkt.parse_ok && pkt.has_tcp && pkt.dst_port == kHttpPort))
        return out;
    FlowKey key{pkt.src_ip, pkt.dst_ip, pkt.src_port, pkt.dst_port};
    auto [it, inserted] = flows_.try_emplace(key);
    if (inserted) {
        it->second = std::make_unique<Flow>();
        it->second->key = key;
        ++diag_.flows_seen;
    }
    Flow& f = *it->second;
    if (f.dead || f.closed) {
        diag_.bytes_discarded += pkt.payload.size();
        return out;
    }
    const double ts = pkt.timestamp();

    if (pkt.tcp_flags & tcpflag::rst) {
        if (f.mid_request())
            ++diag_.flows_abandoned;
        diag_.bytes_discarded += f.pending_bytes + f.stash_bytes;
        f.pending.clear();
        f.pending_bytes = 0;
        f.stash.clear();
        f.stash_bytes = 0;
        f.closed = true;
        return out;
    }

    if ((pkt.tcp_flags & tcpflag::syn) && !f.have_base) {
        f.have_base = true;
        f.base_seq = pkt.tcp_seq + 1; // SYN occupies one sequence number
        adopt_stash(f);
    }

    if (!pkt.payload.empty()) {
        if (f.have_base) {
            insert_segment(f, seq_diff(pkt.tcp_seq, f.base_seq),
                           pkt.payload.data(), pkt.payload.size(), ts);
        } else {
            f.stash.push_back({pkt.tcp_seq, pkt.payload, ts});
            f.stash_bytes += pkt.payload.size();
            if (f.stash_bytes > limits_.buffer_cap) {
                kill_flow(f, &ReassemblyDiagnostics::flows_over_buffer_cap);
                return out;
            }
            maybe_commit_base(f);
        }
    }

    if (pkt.tcp_flags & tcpflag::fin) {
        uint32_t fin_end = pkt.tcp_seq + uint32_t(pkt.payload.size());
        if (f.have_base)
            f.fin_off = int64_t(seq_diff(fin_end, f.base_seq));
        else
            f.stash_fin_end = fin_end;
    }

    if (f.have_base && !f.dead)
        drain(f, out);
    return out;
}

void Reassembler::adopt_stash(Flow& f) {
    auto stash = std::move(f.stash);
    f.stash.clear();
    f.stash_bytes = 0;
    for (auto& seg : stash) {
        if (f.dead)
            break;
        insert_segment(f, seq_diff(seg.seq, f.base_seq), seg.data.data(),
                       seg.data.size(), seg.ts);
    }
    if (f.stash_fin_end) {
        f.fin_off = int64_t(seq_diff(*f.stash_fin_end, f.base_seq));
        f.stash_fin_end.reset();
    }
}

void Reassembler::maybe_commit_base(Flow& f) {
    // Commit only when the lowest buffered sequence looks like a request
    // start; otherwise keep waiting for earlier segments.
    if (f.stash.empty())
        return;
    const Flow::Stashed* lowest = &f.stash.front();
    for (const auto& entry : f.stash)
        if (seq_diff(entry.seq, lowest->seq) < 0)
            lowest = &entry;
    if (!looks_like_request_start(lowest->data))
        return;
    f.have_base = true;
    f.base_seq = lowest->seq;
    adopt_stash(f);
}

void Reassembler::insert_segment(Flow& f, int64_t off, const uint8_t* data,
                                 size_t len, double ts) {
    if (f.dead || len == 0)
        return;
    // Already-consumed bytes: first copy won.
    if (off < f.next_off) {
        int64_t skip = f.next_off - off;
        if (skip >= int64_t(len)) {
            ++diag_.duplicate_segments;
            return;
        }
        data += skip;
        len -= size_t(skip);
        off = f.next_off;
    }
    if (off - f.next_off > int64_t(limits_.buffer_cap)) {
        diag_.bytes_discarded += len; // the unreachable segment itself
        kill_flow(f, &ReassemblyDiagnostics::flows_over_buffer_cap);
        return;
    }
    bool added_any = false;
    while (len > 0) {
        auto it = f.pending.upper_bound(off);
        if (it != f.pending.begin()) {
            auto prev = std::prev(it);
            int64_t prev_end = prev->first + int64_t(prev->second.data.size());
            if (prev_end > off) { // overlap with an earlier-arrived segment
                int64_t skip = prev_end - off;
                if (skip >= int64_t(len))
                    break;
                data += skip;
                len -= size_t(skip);
                off = prev_end;
                continue;
            }
        }
        size_t piece = len;
        if (it != f.pending.end() && it->first < off + int64_t(len))
            piece = size_t(it->first - off);
        if (piece > 0) {
            f.pending.emplace(off,
                              Flow::Segment{Bytes(data, data + piece), ts});
            f.pending_bytes += piece;
            added_any = true;
            data += piece;
            len -= piece;
            off += piece;
        }
        if (len > 0 && it != f.pending.end()) {
            // skip the region the existing entry covers
            int64_t covered_end = it->first + int64_t(it->second.data.size());
            int64_t skip = covered_end - off;
            if (skip >= int64_t(len))
                break;
            data += skip;
            len -= size_t(skip);
            off = covered_end;
        }
    }
    if (!added_any)
        ++diag_.duplicate_segments;
    if (f.pending_bytes > limits_.buffer_cap)
        kill_flow(f, &ReassemblyDiagnostics::flows_over_buffer_cap);
}

void Reassembler::drain(Flow& f, std::vector<PostEvent>& out) {
    while (!f.dead) {
        auto it = f.pending.begin();
        if (it == f.pending.end() || it->first != f.next_off)
            break;
        Flow::Segment seg = std::move(it->second);
        f.pending_bytes -= seg.data.size();
        f.pending.erase(it);
        f.next_off += int64_t(seg.data.size());
        parser_feed(f, seg.data.data(), seg.data.size(), seg.ts, out);
    }
    if (!f.dead && !f.closed && f.fin_off && *f.fin_off <= f.next_off &&
        f.pending.empty())
        finalize_close(f, out);
}

void Reassembler::parser_feed(Flow& f, const uint8_t* data, size_t len,
                              double ts, std::vector<PostEvent>& out) {
    size_t i = 0;
    f.req_max_ts = std::max(f.req_max_ts, ts);
    while (i < len && !f.dead) {
        switch (f.state) {
        case HttpState::head: {
            f.head_buf.push_back(char(data[i++]));
            if (f.head_buf.size() > limits_.head_cap) {
                kill_flow(f, &ReassemblyDiagnostics::flows_head_too_big);
                return;
            }
            if (f.head_buf.size() >= 4 &&
                f.head_buf.compare(f.head_buf.size() - 4, 4, "\r\n\r\n") == 0) {
                if (!parse_head(f)) {
                    kill_flow(f, &ReassemblyDiagnostics::flows_bad_http);
                    return;
                }
                if (f.chunked) {
                    f.state = HttpState::chunk_size;
                } else if (f.content_length) {
                    if (*f.content_length == 0)
                        complete_request(f, out, 0);
                    else
                        f.state = HttpState::body_cl;
                } else if (f.method == "POST") {
                    // No framing header: body runs to connection close.
                    f.state = HttpState::body_until_close;
                } else {
                    complete_request(f, out, 0);
                }
                // remaining bytes in this chunk belong to what follows
                f.req_max_ts = std::max(f.req_max_ts, ts);
            }
            break;
        }
        case HttpState::body_cl: {
            uint64_t want = *f.content_length - f.body_observed;
            uint64_t take = std::min<uint64_t>(want, len - i);
            f.body_observed += take;
            i += size_t(take);
            if (f.body_observed == *f.content_length) {
                complete_request(f, out, *f.content_length);
                f.req_max_ts = std::max(f.req_max_ts, ts);
            }
            break;
        }
        case HttpState::chunk_size: {
            char c = char(data[i++]);
            f.line_buf.push_back(c);
            if (f.line_buf.size() > 1024) {
                kill_flow(f, &ReassemblyDiagnostics::flows_bad_http);
                return;
            }
            if (f.line_buf.size() >= 2 &&
                f.line_buf.compare(f.line_buf.size() - 2, 2, "\r\n") == 0) {
                std::string line = f.line_buf.substr(0, f.line_buf.size() - 2);
                f.line_buf.clear();
                auto semi = line.find(';'); // drop chunk extensions
                if (semi != std::string::npos)
                    line.resize(semi);
                line = trim_ows(line);
                if (line.empty() || line.size() > 15 ||
                    line.find_first_not_of("0123456789abcdefABCDEF") !=
                        std::string::npos) {
                    kill_flow(f, &ReassemblyDiagnostics::flows_bad_http);
                    return;
                }
                uint64_t size = std::stoull(line, nullptr, 16);
                if (size == 0) {
                    f.state = HttpState::chunk_trailer;
                } else {
                    f.chunk_remaining = size;
                    f.state = HttpState::chunk_data;
                }
            }
            break;
        }
        case HttpState::chunk_data: {
            uint64_t take = std::min<uint64_t>(f.chunk_remaining, len - i);
            f.chunk_remaining -= take;
            f.body_observed += take; // size = sum of chunk data bytes
            i += size_t(take);
            if (f.chunk_remaining == 0) {
                f.state = HttpState::chunk_data_end;
                f.crlf_need = 2;
            }
            break;
        }
        case HttpState::chunk_data_end: {
            char expect = (f.crlf_need == 2) ? '\r' : '\n';
            if (char(data[i++]) != expect) {
                kill_flow(f, &ReassemblyDiagnostics::flows_bad_http);
                return;
            }
            if (--f.crlf_need == 0)
                f.state = HttpState::chunk_size;
            break;
        }
        case HttpState::chunk_trailer: {
            f.line_buf.push_back(char(data[i++]));
            if (f.line_buf.size() > limits_.head_cap) {
                kill_flow(f, &ReassemblyDiagnostics::flows_head_too_big);
                return;
            }
            if (f.line_buf.size() >= 2 &&
                f.line_buf.compare(f.line_buf.size() - 2, 2, "\r\n") == 0) {
                bool end = f.line_buf.size() == 2;
                f.line_buf.clear();
                if (end) {
                    complete_request(f, out, f.body_observed);
                    f.req_max_ts = std::max(f.req_max_ts, ts);
                }
            }
            break;
        }
        case HttpState::body_until_close: {
            f.body_observed += len - i;
            i = len;
            break;
        }
        }
    }
}

bool Reassembler::parse_head(Flow& f) {
    const std::string head = std::move(f.head_buf);
    f.head_buf.clear();
    size_t pos = 0;
    bool first = true;
    while (pos < head.size()) {
        size_t eol = head.find("\r\n", pos);
        if (eol == std::string::npos)
            break;
        std::string line = head.substr(pos, eol - pos);
        pos = eol + 2;
        if (line.empty())
            break; // end of headers
        if (first) {
            first = false;
            size_t sp1 = line.find(' ');
            size_t sp2 = line.rfind(' ');
            if (sp1 == std::string::npos || sp2 == sp1 || sp1 == 0)
                return false;
            f.method = line.substr(0, sp1);
            for (char c : f.method)
                if (!is_token_char(uint8_t(c)))
                    return false;
            std::string uri = line.substr(sp1 + 1, sp2 - sp1 - 1);
            if (uri.empty())
                return false;
            if (line.compare(sp2 + 1, 5, "HTTP/") != 0)
                return false;
            continue;
        }
        size_t colon = line.find(':');
        if (colon == std::string::npos || colon == 0)
            return false;
        std::string name = lower(line.substr(0, colon));
        std::string value = trim_ows(line.substr(colon + 1));
        if (name == "host") {
            if (f.host.empty())
                f.host = value;
        } else if (name == "content-length") {
            if (value.empty() ||
                value.find_first_not_of("0123456789") != std::string::npos)
                return false;
            errno = 0;
            uint64_t v = std::strtoull(value.c_str(), nullptr, 10);
            if (errno != 0)
                return false;
            if (f.content_length && *f.content_length != v)
                return false; // conflicting lengths: framing untrustworthy
            f.content_length = v;
        } else if (name == "transfer-encoding") {
            if (lower(value).find("chunked") != std::string::npos)
                f.chunked = true;
        }
    }
    return !f.method.empty();
}

void Reassembler::complete_request(Flow& f, std::vector<PostEvent>& out,
                                   uint64_t size) {
    ++diag_.requests_completed;
    if (f.method == "POST") {
        PostEvent ev;
        ev.server_key = f.host.empty() ? ipv4_to_string(f.key.dst_ip)
                                       : normalize_server_key(f.host);
        ev.size = size;
        ev.t = f.req_max_ts;
        out.push_back(std::move(ev));
        ++diag_.posts_emitted;
    }
    f.reset_request();
}

void Reassembler::finalize_close(Flow& f, std::vector<PostEvent>& out) {
    f.closed = true;
    if (f.state == HttpState::body_until_close) {
        complete_request(f, out, f.body_observed);
    } else if (f.mid_request()) {
        ++diag_.flows_abandoned;
    }
}

void Reassembler::kill_flow(Flow& f,
                            uint64_t ReassemblyDiagnostics::*counter) {
    ++(diag_.*counter);
    diag_.bytes_discarded += f.pending_bytes + f.stash_bytes;
    f.pending.clear();
    f.pending_bytes = 0;
    f.stash.clear();
    f.stash_bytes = 0;
    f.dead = true;
}

const ReassemblyDiagnostics& Reassembler::flush() {
    for (auto& [key, fp] : flows_) {
        Flow& f = *fp;
        if (f.dead || f.closed)
            continue;
        // Without a close the until-close body is incomplete too.
        if (f.mid_request() || !f.pending.empty() || !f.stash.empty())
            ++diag_.flows_abandoned;
        diag_.bytes_discarded += f.pending_bytes + f.stash_bytes;
        f.pending.clear();
        f.pending_bytes = 0;
        f.stash.clear();
        f.stash_bytes = 0;
        f.closed = true;
    }
    return diag_;
}

} // namespace postwatch
