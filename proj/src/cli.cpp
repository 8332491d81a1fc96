#include "postwatch/cli.hpp"

#include "postwatch/dataset.hpp"
#include "postwatch/detector.hpp"
#include "postwatch/flow_engine.hpp"
#include "postwatch/pcap.hpp"
#include "postwatch/synth.hpp"
#include "postwatch/tracker.hpp"
#include "postwatch/trainer.hpp"
#include "postwatch/tuner.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>

#include <CLI11.hpp>

namespace postwatch::cli {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

TraceSet load_trace_warned(const std::string& path, const std::string& family,
                           std::ostream& err) {
    std::vector<std::string> warnings;
    TraceSet trace = load_trace(path, family, nullptr, &warnings);
    for (const auto& w : warnings)
        err << "warning: " << w << "\n";
    return trace;
}

std::vector<FamilyModel> load_models(const std::vector<std::string>& paths,
                                     bool require_tuned) {
    std::vector<FamilyModel> models;
    for (const auto& path : paths) {
        FamilyModel m = load_model(path);
        if (require_tuned && !m.d_limit_sq)
            throw DataError("model " + path +
                            " has no d_limit_sq; run `tune` first");
        models.push_back(std::move(m));
    }
    return models;
}

// ---- train ----

struct TrainArgs {
    std::string manifest;
    std::string family;
    std::string out_model;
    uint64_t stamp = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    auto entries = read_manifest(a.manifest);
    std::vector<LearningSample> samples;
    uint64_t rejected = 0;
    for (const auto& entry : entries) {
        if (entry.family != a.family)
            continue;
        TraceSet trace = load_trace_warned(entry.path, entry.family, err);
        std::string reason;
        auto sample = extract_learning_sample(entry.path, trace.events, &reason);
        if (!sample) {
            ++rejected;
            err << "warning: rejected trace " << entry.path << ": " << reason
                << "\n";
            continue;
        }
        samples.push_back(std::move(*sample));
    }
    if (samples.empty())
        throw DataError("no usable traces for family '" + a.family +
                        "' in manifest " + a.manifest);
    FamilyModel model = fit(samples, a.family);
    model.created_unix = a.stamp;
    save_model(model, a.out_model);
    out << "family " << model.family << "\n";
    out << "traces_used " << model.trained_on << "\n";
    out << "traces_rejected " << rejected << "\n";
    out << "centroid " << fmt("%.12g", model.centroid[0]) << " "
        << fmt("%.12g", model.centroid[1]) << " "
        << fmt("%.12g", model.centroid[2]) << "\n";
    out << "d_min_sq " << fmt("%.12g", model.d_min_sq) << "\n";
    out << "d_max_sq " << fmt("%.12g", model.d_max_sq) << "\n";
    out << "model " << a.out_model << "\n";
    return kExitOk;
}

// ---- tune ----

struct TuneArgs {
    std::string model;
    std::string manifest;
    std::string policy_text = "youden-triples";
    size_t grid_steps = 200;
    std::string out_model;
    std::string out_roc;
    uint64_t stamp = 0;
};

int cmd_tune(const TuneArgs& a, std::ostream& out, std::ostream& err) {
    FamilyModel model = load_model(a.model);
    if (model.trained_on == 0)
        throw DataError("model " + a.model +
                        " has no training statistics (trained_on is 0)");
    auto policy = SelectionPolicy::parse(a.policy_text);
    if (!policy) {
        err << "error: bad --policy; use youden-triples, youden-domains or "
               "manual:<threshold>\n";
        return kExitUsage;
    }

    auto entries = read_manifest(a.manifest);
    std::vector<std::vector<PostEvent>> positives, negatives;
    for (const auto& entry : entries) {
        if (entry.benign())
            negatives.push_back(load_trace_warned(entry.path, "", err).events);
        else if (entry.family == model.family)
            positives.push_back(
                load_trace_warned(entry.path, entry.family, err).events);
        else
            err << "warning: ignoring trace of other family: " << entry.path
                << " (" << entry.family << ")\n";
    }

    std::vector<double> grid = default_threshold_grid(model, a.grid_steps);
    SweepCounts counts;
    try {
        counts = sweep(model, positives, negatives, grid);
    } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
    }
    auto points = counts.points();
    Selection sel = select_threshold(points, *policy);
    if (sel.outside_range)
        err << "warning: manual threshold " << fmt("%.12g", sel.threshold_sq)
            << " lies outside the swept range\n";

    write_roc_csv(a.out_roc, points);

    FamilyModel tuned = model;
    tuned.d_limit_sq = sel.threshold_sq;
    tuned.created_unix = a.stamp;
    tuned.tuned_policy = policy->name();
    tuned.tuned_grid_steps = a.grid_steps;
    char digest[32];
    std::snprintf(digest, sizeof(digest), "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fnv1a64_file(a.manifest)));
    tuned.tuned_manifest_digests = {digest};
    save_model(tuned, a.out_model);

    out << "family " << model.family << "\n";
    out << "policy " << policy->name() << "\n";
    out << "grid_points " << grid.size() << "\n";
    out << "positives " << counts.pos_traces_total << "\n";
    out << "negative_triples " << counts.neg_triples_total << "\n";
    out << "negative_domains " << counts.neg_keys_total << "\n";
    out << "d_limit_sq " << fmt("%.12g", sel.threshold_sq) << "\n";
    out << "tpr " << fmt("%.12g", sel.at.tpr) << "\n";
    out << "fpr_triples " << fmt("%.12g", sel.at.fpr_triples) << "\n";
    out << "fpr_domains " << fmt("%.12g", sel.at.fpr_domains) << "\n";
    out << "summary true positives (" << fmt("%.4g", sel.at.tpr * 100)
        << "%) false positives (" << fmt("%.4g", sel.at.fpr_triples * 100)
        << "%) and (" << fmt("%.4g", sel.at.fpr_domains * 100)
        << "%) for POST triples and domains\n";
    out << "roc " << a.out_roc << "\n";
    out << "model " << a.out_model << "\n";
    return kExitOk;
}

// ---- detect ----

struct DetectArgs {
    std::vector<std::string> models;
    std::string input;
    std::string out_csv;
};

int cmd_detect(const DetectArgs& a, std::ostream& out, std::ostream& err) {
    auto models = load_models(a.models, /*require_tuned=*/true);

    TraceSet trace = load_trace_warned(a.input, "", err);
    std::ofstream csv(a.out_csv);
    if (!csv)
        throw DataError("cannot write verdict csv: " + a.out_csv);
    csv << "server_key,t,s1,s2,s3,family,distance_sq,malicious\n";

    FeatureTracker tracker;
    struct KeyStats {
        uint64_t triples = 0;
        uint64_t flagged_triples = 0;
        double min_d2 = -1.0;
    };
    std::map<std::string, KeyStats> stats;
    bool detections = false;
    char buf[256];
    for (const auto& ev : trace.events) {
        auto triple = tracker.observe(ev);
        stats.try_emplace(ev.server_key);
        if (!triple)
            continue;
        Verdict v = classify(*triple, models);
        KeyStats& ks = stats[ev.server_key];
        ++ks.triples;
        double d2 = v.distance_sq.value_or(0.0);
        if (ks.min_d2 < 0 || d2 < ks.min_d2)
            ks.min_d2 = d2;
        if (v.malicious) {
            ++ks.flagged_triples;
            detections = true;
            tracker.mark_flagged(ev.server_key);
        }
        std::snprintf(buf, sizeof(buf),
                      "%s,%.6f,%llu,%llu,%llu,%s,%.12g,%d\n",
                      ev.server_key.c_str(), ev.t,
                      static_cast<unsigned long long>(triple->s1),
                      static_cast<unsigned long long>(triple->s2),
                      static_cast<unsigned long long>(triple->s3),
                      v.family.c_str(), d2, v.malicious ? 1 : 0);
        csv << buf;
    }
    for (const auto& [key, ks] : stats) {
        out << "key " << key << " posts " << tracker.count(key) << " triples "
            << ks.triples << " flagged_triples " << ks.flagged_triples
            << " flagged " << (tracker.is_flagged(key) ? 1 : 0);
        if (ks.min_d2 >= 0)
            out << " min_d2 " << fmt("%.12g", ks.min_d2);
        out << "\n";
    }
    if (trace.format == TraceFormat::pcap)
        err << "note: input parsed as pcap\n";
    out << "verdicts " << a.out_csv << "\n";
    out << "detections_present " << (detections ? 1 : 0) << "\n";
    return kExitOk;
}

// ---- simulate ----

struct SimulateArgs {
    std::vector<std::string> models;
    std::string pcap;
    std::string ports;
    std::string out_log;
    std::string table_out;
    std::vector<std::string> preblock;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    auto models = load_models(a.models, /*require_tuned=*/true);
    auto ports = read_ports_file(a.ports);

    SdnSimulation sim(std::move(models));
    for (const auto& ip_text : a.preblock) {
        auto ip = parse_ipv4(ip_text);
        if (!ip) {
            err << "error: bad --block address: " << ip_text << "\n";
            return kExitUsage;
        }
        sim.preblock(*ip);
    }

    std::ofstream log(a.out_log);
    if (!log)
        throw DataError("cannot write decision log: " + a.out_log);
    SimulationSummary summary = run_simulation(a.pcap, ports, sim, log);

    out << "packets " << summary.packets << "\n";
    out << "forwarded " << summary.forwarded << "\n";
    out << "flooded " << summary.flooded << "\n";
    out << "dropped " << summary.dropped << "\n";
    out << "rules_installed " << summary.rules_installed << "\n";
    out << "escalated " << sim.controller().diagnostics().escalated << "\n";
    out << "posts_seen " << sim.controller().diagnostics().posts_seen << "\n";
    out << "malicious_verdicts "
        << sim.controller().diagnostics().malicious_verdicts << "\n";
    if (summary.unmapped_src_macs > 0)
        err << "warning: " << summary.unmapped_src_macs
            << " packets from MACs absent in the ports file (port 0 used)\n";
    std::string dump = sim.switch_state().dump();
    if (a.table_out.empty()) {
        out << dump;
    } else {
        std::ofstream table(a.table_out);
        if (!table)
            throw DataError("cannot write flow table dump: " + a.table_out);
        table << dump;
        out << "flow_table " << a.table_out << "\n";
    }
    out << "decision_log " << a.out_log << "\n";
    return kExitOk;
}

// ---- synth ----

struct SynthArgs {
    std::string spec;
    std::string out_dir;
    std::string format = "pcap";
    size_t segment_bytes = 1000;
    bool shuffle = false;
    std::optional<uint64_t> seed_override;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
    synth::SynthSpec spec = synth::SynthSpec::from_json_file(a.spec);
    if (a.seed_override)
        spec.seed = *a.seed_override;
    auto traces = synth::generate(spec);

    fs::create_directories(a.out_dir);
    std::ofstream manifest(fs::path(a.out_dir) / "manifest.txt");
    if (!manifest)
        throw DataError("cannot write manifest in " + a.out_dir);

    const bool pcap_format = a.format == "pcap";
    synth::RenderOptions opt;
    opt.segment_bytes = a.segment_bytes;
    opt.shuffle = a.shuffle;

    // client MACs -> dedicated ports, server MACs -> shared uplink port 1
    std::map<MacAddr, uint16_t> port_map;
    uint16_t next_port = 2;
    uint64_t post_total = 0;
    for (size_t i = 0; i < traces.size(); ++i) {
        const TraceSet& trace = traces[i];
        post_total += trace.events.size();
        std::string label = trace.family.empty() ? "benign" : trace.family;
        char name[64];
        if (trace.family.empty())
            std::snprintf(name, sizeof(name), "benign.%s",
                          pcap_format ? "pcap" : "events");
        else
            std::snprintf(name, sizeof(name), "trace_%04zu_%s.%s", i,
                          trace.family.c_str(), pcap_format ? "pcap" : "events");
        fs::path file = fs::path(a.out_dir) / name;
        if (pcap_format) {
            auto packets = synth::render_packets(trace, i, opt, spec.seed);
            PcapWriter writer(file.string());
            for (const auto& pkt : packets) {
                writer.write_packet(pkt);
                if (pkt.dst_port == 80) {
                    if (!port_map.count(pkt.eth_src))
                        port_map[pkt.eth_src] = next_port++;
                    port_map[pkt.eth_dst] = 1;
                }
            }
            writer.close();
        } else {
            write_post_events(file.string(), trace.events);
        }
        manifest << name << " " << label << "\n";
    }
    manifest.close();

    if (pcap_format) {
        std::ofstream ports(fs::path(a.out_dir) / "ports.txt");
        for (const auto& [mac, port] : port_map)
            ports << mac_to_string(mac) << " " << port << "\n";
    }
    if (traces.empty())
        err << "warning: spec produced no traces\n";
    out << "out_dir " << a.out_dir << "\n";
    out << "traces " << traces.size() << "\n";
    out << "posts " << post_total << "\n";
    out << "manifest " << (fs::path(a.out_dir) / "manifest.txt").string()
        << "\n";
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
    CLI::App app{"ransomware C&C detection from HTTP POST size triples"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* train_cmd = app.add_subcommand(
        "train", "fit a family model from labeled traces");
    train_cmd->add_option("--manifest", train.manifest, "trace manifest")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--family", train.family, "family label to train")
        ->required();
    train_cmd->add_option("--out", train.out_model, "output model file")
        ->required();
    train_cmd->add_option("--stamp", train.stamp,
                          "creation time recorded in the model (unix epoch)");

    TuneArgs tune;
    auto* tune_cmd = app.add_subcommand(
        "tune", "sweep limit distances and fix d_limit_sq");
    tune_cmd->add_option("--model", tune.model, "trained model file")
        ->required()
        ->check(CLI::ExistingFile);
    tune_cmd->add_option("--manifest", tune.manifest,
                         "manifest of held-out positives and benign traces")
        ->required()
        ->check(CLI::ExistingFile);
    tune_cmd->add_option("--policy", tune.policy_text,
                         "youden-triples|youden-domains|manual:<t>");
    tune_cmd->add_option("--grid-steps", tune.grid_steps, "grid size")
        ->check(CLI::PositiveNumber);
    tune_cmd->add_option("--out", tune.out_model, "tuned model output")
        ->required();
    tune_cmd->add_option("--roc", tune.out_roc, "ROC CSV output")->required();
    tune_cmd->add_option("--stamp", tune.stamp,
                         "creation time recorded in the model (unix epoch)");

    DetectArgs detect;
    auto* detect_cmd =
        app.add_subcommand("detect", "offline detection over one trace");
    detect_cmd->add_option("--model", detect.models, "tuned model (repeatable)")
        ->required()
        ->check(CLI::ExistingFile);
    detect_cmd->add_option("--out", detect.out_csv, "verdict CSV output")
        ->required();
    detect_cmd->add_option("input", detect.input, "pcap or event fixture")
        ->required()
        ->check(CLI::ExistingFile);

    SimulateArgs simulate;
    auto* sim_cmd = app.add_subcommand(
        "simulate", "replay a capture through the switch+controller");
    sim_cmd->add_option("--model", simulate.models, "tuned model (repeatable)")
        ->check(CLI::ExistingFile);
    sim_cmd->add_option("--ports", simulate.ports, "mac->port map file")
        ->required()
        ->check(CLI::ExistingFile);
    sim_cmd->add_option("--out", simulate.out_log, "decision log CSV")
        ->required();
    sim_cmd->add_option("--table-out", simulate.table_out,
                        "write the final flow table here instead of stdout");
    sim_cmd->add_option("--block", simulate.preblock,
                        "pre-blocked server IP (repeatable)");
    sim_cmd->add_option("input", simulate.pcap, "pcap to replay")
        ->required()
        ->check(CLI::ExistingFile);

    SynthArgs synth_args;
    auto* synth_cmd =
        app.add_subcommand("synth", "generate a labeled synthetic dataset");
    synth_cmd->add_option("--spec", synth_args.spec, "synth spec JSON")
        ->required()
        ->check(CLI::ExistingFile);
    synth_cmd->add_option("--out-dir", synth_args.out_dir, "output directory")
        ->required();
    synth_cmd->add_option("--format", synth_args.format, "pcap|events")
        ->check(CLI::IsMember({"pcap", "events"}));
    synth_cmd->add_option("--segment-bytes", synth_args.segment_bytes,
                          "TCP payload bytes per rendered data segment")
        ->check(CLI::PositiveNumber);
    synth_cmd->add_flag("--shuffle", synth_args.shuffle,
                        "permute rendered data segments");
    uint64_t seed_value = 0;
    auto* seed_opt = synth_cmd->add_option("--seed", seed_value,
                                           "override the spec's seed");

    std::vector<const char*> argv;
    argv.push_back("postwatch");
    for (const auto& a : args)
        argv.push_back(a.c_str());

    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitOk;
        }
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (train_cmd->parsed())
            return cmd_train(train, out, err);
        if (tune_cmd->parsed())
            return cmd_tune(tune, out, err);
        if (detect_cmd->parsed())
            return cmd_detect(detect, out, err);
        if (sim_cmd->parsed())
            return cmd_simulate(simulate, out, err);
        if (synth_cmd->parsed()) {
            if (seed_opt->count() > 0)
                synth_args.seed_override = seed_value;
            return cmd_synth(synth_args, out, err);
        }
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

} // namespace postwatch::cli
