#pragma once

// Scenario files, run reports, parameter sweeps and fringe scans.
//
// Scenarios are YAML (JSON documents parse too). Every field has a default;
// unknown keys are rejected with the offending line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <future>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "qsdc/analysis.hpp"
#include "qsdc/errors.hpp"
#include "qsdc/netplan.hpp"
#include "qsdc/photonics.hpp"
#include "qsdc/protocol.hpp"
#include "qsdc/qstate.hpp"

namespace qsdc::scenario {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// 1-based line and column; zero when unknown.
class ScenarioError : public std::runtime_error {
public:
    ScenarioError(const std::string& message, int line = 0, int column = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ", column " + std::to_string(column) +
                                            ": " + message
                                      : message),
          line_(line),
          column_(column) {}

    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

struct Topology {
    int subnets = 5;
    int users_per_subnet = 3;
    int grid_pairs = netplan::kDefaultGridPairs;
    netplan::UserId alice{0, 0};
    netplan::UserId bob{1, 0};
};

struct MessageSpec {
    std::string bits;  // '0'/'1' characters
    std::string hex;
    std::uint64_t length_bits = 0;  // truncates hex when non-zero
    std::uint64_t random_bits = 0;
    std::uint64_t random_seed = 0;
};

struct FringeSpec {
    int phases = 32;
    double dwell_s = 1.0;
    bool monte_carlo = true;
    bool subtract_accidentals = true;
    analysis::NoiseAssumption assumption = analysis::NoiseAssumption::Isotropic;
    std::map<BellLabel, double> target_fidelity;
};

struct Scenario {
    std::uint64_t seed = 0;
    Topology topology;
    protocol::SessionConfig session;
    MessageSpec message;
    FringeSpec fringe;
};

namespace detail {

inline ScenarioError error_at(const YAML::Node& node, const std::string& message) {
    const YAML::Mark mark = node.Mark();
    if (mark.is_null()) return ScenarioError(message);
    return ScenarioError(message, mark.line + 1, mark.column + 1);
}

// Typed access to one YAML mapping with range checks and unknown-key rejection.
class Section {
public:
    Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) throw error_at(node_, "'" + path_ + "' must be a mapping");
    }

    void use(const std::string& key) const { used_.insert(key); }

    bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

    YAML::Node raw(const std::string& key) const { return has(key) ? node_[key] : YAML::Node(); }

    Section child(const std::string& key) const {
        used_.insert(key);
        return Section(raw(key), qualified(key));
    }

    template <typename T>
    T get(const std::string& key, T fallback) const {
        used_.insert(key);
        if (!has(key)) return fallback;
        const YAML::Node value = node_[key];
        if (!value.IsScalar()) throw error_at(value, "'" + qualified(key) + "' must be a scalar");
        try {
            return value.as<T>();
        } catch (const YAML::Exception&) {
            throw error_at(value, "'" + qualified(key) + "' has invalid value '" + value.Scalar() + "'");
        }
    }

    double probability(const std::string& key, double fallback) const {
        const double v = get<double>(key, fallback);
        if (!(v >= 0.0 && v <= 1.0)) fail(key, "must lie in [0,1]");
        return v;
    }

    double nonnegative(const std::string& key, double fallback) const {
        const double v = get<double>(key, fallback);
        if (!(v >= 0.0) || !std::isfinite(v)) fail(key, "must be finite and >= 0");
        return v;
    }

    double positive(const std::string& key, double fallback) const {
        const double v = get<double>(key, fallback);
        if (!(v > 0.0) || !std::isfinite(v)) fail(key, "must be finite and > 0");
        return v;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        const YAML::Node where = has(key) ? node_[key] : node_;
        throw error_at(where, "'" + qualified(key) + "' " + what);
    }

    void reject_unknown() const {
        if (!node_ || !node_.IsMap()) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!used_.count(key)) throw error_at(kv.first, "unknown field '" + qualified(key) + "'");
        }
    }

    const YAML::Node& node() const { return node_; }

private:
    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    YAML::Node node_;
    std::string path_;
    mutable std::set<std::string> used_;
};

inline netplan::UserId read_user(const Section& s, const std::string& key, netplan::UserId fallback) {
    s.use(key);
    if (!s.has(key)) return fallback;
    const YAML::Node n = s.raw(key);
    if (!n.IsSequence() || n.size() != 2) throw error_at(n, "'" + key + "' must be [subnet, member]");
    try {
        return {n[0].as<int>(), n[1].as<int>()};
    } catch (const YAML::Exception&) {
        throw error_at(n, "'" + key + "' must hold two integers");
    }
}

inline photonics::FiberSpec read_fiber(const Section& s, photonics::FiberSpec d) {
    photonics::FiberSpec f;
    f.length_km = s.nonnegative("length_km", d.length_km);
    f.attenuation_db_per_km = s.nonnegative("attenuation_db_per_km", d.attenuation_db_per_km);
    s.reject_unknown();
    return f;
}

inline NoiseParams read_noise(const Section& s, NoiseParams d) {
    NoiseParams n;
    n.depolarizing_p = s.probability("depolarizing_p", d.depolarizing_p);
    n.dephasing_q = s.probability("dephasing_q", d.dephasing_q);
    n.phase_offset = s.get<double>("phase_offset_rad", d.phase_offset);
    s.reject_unknown();
    return n;
}

inline std::uint64_t read_count(const Section& s, const std::string& key, std::uint64_t fallback) {
    const YAML::Node n = s.raw(key);
    if (n && n.IsScalar() && !n.Scalar().empty() && n.Scalar()[0] == '-') s.fail(key, "must be >= 0");
    return s.get<std::uint64_t>(key, fallback);
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ScenarioError(e.msg, e.mark.line + 1, e.mark.column + 1);
    }
    if (!root || root.IsNull()) throw ScenarioError("scenario document is empty");
    using detail::Section;
    const Section top(root, "");
    Scenario sc;
    if (!top.has("seed")) throw ScenarioError("missing mandatory field 'seed'", 1, 1);
    sc.seed = detail::read_count(top, "seed", 0);

    {
        const Section t = top.child("topology");
        sc.topology.subnets = t.get<int>("subnets", sc.topology.subnets);
        sc.topology.users_per_subnet = t.get<int>("users_per_subnet", sc.topology.users_per_subnet);
        sc.topology.grid_pairs = t.get<int>("grid_pairs", sc.topology.grid_pairs);
        if (sc.topology.subnets < 1) t.fail("subnets", "must be >= 1");
        if (sc.topology.users_per_subnet < 1) t.fail("users_per_subnet", "must be >= 1");
        if (sc.topology.grid_pairs < 1 || sc.topology.grid_pairs > netplan::kMaxGridPairs) {
            t.fail("grid_pairs", "must lie in 1.." + std::to_string(netplan::kMaxGridPairs));
        }
        sc.topology.alice = detail::read_user(t, "alice", sc.topology.alice);
        sc.topology.bob = detail::read_user(t, "bob", sc.topology.bob);
        for (const char* who : {"alice", "bob"}) {
            const auto u = std::string(who) == "alice" ? sc.topology.alice : sc.topology.bob;
            if (u.subnet < 0 || u.subnet >= sc.topology.subnets || u.member < 0 ||
                u.member >= sc.topology.users_per_subnet) {
                t.fail(who, "names a user outside the topology");
            }
        }
        if (sc.topology.alice == sc.topology.bob) t.fail("bob", "must differ from alice");
        t.reject_unknown();
    }

    {
        auto& dev = sc.session.devices;
        const Section d = top.child("devices");
        dev.signal_fiber = detail::read_fiber(d.child("fiber_signal"), dev.signal_fiber);
        dev.idler_fiber = detail::read_fiber(d.child("fiber_idler"), dev.idler_fiber);
        {
            const Section s = d.child("detector");
            dev.detector.efficiency = s.probability("efficiency", dev.detector.efficiency);
            dev.detector.dark_count_rate_hz = s.nonnegative("dark_count_rate_hz", dev.detector.dark_count_rate_hz);
            dev.detector.coincidence_window_s =
                s.nonnegative("coincidence_window_s", dev.detector.coincidence_window_s);
            s.reject_unknown();
        }
        {
            const Section s = d.child("sfg");
            dev.sfg.conversion_efficiency = s.probability("conversion_efficiency", dev.sfg.conversion_efficiency);
            dev.sfg.max_rate_hz = s.nonnegative("max_rate_hz", dev.sfg.max_rate_hz);
            s.reject_unknown();
        }
        {
            const Section s = d.child("modulator");
            dev.modulator.rate_hz = s.positive("rate_hz", dev.modulator.rate_hz);
            dev.modulator.extinction_error = s.probability("extinction_error", dev.modulator.extinction_error);
            s.reject_unknown();
        }
        {
            const Section s = d.child("source");
            dev.source.pair_rate_hz = s.nonnegative("pair_rate_hz", dev.source.pair_rate_hz);
            dev.source.heralding_noise = detail::read_noise(s.child("heralding_noise"), dev.source.heralding_noise);
            s.reject_unknown();
        }
        d.reject_unknown();
    }

    {
        auto& p = sc.session.protocol;
        const Section s = top.child("protocol");
        p.block_size = detail::read_count(s, "block_size", p.block_size);
        if (p.block_size < 1) s.fail("block_size", "must be >= 1");
        p.policy.threshold = s.get<double>("qber_threshold", p.policy.threshold);
        if (!(p.policy.threshold > 0.0 && p.policy.threshold < 0.5)) s.fail("qber_threshold", "must lie in (0, 0.5)");
        p.policy.min_samples = detail::read_count(s, "min_samples", p.policy.min_samples);
        if (p.policy.min_samples < 1) s.fail("min_samples", "must be >= 1");
        p.detection_fraction = s.probability("detection_fraction", p.detection_fraction);
        p.detection_photons = detail::read_count(s, "detection_photons", p.detection_photons);
        p.redetect_every_blocks = detail::read_count(s, "redetect_every_blocks", p.redetect_every_blocks);
        p.max_retransmissions = detail::read_count(s, "max_retransmissions", p.max_retransmissions);
        p.photon_decrease_factor = s.probability("photon_decrease_factor", p.photon_decrease_factor);
        p.ecc_overhead = s.probability("ecc_overhead", p.ecc_overhead);
        s.reject_unknown();
    }

    {
        const Section s = top.child("eve");
        const auto kind = s.get<std::string>("kind", "none");
        if (kind == "none") {
            sc.session.eve.kind = protocol::EveKind::None;
        } else if (kind == "intercept_resend") {
            sc.session.eve.kind = protocol::EveKind::InterceptResend;
        } else if (kind == "tap") {
            sc.session.eve.kind = protocol::EveKind::Tap;
        } else {
            s.fail("kind", "must be one of none, intercept_resend, tap");
        }
        sc.session.eve.fraction = s.probability("fraction", 0.0);
        s.reject_unknown();
    }

    {
        const Section s = top.child("message");
        auto& m = sc.message;
        m.bits = s.get<std::string>("bits", "");
        m.hex = s.get<std::string>("hex", "");
        m.length_bits = detail::read_count(s, "length_bits", 0);
        m.random_bits = detail::read_count(s, "random_bits", 0);
        m.random_seed = detail::read_count(s, "random_seed", 0);
        if (m.bits.find_first_not_of("01") != std::string::npos) s.fail("bits", "may contain only 0 and 1");
        if (m.hex.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos) {
            s.fail("hex", "must be hexadecimal");
        }
        if (m.hex.size() * 4 < m.length_bits) s.fail("length_bits", "exceeds the hex payload");
        const int sources = (!m.bits.empty()) + (!m.hex.empty()) + (m.random_bits > 0);
        if (sources > 1) throw detail::error_at(s.node(), "message: give only one of bits, hex, random_bits");
        s.reject_unknown();
    }

    {
        const Section s = top.child("fringe");
        auto& f = sc.fringe;
        f.phases = s.get<int>("phases", f.phases);
        if (f.phases < 8) s.fail("phases", "must be >= 8");
        f.dwell_s = s.positive("dwell_s", f.dwell_s);
        f.monte_carlo = s.get<bool>("monte_carlo", f.monte_carlo);
        f.subtract_accidentals = s.get<bool>("subtract_accidentals", f.subtract_accidentals);
        const auto assumption = s.get<std::string>("noise_assumption", analysis::to_string(f.assumption));
        if (assumption == "isotropic") {
            f.assumption = analysis::NoiseAssumption::Isotropic;
        } else if (assumption == "phase_only") {
            f.assumption = analysis::NoiseAssumption::PhaseOnly;
        } else {
            s.fail("noise_assumption", "must be isotropic or phase_only");
        }
        const Section targets = s.child("target_fidelity");
        for (BellLabel label : kBellLabels) {
            const std::string key(to_string(label));
            if (targets.has(key)) f.target_fidelity[label] = targets.probability(key, 1.0);
        }
        targets.reject_unknown();
        s.reject_unknown();
    }
    top.reject_unknown();

    try {
        sc.session.validate();
    } catch (const DomainError& e) {
        throw ScenarioError(e.what());
    }
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

// Canonical form: every field present, keys sorted (nlohmann::json default).
inline Json canonical_json(const Scenario& sc) {
    const auto& dev = sc.session.devices;
    const auto& p = sc.session.protocol;
    const auto fiber = [](const photonics::FiberSpec& f) {
        return Json{{"length_km", f.length_km}, {"attenuation_db_per_km", f.attenuation_db_per_km}};
    };
    Json targets = Json::object();
    for (const auto& [label, value] : sc.fringe.target_fidelity) targets[std::string(to_string(label))] = value;
    const auto& noise = dev.source.heralding_noise;
    return Json{
        {"seed", sc.seed},
        {"topology",
         {{"subnets", sc.topology.subnets},
          {"users_per_subnet", sc.topology.users_per_subnet},
          {"grid_pairs", sc.topology.grid_pairs},
          {"alice", {sc.topology.alice.subnet, sc.topology.alice.member}},
          {"bob", {sc.topology.bob.subnet, sc.topology.bob.member}}}},
        {"devices",
         {{"fiber_signal", fiber(dev.signal_fiber)},
          {"fiber_idler", fiber(dev.idler_fiber)},
          {"detector",
           {{"efficiency", dev.detector.efficiency},
            {"dark_count_rate_hz", dev.detector.dark_count_rate_hz},
            {"coincidence_window_s", dev.detector.coincidence_window_s}}},
          {"sfg", {{"conversion_efficiency", dev.sfg.conversion_efficiency}, {"max_rate_hz", dev.sfg.max_rate_hz}}},
          {"modulator", {{"rate_hz", dev.modulator.rate_hz}, {"extinction_error", dev.modulator.extinction_error}}},
          {"source",
           {{"pair_rate_hz", dev.source.pair_rate_hz},
            {"heralding_noise",
             {{"depolarizing_p", noise.depolarizing_p},
              {"dephasing_q", noise.dephasing_q},
              {"phase_offset_rad", noise.phase_offset}}}}}}},
        {"protocol",
         {{"block_size", p.block_size},
          {"qber_threshold", p.policy.threshold},
          {"min_samples", p.policy.min_samples},
          {"detection_fraction", p.detection_fraction},
          {"detection_photons", p.detection_photons},
          {"redetect_every_blocks", p.redetect_every_blocks},
          {"max_retransmissions", p.max_retransmissions},
          {"photon_decrease_factor", p.photon_decrease_factor},
          {"ecc_overhead", p.ecc_overhead}}},
        {"eve", {{"kind", protocol::to_string(sc.session.eve.kind)}, {"fraction", sc.session.eve.fraction}}},
        {"message",
         {{"bits", sc.message.bits},
          {"hex", sc.message.hex},
          {"length_bits", sc.message.length_bits},
          {"random_bits", sc.message.random_bits},
          {"random_seed", sc.message.random_seed}}},
        {"fringe",
         {{"phases", sc.fringe.phases},
          {"dwell_s", sc.fringe.dwell_s},
          {"monte_carlo", sc.fringe.monte_carlo},
          {"subtract_accidentals", sc.fringe.subtract_accidentals},
          {"noise_assumption", analysis::to_string(sc.fringe.assumption)},
          {"target_fidelity", targets}}},
    };
}

inline std::string canonical_text(const Scenario& sc) { return canonical_json(sc).dump(); }

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string digest(const Scenario& sc) { return hex64(fnv1a64(canonical_text(sc))); }

inline std::vector<bool> message_bits(const MessageSpec& m) {
    std::vector<bool> bits;
    if (!m.bits.empty()) {
        for (char c : m.bits) bits.push_back(c == '1');
    } else if (!m.hex.empty()) {
        for (char c : m.hex) {
            const int v = std::stoi(std::string(1, c), nullptr, 16);
            for (int b = 3; b >= 0; --b) bits.push_back(((v >> b) & 1) != 0);
        }
        if (m.length_bits > 0) bits.resize(m.length_bits);
    } else if (m.random_bits > 0) {
        photonics::Rng rng(m.random_seed);
        bits.reserve(m.random_bits);
        std::uint64_t word = 0;
        for (std::uint64_t i = 0; i < m.random_bits; ++i) {
            if (i % 64 == 0) word = rng.next();
            bits.push_back(((word >> (i % 64)) & 1) != 0);
        }
    }
    return bits;
}

// ---------------------------------------------------------------------------
// Runs

struct RunResult {
    protocol::SessionTranscript transcript;
    OrderedJson report;
    std::string report_text;      // report.dump(2) + newline
    std::string transcript_text;  // JSONL
    double runtime_s = 0.0;       // wall clock, not part of the report
};

inline OrderedJson plan_summary(const Scenario& sc) {
    const auto plan = netplan::build_plan(sc.topology.subnets, sc.topology.users_per_subnet, sc.topology.grid_pairs);
    const auto conn = netplan::verify_full_connectivity(plan, sc.topology.subnets, sc.topology.users_per_subnet);
    const auto link = netplan::resource_for(plan, sc.topology.alice, sc.topology.bob);
    OrderedJson out;
    out["total_channels"] = plan.total_channels;
    out["is_fully_connected"] = conn.is_fully_connected;
    out["alice"] = netplan::user_name(sc.topology.alice);
    out["bob"] = netplan::user_name(sc.topology.bob);
    if (link) {
        out["link_kind"] = link->kind == netplan::LinkKind::Intra ? "intra" : "inter";
        out["channel_pair"] = netplan::to_json(link->pair);
        if (link->kind == netplan::LinkKind::Intra) out["tdm_slots"] = {link->slot_a, link->slot_b};
    } else {
        out["link_kind"] = nullptr;
    }
    return out;
}

inline RunResult run_scenario(const Scenario& sc) {
    const auto started = std::chrono::steady_clock::now();
    RunResult result;
    OrderedJson plan = plan_summary(sc);  // throws CapacityExceeded
    const auto message = message_bits(sc.message);
    if (message.empty()) throw ScenarioError("scenario has an empty message");

    photonics::Rng rng(sc.seed);
    result.transcript = protocol::run_qsdc(message, sc.session, rng);
    const auto& tr = result.transcript;

    OrderedJson report;
    report["scenario_digest"] = digest(sc);
    report["scenario"] = canonical_json(sc);
    report["plan"] = std::move(plan);
    report["transcript"] = "transcript.jsonl";
    report["outcome"] = {{"phase", protocol::to_string(tr.final_phase)},
                         {"abort_reason", tr.abort_reason.empty() ? OrderedJson(nullptr) : OrderedJson(tr.abort_reason)}};
    report["message"] = {{"bits", tr.message_bits},
                         {"delivered_bits", tr.delivered_bits},
                         {"bit_errors", tr.bit_errors},
                         {"ber", tr.ber()},
                         {"slots_sent", tr.slots_sent},
                         {"erased_slots", tr.erased_slots},
                         {"retransmissions", tr.retransmissions},
                         {"truncated_symbols", tr.truncated_symbols}};

    std::optional<analysis::QberEstimate> qber;
    if (tr.pooled_detection.n_x + tr.pooled_detection.n_z > 0) qber = analysis::qber_from_counts(tr.pooled_detection);
    report["qber"] = qber ? protocol::to_json(*qber) : OrderedJson(nullptr);

    const protocol::LinkModel link(sc.session.devices, sc.session.eve);
    const double erasure = tr.slots_sent ? tr.erasure_fraction() : link.erasure_probability();
    if (qber) {
        const auto s = analysis::secrecy_capacity_bound(1.0 - erasure, erasure, qber->e, qber->e_x, qber->e_z);
        report["secrecy"] = {{"q_b", s.q_b},       {"q_e", s.q_e},       {"h_e", s.h_e},
                             {"h_exez", s.h_exez}, {"cs_lower", s.cs_lower}, {"exez_clamped", s.exez_clamped}};
    } else {
        report["secrecy"] = nullptr;
    }
    const auto t = analysis::throughput(tr.sfg_event_rate, tr.modulation_rate, erasure,
                                        sc.session.protocol.ecc_overhead);
    const auto ceiling = analysis::throughput(tr.sfg_event_rate, tr.modulation_rate, 0.0, 0.0);
    report["throughput"] = {{"sfg_event_rate_hz", tr.sfg_event_rate},
                            {"modulation_rate_hz", tr.modulation_rate},
                            {"symbol_rate", t.symbol_rate},
                            {"erasure_fraction", t.erasure_fraction},
                            {"overhead_fraction", t.overhead_fraction},
                            {"info_rate_bps", t.info_rate},
                            {"info_rate_ceiling_bps", ceiling.info_rate},
                            {"effective_rate_bps", tr.effective_rate()},
                            {"session_duration_s", tr.duration_s}};
    OrderedJson fid;
    for (BellLabel label : kBellLabels) {
        fid[std::string(to_string(label))] = tr.fidelity_table[static_cast<std::size_t>(label)];
    }
    report["fidelity_table"] = std::move(fid);

    result.report = std::move(report);
    result.report_text = result.report.dump(2) + "\n";
    result.transcript_text = tr.to_jsonl();
    result.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

inline std::string report_csv(const RunResult& r) {
    const auto& rep = r.report;
    const auto num = [](const OrderedJson& j) { return j.is_null() ? std::string() : j.dump(); };
    std::string out =
        "scenario_digest,phase,abort_reason,message_bits,delivered_bits,ber,qber,cs_lower,info_rate_bps,"
        "effective_rate_bps\n";
    out += rep["scenario_digest"].get<std::string>() + ",";
    out += rep["outcome"]["phase"].get<std::string>() + ",";
    out += (rep["outcome"]["abort_reason"].is_null() ? "" : rep["outcome"]["abort_reason"].get<std::string>()) + ",";
    out += num(rep["message"]["bits"]) + "," + num(rep["message"]["delivered_bits"]) + "," +
           num(rep["message"]["ber"]) + ",";
    out += (rep["qber"].is_null() ? "" : num(rep["qber"]["e"])) + ",";
    out += (rep["secrecy"].is_null() ? "" : num(rep["secrecy"]["cs_lower"])) + ",";
    out += num(rep["throughput"]["info_rate_bps"]) + "," + num(rep["throughput"]["effective_rate_bps"]) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps

// Replaces the scalar at a dotted path; integer fields stay integers.
inline void set_path(Json& doc, const std::string& path, double value) {
    Json* node = &doc;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!node->is_object() || !node->contains(part)) throw ScenarioError("invalid parameter path '" + path + "'");
        node = &(*node)[part];
    }
    if (!node->is_number() && !node->is_boolean()) {
        throw ScenarioError("parameter path '" + path + "' does not address a numeric field");
    }
    if (node->is_number_integer() || node->is_number_unsigned()) {
        if (value < 0 || std::floor(value) != value) {
            throw ScenarioError("parameter '" + path + "' needs a non-negative integer value");
        }
        *node = static_cast<std::uint64_t>(value);
    } else if (node->is_boolean()) {
        *node = value != 0.0;
    } else {
        *node = value;
    }
}

inline Scenario with_parameter(const Scenario& base, const std::string& path, double value) {
    Json doc = canonical_json(base);
    set_path(doc, path, value);
    // JSON is valid YAML, so the modified document re-enters the checked parser.
    return parse_scenario(doc.dump());
}

struct SweepRow {
    std::size_t index = 0;
    double value = 0.0;
    std::uint64_t seed = 0;
    std::string phase;
    std::string abort_reason;
    std::optional<double> qber;
    double ber = 0.0;
    double info_rate = 0.0;
    double effective_rate = 0.0;
    std::optional<double> cs_lower;
    double erasure_fraction = 0.0;
};

inline std::vector<SweepRow> run_sweep(const Scenario& base, const std::string& path, const std::vector<double>& values,
                                       unsigned jobs = 1) {
    std::vector<Scenario> scenarios;
    scenarios.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        Scenario sc = with_parameter(base, path, values[i]);
        sc.seed = base.seed ^ static_cast<std::uint64_t>(i);
        scenarios.push_back(std::move(sc));
    }
    const auto run_one = [&](std::size_t i) {
        const RunResult r = run_scenario(scenarios[i]);
        SweepRow row;
        row.index = i;
        row.value = values[i];
        row.seed = scenarios[i].seed;
        row.phase = r.report["outcome"]["phase"].get<std::string>();
        if (!r.transcript.abort_reason.empty()) row.abort_reason = r.transcript.abort_reason;
        if (!r.report["qber"].is_null()) row.qber = r.report["qber"]["e"].get<double>();
        row.ber = r.transcript.ber();
        row.info_rate = r.report["throughput"]["info_rate_bps"].get<double>();
        row.effective_rate = r.report["throughput"]["effective_rate_bps"].get<double>();
        if (!r.report["secrecy"].is_null()) row.cs_lower = r.report["secrecy"]["cs_lower"].get<double>();
        row.erasure_fraction = r.report["throughput"]["erasure_fraction"].get<double>();
        return row;
    };
    std::vector<SweepRow> rows(values.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < values.size(); ++i) rows[i] = run_one(i);
        return rows;
    }
    for (std::size_t start = 0; start < values.size(); start += jobs) {
        std::vector<std::future<SweepRow>> batch;
        for (std::size_t i = start; i < std::min(values.size(), start + jobs); ++i) {
            batch.push_back(std::async(std::launch::async, run_one, i));
        }
        for (std::size_t k = 0; k < batch.size(); ++k) rows[start + k] = batch[k].get();
    }
    return rows;
}

inline std::string sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    const auto fmt = [](double v) { return Json(v).dump(); };
    std::string out = "index," + path + ",seed,phase,abort_reason,qber,ber,info_rate_bps,effective_rate_bps,cs_lower,"
                                        "erasure_fraction\n";
    for (const auto& r : rows) {
        out += std::to_string(r.index) + "," + fmt(r.value) + "," + std::to_string(r.seed) + "," + r.phase + "," +
               r.abort_reason + "," + (r.qber ? fmt(*r.qber) : "") + "," + fmt(r.ber) + "," + fmt(r.info_rate) +
               "," + fmt(r.effective_rate) + "," + (r.cs_lower ? fmt(*r.cs_lower) : "") + "," +
               fmt(r.erasure_fraction) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fringe scans

struct FringeResult {
    BellLabel label = BellLabel::PhiPlus;
    NoiseParams noise;
    double state_fidelity = 0.0;
    std::optional<double> target_fidelity;
    std::vector<FringeSample> samples;  // phase, coincidence rate (Hz)
    FringeFit fit;
    analysis::FidelityEstimate estimate;
    std::uint64_t pairs_per_phase = 0;
    std::uint64_t total_pairs = 0;
    double accidental_rate_hz = 0.0;
};

inline NoiseParams fringe_noise(const Scenario& sc, BellLabel label) {
    NoiseParams noise = sc.session.devices.source.heralding_noise;
    if (const auto it = sc.fringe.target_fidelity.find(label); it != sc.fringe.target_fidelity.end()) {
        noise.depolarizing_p = calibrate_depolarizing(label, it->second, noise);
    }
    return noise;
}

// Scans the sender-side analyzer phase across [0, 2pi) with the receiver
// analyzer at 0.
inline FringeResult run_fringe(const Scenario& sc, BellLabel label) {
    const auto& dev = sc.session.devices;
    FringeResult out;
    out.label = label;
    out.noise = fringe_noise(sc, label);
    const TwoQubitState state = apply_noise(bell_state(label), out.noise);
    out.state_fidelity = fidelity(state, label);
    if (const auto it = sc.fringe.target_fidelity.find(label); it != sc.fringe.target_fidelity.end()) {
        out.target_fidelity = it->second;
    }

    const double eta_s = photonics::transmittance(dev.signal_fiber) * dev.detector.efficiency;
    const double eta_i = photonics::transmittance(dev.idler_fiber) * dev.detector.efficiency;
    const double pair_rate = dev.source.pair_rate_hz * eta_s * eta_i;
    const double singles_s = dev.source.pair_rate_hz * eta_s + dev.detector.dark_count_rate_hz;
    const double singles_i = dev.source.pair_rate_hz * eta_i + dev.detector.dark_count_rate_hz;
    out.accidental_rate_hz = photonics::accidental_rate(singles_s, singles_i, dev.detector.coincidence_window_s);
    const double dwell = sc.fringe.dwell_s;
    out.pairs_per_phase = static_cast<std::uint64_t>(std::llround(pair_rate * dwell));
    out.total_pairs = out.pairs_per_phase * static_cast<std::uint64_t>(sc.fringe.phases);

    photonics::Rng rng(sc.seed);
    out.samples.reserve(static_cast<std::size_t>(sc.fringe.phases));
    for (int i = 0; i < sc.fringe.phases; ++i) {
        const double phase = 2.0 * std::numbers::pi * i / sc.fringe.phases;
        const double p = fringe_coincidence(state, phase, 0.0);
        double rate = 0.0;
        if (sc.fringe.monte_carlo) {
            const double true_counts = static_cast<double>(rng.binomial(out.pairs_per_phase, p));
            const double accidental_mean = out.accidental_rate_hz * dwell;
            double counts = true_counts + static_cast<double>(rng.poisson(accidental_mean));
            if (sc.fringe.subtract_accidentals) counts -= accidental_mean;
            rate = counts / dwell;
        } else {
            rate = pair_rate * p + (sc.fringe.subtract_accidentals ? 0.0 : out.accidental_rate_hz);
        }
        out.samples.push_back({phase, rate});
    }
    out.fit = fit_fringe(out.samples);
    out.estimate =
        analysis::fidelity_from_visibility(std::clamp(out.fit.visibility, 0.0, 1.0), sc.fringe.assumption);
    return out;
}

inline OrderedJson fringe_summary(const FringeResult& f) {
    OrderedJson j;
    j["bell_state"] = to_string(f.label);
    j["visibility"] = f.fit.visibility;
    j["phase_shift_rad"] = f.fit.phase_shift;
    j["fidelity_estimate"] = f.estimate.fidelity;
    j["noise_assumption"] = analysis::to_string(f.estimate.assumption);
    j["state_fidelity"] = f.state_fidelity;
    j["target_fidelity"] = f.target_fidelity ? OrderedJson(*f.target_fidelity) : OrderedJson(nullptr);
    j["depolarizing_p"] = f.noise.depolarizing_p;
    j["pairs_per_phase"] = f.pairs_per_phase;
    j["total_pairs"] = f.total_pairs;
    j["accidental_rate_hz"] = f.accidental_rate_hz;
    return j;
}

}  // namespace qsdc::scenario
