#pragma once

// Two-phase QSDC session: single-photon security detection, then block
// transmission of Pauli-encoded Bell pairs decoded by SFG-based BSM.
//
// The sender's photon (first qubit) travels the signal fiber to the receiver
// and is the one an eavesdropper can reach. The idler photon travels the idler
// fiber directly to the receiver.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qsdc/analysis.hpp"
#include "qsdc/errors.hpp"
#include "qsdc/photonics.hpp"
#include "qsdc/qstate.hpp"

namespace qsdc::protocol {

using photonics::Rng;
using Record = nlohmann::ordered_json;

enum class Phase : std::uint8_t { Idle, SecurityDetection, BlockTransmission, Completed, Aborted };

constexpr const char* to_string(Phase p) {
    switch (p) {
        case Phase::Idle: return "idle";
        case Phase::SecurityDetection: return "security_detection";
        case Phase::BlockTransmission: return "block_transmission";
        case Phase::Completed: return "completed";
        case Phase::Aborted: return "aborted";
    }
    return "?";
}

constexpr bool is_legal_transition(Phase from, Phase to) {
    switch (from) {
        case Phase::Idle: return to == Phase::SecurityDetection;
        case Phase::SecurityDetection: return to == Phase::BlockTransmission || to == Phase::Aborted;
        case Phase::BlockTransmission:
            return to == Phase::SecurityDetection || to == Phase::Completed || to == Phase::Aborted;
        case Phase::Completed:
        case Phase::Aborted: return false;
    }
    return false;
}

class Session {
public:
    Phase phase() const { return phase_; }
    const std::string& abort_reason() const { return abort_reason_; }
    std::size_t blocks_sent() const { return blocks_sent_; }
    std::size_t detections_passed() const { return detections_passed_; }

    void transition(Phase to, std::string reason = {}) {
        if (!is_legal_transition(phase_, to)) {
            throw InvariantViolation(std::string("illegal phase transition ") + to_string(phase_) + " -> " +
                                     to_string(to));
        }
        if (phase_ == Phase::SecurityDetection && to == Phase::BlockTransmission) ++detections_passed_;
        if (to == Phase::Aborted) abort_reason_ = std::move(reason);
        phase_ = to;
    }

    // Blocks may only be sent while in BlockTransmission, which is reachable
    // only through a passed detection.
    void record_block() {
        if (phase_ != Phase::BlockTransmission) {
            throw InvariantViolation(std::string("block sent in phase ") + to_string(phase_));
        }
        ++blocks_sent_;
    }

private:
    Phase phase_ = Phase::Idle;
    std::string abort_reason_;
    std::size_t blocks_sent_ = 0;
    std::size_t detections_passed_ = 0;
};

enum class EveKind : std::uint8_t { None, InterceptResend, Tap };

constexpr const char* to_string(EveKind k) {
    switch (k) {
        case EveKind::None: return "none";
        case EveKind::InterceptResend: return "intercept_resend";
        case EveKind::Tap: return "tap";
    }
    return "?";
}

struct EveModel {
    EveKind kind = EveKind::None;
    double fraction = 0.0;

    static EveModel none() { return {}; }
    static EveModel intercept_resend(double f) { return {EveKind::InterceptResend, f}; }
    static EveModel tap(double t) { return {EveKind::Tap, t}; }

    double intercept_fraction() const { return kind == EveKind::InterceptResend ? fraction : 0.0; }
    double tap_fraction() const { return kind == EveKind::Tap ? fraction : 0.0; }

    void validate() const { photonics::require_probability(fraction, "eavesdropper fraction"); }
    bool operator==(const EveModel&) const = default;
};

struct QberThresholdPolicy {
    double threshold = 0.1;
    std::uint64_t min_samples = 500;

    void validate() const {
        if (!(threshold > 0.0 && threshold < 0.5)) throw DomainError("QBER threshold must lie in (0, 0.5)");
        if (min_samples < 1) throw DomainError("min_samples must be >= 1");
    }
    bool operator==(const QberThresholdPolicy&) const = default;
};

struct Devices {
    photonics::FiberSpec signal_fiber;
    photonics::FiberSpec idler_fiber;
    photonics::DetectorSpec detector;
    photonics::SfgSpec sfg;
    photonics::ModulatorSpec modulator;
    photonics::SourceSpec source;

    void validate() const {
        signal_fiber.validate();
        idler_fiber.validate();
        detector.validate();
        sfg.validate();
        modulator.validate();
        source.validate();
    }
    bool operator==(const Devices&) const = default;
};

struct ProtocolConfig {
    std::uint64_t block_size = 1000;
    QberThresholdPolicy policy;
    double detection_fraction = 0.1;        // of one block's duration
    std::uint64_t detection_photons = 0;     // 0: derive from detection_fraction
    std::uint64_t redetect_every_blocks = 10;  // 0: never re-check
    std::uint64_t max_retransmissions = 16;
    double photon_decrease_factor = 0.5;
    double ecc_overhead = 0.0;

    void validate() const {
        if (block_size < 1) throw DomainError("block size must be >= 1");
        policy.validate();
        photonics::require_probability(detection_fraction, "detection fraction");
        photonics::require_probability(photon_decrease_factor, "photon decrease factor");
        photonics::require_probability(ecc_overhead, "ECC overhead");
    }
    bool operator==(const ProtocolConfig&) const = default;
};

struct SessionConfig {
    Devices devices;
    ProtocolConfig protocol;
    EveModel eve;

    void validate() const {
        devices.validate();
        protocol.validate();
        eve.validate();
    }
};

// Idler-side electrical delay that stores a detection sequence.
inline double delay_control(double sequence_length, double slot_s) {
    if (!(sequence_length >= 0.0) || !(slot_s >= 0.0)) throw DomainError("delay inputs must be >= 0");
    return sequence_length * slot_s;
}

// ---------------------------------------------------------------------------
// Security detection

enum class Basis : std::uint8_t { Z, X };

struct DetectionRecord {
    std::uint64_t position = 0;
    Basis basis = Basis::Z;
    bool alice_outcome = false;
    bool bob_outcome = false;
    bool published = false;

    bool basis_is_x() const { return basis == Basis::X; }
};

namespace detail {

inline Matrix2 basis_change(Basis b) {
    Matrix2 u;
    if (b == Basis::Z) {
        u << 1, 0, 0, 1;
    } else {
        const double h = std::numbers::sqrt2 / 2.0;
        u << h, h, h, -h;
    }
    return u;
}

inline Matrix4 kron(const Matrix2& a, const Matrix2& b) {
    Matrix4 out;
    for (Eigen::Index i = 0; i < 2; ++i)
        for (Eigen::Index j = 0; j < 2; ++j)
            for (Eigen::Index k = 0; k < 2; ++k)
                for (Eigen::Index l = 0; l < 2; ++l) out(2 * i + k, 2 * j + l) = a(i, j) * b(k, l);
    return out;
}

// Measure-and-resend on the first qubit in `basis`, averaged over outcomes.
inline Matrix4 intercept_first(const Matrix4& rho, Basis basis) {
    const Matrix2 u = basis_change(basis);
    Matrix4 out = Matrix4::Zero();
    for (Eigen::Index k = 0; k < 2; ++k) {
        const Eigen::Vector2cd v = u.col(k);
        const Matrix4 p = kron(v * v.adjoint(), Matrix2::Identity());
        out += p * rho * p;
    }
    return out;
}

// Joint outcome probabilities for both qubits measured in `basis`; index
// 2*first + second.
inline std::array<double, 4> joint_outcomes(const Matrix4& rho, Basis basis) {
    const Matrix2 u = basis_change(basis);
    const Matrix4 uu = kron(u, u);
    const Matrix4 rotated = uu.adjoint() * rho * uu;
    std::array<double, 4> out{};
    double total = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i) {
        out[static_cast<std::size_t>(i)] = std::max(0.0, rotated(i, i).real());
        total += out[static_cast<std::size_t>(i)];
    }
    for (double& x : out) x /= total;
    return out;
}

inline std::size_t sample_index(const std::array<double, 4>& probs, Rng& rng) {
    double u = rng.uniform();
    for (std::size_t i = 0; i < 3; ++i) {
        if (u < probs[i]) return i;
        u -= probs[i];
    }
    return 3;
}

inline TwoQubitState source_state(const photonics::SourceSpec& source) {
    return apply_noise(bell_state(BellLabel::PhiPlus), source.heralding_noise);
}

}  // namespace detail

struct DetectionConfig {
    QberThresholdPolicy policy;
    std::uint64_t photons = 0;
    double photon_decrease_factor = 0.5;
};

struct DetectionResult {
    bool passed = false;
    std::string reason;  // empty when passed
    std::optional<analysis::QberEstimate> qber;
    analysis::BasisCounts counts;
    std::uint64_t emitted = 0;
    std::uint64_t survived = 0;
    double expected_survivors = 0.0;
    double duration_s = 0.0;
    double idler_delay_s = 0.0;
    std::vector<DetectionRecord> records;
};

inline DetectionResult run_security_detection(Session& session, const Devices& devices, const EveModel& eve,
                                              const DetectionConfig& config, Rng& rng) {
    if (session.phase() != Phase::SecurityDetection) {
        throw InvariantViolation(std::string("security detection requested in phase ") + to_string(session.phase()));
    }
    const TwoQubitState source = detail::source_state(devices.source);
    std::array<std::array<std::array<double, 4>, 3>, 2> outcome_probs{};
    for (Basis bob : {Basis::Z, Basis::X}) {
        auto& row = outcome_probs[static_cast<std::size_t>(bob)];
        row[0] = detail::joint_outcomes(source.matrix(), bob);
        row[1] = detail::joint_outcomes(detail::intercept_first(source.matrix(), Basis::Z), bob);
        row[2] = detail::joint_outcomes(detail::intercept_first(source.matrix(), Basis::X), bob);
    }

    const double eta_signal = photonics::transmittance(devices.signal_fiber) * devices.detector.efficiency;
    const double eta_idler = photonics::transmittance(devices.idler_fiber) * devices.detector.efficiency;
    const double keep_after_tap = 1.0 - eve.tap_fraction();
    const double intercept = eve.intercept_fraction();

    DetectionResult result;
    result.emitted = config.photons;
    result.expected_survivors = static_cast<double>(config.photons) * eta_signal * eta_idler;
    const double slot_s = devices.source.pair_rate_hz > 0.0 ? 1.0 / devices.source.pair_rate_hz : 0.0;
    result.duration_s = static_cast<double>(config.photons) * slot_s;
    result.idler_delay_s = delay_control(static_cast<double>(config.photons), slot_s);
    result.records.reserve(static_cast<std::size_t>(result.expected_survivors * 1.1) + 16);

    for (std::uint64_t pos = 0; pos < config.photons; ++pos) {
        if (!photonics::survive(rng, keep_after_tap)) continue;
        if (!photonics::survive(rng, eta_signal)) continue;
        if (!photonics::survive(rng, eta_idler)) continue;
        std::size_t variant = 0;
        if (intercept > 0.0 && rng.bernoulli(intercept)) variant = rng.bernoulli(0.5) ? 2 : 1;
        const Basis basis = rng.bernoulli(0.5) ? Basis::X : Basis::Z;
        const std::size_t joint = detail::sample_index(outcome_probs[static_cast<std::size_t>(basis)][variant], rng);
        DetectionRecord rec;
        rec.position = pos;
        rec.basis = basis;
        rec.bob_outcome = (joint >> 1) & 1;
        rec.alice_outcome = joint & 1;
        rec.published = true;
        result.records.push_back(rec);
    }
    result.survived = result.records.size();
    for (const auto& r : result.records) {
        const bool err = r.alice_outcome != r.bob_outcome;
        if (r.basis_is_x()) {
            ++result.counts.n_x;
            result.counts.errors_x += err;
        } else {
            ++result.counts.n_z;
            result.counts.errors_z += err;
        }
    }

    if (result.expected_survivors > 0.0 &&
        static_cast<double>(result.survived) < config.photon_decrease_factor * result.expected_survivors) {
        result.reason = "photon_count_decrease";
    } else if (result.survived < config.policy.min_samples || result.survived == 0) {
        result.reason = "insufficient_samples";
    }
    if (result.survived > 0) result.qber = analysis::qber_from_counts(result.counts);
    if (result.reason.empty() && !(result.qber->e < config.policy.threshold)) result.reason = "qber_above_threshold";

    result.passed = result.reason.empty();
    if (result.passed) {
        session.transition(Phase::BlockTransmission);
    } else {
        session.transition(Phase::Aborted, result.reason);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Block transmission

struct Block {
    std::vector<PauliEncoding> pairs;
    std::vector<bool> message_bits;

    std::size_t size() const { return pairs.size(); }
};

inline Block encode_block(const std::vector<bool>& message_bits, std::size_t n) {
    if (message_bits.size() != 2 * n) {
        throw DomainError("block of " + std::to_string(n) + " pairs needs " + std::to_string(2 * n) +
                          " bits, got " + std::to_string(message_bits.size()));
    }
    Block block;
    block.message_bits.assign(message_bits.begin(), message_bits.end());
    block.pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        block.pairs.push_back(encode_bits(SymbolCode(message_bits[2 * i], message_bits[2 * i + 1])));
    }
    return block;
}

// Per-slot channel statistics derived once per session.
//
// A symbol occupies one modulation slot. SFG events in a slot are Poisson with
// mean `events_per_slot`; with none the symbol is erased, otherwise the first
// event's Bell label decides it.
class LinkModel {
public:
    LinkModel(const Devices& devices, const EveModel& eve) {
        devices.validate();
        eve.validate();
        const double pair_success = photonics::transmittance(devices.signal_fiber) *
                                    photonics::transmittance(devices.idler_fiber) * (1.0 - eve.tap_fraction()) *
                                    devices.detector.efficiency * devices.sfg.conversion_efficiency;
        sfg_event_rate_ = std::min(devices.sfg.max_rate_hz, devices.source.pair_rate_hz * pair_success);
        events_per_slot_ = sfg_event_rate_ / devices.modulator.rate_hz;
        intercept_ = eve.intercept_fraction();
        slot_s_ = 1.0 / devices.modulator.rate_hz;

        const TwoQubitState source = detail::source_state(devices.source);
        for (PauliEncoding enc : kEncodings) {
            const TwoQubitState encoded = apply_encoding(source, enc);
            const auto e = static_cast<std::size_t>(enc);
            samplers_[e][0].emplace(encoded);
            for (std::size_t b = 0; b < 2; ++b) {
                const Matrix4 rho = detail::intercept_first(encoded.matrix(), b == 0 ? Basis::Z : Basis::X);
                samplers_[e][b + 1].emplace(TwoQubitState::from_matrix(0.5 * (rho + rho.adjoint())));
            }
            fidelity_[e] = qsdc::fidelity(encoded, encoded_label(enc));
        }
    }

    double sfg_event_rate() const { return sfg_event_rate_; }
    double events_per_slot() const { return events_per_slot_; }
    double slot_s() const { return slot_s_; }
    double erasure_probability() const { return std::exp(-events_per_slot_); }
    double fidelity(BellLabel label) const { return fidelity_[static_cast<std::size_t>(label)]; }

    photonics::SfgOutcome transmit(PauliEncoding enc, Rng& rng) const {
        if (rng.poisson(events_per_slot_) == 0) return std::nullopt;
        std::size_t variant = 0;
        if (intercept_ > 0.0 && rng.bernoulli(intercept_)) variant = rng.bernoulli(0.5) ? 2 : 1;
        return samplers_[static_cast<std::size_t>(enc)][variant]->sample(rng);
    }

private:
    double sfg_event_rate_ = 0.0;
    double events_per_slot_ = 0.0;
    double intercept_ = 0.0;
    double slot_s_ = 0.0;
    std::array<std::array<std::optional<photonics::BellSampler>, 3>, 4> samplers_{};
    std::array<double, 4> fidelity_{};
};

struct DecodedBlock {
    std::vector<bool> bits;
    std::vector<bool> erasure_mask;  // per pair
    std::vector<photonics::SfgOutcome> pair_outcomes;

    std::size_t erasures() const {
        return static_cast<std::size_t>(std::count(erasure_mask.begin(), erasure_mask.end(), true));
    }
};

inline DecodedBlock transmit_and_decode_block(const Block& block, const LinkModel& link, Rng& rng) {
    DecodedBlock out;
    out.bits.assign(2 * block.size(), false);
    out.erasure_mask.assign(block.size(), false);
    out.pair_outcomes.reserve(block.size());
    for (std::size_t i = 0; i < block.size(); ++i) {
        const auto outcome = link.transmit(block.pairs[i], rng);
        out.pair_outcomes.push_back(outcome);
        if (!outcome) {
            out.erasure_mask[i] = true;
            continue;
        }
        const SymbolCode code = decode_bits(*outcome);
        out.bits[2 * i] = code.first();
        out.bits[2 * i + 1] = code.second();
    }
    return out;
}

inline DecodedBlock transmit_and_decode_block(const Block& block, const Devices& devices, const EveModel& eve,
                                              Rng& rng) {
    return transmit_and_decode_block(block, LinkModel(devices, eve), rng);
}

// ---------------------------------------------------------------------------
// Full session

struct DetectionSummary {
    double start_s = 0.0;
    bool passed = false;
    std::string reason;
    std::uint64_t emitted = 0;
    std::uint64_t survived = 0;
    double expected_survivors = 0.0;
    std::optional<analysis::QberEstimate> qber;
};

struct BlockSummary {
    std::uint64_t index = 0;
    double start_s = 0.0;
    std::uint64_t symbols = 0;
    std::uint64_t retransmitted = 0;
    std::uint64_t erasures = 0;
    std::uint64_t symbol_errors = 0;  // simulator ground truth
};

struct SessionTranscript {
    Phase final_phase = Phase::Idle;
    std::string abort_reason;
    std::uint64_t message_bits = 0;
    std::vector<bool> delivered;         // message_bits long
    std::vector<bool> delivered_symbol;  // which symbols arrived
    std::uint64_t delivered_bits = 0;
    std::uint64_t bit_errors = 0;
    std::uint64_t symbol_errors = 0;
    std::uint64_t slots_sent = 0;
    std::uint64_t erased_slots = 0;
    std::uint64_t retransmissions = 0;
    std::uint64_t truncated_symbols = 0;
    double duration_s = 0.0;
    double sfg_event_rate = 0.0;
    double modulation_rate = 0.0;
    analysis::BasisCounts pooled_detection;
    std::vector<DetectionSummary> detections;
    std::vector<BlockSummary> blocks;
    std::array<double, 4> fidelity_table{};
    std::vector<Record> events;

    double ber() const {
        return delivered_bits ? static_cast<double>(bit_errors) / static_cast<double>(delivered_bits) : 0.0;
    }
    double erasure_fraction() const {
        return slots_sent ? static_cast<double>(erased_slots) / static_cast<double>(slots_sent) : 0.0;
    }
    double effective_rate() const {
        return duration_s > 0.0 ? static_cast<double>(delivered_bits) / duration_s : 0.0;
    }

    std::string to_jsonl() const {
        std::string out;
        for (const auto& r : events) {
            out += r.dump();
            out += '\n';
        }
        return out;
    }
};

inline Record make_record(double timestamp_s, const char* kind, Record payload) {
    Record r;
    r["timestamp_s"] = timestamp_s;
    r["event_kind"] = kind;
    r["payload"] = std::move(payload);
    return r;
}

inline Record to_json(const analysis::QberEstimate& q) {
    return Record{{"e", q.e},         {"e_x", q.e_x},       {"e_z", q.e_z},       {"n_x", q.n_x},
                  {"n_z", q.n_z},     {"errors_x", q.errors_x}, {"errors_z", q.errors_z}, {"ci_low", q.ci_low},
                  {"ci_high", q.ci_high}};
}

inline std::string bits_to_hex(const std::vector<bool>& bits) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve((bits.size() + 3) / 4);
    for (std::size_t i = 0; i < bits.size(); i += 4) {
        int nibble = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            nibble <<= 1;
            if (i + j < bits.size() && bits[i + j]) nibble |= 1;
        }
        out.push_back(kDigits[nibble]);
    }
    return out;
}

inline std::uint64_t detection_photons(const SessionConfig& config) {
    if (config.protocol.detection_photons > 0) return config.protocol.detection_photons;
    const double block_s = static_cast<double>(config.protocol.block_size) / config.devices.modulator.rate_hz;
    return static_cast<std::uint64_t>(
        std::ceil(config.protocol.detection_fraction * block_s * config.devices.source.pair_rate_hz - 1e-9));
}

// Runs detection, then blocks with in-place retransmission of erased
// symbols, re-checking the channel every `redetect_every_blocks` blocks.
inline SessionTranscript run_qsdc(const std::vector<bool>& message, const SessionConfig& config, Rng& rng) {
    if (message.empty()) throw DomainError("message must be non-empty");
    config.validate();

    SessionTranscript tr;
    tr.message_bits = message.size();
    tr.modulation_rate = config.devices.modulator.rate_hz;
    const std::size_t symbols = (message.size() + 1) / 2;
    std::vector<SymbolCode> codes(symbols);
    for (std::size_t s = 0; s < symbols; ++s) {
        const bool second = 2 * s + 1 < message.size() && message[2 * s + 1];
        codes[s] = SymbolCode(message[2 * s], second);
    }

    const LinkModel link(config.devices, config.eve);
    tr.sfg_event_rate = link.sfg_event_rate();
    for (BellLabel label : kBellLabels) tr.fidelity_table[static_cast<std::size_t>(label)] = link.fidelity(label);

    Session session;
    double clock = 0.0;
    tr.events.push_back(make_record(clock, "session_started",
                                    Record{{"message_bits", message.size()},
                                           {"symbols", symbols},
                                           {"block_size", config.protocol.block_size},
                                           {"sfg_event_rate_hz", link.sfg_event_rate()},
                                           {"events_per_slot", link.events_per_slot()}}));

    const auto set_phase = [&](Phase to, std::string reason = {}) {
        const Phase from = session.phase();
        session.transition(to, reason);
        Record payload{{"from", to_string(from)}, {"to", to_string(to)}};
        if (!reason.empty()) payload["reason"] = reason;
        tr.events.push_back(make_record(clock, "phase_change", std::move(payload)));
    };

    const DetectionConfig det_config{config.protocol.policy, detection_photons(config),
                                     config.protocol.photon_decrease_factor};
    // Returns false when the session aborted.
    const auto detect = [&]() {
        set_phase(Phase::SecurityDetection);
        auto result = run_security_detection(session, config.devices, config.eve, det_config, rng);
        DetectionSummary summary;
        summary.start_s = clock;
        summary.passed = result.passed;
        summary.reason = result.reason;
        summary.emitted = result.emitted;
        summary.survived = result.survived;
        summary.expected_survivors = result.expected_survivors;
        summary.qber = result.qber;
        tr.detections.push_back(summary);
        tr.pooled_detection += result.counts;

        Record payload{{"round", tr.detections.size() - 1},
                       {"photons_emitted", result.emitted},
                       {"photons_survived", result.survived},
                       {"expected_survivors", result.expected_survivors},
                       {"idler_delay_s", result.idler_delay_s},
                       {"idler_timestamp_s", clock + result.idler_delay_s}};
        payload["qber"] = result.qber ? to_json(*result.qber) : Record(nullptr);
        payload["passed"] = result.passed;
        if (!result.passed) payload["reason"] = result.reason;
        tr.events.push_back(make_record(clock, "detection_round", std::move(payload)));
        clock += result.duration_s;

        Record change{{"from", to_string(Phase::SecurityDetection)}, {"to", to_string(session.phase())}};
        if (!result.passed) change["reason"] = result.reason;
        tr.events.push_back(make_record(clock, "phase_change", std::move(change)));
        return result.passed;
    };

    tr.delivered.assign(message.size(), false);
    tr.delivered_symbol.assign(symbols, false);
    std::vector<std::uint64_t> attempts(symbols, 0);
    std::deque<std::size_t> pending;
    std::size_t next_new = 0;

    bool alive = detect();
    std::uint64_t block_index = 0;
    while (alive && (next_new < symbols || !pending.empty())) {
        if (config.protocol.redetect_every_blocks > 0 && block_index > 0 &&
            block_index % config.protocol.redetect_every_blocks == 0) {
            alive = detect();
            if (!alive) break;
        }
        std::vector<std::size_t> scheduled;
        scheduled.reserve(config.protocol.block_size);
        std::uint64_t retransmitted = 0;
        while (scheduled.size() < config.protocol.block_size && !pending.empty()) {
            scheduled.push_back(pending.front());
            pending.pop_front();
            ++retransmitted;
        }
        while (scheduled.size() < config.protocol.block_size && next_new < symbols) scheduled.push_back(next_new++);

        std::vector<bool> block_bits;
        block_bits.reserve(2 * scheduled.size());
        for (std::size_t s : scheduled) {
            block_bits.push_back(codes[s].first());
            block_bits.push_back(codes[s].second());
        }
        const Block block = encode_block(block_bits, scheduled.size());
        session.record_block();
        const DecodedBlock decoded = transmit_and_decode_block(block, link, rng);

        BlockSummary summary;
        summary.index = block_index;
        summary.start_s = clock;
        summary.symbols = scheduled.size();
        summary.retransmitted = retransmitted;
        for (std::size_t i = 0; i < scheduled.size(); ++i) {
            const std::size_t s = scheduled[i];
            ++attempts[s];
            if (decoded.erasure_mask[i]) {
                ++summary.erasures;
                if (attempts[s] > config.protocol.max_retransmissions) {
                    ++tr.truncated_symbols;
                } else {
                    pending.push_back(s);
                }
                continue;
            }
            tr.delivered_symbol[s] = true;
            const SymbolCode got(decoded.bits[2 * i], decoded.bits[2 * i + 1]);
            if (!(got == codes[s])) ++summary.symbol_errors;
            const std::size_t b0 = 2 * s;
            tr.delivered[b0] = got.first();
            tr.delivered_bits += 1;
            tr.bit_errors += got.first() != message[b0];
            if (b0 + 1 < message.size()) {
                tr.delivered[b0 + 1] = got.second();
                tr.delivered_bits += 1;
                tr.bit_errors += got.second() != message[b0 + 1];
            }
        }
        tr.slots_sent += summary.symbols;
        tr.erased_slots += summary.erasures;
        tr.retransmissions += retransmitted;
        tr.symbol_errors += summary.symbol_errors;
        tr.blocks.push_back(summary);

        tr.events.push_back(make_record(
            clock, "block",
            Record{{"index", summary.index},
                   {"symbols", summary.symbols},
                   {"retransmitted", summary.retransmitted},
                   {"erasures", summary.erasures},
                   {"symbol_error_rate", summary.symbols > summary.erasures
                                             ? static_cast<double>(summary.symbol_errors) /
                                                   static_cast<double>(summary.symbols - summary.erasures)
                                             : 0.0}}));
        clock += static_cast<double>(summary.symbols) * link.slot_s();
        ++block_index;
    }

    tr.duration_s = clock;
    if (alive) {
        set_phase(Phase::Completed);
        tr.events.push_back(make_record(clock, "session_completed",
                                        Record{{"delivered_bits", tr.delivered_bits},
                                               {"truncated_symbols", tr.truncated_symbols},
                                               {"bit_errors", tr.bit_errors},
                                               {"delivered_hex", bits_to_hex(tr.delivered)}}));
    } else {
        tr.events.push_back(make_record(clock, "session_aborted",
                                        Record{{"reason", session.abort_reason()},
                                               {"blocks_sent", session.blocks_sent()}}));
    }
    tr.final_phase = session.phase();
    tr.abort_reason = session.abort_reason();
    return tr;
}

}  // namespace qsdc::protocol
