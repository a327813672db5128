#include "qsdc/scenario.hpp"

#include <gtest/gtest.h>

#include <string>

using namespace qsdc;
using namespace qsdc::scenario;

namespace {

const char* kSmall = R"(seed: 5
protocol:
  block_size: 32
  detection_photons: 2000
message:
  bits: "1011001110"
)";

// Reference FNV-1a-64 written bytewise from the published constants.
std::uint64_t reference_fnv(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (char c : s) {
        h = h ^ static_cast<std::uint8_t>(c);
        h = h * 1099511628211ULL;
    }
    return h;
}

}  // namespace

TEST(Parse, DefaultsAndOverrides) {
    const auto sc = parse_scenario(kSmall);
    EXPECT_EQ(sc.seed, 5u);
    EXPECT_EQ(sc.topology.subnets, 5);
    EXPECT_EQ(sc.session.protocol.block_size, 32u);
    EXPECT_DOUBLE_EQ(sc.session.devices.signal_fiber.attenuation_db_per_km, 0.2);
    EXPECT_EQ(message_bits(sc.message).size(), 10u);
}

TEST(Parse, SeedIsMandatory) {
    EXPECT_THROW(parse_scenario("protocol:\n  block_size: 4\n"), ScenarioError);
    EXPECT_THROW(parse_scenario(""), ScenarioError);
}

TEST(Parse, ErrorsCarryLineNumbers) {
    try {
        parse_scenario("seed: 1\ndevices:\n  sfg:\n    conversion_efficiency: 2.0\n");
        FAIL();
    } catch (const ScenarioError& e) {
        EXPECT_EQ(e.line(), 4);
        EXPECT_NE(std::string(e.what()).find("conversion_efficiency"), std::string::npos);
    }
    try {
        parse_scenario("seed: 1\ntopology:\n  subnets: 3\n  colour: red\n");
        FAIL();
    } catch (const ScenarioError& e) {
        EXPECT_EQ(e.line(), 4);
        EXPECT_NE(std::string(e.what()).find("unknown field 'topology.colour'"), std::string::npos);
    }
    try {
        parse_scenario("seed: 1\nprotocol:\n  block_size: -3\n");
        FAIL();
    } catch (const ScenarioError& e) {
        EXPECT_EQ(e.line(), 3);
    }
    EXPECT_THROW(parse_scenario("seed: 1\neve:\n  kind: wiretap\n"), ScenarioError);
    EXPECT_THROW(parse_scenario("seed: 1\nprotocol:\n  qber_threshold: 0.6\n"), ScenarioError);
    EXPECT_THROW(parse_scenario("seed: 1\ntopology:\n  alice: [0, 0]\n  bob: [0, 0]\n"), ScenarioError);
    EXPECT_THROW(parse_scenario("seed: 1\ntopology:\n  bob: [9, 0]\n"), ScenarioError);
    EXPECT_THROW(parse_scenario("seed: 1\nmessage:\n  bits: \"012\"\n"), ScenarioError);
    EXPECT_THROW(parse_scenario("seed: [1\n"), ScenarioError);
}

TEST(Parse, JsonDocumentsAreAccepted) {
    const auto sc = parse_scenario(R"({"seed": 3, "eve": {"kind": "tap", "fraction": 0.25}})");
    EXPECT_EQ(sc.session.eve.kind, protocol::EveKind::Tap);
    EXPECT_DOUBLE_EQ(sc.session.eve.fraction, 0.25);
}

TEST(Canonical, RoundTripIsStable) {
    const auto sc = parse_scenario(kSmall);
    const auto again = parse_scenario(canonical_text(sc));
    EXPECT_EQ(canonical_text(sc), canonical_text(again));
    EXPECT_EQ(digest(sc), digest(again));
    EXPECT_EQ(digest(sc), hex64(reference_fnv(canonical_text(sc))));
    auto other = sc;
    other.seed = 6;
    EXPECT_NE(digest(sc), digest(other));
}

TEST(Fnv, KnownVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Message, HexLengthAndRandom) {
    MessageSpec m;
    m.hex = "a5";
    EXPECT_EQ(message_bits(m), (std::vector<bool>{true, false, true, false, false, true, false, true}));
    m.length_bits = 3;
    EXPECT_EQ(message_bits(m).size(), 3u);
    MessageSpec r;
    r.random_bits = 1000;
    r.random_seed = 4;
    EXPECT_EQ(message_bits(r), message_bits(r));
    const auto bits = message_bits(r);
    const auto ones = std::count(bits.begin(), bits.end(), true);
    EXPECT_GT(ones, 400);
    EXPECT_LT(ones, 600);
}

TEST(Run, ReportFieldsAndDeterminism) {
    const auto sc = parse_scenario(kSmall);
    const auto a = run_scenario(sc);
    const auto b = run_scenario(sc);
    EXPECT_EQ(a.report_text, b.report_text);
    EXPECT_EQ(a.transcript_text, b.transcript_text);
    EXPECT_EQ(a.report["outcome"]["phase"], "completed");
    EXPECT_EQ(a.report["message"]["ber"], 0.0);
    EXPECT_EQ(a.report["scenario_digest"], digest(sc));
    EXPECT_TRUE(a.report["plan"]["is_fully_connected"].get<bool>());
    EXPECT_EQ(a.report["plan"]["channel_pair"]["signal"], "CH17");
    EXPECT_FALSE(a.report["secrecy"].is_null());
    EXPECT_EQ(a.report.find("runtime_s"), a.report.end());
    const auto csv = report_csv(a);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Run, TranscriptLinesCarryRequiredFields) {
    const auto r = run_scenario(parse_scenario(kSmall));
    std::stringstream ss(r.transcript_text);
    std::string line;
    int n = 0;
    while (std::getline(ss, line)) {
        const auto j = Json::parse(line);
        EXPECT_TRUE(j.contains("timestamp_s"));
        EXPECT_TRUE(j.contains("event_kind"));
        EXPECT_TRUE(j.contains("payload"));
        ++n;
    }
    EXPECT_GT(n, 3);
}

TEST(Run, CapacityExceededPropagates) {
    EXPECT_THROW(run_scenario(parse_scenario("seed: 1\ntopology:\n  subnets: 6\n")), CapacityExceeded);
}

TEST(Sweep, SetPathKeepsTypes) {
    Json doc = canonical_json(parse_scenario(kSmall));
    set_path(doc, "protocol.block_size", 8);
    EXPECT_TRUE(doc["protocol"]["block_size"].is_number_unsigned());
    EXPECT_THROW(set_path(doc, "protocol.block_size", 2.5), ScenarioError);
    EXPECT_THROW(set_path(doc, "protocol.nothing", 1), ScenarioError);
    EXPECT_THROW(set_path(doc, "eve.kind", 1), ScenarioError);
    set_path(doc, "devices.fiber_signal.length_km", 12.5);
    EXPECT_DOUBLE_EQ(doc["devices"]["fiber_signal"]["length_km"].get<double>(), 12.5);
}

TEST(Sweep, FiberLengthMonotoneAndOrdered) {
    auto base = parse_scenario(kSmall);
    base.session.devices.source.pair_rate_hz = 2e4;  // below the SFG ceiling
    const std::vector<double> lengths{0, 10, 20, 40};
    const auto serial = run_sweep(base, "devices.fiber_signal.length_km", lengths, 1);
    const auto parallel = run_sweep(base, "devices.fiber_signal.length_km", lengths, 4);
    ASSERT_EQ(serial.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(serial[i].index, i);
        EXPECT_EQ(serial[i].seed, base.seed ^ i);
        EXPECT_DOUBLE_EQ(serial[i].info_rate, parallel[i].info_rate);
        EXPECT_DOUBLE_EQ(serial[i].ber, parallel[i].ber);
        if (i > 0) {
            EXPECT_LE(serial[i].info_rate, serial[i - 1].info_rate);
        }
    }
    EXPECT_EQ(sweep_csv("devices.fiber_signal.length_km", serial), sweep_csv("devices.fiber_signal.length_km", parallel));
    EXPECT_TRUE(run_sweep(base, "devices.fiber_signal.length_km", {}, 2).empty());
}

TEST(Sweep, BadValueIsRejected) {
    const auto base = parse_scenario(kSmall);
    EXPECT_THROW(run_sweep(base, "devices.detector.efficiency", {1.5}), ScenarioError);
}

TEST(Fringe, ExactModeRecoversTarget) {
    auto sc = parse_scenario("seed: 3\nfringe:\n  monte_carlo: false\n  target_fidelity:\n    psi_minus: 0.96\n");
    const auto f = run_fringe(sc, BellLabel::PsiMinus);
    EXPECT_NEAR(f.state_fidelity, 0.96, 1e-12);
    EXPECT_NEAR(f.estimate.fidelity, 0.96, 1e-9);
    ASSERT_EQ(f.samples.size(), 32u);
}

TEST(Fringe, PhaseOnlyAssumption) {
    // Pure dephasing of phi+ gives F = (1 + V)/2.
    auto sc = parse_scenario(
        "seed: 3\ndevices:\n  source:\n    heralding_noise:\n      dephasing_q: 0.1\n"
        "fringe:\n  monte_carlo: false\n  noise_assumption: phase_only\n");
    const auto f = run_fringe(sc, BellLabel::PhiPlus);
    EXPECT_NEAR(f.estimate.fidelity, f.state_fidelity, 1e-9);
}

TEST(Fringe, MonteCarloIsSeeded) {
    auto sc = parse_scenario("seed: 3\ndevices:\n  source:\n    pair_rate_hz: 5000\n");
    const auto a = fringe_summary(run_fringe(sc, BellLabel::PhiPlus)).dump();
    EXPECT_EQ(a, fringe_summary(run_fringe(sc, BellLabel::PhiPlus)).dump());
    sc.seed = 4;
    EXPECT_NE(a, fringe_summary(run_fringe(sc, BellLabel::PhiPlus)).dump());
}
