// qsdc: plan networks, run QSDC sessions, sweep parameters, scan fringes.
//
// Exit codes: 0 success / fully connected, 1 validation failure,
// 2 protocol abort, 3 wavelength capacity exceeded.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qsdc/netplan.hpp"
#include "qsdc/scenario.hpp"

namespace fs = std::filesystem;
using namespace qsdc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitAbort = 2;
constexpr int kExitCapacity = 3;

std::string default_out_dir() {
    if (const char* env = std::getenv("QSDC_OUT_DIR"); env && *env) return env;
    return ".";
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (item.find_first_not_of(" \t", used) != std::string::npos) {
            throw scenario::ScenarioError("invalid sweep value '" + item + "'");
        }
        values.push_back(v);
    }
    return values;
}

int cmd_plan(int subnets, int users, int grid, const std::string& format) {
    const auto plan = netplan::build_plan(subnets, users, grid);
    const auto report = netplan::verify_full_connectivity(plan, subnets, users);
    if (format == "csv") {
        std::cout << "kind,subnets,pair,signal,idler\n";
        for (const auto& [key, pair] : plan.inter_links) {
            std::cout << "inter," << netplan::subnet_name(key.first) << "-" << netplan::subnet_name(key.second) << ","
                      << pair.index << "," << pair.signal_itu << "," << pair.idler_itu << "\n";
        }
        for (const auto& [subnet, link] : plan.intra_links) {
            std::cout << "intra," << netplan::subnet_name(subnet) << "," << link.pair.index << ","
                      << link.pair.signal_itu << "," << link.pair.idler_itu << "\n";
        }
        std::cout << "# total_channels=" << plan.total_channels << " connected_pairs=" << report.covered.size()
                  << "/" << report.total_pairs << "\n";
    } else {
        nlohmann::ordered_json doc;
        doc["plan"] = netplan::to_json(plan);
        doc["connectivity"] = netplan::to_json(report);
        std::cout << doc.dump() << "\n";
    }
    return report.is_fully_connected ? kExitOk : kExitValidation;
}

int cmd_run(const scenario::Scenario& sc, const fs::path& out_dir, const std::string& format) {
    const auto result = scenario::run_scenario(sc);
    fs::create_directories(out_dir);
    write_file(out_dir / "transcript.jsonl", result.transcript_text);
    if (format == "csv") {
        write_file(out_dir / "report.csv", scenario::report_csv(result));
    } else {
        write_file(out_dir / "report.json", result.report_text);
    }
    nlohmann::ordered_json timing{{"scenario_digest", result.report["scenario_digest"]},
                                  {"wall_clock_s", result.runtime_s}};
    write_file(out_dir / "timing.json", timing.dump(2) + "\n");

    const auto& rep = result.report;
    std::cout << "phase=" << rep["outcome"]["phase"].get<std::string>();
    if (!rep["outcome"]["abort_reason"].is_null()) {
        std::cout << " reason=" << rep["outcome"]["abort_reason"].get<std::string>();
    }
    std::cout << " ber=" << rep["message"]["ber"].dump();
    if (!rep["qber"].is_null()) std::cout << " qber=" << rep["qber"]["e"].dump();
    std::cout << " info_rate_bps=" << rep["throughput"]["info_rate_bps"].dump() << " out=" << out_dir.string()
              << "\n";
    return result.transcript.final_phase == protocol::Phase::Aborted ? kExitAbort : kExitOk;
}

int cmd_sweep(const scenario::Scenario& sc, const std::string& param, const std::string& values_text,
              unsigned jobs, const std::string& out_path, const std::string& format) {
    const auto values = parse_values(values_text);
    const auto rows = scenario::run_sweep(sc, param, values, jobs);
    std::string text;
    if (format == "jsonl") {
        for (const auto& r : rows) {
            nlohmann::ordered_json j{{"index", r.index},
                                     {param, r.value},
                                     {"seed", r.seed},
                                     {"phase", r.phase},
                                     {"abort_reason", r.abort_reason},
                                     {"qber", r.qber ? nlohmann::ordered_json(*r.qber) : nlohmann::ordered_json()},
                                     {"ber", r.ber},
                                     {"info_rate_bps", r.info_rate},
                                     {"effective_rate_bps", r.effective_rate},
                                     {"cs_lower", r.cs_lower ? nlohmann::ordered_json(*r.cs_lower)
                                                             : nlohmann::ordered_json()},
                                     {"erasure_fraction", r.erasure_fraction}};
            text += j.dump() + "\n";
        }
    } else {
        text = scenario::sweep_csv(param, rows);
    }
    if (out_path.empty()) {
        std::cout << text;
    } else {
        write_file(out_path, text);
    }
    return kExitOk;
}

int cmd_fringe(const scenario::Scenario& sc, const std::string& label_text, const std::string& format) {
    const auto label = parse_bell_label(label_text);
    if (!label) throw scenario::ScenarioError("unknown Bell state '" + label_text + "'");
    const auto f = scenario::run_fringe(sc, *label);
    const auto summary = scenario::fringe_summary(f);
    if (format == "jsonl") {
        for (const auto& s : f.samples) {
            std::cout << nlohmann::ordered_json{{"phase_rad", s.phase}, {"coincidence_rate_hz", s.value}}.dump()
                      << "\n";
        }
        std::cout << summary.dump() << "\n";
    } else {
        std::cout << "phase_rad,coincidence_rate_hz\n";
        for (const auto& s : f.samples) {
            std::cout << nlohmann::json(s.phase).dump() << "," << nlohmann::json(s.value).dump() << "\n";
        }
        for (const auto& [key, value] : summary.items()) std::cout << "# " << key << "=" << value.dump() << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entanglement-based QSDC network simulator"};
    app.require_subcommand(1);

    auto* plan = app.add_subcommand("plan", "Build and verify a wavelength plan");
    int subnets = 5;
    int users = 3;
    int grid = netplan::kDefaultGridPairs;
    plan->add_option("--subnets", subnets, "Number of subnets")->check(CLI::PositiveNumber);
    plan->add_option("--users-per-subnet", users, "Users per subnet")->check(CLI::PositiveNumber);
    plan->add_option("--grid-pairs", grid, "Correlated channel pairs on the grid");

    std::string scenario_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = default_out_dir();

    auto* run = app.add_subcommand("run", "Run one QSDC session");
    run->add_option("--scenario", scenario_path, "Scenario file")->required();
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--out", out_dir, "Output directory (default $QSDC_OUT_DIR or .)");

    auto* sweep = app.add_subcommand("sweep", "Sweep one scalar scenario parameter");
    std::string param;
    std::string values;
    unsigned jobs = 1;
    std::string sweep_out;
    sweep->add_option("--scenario", scenario_path, "Scenario file")->required();
    sweep->add_option("--seed", seed, "Override the base seed");
    sweep->add_option("--param", param, "Dotted parameter path, e.g. devices.fiber_signal.length_km")->required();
    sweep->add_option("--values", values, "Comma-separated values (may be empty)")->required();
    sweep->add_option("--jobs", jobs, "Parallel runs");
    sweep->add_option("--out", sweep_out, "Output file (default stdout)");

    auto* fringe = app.add_subcommand("fringe", "Scan a two-photon interference fringe");
    std::string bell = "phi_plus";
    fringe->add_option("--scenario", scenario_path, "Scenario file")->required();
    fringe->add_option("--seed", seed, "Override the scenario seed");
    fringe->add_option("--bell", bell, "phi_plus, phi_minus, psi_plus or psi_minus");

    std::string plan_format = "jsonl";
    plan->add_option("--format", plan_format, "Output format")->check(CLI::IsMember({"jsonl", "csv"}));
    std::string run_format = "jsonl";
    run->add_option("--format", run_format, "Report format")->check(CLI::IsMember({"jsonl", "csv"}));
    std::string sweep_format = "csv";
    sweep->add_option("--format", sweep_format, "Output format")->check(CLI::IsMember({"jsonl", "csv"}));
    std::string fringe_format = "csv";
    fringe->add_option("--format", fringe_format, "Output format")->check(CLI::IsMember({"jsonl", "csv"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (plan->parsed()) return cmd_plan(subnets, users, grid, plan_format);

        auto sc = scenario::load_scenario(scenario_path);
        if (seed) sc.seed = *seed;
        if (run->parsed()) return cmd_run(sc, out_dir, run_format);
        if (sweep->parsed()) return cmd_sweep(sc, param, values, jobs, sweep_out, sweep_format);
        if (fringe->parsed()) return cmd_fringe(sc, bell, fringe_format);
    } catch (const CapacityExceeded& e) {
        std::cerr << "capacity error: " << e.what() << "\n";
        return kExitCapacity;
    } catch (const scenario::ScenarioError& e) {
        std::cerr << scenario_path << ": " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitValidation;
}
