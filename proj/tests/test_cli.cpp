#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(QSDC_CLI_PATH) + " " + args + " 2>/dev/null";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string scenario(const std::string& name) { return std::string(QSDC_SCENARIO_DIR) + "/" + name; }

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("qsdc_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Cli, PlanExitCodes) {
    const auto ok = run("plan --subnets 5 --users-per-subnet 3");
    EXPECT_EQ(ok.code, 0);
    const auto doc = nlohmann::json::parse(ok.out);
    EXPECT_EQ(doc["plan"]["total_channels"], 30);
    EXPECT_EQ(doc["connectivity"]["covered_pairs"], 105);
    EXPECT_EQ(run("plan --subnets 6").code, 3);
    EXPECT_EQ(run("plan --subnets 6 --grid-pairs 21").code, 0);
    EXPECT_EQ(run("plan --subnets 0").code, 1);
    EXPECT_EQ(run("plan --format xml").code, 1);
}

TEST(Cli, RunWritesArtifacts) {
    const auto dir = temp_dir("run");
    const auto r = run("run --scenario " + scenario("ideal.yaml") + " --out " + dir.string());
    EXPECT_EQ(r.code, 0);
    EXPECT_TRUE(fs::exists(dir / "transcript.jsonl"));
    EXPECT_TRUE(fs::exists(dir / "report.json"));
    EXPECT_TRUE(fs::exists(dir / "timing.json"));
    const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(report["message"]["ber"], 0.0);
}

TEST(Cli, RunIsByteIdenticalAcrossReruns) {
    const auto a = temp_dir("det_a");
    const auto b = temp_dir("det_b");
    ASSERT_EQ(run("run --scenario " + scenario("paper_40km.yaml") + " --out " + a.string()).code, 0);
    ASSERT_EQ(run("run --scenario " + scenario("paper_40km.yaml") + " --out " + b.string()).code, 0);
    EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
    EXPECT_EQ(slurp(a / "transcript.jsonl"), slurp(b / "transcript.jsonl"));
}

TEST(Cli, OutDirFromEnvironment) {
    const auto dir = temp_dir("env");
    const std::string cmd = "QSDC_OUT_DIR=" + dir.string() + " " + std::string(QSDC_CLI_PATH) +
                            " run --scenario " + scenario("ideal.yaml") + " --format csv > /dev/null 2>&1";
    EXPECT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(dir / "report.csv"));
}

TEST(Cli, AbortAndValidationExitCodes) {
    const auto dir = temp_dir("abort");
    EXPECT_EQ(run("run --scenario " + scenario("intercept_resend.yaml") + " --out " + dir.string()).code, 2);
    EXPECT_EQ(run("run --scenario /nonexistent.yaml --out " + dir.string()).code, 1);
    const auto bad = dir / "bad.yaml";
    std::ofstream(bad) << "seed: 1\nmodulator: {}\n";
    EXPECT_EQ(run("run --scenario " + bad.string() + " --out " + dir.string()).code, 1);
    const auto wide = dir / "wide.yaml";
    std::ofstream(wide) << "seed: 1\ntopology:\n  subnets: 7\n";
    EXPECT_EQ(run("run --scenario " + wide.string() + " --out " + dir.string()).code, 3);
}

TEST(Cli, SweepRowsAndEmptyValues) {
    const auto r = run("sweep --scenario " + scenario("paper_40km.yaml") +
                       " --param devices.fiber_signal.length_km --values 0,10,20,40 --jobs 2");
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 5);
    const auto empty = run("sweep --scenario " + scenario("paper_40km.yaml") +
                           " --param devices.fiber_signal.length_km --values \"\"");
    EXPECT_EQ(empty.code, 0);
    EXPECT_EQ(std::count(empty.out.begin(), empty.out.end(), '\n'), 1);
    EXPECT_EQ(run("sweep --scenario " + scenario("paper_40km.yaml") + " --param nope --values 1").code, 1);
    EXPECT_EQ(run("sweep --scenario " + scenario("paper_40km.yaml") +
                  " --param devices.fiber_signal.length_km --values 1,x")
                  .code,
              1);
}

TEST(Cli, FringeOutput) {
    const auto r = run("fringe --scenario " + scenario("table1_fringe.yaml") + " --bell psi_minus");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("# fidelity_estimate="), std::string::npos);
    EXPECT_EQ(run("fringe --scenario " + scenario("table1_fringe.yaml") + " --bell omega").code, 1);
}
