#include "rinv/io.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

CliRun run(const std::string& args) {
    std::string cmd = std::string(RINV_CLI_PATH) + " " + args + " 2>/dev/null";
    CliRun r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
    int st = pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string source(const std::string& rel) { return std::string(RINV_SOURCE_DIR) + "/" + rel; }

fs::path scratch(const std::string& name) {
    fs::path d = fs::temp_directory_path() / "rinv_test_cli" / name;
    fs::remove_all(d);
    fs::create_directories(d.parent_path());
    return d;
}

fs::path write_config(const std::string& name, const std::string& body) {
    fs::path p = fs::temp_directory_path() / "rinv_test_cli" / (name + ".cfg");
    fs::create_directories(p.parent_path());
    std::ofstream(p) << body;
    return p;
}

const std::string kSmallDiag = "--override diagonal.n=400";
const char* kEit = R"({"problem": "eit", "grid": {"n": 17}, "currents": 4, "delta": 1e-3,
                       "constants": {"radius": 0.5, "samples": 5}})";

}  // namespace

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("--help").code, 0);
    EXPECT_EQ(run("verify").code, 2);
    EXPECT_EQ(run("verify --config /nonexistent/file.cfg").code, 2);
    EXPECT_EQ(run("verify --config " + write_config("broken", "{not json").string()).code, 2);
    EXPECT_EQ(run("verify --config " + write_config("array", "[1, 2]").string()).code, 2);
    EXPECT_EQ(run("verify --config " + source("accept/default.cfg") + " --override bogus_key=1").code, 2);
    EXPECT_EQ(run("verify --config " + source("accept/default.cfg") + " --override noequals").code, 2);
}

TEST(Cli, VerifyDiagonal) {
    CliRun r = run("verify --config " + source("accept/default.cfg") + " " + kSmallDiag);
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(r.out.rfind("name,status,value\n", 0), 0u);
    EXPECT_NE(r.out.find("vsc_audit,pass"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, ReconstructWritesArtifacts) {
    fs::path out = scratch("recon") / "nested" / "dir";
    CliRun r = run("reconstruct --config " + source("accept/default.cfg") + " " + kSmallDiag + " --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.out;
    for (const char* f : {"result.json", "x.bin", "r_hat.bin", "profile.svg"}) EXPECT_TRUE(fs::exists(out / f)) << f;
    EXPECT_EQ(rinv::read_vector_bin(out / "x.bin").size(), 800);
    std::ifstream f(out / "result.json");
    auto doc = nlohmann::json::parse(f);
    EXPECT_EQ(doc["status"], "converged");
    EXPECT_EQ(doc["scheme"], "variational");
    EXPECT_TRUE(doc["meta"].contains("config_hash"));
    EXPECT_LE(doc["certificates"]["eta_violation"].get<double>(), 0.0);
}

TEST(Cli, ReconstructExactData) {
    fs::path out = scratch("exact");
    CliRun r = run("reconstruct --config " + source("accept/default.cfg") + " " + kSmallDiag +
                " --override delta=0 --out " + out.string());
    EXPECT_EQ(r.code, 0) << r.out;
}

TEST(Cli, ReconstructGridProblem) {
    fs::path out = scratch("eit");
    CliRun r = run("reconstruct --config " + write_config("eit", kEit).string() + " --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(out / "field.svg"));
    std::ifstream f(out / "field.csv");
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header, "node,x,y,truth,reconstruction");
}

TEST(Cli, ForcedFailingAuxIsScientificFailure) {
    fs::path cfg = write_config("eit_verify", kEit);
    EXPECT_EQ(run("verify --config " + cfg.string()).code, 0);
    CliRun r = run("verify --config " + cfg.string() + " --override eit.aux=current");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("aux_selection_current,FAIL"), std::string::npos);
}

TEST(Cli, SweepReportsAndValidatesLevels) {
    fs::path out = scratch("sweep");
    std::string base = "sweep --config " + source("accept/diagonal_var.cfg") + " " + kSmallDiag;
    CliRun r = run(base + " --override sweep.seeds=[1] --override sweep.deltas=[1e-1,1e-2,1e-3] --out " + out.string());
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("residual_K,"), std::string::npos);
    for (const char* f : {"sweep.csv", "rates.svg", "meta.json"}) EXPECT_TRUE(fs::exists(out / f)) << f;
    std::ifstream m(out / "meta.json");
    auto meta = nlohmann::json::parse(m);
    EXPECT_EQ(meta["eta_violations"], 0);
    EXPECT_EQ(meta["checks"].size(), 3u);

    EXPECT_EQ(run(base + " --override sweep.deltas=[1e-2] --out " + out.string()).code, 2);
}
