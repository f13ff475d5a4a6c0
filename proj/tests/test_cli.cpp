#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const char* kConfig = R"(
[scenario]
id = cli-test
seed = 5
n_vehicles = 0
ego_lane = 1
ego_arc = 5
ego_speed = 10

[planner]
branching = 3
depth = 3

[net]
n_policies_in = 27
epochs = 3
batch = 8

[train]
epochs = 15
)";

fs::path scratch() {
    static fs::path p = [] {
        fs::path dir = fs::temp_directory_path() / "pirl_cli_test";
        fs::remove_all(dir);
        fs::create_directories(dir);
        std::ofstream f(dir / "test.cfg");
        f << kConfig;
        return dir;
    }();
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PIRL_CLI) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// byte comparison of a whole output directory, ignoring the run.log sidecar
void expect_dirs_identical(const fs::path& a, const fs::path& b) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) {
        if (e.path().filename() == "run.log") continue;
        names.push_back(e.path().filename().string());
    }
    ASSERT_FALSE(names.empty());
    for (const std::string& n : names) {
        ASSERT_TRUE(fs::exists(b / n)) << n;
        EXPECT_EQ(slurp(a / n), slurp(b / n)) << n << " differs";
    }
}

std::string cfg_path() { return (scratch() / "test.cfg").string(); }

}  // namespace

TEST(Cli, PipelineRunsAndReports) {
    fs::path dir = scratch();
    ASSERT_EQ(run_cli("collect --config " + cfg_path() + " --mode expert --cycles 8 --seed 3 --split test --out " + (dir / "expert").string()), 0);
    ASSERT_EQ(run_cli("collect --config " + cfg_path() + " --mode training --cycles 5 --seed 4 --odometry " + (dir / "expert/odometry.csv").string() + " --out " + (dir / "training").string()), 0);
    ASSERT_EQ(run_cli("train --config " + cfg_path() + " --manifest " + (dir / "training/manifest.txt").string() + " --method lirl --seed 7 --out " + (dir / "lirl").string()), 0);
    ASSERT_EQ(run_cli("eval --config " + cfg_path() + " --manifest " + (dir / "expert/manifest.txt").string() + " --split test --method lirl --params " + (dir / "lirl/params.bin").string() + " --odometry " + (dir / "expert/odometry.csv").string() + " --out " + (dir / "eval_lirl").string()), 0);
    ASSERT_EQ(run_cli("report --eval " + (dir / "eval_lirl").string() + " --out " + (dir / "report").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "eval_lirl/rows.csv"));
    EXPECT_TRUE(fs::exists(dir / "report/comparison.csv"));
    EXPECT_TRUE(fs::exists(dir / "report/comparison.json"));
}

TEST(Cli, NetworkTrainingAndClosedLoop) {
    fs::path dir = scratch();
    ASSERT_TRUE(fs::exists(dir / "training/manifest.txt"));  // from the pipeline test
    ASSERT_EQ(run_cli("train --config " + cfg_path() + " --manifest " + (dir / "training/manifest.txt").string() + " --method pacnn+s --seed 7 --out " + (dir / "pacnn").string()), 0);
    ASSERT_EQ(run_cli("eval --config " + cfg_path() + " --manifest " + (dir / "expert/manifest.txt").string() + " --split test --method pacnn+s --params " + (dir / "pacnn/params.bin").string() + " --out " + (dir / "eval_pacnn").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "eval_pacnn/attention.csv"));
    ASSERT_EQ(run_cli("train --config " + cfg_path() + " --manifest " + (dir / "expert/manifest.txt").string() + " --split test --method ptacnn+s --base " + (dir / "pacnn/params.bin").string() + " --seed 7 --out " + (dir / "tan").string()), 0);
    ASSERT_EQ(run_cli("closedloop --config " + cfg_path() + " --method ptacnn+s --params " + (dir / "pacnn/params.bin").string() + " --tan-params " + (dir / "tan/params.bin").string() + " --cycles 4 --seed 3 --out " + (dir / "cl").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "cl/trajectory.csv"));
    EXPECT_TRUE(fs::exists(dir / "cl/result.json"));
    EXPECT_TRUE(fs::exists(dir / "cl/temporal_weights.csv"));
}

TEST(Cli, DistinctExitCodes) {
    fs::path dir = scratch();
    // 2: missing input
    EXPECT_EQ(run_cli("collect --config /nonexistent.cfg --mode expert --cycles 2 --out " + (dir / "x1").string()), 2);
    EXPECT_EQ(run_cli("eval --config " + cfg_path() + " --manifest " + (dir / "expert/manifest.txt").string() + " --split test --method lirl --params /nonexistent.bin --out " + (dir / "x2").string()), 2);

    // 3: config fingerprint mismatch (same dataset, different config)
    std::ofstream f(dir / "other.cfg");
    f << kConfig << "\n[scenario]\nseed = 999\n";
    f.close();
    EXPECT_EQ(run_cli("train --config " + (dir / "other.cfg").string() + " --manifest " + (dir / "training/manifest.txt").string() + " --method lirl --out " + (dir / "x3").string()), 3);

    // 5: no cycles
    EXPECT_EQ(run_cli("closedloop --config " + cfg_path() + " --method lirl --params " + (dir / "lirl/params.bin").string() + " --cycles 0 --out " + (dir / "x4").string()), 5);
    EXPECT_EQ(run_cli("eval --config " + cfg_path() + " --manifest " + (dir / "expert/manifest.txt").string() + " --split nosuchsplit --method lirl --params " + (dir / "lirl/params.bin").string() + " --out " + (dir / "x5").string()), 5);
}

TEST(Cli, ReRunsAreByteIdentical) {
    fs::path dir = scratch();
    for (const char* suffix : {"a", "b"}) {
        ASSERT_EQ(run_cli("collect --config " + cfg_path() + " --mode expert --cycles 6 --seed 11 --split test --out " + (dir / ("det_collect_" + std::string(suffix))).string()), 0);
        ASSERT_EQ(run_cli("train --config " + cfg_path() + " --manifest " + (dir / ("det_collect_" + std::string(suffix)) / "manifest.txt").string() + " --split test --method lirl --seed 13 --out " + (dir / ("det_train_" + std::string(suffix))).string()), 0);
        ASSERT_EQ(run_cli("eval --config " + cfg_path() + " --manifest " + (dir / ("det_collect_" + std::string(suffix)) / "manifest.txt").string() + " --split test --method lirl --params " + (dir / ("det_train_" + std::string(suffix)) / "params.bin").string() + " --out " + (dir / ("det_eval_" + std::string(suffix))).string()), 0);
    }
    expect_dirs_identical(dir / "det_collect_a", dir / "det_collect_b");
    expect_dirs_identical(dir / "det_train_a", dir / "det_train_b");
    expect_dirs_identical(dir / "det_eval_a", dir / "det_eval_b");
}
