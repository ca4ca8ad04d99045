#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("pibsde_cli_" + std::string(info->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string write_config(const std::string& text) {
        const fs::path p = dir_ / "cfg.txt";
        std::ofstream(p) << text << "out = " << (dir_ / "out").string() << '\n';
        return p.string();
    }

    int run(const std::string& args) {
        const std::string cmd = std::string(PIBSDE_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                                " 2> " + (dir_ / "stderr.txt").string();
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string read(const fs::path& p) {
        std::ifstream f(p);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, MissingConfigOptionIsUsageError) { EXPECT_EQ(run("riccati"), 2); }

TEST_F(Cli, BadConfigExitsWithTwo) {
    const std::string cfg = write_config("model = linear\nkappa = -1\n");
    EXPECT_EQ(run("riccati --config " + cfg), 2);
    EXPECT_NE(read(dir_ / "stderr.txt").find("line 2"), std::string::npos);
}

TEST_F(Cli, NovikovFailureExitsWithThree) {
    const std::string cfg = write_config("model = cir\nn_inner = 4\nT = .05\nn_checkpoints = 2\n");
    EXPECT_EQ(run("xi --config " + cfg + " --sigma 0.001"), 3);
    EXPECT_EQ(run("fig2 --config " + cfg + " --sigma 0.001"), 3);
    EXPECT_NE(read(dir_ / "stderr.txt").find("novikov"), std::string::npos);
}

TEST_F(Cli, ChecksWritesReportAndEcho) {
    const std::string cfg = write_config("model = cir\n");
    ASSERT_EQ(run("checks --config " + cfg), 0);
    EXPECT_TRUE(fs::exists(dir_ / "out" / "conditions.txt"));
    const std::string echo = read(dir_ / "out" / "checks_config.txt");
    EXPECT_NE(echo.find("y0 = 0.050000000000000003  # assumed"), std::string::npos);
}

TEST_F(Cli, RiccatiRunsAndSeedOverrideApplies) {
    const std::string cfg = write_config("model = linear\n");
    ASSERT_EQ(run("riccati --config " + cfg + " --seed 77"), 0);
    EXPECT_NE(read(dir_ / "out" / "riccati_config.txt").find("seed = 77"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir_ / "out" / "riccati.csv"));
}
