// Copyright 2026 The repara_gap Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "repara_gap/cli.hpp"

using namespace repara_gap;
namespace fs = std::filesystem;

namespace {

const char* small_config = R"({
  "seed": 3,
  "env": {"state_dim": 4, "action_dim": 2, "horizon": 8},
  "policy": {"hidden": [8]},
  "train": {"episodes": 8, "epochs": 8},
  "eval": {"test_episodes": 8},
  "shift": {"zetas": [0, 1, 10]},
  "sweep": {"param": "policy_tau", "values": [0.5, 2]},
  "seeds": [3, 4, 5]
})";

class CliTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
               ("repara_gap_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        ::unsetenv(seed_env_var);
    }
    void TearDown() override
    {
        fs::remove_all(dir_);
        ::unsetenv(seed_env_var);
    }

    fs::path write(const std::string& name, const std::string& content) const
    {
        const fs::path p = dir_ / name;
        std::ofstream(p) << content;
        return p;
    }

    int run(std::vector<std::string> args)
    {
        args.insert(args.begin(), "repara-gap");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        out_.str({});
        err_.str({});
        return run_cli(static_cast<int>(argv.size()), argv.data(), out_, err_);
    }

    static std::string slurp(const fs::path& p)
    {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    static nlohmann::json error_line(const std::string& err)
    {
        const auto nl = err.find('\n');
        EXPECT_EQ(nl + 1, err.size()) << err;
        return nlohmann::json::parse(err.substr(0, nl));
    }

    fs::path dir_;
    std::ostringstream out_, err_;
};

} // namespace

TEST_F(CliTest, HelpDocumentsExitCodes)
{
    EXPECT_EQ(run({"--help"}), 0);
    for (const char* s : {"check-mdp", "run-external", "pacbayes", "20  config", "21  config", "40  a self-check"})
        EXPECT_NE(out_.str().find(s), std::string::npos) << s;
}

TEST_F(CliTest, UsageErrors)
{
    const auto cfg = write("c.json", small_config).string();
    EXPECT_EQ(run({}), exit_usage);
    EXPECT_EQ(run({"frobnicate", "--config", cfg}), exit_usage);
    EXPECT_EQ(run({"bounds"}), exit_usage);
    EXPECT_EQ(run({"bounds", "--config", cfg, "--format", "xml"}), exit_usage);
    EXPECT_EQ(run({"bounds", "--config", cfg, "--jobs", "0"}), exit_usage);
    EXPECT_EQ(error_line(err_.str())["error"], "usage");
}

TEST_F(CliTest, MissingConfigCreatesNoFiles)
{
    const fs::path out = dir_ / "out";
    EXPECT_EQ(run({"run-intrinsic", "--config", (dir_ / "nope.json").string(), "--out", out.string()}),
              static_cast<int>(ErrorCode::config_missing));
    EXPECT_FALSE(fs::exists(out));
    const auto j = error_line(err_.str());
    EXPECT_EQ(j["error"], "config_missing");
    EXPECT_EQ(j["exit"], 20);
}

TEST_F(CliTest, InvalidConfigCreatesNoFiles)
{
    const fs::path out = dir_ / "out";
    const auto cfg = write("bad.json", R"({"seed": 0, "env": {"state_dim": 2, "action_dim": 2, "gamma": 1.5}})");
    EXPECT_EQ(run({"bounds", "--config", cfg.string(), "--out", out.string()}),
              static_cast<int>(ErrorCode::config_invalid));
    EXPECT_FALSE(fs::exists(out));
    EXPECT_NE(error_line(err_.str())["message"].get<std::string>().find("gamma must be in (0,1]"), std::string::npos);

    const auto broken = write("broken.json", "{\"seed\": ");
    EXPECT_EQ(run({"run-external", "--config", broken.string(), "--out", out.string()}),
              static_cast<int>(ErrorCode::config_invalid));
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, CheckMdpOnDefaultConfig)
{
    const fs::path out = dir_ / "out";
    const auto cfg = fs::path(REPARA_SOURCE_DIR) / "configs" / "default.json";
    ASSERT_EQ(run({"check-mdp", "--config", cfg.string(), "--out", out.string()}), 0) << err_.str();
    const auto j = nlohmann::json::parse(slurp(out / "check_mdp.json"));
    EXPECT_TRUE(j["pass"].get<bool>());
    EXPECT_LT(j["max_tv"].get<double>(), 0.01);
}

TEST_F(CliTest, GradcheckPasses)
{
    const fs::path out = dir_ / "out";
    ASSERT_EQ(run({"gradcheck", "--config", write("c.json", small_config).string(), "--out", out.string()}), 0);
    const auto j = nlohmann::json::parse(slurp(out / "gradcheck.json"));
    EXPECT_LT(j["max_relative_error"].get<double>(), 1e-4);
}

TEST_F(CliTest, BoundsWithoutShiftEqualsConcentration)
{
    // L_r = 0 makes beta and the complexity term vanish as well.
    const auto cfg = write("b.json", R"({
      "seed": 0, "env": {"state_dim": 4, "action_dim": 2, "horizon": 8},
      "bounds": {"zeta": 0, "epsilon": 0, "reward_range": 3,
                 "constants": {"L_t1": 0.5, "L_t2": 0.5, "L_pi1": 1, "L_pi2": 1, "L_r": 0}}
    })");
    const fs::path out = dir_ / "out";
    ASSERT_EQ(run({"bounds", "--config", cfg.string(), "--out", out.string()}), 0) << err_.str();
    const auto j = nlohmann::json::parse(slurp(out / "bounds.json"));
    EXPECT_EQ(j["constants_source"], "config");
    EXPECT_FALSE(j.contains("measured"));
    const auto& r = j["report"];
    EXPECT_EQ(r["init_shift"].get<double>(), 0.0);
    EXPECT_EQ(r["transition_shift"].get<double>(), 0.0);
    EXPECT_GT(r["concentration"].get<double>(), 0.0);
    EXPECT_EQ(r["theorem1_total"].get<double>(), r["concentration"].get<double>());
}

TEST_F(CliTest, BoundsMeasuresConstantsWhenAbsent)
{
    const fs::path out = dir_ / "out";
    ASSERT_EQ(run({"bounds", "--config", write("c.json", small_config).string(), "--out", out.string()}), 0);
    const auto j = nlohmann::json::parse(slurp(out / "bounds.json"));
    EXPECT_EQ(j["constants_source"], "measured");
    EXPECT_EQ(j["reward_range_source"], "empirical_max");
    EXPECT_EQ(j["measured"]["seed"], 3);
    EXPECT_GT(j["report"]["theorem1_total"].get<double>(), j["measured"]["intrinsic_gap"].get<double>());
}

TEST_F(CliTest, PacBayesReport)
{
    const fs::path out = dir_ / "out";
    ASSERT_EQ(run({"pacbayes", "--config", write("c.json", small_config).string(), "--out", out.string()}), 0);
    const auto j = nlohmann::json::parse(slurp(out / "pacbayes.json"));
    EXPECT_GT(j["kl"].get<double>(), 0.0);
    EXPECT_GT(j["penalty"].get<double>(), 0.0);
    EXPECT_LT(j["perturbation_shift"].get<double>(), 1e-3);
}

TEST_F(CliTest, RerunsAreByteIdenticalAcrossJobs)
{
    const auto cfg = write("c.json", small_config).string();
    const fs::path a = dir_ / "a", b = dir_ / "b";
    for (const char* verb : {"run-intrinsic", "run-external"}) {
        ASSERT_EQ(run({verb, "--config", cfg, "--out", a.string()}), 0) << err_.str();
        ASSERT_EQ(run({verb, "--config", cfg, "--out", b.string(), "--jobs", "4"}), 0) << err_.str();
    }
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        ++files;
        EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
    }
    EXPECT_EQ(files, 5u);  // intrinsic, intrinsic_aggregate, external, external_aggregate, curve
    const std::string before = slurp(a / "intrinsic.csv");
    ASSERT_EQ(run({"run-intrinsic", "--config", cfg, "--out", a.string()}), 0);
    EXPECT_EQ(slurp(a / "intrinsic.csv"), before);
    EXPECT_EQ(before.substr(0, before.find('\n')),
              "seed,sweep_param,sweep_value,policy_tau,trans_tau_states,trans_tau_actions,n_params,lr_selected,"
              "train_return,test_return,gap,lipschitz_metric");
}

TEST_F(CliTest, JsonFormat)
{
    const fs::path out = dir_ / "out";
    ASSERT_EQ(run({"run-external", "--config", write("c.json", small_config).string(), "--out", out.string(),
                   "--format", "json"}),
              0);
    EXPECT_FALSE(fs::exists(out / "external.csv"));
    const auto rows = nlohmann::json::parse(slurp(out / "external.json"));
    ASSERT_EQ(rows.size(), 3u * 2u * 3u);
    EXPECT_EQ(rows[0]["zeta"], 0.0);
    EXPECT_EQ(rows[0]["gap"], 0.0);
    EXPECT_EQ(rows[0]["diverged"], false);
}

TEST_F(CliTest, SeedPrecedence)
{
    const auto cfg = write("s.json", R"({"seed": 3, "env": {"state_dim": 4, "action_dim": 2, "horizon": 8},
                                         "train": {"episodes": 4, "epochs": 2}})");
    const fs::path out = dir_ / "out";
    auto seed_in_report = [&] { return nlohmann::json::parse(slurp(out / "gradcheck.json"))["seed"].get<int>(); };
    ASSERT_EQ(run({"gradcheck", "--config", cfg.string(), "--out", out.string()}), 0);
    EXPECT_EQ(seed_in_report(), 3);
    ::setenv(seed_env_var, "11", 1);
    ASSERT_EQ(run({"gradcheck", "--config", cfg.string(), "--out", out.string()}), 0);
    EXPECT_EQ(seed_in_report(), 11);
    ASSERT_EQ(run({"gradcheck", "--config", cfg.string(), "--out", out.string(), "--seed", "21"}), 0);
    EXPECT_EQ(seed_in_report(), 21);
    ::setenv(seed_env_var, "eleven", 1);
    EXPECT_EQ(run({"gradcheck", "--config", cfg.string(), "--out", out.string()}), exit_usage);
}

TEST_F(CliTest, NoTemporaryFilesRemain)
{
    const fs::path out = dir_ / "out";
    ASSERT_EQ(run({"run-intrinsic", "--config", write("c.json", small_config).string(), "--out", out.string()}), 0);
    for (const auto& e : fs::directory_iterator(out))
        EXPECT_EQ(e.path().string().find(".tmp."), std::string::npos) << e.path();
}

TEST_F(CliTest, BinaryExitStatus)
{
    const std::string cmd = std::string(REPARA_CLI_PATH) + " bounds --config " + (dir_ / "nope.json").string() +
                            " --out " + (dir_ / "out").string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 20);
    EXPECT_FALSE(fs::exists(dir_ / "out"));
}
