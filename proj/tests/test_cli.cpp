#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "helpers.hpp"

using namespace testutil;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + SMARTVR_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string dataset_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() != "resolved_config.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += fs::relative(f, root).string() + "\n" + slurp(f);
  return out;
}

const std::string kSmall = " --users 3 --lectures 2 --minutes 1 --alpha 1";

}  // namespace

TEST(Cli, SimulateIsDeterministic) {
  const auto dir = scratch_dir("cli_simulate");
  const auto a = cli("simulate --out " + (dir / "a").string() + kSmall + " --seed 4", dir);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(cli("simulate --out " + (dir / "b").string() + kSmall + " --seed 4", dir).code, 0);
  EXPECT_EQ(dataset_tree(dir / "a"), dataset_tree(dir / "b"));
  ASSERT_EQ(cli("simulate --out " + (dir / "c").string() + kSmall + " --seed 5", dir).code, 0);
  EXPECT_NE(dataset_tree(dir / "a"), dataset_tree(dir / "c"));

  const auto truth = nlohmann::json::parse(slurp(dir / "a" / "truth.json"));
  EXPECT_EQ(truth.at("cells").size(), 6u);
  EXPECT_GT(truth.at("bayes_accuracy").get<double>(), 0.5);
  EXPECT_NO_THROW(dataio::load_dataset(dir / "a" / "manifest.json"));
}

TEST(Cli, SingleUserWarns) {
  const auto dir = scratch_dir("cli_single");
  const auto r = cli("simulate --out " + (dir / "ds").string() + " --users 1 --lectures 2 --minutes 1", dir);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos) << r.err;
}

TEST(Cli, OutputCollisionIsAConfigError) {
  const auto dir = scratch_dir("cli_collision");
  const std::string args = "simulate --out " + (dir / "ds").string() + kSmall;
  ASSERT_EQ(cli(args, dir).code, 0);
  EXPECT_EQ(cli(args, dir).code, 2);
  EXPECT_EQ(cli(args + " --force", dir).code, 0);
}

TEST(Cli, ConfigFilePrecedence) {
  const auto dir = scratch_dir("cli_config");
  dataio::write_text(dir / "cfg.json", R"({"users": 3, "lectures": 2, "minutes": 1, "seed": 5, "alpha": 0.5})");
  const auto r = cli("simulate --config " + (dir / "cfg.json").string() + " --out " + (dir / "ds").string() +
                         " --seed 9",
                     dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto resolved = nlohmann::json::parse(slurp(dir / "ds" / "resolved_config.json"));
  EXPECT_EQ(resolved.at("seed"), 9);
  EXPECT_EQ(resolved.at("users"), 3);
  EXPECT_EQ(resolved.at("alpha"), 0.5);
  EXPECT_EQ(resolved.at("pretest"), 10);
  EXPECT_EQ(resolved.at("command"), "simulate");

  dataio::write_text(dir / "bad_key.json", R"({"userz": 3})");
  EXPECT_EQ(cli("simulate --config " + (dir / "bad_key.json").string() + " --out " + (dir / "x").string(), dir).code,
            2);
  dataio::write_text(dir / "bad_type.json", R"({"users": "many"})");
  EXPECT_EQ(cli("simulate --config " + (dir / "bad_type.json").string() + " --out " + (dir / "y").string(), dir).code,
            2);
}

TEST(Cli, UsageAndDataErrors) {
  const auto dir = scratch_dir("cli_errors");
  EXPECT_EQ(cli("", dir).code, 2);
  EXPECT_EQ(cli("--help", dir).code, 0);
  EXPECT_EQ(cli("train", dir).code, 2);
  EXPECT_EQ(cli("simulate --out " + (dir / "ds").string() + " --users 0", dir).code, 2);
  EXPECT_EQ(cli("evaluate --dataset " + (dir / "missing").string() + " --out " + (dir / "ev").string(), dir).code, 3);
  EXPECT_EQ(cli("evaluate --dataset " + std::string(SMARTVR_FIXTURES) + "/tiny --out " + (dir / "ev2").string() +
                    " --variants smart-lstm",
                dir)
                .code,
            2);
}

TEST(Cli, EvaluateFixtureAndReport) {
  const auto dir = scratch_dir("cli_evaluate");
  const auto ev = dir / "ev";
  const auto r = cli("evaluate --dataset " + std::string(SMARTVR_FIXTURES) + "/tiny --out " + ev.string() +
                         " --variants rasch --windows 3 1 2 --quiet",
                     dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(slurp(ev / "summary.json"));
  const auto& windows = summary.at("variants").at("rasch").at("windows");
  ASSERT_EQ(windows.size(), 3u);
  for (const auto& [w, cell] : windows.items()) EXPECT_EQ(cell.at("accuracy"), windows.at("1").at("accuracy"));
  for (const char* f : {"accuracy_vs_window.csv", "difficulty_table.csv", "accuracy_vs_window.svg", "resolved_config.json"})
    EXPECT_TRUE(fs::exists(ev / f)) << f;

  EXPECT_EQ(cli("evaluate --dataset " + std::string(SMARTVR_FIXTURES) + "/tiny --out " + ev.string() +
                    " --variants rasch --windows 1 --quiet",
                dir)
                .code,
            2);

  const auto rep = cli("report --input " + ev.string(), dir);
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_NE(rep.out.find("| rasch |"), std::string::npos) << rep.out;
  EXPECT_EQ(slurp(ev / "report.md"), rep.out);
  EXPECT_EQ(cli("report --input " + (dir / "nothing").string(), dir).code, 3);
}

TEST(Cli, GradcheckPassesAndNegativeControlFails) {
  const auto dir = scratch_dir("cli_gradcheck");
  const auto ok = cli("gradcheck", dir);
  EXPECT_EQ(ok.code, 0) << ok.out;
  for (const char* v : {"deep-irt", "smart-mlp", "smart-tcn"}) EXPECT_NE(ok.out.find(v), std::string::npos);
  EXPECT_EQ(cli("gradcheck --corrupt", dir).code, 4);
}
