#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "sgac/cli.hpp"
#include "reference_rows.hpp"

using namespace sgac;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sgac_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

fs::path reference_records(const fs::path& dir) {
  std::string csv = "p_s,var_r,disagreement,level,a_down\n";
  for (const auto& r : refrows::kRows) {
    csv += io::format_double(r.p_s) + "," + io::format_double(r.var_r) + "," + io::format_double(r.d) + "," +
           std::to_string(r.level) + "," + io::format_double(r.a_down) + "\n";
  }
  spill(dir / "records.csv", csv);
  return dir / "records.csv";
}

fs::path reference_transcripts(const fs::path& dir) {
  std::string text;
  for (const auto& c : refrows::all()) {
    text += json{{"id", c.problem.id}, {"ground_truth", c.problem.ground_truth}, {"level", c.problem.level},
                 {"responses", c.responses}}
                .dump() +
            "\n";
  }
  spill(dir / "transcripts.jsonl", text);
  return dir / "transcripts.jsonl";
}

/// Runs the built binary and returns its exit status.
int run_binary(const std::string& args) {
  const std::string cmd = std::string(SGAC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ExitCodes, MapEachErrorFamily) {
  std::ostringstream err;
  auto code = [&](auto ex) { return cli::exit_code_for(err, std::make_exception_ptr(ex)); };
  EXPECT_EQ(code(io::InputError("x")), 2);
  EXPECT_EQ(code(BackendError("x", true)), 3);
  EXPECT_EQ(code(FitDegenerate("x")), 4);
  EXPECT_EQ(code(PoolExhausted("x")), 5);
  EXPECT_EQ(code(ContractViolation("x")), 5);
}

TEST(SignalsCommand, TranscriptsReproduceFixtureRows) {
  const auto dir = scratch("signals");
  cli::SignalsOptions opt;
  opt.transcripts_path = reference_transcripts(dir).string();
  opt.out_dir = (dir / "out").string();
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_signals(opt, out, err), 0) << err.str();

  std::ifstream in(dir / "out" / "signals.csv");
  const auto table = io::read_csv(in);
  ASSERT_EQ(table.rows.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    const auto& row = table.rows[i];
    const auto& want = refrows::kRows[i];
    EXPECT_EQ(row[0], "c" + std::to_string(i));
    EXPECT_EQ(io::parse_double(row[1]), want.p_s);
    EXPECT_NEAR(io::parse_double(row[2]), want.var_r, 5e-4 + 1e-12);
    EXPECT_EQ(io::parse_double(row[3]), want.d);
    EXPECT_EQ(std::stoi(row[4]), want.level);
  }
  const json j = json::parse(slurp(dir / "out" / "signals.json"));
  EXPECT_EQ(j.size(), 4u);
  EXPECT_EQ(j[2]["candidate_id"], "c2");
}

TEST(SignalsCommand, SingleRolloutFromSim) {
  const auto dir = scratch("signals_k1");
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_dataset(5, 3, (dir / "p.jsonl").string(), out, err), 0);
  cli::SignalsOptions opt;
  opt.problems_path = (dir / "p.jsonl").string();
  opt.k = 1;
  std::ostringstream csv;
  ASSERT_EQ(cli::cmd_signals(opt, csv, err), 0) << err.str();
  std::istringstream in(csv.str());
  const auto table = io::read_csv(in);
  ASSERT_EQ(table.rows.size(), 5u);
  for (const auto& row : table.rows) {
    EXPECT_EQ(io::parse_double(row[table.column("var_r")]), 0.0);
    EXPECT_EQ(io::parse_double(row[table.column("disagreement")]), 1.0);
  }
}

TEST(SignalsCommand, EmptyProblemsFileIsAnInputError) {
  const auto dir = scratch("signals_empty");
  spill(dir / "empty.jsonl", "");
  cli::SignalsOptions opt;
  opt.problems_path = (dir / "empty.jsonl").string();
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_signals(opt, out, err), 2);
  opt.problems_path = (dir / "missing.jsonl").string();
  EXPECT_EQ(cli::cmd_signals(opt, out, err), 2);
}

TEST(FitCommand, ReferenceFitIsExactAndReproducible) {
  const auto dir = scratch("fit");
  const auto records = reference_records(dir);
  std::ostringstream a, b, err;
  ASSERT_EQ(cli::cmd_fit(records.string(), (dir / "m1.json").string(), a, err), 0) << err.str();
  ASSERT_EQ(cli::cmd_fit(records.string(), (dir / "m2.json").string(), b, err), 0);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(slurp(dir / "m1.json"), slurp(dir / "m2.json"));
  EXPECT_NE(a.str().find("r2 1\n"), std::string::npos) << a.str();
  EXPECT_NE(a.str().find("without disagreement"), std::string::npos);

  const SelectorModel m = io::selector_from_json(json::parse(slurp(dir / "m1.json")));
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(predict_transfer(m, refrows::row_signals(i)), refrows::kRows[i].a_down, 1e-9);
  }
}

TEST(FitCommand, OneRecordIsDegenerate) {
  const auto dir = scratch("fit_one");
  spill(dir / "one.csv", "p_s,var_r,disagreement,level,a_down\n0.5,0.1,0.5,3,0.4\n");
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_fit((dir / "one.csv").string(), "", out, err), 4);
  spill(dir / "bad.csv", "p_s,var_r\n0.5,0.1\n");
  EXPECT_EQ(cli::cmd_fit((dir / "bad.csv").string(), "", out, err), 2);
}

TEST(RunCommand, DeterministicArtifacts) {
  const auto dir = scratch("run");
  cli::RunOverrides o;
  o.seed = 2;
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_run("", o, (dir / "a").string(), out, err), 0) << err.str();
  ASSERT_EQ(cli::cmd_run("", o, (dir / "b").string(), out, err), 0) << err.str();
  for (const char* f : {"config.json", "events.jsonl", "trajectory.csv", "summary.json"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  const std::string traj = slurp(dir / "a" / "trajectory.csv");
  std::istringstream in(traj);
  const auto table = io::read_csv(in);
  ASSERT_EQ(table.rows.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(table.rows[i][0], std::to_string(5 * i));

  const json manifest = json::parse(slurp(dir / "a" / "manifest.json"));
  const json manifest_b = json::parse(slurp(dir / "b" / "manifest.json"));
  EXPECT_EQ(manifest["run_id"], manifest_b["run_id"]);
  EXPECT_EQ(manifest["artifact_paths"]["events"], "events.jsonl");
  const json summary = json::parse(slurp(dir / "a" / "summary.json"));
  EXPECT_TRUE(summary["completed"].get<bool>());
  EXPECT_EQ(summary["problems_consumed"], 80);
  const json config = json::parse(slurp(dir / "a" / "config.json"));
  EXPECT_EQ(config["curriculum"]["master_seed"], 2);
}

TEST(RunCommand, ConfigFileAndOverrides) {
  const auto dir = scratch("run_cfg");
  spill(dir / "cfg.json", R"({"curriculum": {"total_steps": 4, "eval_every": 2, "pool_size": 150}, "dataset": {"synthetic_size": 200}})");
  cli::RunOverrides o;
  o.batch = 2;
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_run((dir / "cfg.json").string(), o, (dir / "out").string(), out, err), 0) << err.str();
  const json config = json::parse(slurp(dir / "out" / "config.json"));
  EXPECT_EQ(config["curriculum"]["batch_size"], 2);
  EXPECT_EQ(config["curriculum"]["total_steps"], 4);
  EXPECT_EQ(slurp(dir / "out" / "trajectory.csv").substr(0, 14), "step,accuracy\n");
  EXPECT_EQ(line_count(slurp(dir / "out" / "trajectory.csv")), 4u);  // header + steps 0, 2, 4
}

TEST(RunCommand, BatchLargerThanPoolLeavesPrefixArtifacts) {
  const auto dir = scratch("run_pool");
  spill(dir / "cfg.json", R"({"curriculum": {"pool_size": 3}})");
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_run((dir / "cfg.json").string(), {}, (dir / "out").string(), out, err), 5);
  for (const char* f : {"config.json", "events.jsonl", "trajectory.csv", "summary.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
  const json summary = json::parse(slurp(dir / "out" / "summary.json"));
  EXPECT_FALSE(summary["completed"].get<bool>());
  EXPECT_EQ(line_count(slurp(dir / "out" / "trajectory.csv")), 2u);
}

TEST(RunCommand, InvalidConfigs) {
  const auto dir = scratch("run_bad");
  std::ostringstream out, err;
  spill(dir / "bad.json", "{ not json");
  EXPECT_EQ(cli::cmd_run((dir / "bad.json").string(), {}, (dir / "o1").string(), out, err), 2);
  cli::RunOverrides o;
  o.k = 0;
  EXPECT_EQ(cli::cmd_run("", o, (dir / "o2").string(), out, err), 5);
  o = {};
  o.backend = "quantum";
  EXPECT_EQ(cli::cmd_run("", o, (dir / "o3").string(), out, err), 2);
}

TEST(ReportCommand, FiguresAndDistributions) {
  const auto dir = scratch("report");
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_run("", {}, (dir / "run").string(), out, err), 0) << err.str();
  ASSERT_EQ(cli::cmd_report((dir / "run").string(), (dir / "rep").string(), out, err), 0) << err.str();
  EXPECT_EQ(line_count(slurp(dir / "rep" / "fig1_signals.csv")), 21u);
  EXPECT_EQ(line_count(slurp(dir / "rep" / "fig2_levels.csv")), 21u);
  EXPECT_EQ(line_count(slurp(dir / "rep" / "fig3_space.csv")), 21u);

  const json patterns = json::parse(slurp(dir / "rep" / "losspatterns.json"));
  const json summary = json::parse(slurp(dir / "run" / "summary.json"));
  EXPECT_EQ(patterns, summary["loss_patterns"]);
  EXPECT_NEAR(patterns["active"].get<double>() + patterns["zero"].get<double>() + patterns["transition"].get<double>(),
              1.0, 1e-12);
  const json t8 = json::parse(slurp(dir / "rep" / "table8_distributions.json"));
  EXPECT_EQ(t8["difficulty_level"]["level_5"], summary["levels"]["level_5"]);
}

TEST(ReportCommand, MissingOrEmptyLogIsAnInputError) {
  const auto dir = scratch("report_empty");
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_report(dir.string(), "", out, err), 2);
  spill(dir / "events.jsonl", "");
  EXPECT_EQ(cli::cmd_report(dir.string(), "", out, err), 2);
}

TEST(EvalCommand, PrintsAccuracy) {
  const auto dir = scratch("eval");
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_dataset(30, 1, (dir / "p.jsonl").string(), out, err), 0);
  std::ostringstream res;
  ASSERT_EQ(cli::cmd_eval((dir / "p.jsonl").string(), "sim", 0, 64, res, err), 0) << err.str();
  const json j = json::parse(res.str());
  EXPECT_EQ(j["problems"], 30);
  EXPECT_GE(j["accuracy"].get<double>(), 0.0);
  EXPECT_LE(j["accuracy"].get<double>(), 1.0);
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("binary");
  const auto records = reference_records(dir);
  EXPECT_EQ(run_binary("fit " + records.string()), 0);
  spill(dir / "one.csv", "p_s,var_r,disagreement,level,a_down\n0.5,0.1,0.5,3,0.4\n");
  EXPECT_EQ(run_binary("fit " + (dir / "one.csv").string()), 4);
  EXPECT_EQ(run_binary("report " + (dir / "nothing").string()), 2);
  EXPECT_EQ(run_binary("run --out " + (dir / "r").string() + " --batch 2000"), 5);
  EXPECT_EQ(run_binary("no-such-command"), 2);
  EXPECT_EQ(run_binary("--help"), 0);
}
