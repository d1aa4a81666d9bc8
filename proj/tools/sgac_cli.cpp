#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sgac/cli.hpp"

namespace {

template <typename T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& slot, const std::string& help) {
  app->add_option_function<T>(name, [&slot](const T& v) { slot = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sgac::cli;
  CLI::App app{"Signal-guided curriculum for single-problem RLVR bursts"};
  app.require_subcommand(1);

  SignalsOptions sig;
  auto* signals = app.add_subcommand("signals", "Measure P_s, reward variance, disagreement and level per problem");
  signals->add_option("--problems", sig.problems_path, "Problems JSONL");
  signals->add_option("--transcripts", sig.transcripts_path, "Pre-generated rollouts JSONL");
  signals->add_option("--backend", sig.backend, "sim or remote:URL");
  signals->add_option("--k", sig.k, "Rollouts per problem");
  signals->add_option("--seed", sig.seed, "Rollout seed");
  signals->add_option("--temperature", sig.temperature, "Sampling temperature");
  signals->add_option("--out", sig.out_dir, "Output directory (default: CSV on stdout)");

  std::string records_path, model_out;
  auto* fit = app.add_subcommand("fit", "Fit a linear selector to transfer records");
  fit->add_option("records", records_path, "CSV with p_s,var_r,disagreement,level,a_down")->required();
  fit->add_option("--out", model_out, "Selector JSON path (default: stdout)");

  std::string config_path, run_out;
  RunOverrides ov;
  auto* run = app.add_subcommand("run", "Run the curriculum loop");
  run->add_option("--config", config_path, "Run config JSON");
  run->add_option("--out", run_out, "Run directory")->required();
  optional_flag(run, "--backend", ov.backend, "sim or remote:URL");
  optional_flag(run, "--seed", ov.seed, "Master seed");
  optional_flag(run, "--k", ov.k, "Rollouts per candidate");
  optional_flag(run, "--batch", ov.batch, "Candidates per step");
  optional_flag(run, "--steps", ov.steps, "Curriculum steps");
  optional_flag(run, "--eval-every", ov.eval_every, "Evaluation period in steps");

  std::string run_dir, report_out;
  auto* report = app.add_subcommand("report", "Emit figure and table data from a run directory");
  report->add_option("run_dir", run_dir, "Run directory")->required();
  report->add_option("--out", report_out, "Output directory (default: the run directory)");

  std::string eval_problems, eval_backend = "sim";
  std::uint64_t eval_seed = 0;
  int eval_tokens = 1024;
  auto* eval = app.add_subcommand("eval", "Greedy accuracy of a backend on a problem set");
  eval->add_option("--problems", eval_problems, "Problems JSONL")->required();
  eval->add_option("--backend", eval_backend, "sim or remote:URL");
  eval->add_option("--seed", eval_seed, "Simulator seed");
  eval->add_option("--max-new-tokens", eval_tokens, "Generation budget");

  std::size_t ds_size = 1050;
  std::uint64_t ds_seed = 7;
  std::string ds_out;
  auto* dataset = app.add_subcommand("dataset", "Write a synthetic problem set for the simulator");
  dataset->add_option("--size", ds_size, "Number of problems");
  dataset->add_option("--seed", ds_seed, "Generator seed");
  dataset->add_option("--out", ds_out, "JSONL path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kInputError;
  }

  if (*signals) return cmd_signals(sig, std::cout, std::cerr);
  if (*fit) return cmd_fit(records_path, model_out, std::cout, std::cerr);
  if (*run) return cmd_run(config_path, ov, run_out, std::cout, std::cerr);
  if (*report) return cmd_report(run_dir, report_out, std::cout, std::cerr);
  if (*eval) return cmd_eval(eval_problems, eval_backend, eval_seed, eval_tokens, std::cout, std::cerr);
  if (*dataset) return cmd_dataset(ds_size, ds_seed, ds_out, std::cout, std::cerr);
  return kInputError;
}
