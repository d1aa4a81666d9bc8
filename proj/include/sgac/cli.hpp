#pragma once

// Command implementations behind the sgac executable. Each returns a process
// exit code and writes diagnostics to `err`; argument parsing lives in
// tools/sgac_cli.cpp.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgac/curriculum.hpp"
#include "sgac/errors.hpp"
#include "sgac/io.hpp"
#include "sgac/remote_backend.hpp"
#include "sgac/selector.hpp"
#include "sgac/sim_backend.hpp"

namespace sgac::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kInputError = 2, kBackendError = 3, kFitDegenerate = 4, kPoolViolation = 5 };

/// Maps an exception escaping a command onto the stable exit-code contract.
inline int exit_code_for(std::ostream& err, const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const io::InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const json::exception& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const BurstAborted& e) {
    err << "backend error: " << e.what() << '\n';
    return kBackendError;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << '\n';
    return kBackendError;
  } catch (const FitDegenerate& e) {
    err << "degenerate fit: " << e.what() << '\n';
    return kFitDegenerate;
  } catch (const PoolExhausted& e) {
    err << "pool exhausted: " << e.what() << '\n';
    return kPoolViolation;
  } catch (const ContractViolation& e) {
    err << "config violation: " << e.what() << '\n';
    return kPoolViolation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (...) {
    return exit_code_for(err, std::current_exception());
  }
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::vector<Problem> load_problems(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io::InputError("cannot open " + path);
  auto problems = io::read_problems(in);
  if (problems.empty()) throw io::InputError(path + ": no problems");
  return problems;
}

/// "sim" or "remote:URL".
inline std::unique_ptr<PolicyBackend> make_backend(const std::string& spec, const SimConfig& sim, std::uint64_t seed) {
  if (spec == "sim") return std::make_unique<SimBackend>(sim, seed);
  static constexpr std::string_view kRemote = "remote:";
  if (spec.rfind(kRemote, 0) == 0 && spec.size() > kRemote.size()) {
    return std::make_unique<RemoteBackend>(RemoteOptions::from_env(spec.substr(kRemote.size())));
  }
  throw io::InputError("unknown backend '" + spec + "' (expected sim or remote:URL)");
}

// ---------------------------------------------------------------------------
// signals

struct SignalsOptions {
  std::string problems_path;
  std::string transcripts_path;  // JSONL {id, ground_truth, level, responses[]}; no backend needed
  std::string backend = "sim";
  int k = 8;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  int max_new_tokens = 1024;
  std::string out_dir;  // empty: CSV to `out`
};

inline int cmd_signals(const SignalsOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<io::SignalRow> rows;
    if (!opt.transcripts_path.empty()) {
      std::ifstream in(opt.transcripts_path);
      if (!in) throw io::InputError("cannot open " + opt.transcripts_path);
      io::for_each_jsonl(in, [&](const json& j) {
        Problem p;
        p.id = io::require<std::string>(j, "id");
        p.ground_truth = io::require<std::string>(j, "ground_truth");
        p.level = io::require<int>(j, "level");
        p.subject = io::get_or<std::string>(j, "subject", "");
        const auto responses = io::require<std::vector<std::string>>(j, "responses");
        if (responses.empty()) throw io::InputError(p.id + ": no responses");
        std::vector<RolloutRecord> rollouts;
        for (std::size_t i = 0; i < responses.size(); ++i) {
          rollouts.push_back(make_rollout(static_cast<int>(i), responses[i], p.ground_truth, 0));
        }
        rows.push_back({p.id, collect_signals(p, rollouts)});
      });
      if (rows.empty()) throw io::InputError(opt.transcripts_path + ": no transcripts");
    } else {
      if (opt.problems_path.empty()) throw io::InputError("signals needs --problems or --transcripts");
      if (opt.k < 1) throw io::InputError("--k must be >= 1");
      const auto problems = load_problems(opt.problems_path);
      auto backend = make_backend(opt.backend, SimConfig{}, opt.seed);
      for (std::size_t i = 0; i < problems.size(); ++i) {
        const auto rollouts = generate_rollouts(*backend, problems[i], opt.k, opt.temperature, opt.max_new_tokens,
                                                derive_seed({opt.seed, i}));
        rows.push_back({problems[i].id, collect_signals(problems[i], rollouts)});
      }
    }

    std::ostringstream csv;
    io::write_signals_csv(csv, rows);
    if (opt.out_dir.empty()) {
      out << csv.str();
      return static_cast<int>(kOk);
    }
    fs::create_directories(opt.out_dir);
    json arr = json::array();
    for (const auto& r : rows) {
      json j = io::to_json(r.signals);
      j["candidate_id"] = r.candidate_id;
      arr.push_back(std::move(j));
    }
    io::write_text_file((fs::path(opt.out_dir) / "signals.csv").string(), csv.str());
    io::write_text_file((fs::path(opt.out_dir) / "signals.json").string(), arr.dump(2) + "\n");
    out << "wrote " << rows.size() << " signal rows to " << opt.out_dir << '\n';
    return static_cast<int>(kOk);
  });
}

// ---------------------------------------------------------------------------
// fit

inline int cmd_fit(const std::string& records_path, const std::string& model_out, std::ostream& out,
                   std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream in(records_path);
    if (!in) throw io::InputError("cannot open " + records_path);
    const auto records = io::read_transfer_records(in);
    const SelectorModel model = fit_selector(records);
    const std::string text = io::to_json(model).dump(2) + "\n";
    if (model_out.empty()) {
      out << text;
    } else {
      io::write_text_file(model_out, text);
    }
    out << "records " << records.size() << '\n';
    out << "w_p " << io::format_double(model.w_p) << "\nw_sigma " << io::format_double(model.w_sigma) << "\nw_d "
        << io::format_double(model.w_d) << "\nw_level " << io::format_double(model.w_level) << "\nintercept "
        << io::format_double(model.intercept) << '\n';
    out << "r2 " << (model.fit_r2 ? io::format_double(*model.fit_r2) : std::string("n/a")) << '\n';
    if (records.size() >= 3) {
      const auto loo = leave_one_out_contribution(records);
      for (std::size_t f = 0; f < kSignalCount; ++f) {
        const auto& q = loo.without[f];
        out << "without " << kSignalNames[f] << ": r2 " << (q.r2 ? io::format_double(*q.r2) : "n/a") << ", spearman "
            << (q.rank_corr ? io::format_double(*q.rank_corr) : "n/a") << '\n';
      }
    }
    return static_cast<int>(kOk);
  });
}

// ---------------------------------------------------------------------------
// run

/// Command-line overrides applied on top of the config file.
struct RunOverrides {
  std::optional<std::string> backend;
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
  std::optional<int> batch;
  std::optional<int> steps;
  std::optional<int> eval_every;
};

/// Fully resolved run description. Written verbatim to config.json.
struct RunSpec {
  CurriculumConfig curriculum;
  SimConfig sim;
  std::string backend = "sim";
  std::string dataset_path;  // empty: synthetic
  std::size_t synthetic_size = 1050;
  std::uint64_t synthetic_seed = 7;
};

inline RunSpec resolve_run_spec(const json& j, const RunOverrides& o) {
  RunSpec s;
  if (!j.is_object()) throw io::InputError("run config must be a JSON object");
  if (j.contains("curriculum")) s.curriculum = io::curriculum_from_json(j["curriculum"]);
  if (j.contains("sim")) s.sim = io::sim_from_json(j["sim"]);
  s.backend = io::get_or<std::string>(j, "backend", s.backend);
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    s.dataset_path = io::get_or<std::string>(d, "path", "");
    s.synthetic_size = io::get_or<std::size_t>(d, "synthetic_size", s.synthetic_size);
    s.synthetic_seed = io::get_or<std::uint64_t>(d, "synthetic_seed", s.synthetic_seed);
  }
  if (o.backend) s.backend = *o.backend;
  if (o.seed) s.curriculum.master_seed = *o.seed;
  if (o.k) s.curriculum.rollouts_per_candidate = *o.k;
  if (o.batch) s.curriculum.batch_size = *o.batch;
  if (o.steps) s.curriculum.total_steps = *o.steps;
  if (o.eval_every) s.curriculum.eval_every = *o.eval_every;
  return s;
}

inline json to_json(const RunSpec& s) {
  json dataset = s.dataset_path.empty()
                     ? json{{"synthetic_size", s.synthetic_size}, {"synthetic_seed", s.synthetic_seed}}
                     : json{{"path", s.dataset_path}};
  return {{"curriculum", io::to_json(s.curriculum)},
          {"sim", io::to_json(s.sim)},
          {"backend", s.backend},
          {"dataset", std::move(dataset)}};
}

/// Streams every run event to events.jsonl as it happens, so a failed run
/// leaves its completed prefix on disk.
class EventWriter final : public RunObserver {
 public:
  explicit EventWriter(const fs::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  void on_eval(int step, double accuracy) override {
    if (step == 0) baseline = accuracy;
    emit(io::eval_event(step, accuracy));
  }
  void on_burst_step(int t, const std::string& id, const BurstStepEvent& e) override {
    emit(io::burst_step_event(t, id, e));
  }
  void on_step(const StepRecord& r) override {
    records.push_back(r);
    emit(io::to_json(r));
  }
  void on_step_failed(int step, std::span<const std::string> ids, std::string_view error) override {
    emit({{"type", "step_failed"},
          {"step", step},
          {"batch", std::vector<std::string>(ids.begin(), ids.end())},
          {"error", std::string(error)}});
  }

  std::vector<StepRecord> records;
  std::optional<double> baseline;

 private:
  void emit(const json& j) { out_ << j.dump() << '\n' << std::flush; }
  std::ofstream out_;
};

inline std::string trajectory_csv(const RunSummary& s) {
  std::string text = "step,accuracy\n";
  for (const auto& [step, acc] : s.trajectory) text += std::to_string(step) + "," + io::format_double(acc) + "\n";
  return text;
}

inline int cmd_run(const std::string& config_path, const RunOverrides& overrides, const std::string& out_dir,
                   std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const json raw = config_path.empty() ? json::object() : io::read_json_file(config_path);
    const RunSpec spec = resolve_run_spec(raw, overrides);
    if (out_dir.empty()) throw io::InputError("run needs --out");
    spec.curriculum.validate();

    const std::vector<Problem> dataset = spec.dataset_path.empty()
                                             ? synthetic_dataset(spec.synthetic_size, spec.synthetic_seed,
                                                                 spec.sim.concepts)
                                             : load_problems(spec.dataset_path);
    auto backend = make_backend(spec.backend, spec.sim, spec.curriculum.master_seed);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    const std::string resolved = to_json(spec).dump(2) + "\n";
    io::write_text_file((dir / "config.json").string(), resolved);

    EventWriter events(dir / "events.jsonl");
    int code = kOk;
    std::string failure;
    try {
      run_curriculum(dataset, *backend, spec.curriculum, &events);
    } catch (...) {
      std::ostringstream msg;
      code = exit_code_for(msg, std::current_exception());
      failure = msg.str();
      err << failure;
    }

    RunSummary summary;
    if (!events.records.empty()) {
      summary = summarize_run(events.records, events.baseline);
    } else if (events.baseline) {
      summary.trajectory.emplace_back(0, *events.baseline);
      summary.final_accuracy = events.baseline;
    }
    json summary_json = io::to_json(summary);
    summary_json["completed"] = code == kOk;
    if (code != kOk) summary_json["error"] = failure;
    io::write_text_file((dir / "trajectory.csv").string(), trajectory_csv(summary));
    io::write_text_file((dir / "summary.json").string(), summary_json.dump(2) + "\n");

    const std::string hash = hex64(fnv1a64(resolved));
    const json manifest{{"run_id", "run-" + hash.substr(0, 12)},
                        {"created_at", utc_timestamp()},
                        {"config_hash", hash},
                        {"artifact_paths",
                         {{"config", "config.json"},
                          {"events", "events.jsonl"},
                          {"trajectory", "trajectory.csv"},
                          {"summary", "summary.json"}}}};
    io::write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");

    if (code == kOk) {
      out << "steps " << summary.steps << ", problems consumed " << summary.problems_consumed << '\n';
      for (const auto& [step, acc] : summary.trajectory) out << "step " << step << " accuracy " << acc << '\n';
    }
    return code;
  });
}

// ---------------------------------------------------------------------------
// report

inline int cmd_report(const std::string& run_dir, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const fs::path events_path = fs::path(run_dir) / "events.jsonl";
    std::ifstream in(events_path);
    if (!in) throw io::InputError("no event log at " + events_path.string());
    const io::EventLog log = io::read_event_log(in);
    if (log.steps.empty() && log.evals.empty()) throw io::InputError(events_path.string() + " has no events");

    std::string fig1 = "step,p_s,var_r,disagreement\n";
    std::string fig2 = "step,level\n";
    std::string fig3 = "step,p_s,disagreement,var_r,level\n";
    for (const auto& r : log.steps) {
      const SignalVector& s = r.selected_entry().signals;
      const std::string t = std::to_string(r.step);
      const std::string p = io::format_double(s.p_s), v = io::format_double(s.var_r),
                        d = io::format_double(s.disagreement), l = std::to_string(s.level);
      fig1 += t + "," + p + "," + v + "," + d + "\n";
      fig2 += t + "," + l + "\n";
      fig3 += t + "," + p + "," + d + "," + v + "," + l + "\n";
    }
    const RunSummary summary = log.steps.empty() ? RunSummary{} : summarize_run(log.steps, log.baseline);

    const fs::path dir = out_dir.empty() ? fs::path(run_dir) : fs::path(out_dir);
    fs::create_directories(dir);
    io::write_text_file((dir / "fig1_signals.csv").string(), fig1);
    io::write_text_file((dir / "fig2_levels.csv").string(), fig2);
    io::write_text_file((dir / "fig3_space.csv").string(), fig3);
    io::write_text_file((dir / "table8_distributions.json").string(), io::table8_json(summary).dump(2) + "\n");
    io::write_text_file((dir / "losspatterns.json").string(), io::loss_patterns_json(summary.patterns).dump(2) + "\n");
    out << "reported " << log.steps.size() << " steps";
    if (log.failed_steps > 0) out << " (" << log.failed_steps << " failed)";
    out << " to " << dir.string() << '\n';
    return static_cast<int>(kOk);
  });
}

// ---------------------------------------------------------------------------
// eval / dataset

inline int cmd_eval(const std::string& problems_path, const std::string& backend_spec, std::uint64_t seed,
                    int max_new_tokens, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto problems = load_problems(problems_path);
    auto backend = make_backend(backend_spec, SimConfig{}, seed);
    const double acc = evaluate_policy(*backend, problems, max_new_tokens, &err);
    out << json{{"problems", problems.size()}, {"accuracy", acc}}.dump() << '\n';
    return static_cast<int>(kOk);
  });
}

inline int cmd_dataset(std::size_t size, std::uint64_t seed, const std::string& out_path, std::ostream& out,
                       std::ostream& err) {
  return guarded(err, [&] {
    if (size == 0) throw io::InputError("--size must be positive");
    std::ostringstream text;
    io::write_problems(text, synthetic_dataset(size, seed));
    if (out_path.empty()) {
      out << text.str();
    } else {
      io::write_text_file(out_path, text.str());
    }
    return static_cast<int>(kOk);
  });
}

}  // namespace sgac::cli
