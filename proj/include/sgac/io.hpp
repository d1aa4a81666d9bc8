#pragma once

// JSON / CSV encodings for problems, signals, selector models, run configs,
// step records and summaries. Doubles are written in shortest round-trip
// form so every artifact is byte-stable and re-readable without loss.

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sgac/curriculum.hpp"
#include "sgac/errors.hpp"
#include "sgac/grpo.hpp"
#include "sgac/problem.hpp"
#include "sgac/rollout_signals.hpp"
#include "sgac/selector.hpp"
#include "sgac/sim_backend.hpp"

namespace sgac::io {

using json = nlohmann::json;

/// Malformed input document (bad JSON, missing field, wrong type).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return std::to_string(v);
  return std::string(buf, end);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw InputError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string("field '") + key + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Problems (JSON Lines: {id, statement, ground_truth, level, subject})

inline json to_json(const Problem& p) {
  json j{{"id", p.id}, {"statement", p.statement}, {"ground_truth", p.ground_truth}, {"level", p.level}, {"subject", p.subject}};
  if (p.pool_index >= 0) j["pool_index"] = p.pool_index;
  return j;
}

inline Problem problem_from_json(const json& j) {
  Problem p;
  p.id = j.contains("id") && j["id"].is_number() ? j["id"].dump() : require<std::string>(j, "id");
  p.statement = get_or<std::string>(j, "statement", "");
  p.ground_truth = require<std::string>(j, "ground_truth");
  p.level = require<int>(j, "level");
  p.subject = get_or<std::string>(j, "subject", "");
  p.pool_index = get_or<int>(j, "pool_index", -1);
  try {
    validate(p);
  } catch (const ContractViolation& e) {
    throw InputError(e.what());
  }
  return p;
}

/// Calls f(json) for every non-blank line; errors carry the line number.
template <typename F>
void for_each_jsonl(std::istream& in, F&& f) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw InputError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline std::vector<Problem> read_problems(std::istream& in) {
  std::vector<Problem> out;
  for_each_jsonl(in, [&](const json& j) { out.push_back(problem_from_json(j)); });
  return out;
}

inline void write_problems(std::ostream& out, const std::vector<Problem>& problems) {
  for (const auto& p : problems) out << to_json(p).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Signals

inline json to_json(const SignalVector& s) {
  return {{"p_s", s.p_s}, {"var_r", s.var_r}, {"disagreement", s.disagreement}, {"level", s.level}};
}

inline SignalVector signals_from_json(const json& j) {
  return {require<double>(j, "p_s"), require<double>(j, "var_r"), require<double>(j, "disagreement"),
          require<int>(j, "level")};
}

struct SignalRow {
  std::string candidate_id;
  SignalVector signals;
};

inline void write_signals_csv(std::ostream& out, const std::vector<SignalRow>& rows) {
  out << "candidate_id,p_s,var_r,disagreement,level\n";
  for (const auto& r : rows) {
    out << r.candidate_id << ',' << format_double(r.signals.p_s) << ',' << format_double(r.signals.var_r) << ','
        << format_double(r.signals.disagreement) << ',' << r.signals.level << '\n';
  }
}

// ---------------------------------------------------------------------------
// Minimal CSV reader (comma separated, header row, no quoting).

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw InputError("CSV is missing column '" + std::string(name) + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
    } else {
      if (cells.size() != t.header.size()) {
        throw InputError("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                         std::to_string(t.header.size()));
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw InputError("CSV input is empty");
  return t;
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw InputError("not a number: '" + s + "'");
  return v;
}

/// Transfer records from CSV with columns p_s, var_r, disagreement, level, a_down.
inline std::vector<TransferRecord> read_transfer_records(std::istream& in) {
  const CsvTable t = read_csv(in);
  const auto cp = t.column("p_s"), cv = t.column("var_r"), cd = t.column("disagreement"), cl = t.column("level"),
             ca = t.column("a_down");
  std::vector<TransferRecord> out;
  for (const auto& row : t.rows) {
    TransferRecord r;
    r.signals.p_s = parse_double(row[cp]);
    r.signals.var_r = parse_double(row[cv]);
    r.signals.disagreement = parse_double(row[cd]);
    r.signals.level = static_cast<int>(parse_double(row[cl]));
    r.a_down = parse_double(row[ca]);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Selector model

inline json to_json(const SelectorModel& m) {
  json j{{"w_p", m.w_p},
         {"w_sigma", m.w_sigma},
         {"w_d", m.w_d},
         {"w_level", m.w_level},
         {"intercept", m.intercept},
         {"source", std::string(to_string(m.source))}};
  if (m.fit_r2) j["fit_r2"] = *m.fit_r2;
  return j;
}

inline SelectorModel selector_from_json(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "deployment") return SelectorModel::deployment();
    if (name == "reference") return SelectorModel::reference_fit();
    throw InputError("unknown selector preset '" + name + "' (expected deployment or reference)");
  }
  SelectorModel m;
  m.w_p = require<double>(j, "w_p");
  m.w_sigma = require<double>(j, "w_sigma");
  m.w_d = require<double>(j, "w_d");
  m.w_level = require<double>(j, "w_level");
  m.intercept = get_or<double>(j, "intercept", 0.0);
  const auto src = get_or<std::string>(j, "source", "user");
  if (src == "fitted") {
    m.source = ModelSource::Fitted;
  } else if (src == "deployment") {
    m.source = ModelSource::Deployment;
  } else if (src == "user") {
    m.source = ModelSource::UserSupplied;
  } else {
    throw InputError("unknown selector source '" + src + "'");
  }
  if (j.contains("fit_r2") && !j["fit_r2"].is_null()) m.fit_r2 = j["fit_r2"].get<double>();
  if (m.source == ModelSource::Fitted && !m.fit_r2) throw InputError("fitted selector is missing fit_r2");
  return m;
}

// ---------------------------------------------------------------------------
// Configs

inline json to_json(const BurstConfig& b) {
  return {{"group_size", b.group_size},   {"max_steps", b.max_steps},         {"learning_rate", b.learning_rate},
          {"temperature", b.temperature}, {"max_new_tokens", b.max_new_tokens}, {"epsilon", b.epsilon}};
}

inline BurstConfig burst_from_json(const json& j) {
  BurstConfig b;
  b.group_size = get_or(j, "group_size", b.group_size);
  b.max_steps = get_or(j, "max_steps", b.max_steps);
  b.learning_rate = get_or(j, "learning_rate", b.learning_rate);
  b.temperature = get_or(j, "temperature", b.temperature);
  b.max_new_tokens = get_or(j, "max_new_tokens", b.max_new_tokens);
  b.epsilon = get_or(j, "epsilon", b.epsilon);
  return b;
}

inline json to_json(const CurriculumConfig& c) {
  return {{"pool_size", c.pool_size},
          {"shuffle_seed", c.shuffle_seed},
          {"batch_size", c.batch_size},
          {"rollouts_per_candidate", c.rollouts_per_candidate},
          {"total_steps", c.total_steps},
          {"eval_every", c.eval_every},
          {"testset_size", c.testset_size},
          {"candidate_temperature", c.candidate_temperature},
          {"candidate_max_new_tokens", c.candidate_max_new_tokens},
          {"eval_max_new_tokens", c.eval_max_new_tokens},
          {"master_seed", c.master_seed},
          {"parallel_candidates", c.parallel_candidates},
          {"strategy", std::string(to_string(c.strategy))},
          {"selector", to_json(c.selector)},
          {"burst", to_json(c.burst)}};
}

inline CurriculumConfig curriculum_from_json(const json& j) {
  CurriculumConfig c;
  c.pool_size = get_or(j, "pool_size", c.pool_size);
  c.shuffle_seed = get_or(j, "shuffle_seed", c.shuffle_seed);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.rollouts_per_candidate = get_or(j, "rollouts_per_candidate", c.rollouts_per_candidate);
  c.total_steps = get_or(j, "total_steps", c.total_steps);
  c.eval_every = get_or(j, "eval_every", c.eval_every);
  c.testset_size = get_or(j, "testset_size", c.testset_size);
  c.candidate_temperature = get_or(j, "candidate_temperature", c.candidate_temperature);
  c.candidate_max_new_tokens = get_or(j, "candidate_max_new_tokens", c.candidate_max_new_tokens);
  c.eval_max_new_tokens = get_or(j, "eval_max_new_tokens", c.eval_max_new_tokens);
  c.master_seed = get_or(j, "master_seed", c.master_seed);
  c.parallel_candidates = get_or(j, "parallel_candidates", c.parallel_candidates);
  if (j.contains("strategy")) {
    try {
      c.strategy = parse_strategy(j["strategy"].get<std::string>());
    } catch (const ContractViolation& e) {
      throw InputError(e.what());
    }
  }
  if (j.contains("selector")) c.selector = selector_from_json(j["selector"]);
  if (j.contains("burst")) c.burst = burst_from_json(j["burst"]);
  return c;
}

inline json to_json(const SimConfig& s) {
  return {{"concepts", s.concepts},
          {"initial_skill", s.initial_skill},
          {"initial_skill_spread", s.initial_skill_spread},
          {"format_rate", s.format_rate},
          {"transfer_offdiag", s.transfer_offdiag},
          {"learning_rate_gain", s.learning_rate_gain},
          {"level_offset", s.level_offset},
          {"level_step_exponent", s.level_step_exponent},
          {"confusion_base", s.confusion_base}};
}

inline SimConfig sim_from_json(const json& j) {
  SimConfig s;
  s.concepts = get_or(j, "concepts", s.concepts);
  s.initial_skill = get_or(j, "initial_skill", s.initial_skill);
  s.initial_skill_spread = get_or(j, "initial_skill_spread", s.initial_skill_spread);
  s.format_rate = get_or(j, "format_rate", s.format_rate);
  s.transfer_offdiag = get_or(j, "transfer_offdiag", s.transfer_offdiag);
  s.learning_rate_gain = get_or(j, "learning_rate_gain", s.learning_rate_gain);
  s.level_offset = get_or(j, "level_offset", s.level_offset);
  s.level_step_exponent = get_or(j, "level_step_exponent", s.level_step_exponent);
  s.confusion_base = get_or(j, "confusion_base", s.confusion_base);
  return s;
}

// ---------------------------------------------------------------------------
// Step records and events

inline json to_json(const RolloutRecord& r) {
  return {{"index", r.rollout_index},
          {"seed", r.seed},
          {"response", r.response},
          {"answer", r.answer.normalized},
          {"raw_answer", r.answer.raw_text},
          {"method", std::string(to_string(r.answer.method))},
          {"correct", r.verify.correct},
          {"match_stage", std::string(to_string(r.verify.match_stage))},
          {"format_ok", r.verify.format_ok},
          {"r_correct", r.reward.r_correct},
          {"r_format", r.reward.r_format},
          {"r_total", r.reward.r_total}};
}

inline ExtractionMethod method_from_string(const std::string& s) {
  if (s == "boxed") return ExtractionMethod::Boxed;
  if (s == "last_number") return ExtractionMethod::LastNumber;
  if (s == "none") return ExtractionMethod::None;
  throw InputError("unknown extraction method '" + s + "'");
}

inline MatchStage stage_from_string(const std::string& s) {
  if (s == "exact_string") return MatchStage::ExactString;
  if (s == "numeric_equal") return MatchStage::NumericEqual;
  if (s == "symbolic_equal") return MatchStage::SymbolicEqual;
  if (s == "no_match") return MatchStage::NoMatch;
  throw InputError("unknown match stage '" + s + "'");
}

inline LossPattern pattern_from_string(const std::string& s) {
  if (s == "active") return LossPattern::Active;
  if (s == "zero") return LossPattern::Zero;
  if (s == "transition") return LossPattern::Transition;
  throw InputError("unknown loss pattern '" + s + "'");
}

inline RolloutRecord rollout_from_json(const json& j) {
  RolloutRecord r;
  r.rollout_index = require<int>(j, "index");
  r.seed = require<std::uint64_t>(j, "seed");
  r.response = require<std::string>(j, "response");
  r.answer.normalized = require<std::string>(j, "answer");
  r.answer.raw_text = get_or<std::string>(j, "raw_answer", r.answer.normalized);
  r.answer.method = method_from_string(require<std::string>(j, "method"));
  r.verify.correct = require<bool>(j, "correct");
  r.verify.match_stage = stage_from_string(require<std::string>(j, "match_stage"));
  r.verify.format_ok = require<bool>(j, "format_ok");
  r.reward.r_correct = require<double>(j, "r_correct");
  r.reward.r_format = require<double>(j, "r_format");
  r.reward.r_total = require<double>(j, "r_total");
  return r;
}

inline json to_json(const BurstReport& b) {
  return {{"problem_id", b.problem_id},
          {"losses", b.step_losses},
          {"pattern", std::string(to_string(b.pattern))},
          {"rollout_counts", b.rollout_counts},
          {"rewards", b.step_rewards},
          {"advantages", b.step_advantages}};
}

inline BurstReport burst_report_from_json(const json& j) {
  BurstReport b;
  b.problem_id = require<std::string>(j, "problem_id");
  b.step_losses = require<std::vector<double>>(j, "losses");
  b.pattern = pattern_from_string(require<std::string>(j, "pattern"));
  b.rollout_counts = get_or<std::vector<int>>(j, "rollout_counts", {});
  b.step_rewards = get_or<std::vector<std::vector<double>>>(j, "rewards", {});
  b.step_advantages = get_or<std::vector<std::vector<double>>>(j, "advantages", {});
  return b;
}

inline json to_json(const StepRecord& r) {
  json batch = json::array();
  for (const auto& c : r.batch) {
    json rollouts = json::array();
    for (const auto& ro : c.rollouts) rollouts.push_back(to_json(ro));
    json entry = to_json(c.signals);
    entry["problem_id"] = c.problem_id;
    entry["score"] = c.score;
    entry["rollouts"] = std::move(rollouts);
    batch.push_back(std::move(entry));
  }
  json j{{"type", "step"},          {"step", r.step},   {"batch", std::move(batch)}, {"selected", r.selected},
         {"selected_index", r.selected_index}, {"burst", to_json(r.burst)}};
  if (r.eval_accuracy) j["eval_accuracy"] = *r.eval_accuracy;
  return j;
}

inline StepRecord step_from_json(const json& j) {
  StepRecord r;
  r.step = require<int>(j, "step");
  for (const auto& e : require<json>(j, "batch")) {
    CandidateEntry c;
    c.problem_id = require<std::string>(e, "problem_id");
    c.signals = signals_from_json(e);
    c.score = require<double>(e, "score");
    if (e.contains("rollouts")) {
      for (const auto& ro : e["rollouts"]) c.rollouts.push_back(rollout_from_json(ro));
    }
    r.batch.push_back(std::move(c));
  }
  r.selected = require<std::string>(j, "selected");
  r.selected_index = require<std::size_t>(j, "selected_index");
  if (r.selected_index >= r.batch.size() || r.batch[r.selected_index].problem_id != r.selected) {
    throw InputError("step " + std::to_string(r.step) + ": selected id does not match batch");
  }
  r.burst = burst_report_from_json(require<json>(j, "burst"));
  if (j.contains("eval_accuracy") && !j["eval_accuracy"].is_null()) r.eval_accuracy = j["eval_accuracy"].get<double>();
  return r;
}

inline json eval_event(int step, double accuracy) { return {{"type", "eval"}, {"step", step}, {"accuracy", accuracy}}; }

inline json burst_step_event(int curriculum_step, const std::string& problem_id, const BurstStepEvent& e) {
  return {{"type", "burst_step"},          {"curriculum_step", curriculum_step}, {"problem_id", problem_id},
          {"step", e.step},                {"losses_so_far", e.losses_so_far},   {"rewards", e.rewards},
          {"advantages", e.advantages}};
}

/// Everything a report or replay needs from an events.jsonl stream.
struct EventLog {
  std::vector<StepRecord> steps;
  std::optional<double> baseline;
  std::vector<std::pair<int, double>> evals;
  int failed_steps = 0;
};

inline EventLog read_event_log(std::istream& in) {
  EventLog log;
  for_each_jsonl(in, [&](const json& j) {
    const auto type = require<std::string>(j, "type");
    if (type == "step") {
      log.steps.push_back(step_from_json(j));
    } else if (type == "eval") {
      const int step = require<int>(j, "step");
      const double acc = require<double>(j, "accuracy");
      if (step == 0) log.baseline = acc;
      log.evals.emplace_back(step, acc);
    } else if (type == "step_failed") {
      ++log.failed_steps;
    }
  });
  return log;
}

// ---------------------------------------------------------------------------
// Summaries

inline json to_json(const RunSummary& s) {
  json trajectory = json::array();
  for (const auto& [step, acc] : s.trajectory) trajectory.push_back({{"step", step}, {"accuracy", acc}});
  json j{{"steps", s.steps},
         {"problems_consumed", s.problems_consumed},
         {"trajectory", std::move(trajectory)},
         {"levels", {{"level_5", s.levels.level5}, {"level_4", s.levels.level4}, {"level_le_3", s.levels.level_le3}}},
         {"success_probability",
          {{"zero", s.success.zero}, {"zero_to_half", s.success.low}, {"above_half", s.success.high}}},
         {"disagreement", {{"ge_0.75", s.disagreement.high}, {"0.5_to_0.75", s.disagreement.mid}, {"lt_0.5", s.disagreement.low}}},
         {"loss_patterns", {{"active", s.patterns.active}, {"zero", s.patterns.zero}, {"transition", s.patterns.transition}}},
         {"selected_levels", s.selected_levels}};
  j["final_accuracy"] = s.final_accuracy ? json(*s.final_accuracy) : json(nullptr);
  return j;
}

inline json table8_json(const RunSummary& s) {
  return {{"difficulty_level", {{"level_5", s.levels.level5}, {"level_4", s.levels.level4}, {"level_le_3", s.levels.level_le3}}},
          {"success_probability", {{"p_s_eq_0", s.success.zero}, {"p_s_in_(0,0.5]", s.success.low}, {"p_s_gt_0.5", s.success.high}}},
          {"disagreement", {{"d_ge_0.75", s.disagreement.high}, {"d_in_[0.5,0.75)", s.disagreement.mid}, {"d_lt_0.5", s.disagreement.low}}}};
}

inline json loss_patterns_json(const PatternFrequencies& p) {
  return {{"active", p.active}, {"zero", p.zero}, {"transition", p.transition}};
}

// ---------------------------------------------------------------------------

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

}  // namespace sgac::io
