#pragma once

// Deterministic simulated learner.
//
// Competence on a problem is logistic in (skill[concept] - (level - 3)).
// Wrong answers are drawn from a confusion set of 2^level candidates, so
// harder problems show both lower success rates and more disagreement.
// Updates move skill along the concept transfer matrix in proportion to the
// negated surrogate loss -(1/G) sum_i A_i y_i, y_i = +1 if rollout i is
// correct else -1. The step grows with problem level, so hard problems
// that still produce a learning signal teach more than easy ones. Format
// noise never teaches: it moves rewards but not y.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sgac/answer_verify.hpp"
#include "sgac/errors.hpp"
#include "sgac/policy_backend.hpp"
#include "sgac/problem.hpp"
#include "sgac/rng.hpp"

namespace sgac {

inline const std::vector<std::string>& default_concepts() {
  static const std::vector<std::string> names = {"Prealgebra",    "Algebra",  "Number Theory",       "Counting & Probability",
                                                 "Geometry",      "Intermediate Algebra", "Precalculus"};
  return names;
}

struct SimConfig {
  std::vector<std::string> concepts = default_concepts();
  double initial_skill = 0.0;
  /// Each concept starts at initial_skill + spread * (u - 0.5), u ~ U[0,1)
  /// drawn from the master seed.
  double initial_skill_spread = 2.0;
  double format_rate = 0.9;
  double transfer_offdiag = 0.3;
  /// The trainer learning rate (2e-5 by default) is multiplied by this to get
  /// the skill step size.
  double learning_rate_gain = 1000.0;
  double level_offset = 3.0;  // theta(level) = level - level_offset
  /// Skill step on a level-L problem is scaled by (L / level_offset)^level_step_exponent.
  double level_step_exponent = 2.0;
  int confusion_base = 2;     // confusion_set_size = confusion_base^level
};

struct SimProblem {
  std::string concept_id;
  int level = 1;
  std::string truth;
  int confusion_set_size = 1;
};

struct SimPolicyState {
  std::vector<std::string> concepts;
  std::map<std::string, double> skill;
  double format_rate = 0.9;
  std::vector<std::vector<double>> transfer;  // transfer[to][from]
  std::uint64_t rng_master_seed = 0;

  static SimPolicyState from_config(const SimConfig& cfg, std::uint64_t master_seed) {
    if (cfg.format_rate < 0.0 || cfg.format_rate > 1.0) throw ContractViolation("sim: format_rate must be in [0, 1]");
    if (cfg.transfer_offdiag < 0.0 || cfg.transfer_offdiag > 1.0) {
      throw ContractViolation("sim: transfer_offdiag must be in [0, 1]");
    }
    SimPolicyState s;
    s.concepts = cfg.concepts;
    SplitMix64 rng(derive_seed({master_seed, 0x736b696c6cULL}));
    for (const auto& c : cfg.concepts) s.skill[c] = cfg.initial_skill + cfg.initial_skill_spread * (rng.uniform() - 0.5);
    s.format_rate = cfg.format_rate;
    const std::size_t n = cfg.concepts.size();
    s.transfer.assign(n, std::vector<double>(n, cfg.transfer_offdiag));
    for (std::size_t i = 0; i < n; ++i) s.transfer[i][i] = 1.0;
    s.rng_master_seed = master_seed;
    return s;
  }

  double skill_of(const std::string& concept_id) const {
    auto it = skill.find(concept_id);
    return it == skill.end() ? 0.0 : it->second;
  }

  friend bool operator==(const SimPolicyState&, const SimPolicyState&) = default;
};

inline double sim_success_prob(const SimPolicyState& state, const SimProblem& problem, double level_offset = 3.0) {
  const double theta = static_cast<double>(problem.level) - level_offset;
  return 1.0 / (1.0 + std::exp(-(state.skill_of(problem.concept_id) - theta)));
}

/// j-th wrong answer (0-based) for a problem. Integer truths get nearby
/// integers; anything else gets a distinct symbolic perturbation.
inline std::string sim_wrong_answer(const SimProblem& problem, int j) {
  char* end = nullptr;
  const long long t = std::strtoll(problem.truth.c_str(), &end, 10);
  if (!problem.truth.empty() && end != nullptr && *end == '\0') return std::to_string(t + j + 1);
  return "(" + problem.truth + ")+" + std::to_string(j + 1);
}

inline std::string sim_render(const SimProblem& problem, const std::string& answer, bool boxed) {
  std::string text = "We work through this level " + std::to_string(problem.level) + " problem step by step. ";
  if (boxed) return text + "The final answer is \\boxed{" + answer + "}.";
  return text + "So the final answer is " + answer;
}

inline std::string sim_generate(const SimPolicyState& state, const SimProblem& problem, double temperature,
                                std::uint64_t seed, double level_offset = 3.0) {
  if (temperature < 0.0) throw ContractViolation("sim_generate: temperature must be >= 0");
  const double p = sim_success_prob(state, problem, level_offset);
  SplitMix64 rng(seed);
  bool correct;
  bool boxed;
  std::string answer;
  if (temperature == 0.0) {
    correct = p >= 0.5;
    boxed = state.format_rate >= 0.5;
    answer = correct ? problem.truth : sim_wrong_answer(problem, 0);
  } else {
    correct = rng.bernoulli(p);
    answer = correct ? problem.truth
                     : sim_wrong_answer(problem, static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                                     std::max(1, problem.confusion_set_size)))));
    boxed = rng.bernoulli(state.format_rate);
  }
  return sim_render(problem, answer, boxed);
}

/// Applies the surrogate update in place and returns the loss.
inline double sim_apply_update(SimPolicyState& state, const SimProblem& problem, std::span<const std::string> rollouts,
                               std::span<const double> advantages, double learning_rate_sim) {
  if (rollouts.size() != advantages.size()) throw ContractViolation("sim_apply_update: rollout/advantage length mismatch");
  if (rollouts.empty()) throw ContractViolation("sim_apply_update: empty group");
  bool all_zero = true;
  for (double a : advantages) all_zero = all_zero && a == 0.0;
  if (all_zero) return 0.0;

  std::vector<double> y(rollouts.size());
  for (std::size_t i = 0; i < rollouts.size(); ++i) y[i] = verify_response(rollouts[i], problem.truth).correct ? 1.0 : -1.0;
  // Uniform correctness makes the sum y * sum(A_i), which is zero in exact
  // arithmetic; return that zero instead of rounding residue.
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) return 0.0;

  double acc = 0.0;
  for (std::size_t i = 0; i < rollouts.size(); ++i) acc += advantages[i] * y[i];
  const double loss = -acc / static_cast<double>(rollouts.size());

  std::size_t from = state.concepts.size();
  for (std::size_t j = 0; j < state.concepts.size(); ++j) {
    if (state.concepts[j] == problem.concept_id) from = j;
  }
  if (from == state.concepts.size()) {
    state.skill[problem.concept_id] += learning_rate_sim * (-loss);
    return loss;
  }
  for (std::size_t to = 0; to < state.concepts.size(); ++to) {
    state.skill[state.concepts[to]] += learning_rate_sim * state.transfer[to][from] * (-loss);
  }
  return loss;
}

class SimBackend final : public PolicyBackend {
 public:
  explicit SimBackend(SimConfig cfg = {}, std::uint64_t master_seed = 0)
      : cfg_(std::move(cfg)), state_(SimPolicyState::from_config(cfg_, master_seed)) {}

  SimProblem to_sim(const Problem& p) const {
    SimProblem s;
    s.concept_id = p.subject;
    s.level = p.level;
    s.truth = p.ground_truth;
    s.confusion_set_size = static_cast<int>(std::lround(std::pow(cfg_.confusion_base, p.level)));
    return s;
  }

  BackendCapabilities capabilities() const override { return {true, true, true}; }

  std::vector<std::string> generate(const Problem& problem, int n, const GenerationParams& params,
                                    std::uint64_t seed) const override {
    const SimProblem sp = to_sim(problem);
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(std::max(n, 0)));
    for (int i = 0; i < n; ++i) {
      out.push_back(sim_generate(state_, sp, params.temperature, rollout_seed(seed, static_cast<std::uint64_t>(i)),
                                 cfg_.level_offset));
    }
    return out;
  }

  double apply_update(const Problem& problem, std::span<const std::string> rollouts, std::span<const double> advantages,
                      double learning_rate) override {
    const double level_scale =
        std::pow(static_cast<double>(problem.level) / cfg_.level_offset, cfg_.level_step_exponent);
    return sim_apply_update(state_, to_sim(problem), rollouts, advantages,
                            learning_rate * cfg_.learning_rate_gain * level_scale);
  }

  std::vector<std::string> generate_greedy(std::span<const Problem> problems, int /*max_new_tokens*/) const override {
    std::vector<std::string> out;
    out.reserve(problems.size());
    for (const auto& p : problems) out.push_back(sim_generate(state_, to_sim(p), 0.0, 0, cfg_.level_offset));
    return out;
  }

  const SimPolicyState& state() const noexcept { return state_; }
  SimPolicyState& mutable_state() noexcept { return state_; }
  const SimConfig& config() const noexcept { return cfg_; }

 private:
  SimConfig cfg_;
  SimPolicyState state_;
};

/// Synthetic benchmark for the simulated learner: integer answers, uniform
/// levels 1-5, subjects cycling through the configured concepts.
inline std::vector<Problem> synthetic_dataset(std::size_t n, std::uint64_t seed,
                                              const std::vector<std::string>& concepts = default_concepts()) {
  if (concepts.empty()) throw ContractViolation("synthetic_dataset: no concepts");
  SplitMix64 rng(seed);
  std::vector<Problem> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Problem p;
    p.id = "sim-" + std::to_string(i);
    p.subject = concepts[rng.below(concepts.size())];
    p.level = 1 + static_cast<int>(rng.below(5));
    p.ground_truth = std::to_string(static_cast<long long>(rng.below(900)) + 10);
    p.statement = "Synthetic " + p.subject + " problem #" + std::to_string(i) + " (level " + std::to_string(p.level) + ")";
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace sgac
