#pragma once

// Group-relative advantages, loss-pattern classification and the fixed-length
// single-problem training burst.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgac/errors.hpp"
#include "sgac/policy_backend.hpp"
#include "sgac/rng.hpp"
#include "sgac/rollout_signals.hpp"

namespace sgac {

inline constexpr double kDefaultAdvantageEpsilon = 1e-4;

struct AdvantageGroup {
  std::vector<double> rewards;
  double mean = 0.0;
  double std = 0.0;  // population
  double epsilon = kDefaultAdvantageEpsilon;
  std::vector<double> advantages;
};

/// A_i = (r_i - mean) / (std + epsilon), population std. A group whose
/// rewards are all equal gets exactly zero advantages.
inline AdvantageGroup group_advantages(std::span<const double> rewards, double epsilon = kDefaultAdvantageEpsilon) {
  if (rewards.size() < 2) throw ContractViolation("group_advantages: need at least 2 rewards");
  if (!(epsilon > 0.0)) throw ContractViolation("group_advantages: epsilon must be positive");
  AdvantageGroup g;
  g.rewards.assign(rewards.begin(), rewards.end());
  g.epsilon = epsilon;
  const bool constant = std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; });
  if (constant) {
    g.mean = rewards[0];
    g.std = 0.0;
    g.advantages.assign(rewards.size(), 0.0);
    return g;
  }
  const double n = static_cast<double>(rewards.size());
  double sum = 0.0;
  for (double r : rewards) sum += r;
  g.mean = sum / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - g.mean) * (r - g.mean);
  g.std = std::sqrt(ss / n);
  g.advantages.reserve(rewards.size());
  for (double r : rewards) g.advantages.push_back((r - g.mean) / (g.std + epsilon));
  return g;
}

enum class LossPattern { Active, Zero, Transition };

inline constexpr std::string_view to_string(LossPattern p) {
  switch (p) {
    case LossPattern::Active: return "active";
    case LossPattern::Zero: return "zero";
    case LossPattern::Transition: return "transition";
  }
  return "transition";
}

/// Zero: every loss is exactly 0. Active: none is. Transition: a mix.
inline LossPattern classify_loss_pattern(std::span<const double> losses) {
  if (losses.empty()) throw ContractViolation("classify_loss_pattern: empty loss sequence");
  const auto zeros = std::count_if(losses.begin(), losses.end(), [](double l) { return l == 0.0; });
  if (zeros == static_cast<std::ptrdiff_t>(losses.size())) return LossPattern::Zero;
  if (zeros == 0) return LossPattern::Active;
  return LossPattern::Transition;
}

struct BurstConfig {
  int group_size = 4;
  int max_steps = 5;
  double learning_rate = 2e-5;
  double temperature = 1.0;
  int max_new_tokens = 1024;
  double epsilon = kDefaultAdvantageEpsilon;

  void validate() const {
    if (group_size < 2) throw ContractViolation("burst: group_size must be >= 2");
    if (max_steps < 1) throw ContractViolation("burst: max_steps must be >= 1");
    if (!(learning_rate > 0.0)) throw ContractViolation("burst: learning_rate must be positive");
    if (!(temperature > 0.0)) throw ContractViolation("burst: temperature must be positive");
    if (max_new_tokens < 1) throw ContractViolation("burst: max_new_tokens must be positive");
    if (!(epsilon > 0.0)) throw ContractViolation("burst: epsilon must be positive");
  }
};

struct BurstReport {
  std::string problem_id;
  std::vector<double> step_losses;
  LossPattern pattern = LossPattern::Zero;
  std::vector<int> rollout_counts;
  std::vector<std::vector<double>> step_rewards;
  std::vector<std::vector<double>> step_advantages;
};

/// One completed burst step, as written to the run's event log.
struct BurstStepEvent {
  int step = 0;  // 1-based within the burst
  std::vector<double> losses_so_far;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

/// Raised when the backend fails part-way through a burst; carries the steps
/// that did complete.
struct BurstAborted : std::runtime_error {
  BurstAborted(const std::string& what, BurstReport partial_, bool retriable_)
      : std::runtime_error(what), partial(std::move(partial_)), retriable(retriable_) {}
  BurstReport partial;
  bool retriable;
};

/// Seed for the group sampled at burst step `step` of a burst seeded `burst_seed`.
inline std::uint64_t burst_step_seed(std::uint64_t burst_seed, int step) {
  return derive_seed({burst_seed, 0x62757273ULL, static_cast<std::uint64_t>(step)});
}

/// Runs max_steps generate/score/advantage/update rounds on one problem. The
/// caller must hold the backend exclusively for the duration. Backend state
/// is carried forward, never reset.
inline BurstReport micro_burst(PolicyBackend& backend, const Problem& problem, const BurstConfig& config,
                               std::uint64_t burst_seed,
                               const std::function<void(const BurstStepEvent&)>& on_step = {}) {
  config.validate();
  if (problem.ground_truth.empty()) throw ContractViolation("micro_burst: problem has no ground truth");
  BurstReport report;
  report.problem_id = problem.id;
  for (int step = 0; step < config.max_steps; ++step) {
    try {
      const auto seed = burst_step_seed(burst_seed, step);
      auto rollouts = generate_rollouts(backend, problem, config.group_size, config.temperature,
                                        config.max_new_tokens, seed);
      std::vector<double> rewards;
      std::vector<std::string> responses;
      rewards.reserve(rollouts.size());
      responses.reserve(rollouts.size());
      for (auto& r : rollouts) {
        rewards.push_back(r.reward.r_total);
        responses.push_back(std::move(r.response));
      }
      const AdvantageGroup group = group_advantages(rewards, config.epsilon);
      const double loss = backend.apply_update(problem, responses, group.advantages, config.learning_rate);
      report.step_losses.push_back(loss);
      report.rollout_counts.push_back(static_cast<int>(responses.size()));
      report.step_rewards.push_back(rewards);
      report.step_advantages.push_back(group.advantages);
      if (on_step) on_step({step + 1, report.step_losses, rewards, group.advantages});
    } catch (const BackendError& e) {
      if (!report.step_losses.empty()) report.pattern = classify_loss_pattern(report.step_losses);
      throw BurstAborted(std::string("burst on ") + problem.id + " aborted at step " + std::to_string(step + 1) +
                             ": " + e.what(),
                         std::move(report), e.retriable);
    }
  }
  report.pattern = classify_loss_pattern(report.step_losses);
  return report;
}

}  // namespace sgac
