#pragma once

// Per-rollout rewards and the per-candidate uncertainty signals computed
// from a set of K stochastic rollouts.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "sgac/answer_verify.hpp"
#include "sgac/errors.hpp"
#include "sgac/problem.hpp"

namespace sgac {

inline constexpr double kCorrectReward = 1.0;
inline constexpr double kFormatReward = 0.5;

struct RewardBreakdown {
  double r_correct = 0.0;
  double r_format = 0.0;
  double r_total = 0.0;
};

struct RolloutRecord {
  int rollout_index = 0;
  std::string response;
  ExtractedAnswer answer;
  VerifyResult verify;
  RewardBreakdown reward;
  std::uint64_t seed = 0;
};

struct SignalVector {
  double p_s = 0.0;
  double var_r = 0.0;
  double disagreement = 0.0;
  int level = 0;
};

struct VarianceDecomposition {
  double var_math = 0.0;
  double var_format = 0.0;
  double covariance = 0.0;
};

inline RewardBreakdown reward_from(const VerifyResult& v) {
  RewardBreakdown r;
  r.r_correct = v.correct ? kCorrectReward : 0.0;
  r.r_format = v.format_ok ? kFormatReward : 0.0;
  r.r_total = r.r_correct + r.r_format;
  return r;
}

inline RewardBreakdown score_rollout(std::string_view response, std::string_view ground_truth) {
  return reward_from(verify_response(response, ground_truth));
}

/// Extracts, verifies and scores one response.
inline RolloutRecord make_rollout(int index, std::string response, std::string_view ground_truth, std::uint64_t seed) {
  if (ground_truth.empty()) throw ContractViolation("make_rollout: ground truth must be non-empty");
  RolloutRecord rec;
  rec.rollout_index = index;
  rec.answer = extract_answer(response);
  rec.verify = verify_extracted(rec.answer, has_boxed_span(response), ground_truth);
  rec.reward = reward_from(rec.verify);
  rec.response = std::move(response);
  rec.seed = seed;
  return rec;
}

namespace detail {

inline void require_nonempty(std::span<const RolloutRecord> rollouts, const char* op) {
  if (rollouts.empty()) throw ContractViolation(std::string(op) + ": rollout set must be non-empty");
}

template <typename Fx, typename Fy>
double population_covariance(std::span<const RolloutRecord> rollouts, Fx fx, Fy fy) {
  const double k = static_cast<double>(rollouts.size());
  double mx = 0.0, my = 0.0;
  for (const auto& r : rollouts) {
    mx += fx(r);
    my += fy(r);
  }
  mx /= k;
  my /= k;
  double acc = 0.0;
  for (const auto& r : rollouts) acc += (fx(r) - mx) * (fy(r) - my);
  return acc / k;
}

}  // namespace detail

inline double success_probability(std::span<const RolloutRecord> rollouts) {
  detail::require_nonempty(rollouts, "success_probability");
  std::size_t correct = 0;
  for (const auto& r : rollouts) correct += r.verify.correct ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(rollouts.size());
}

/// Population variance (divide by K) of the total rewards.
inline double reward_variance(std::span<const RolloutRecord> rollouts) {
  detail::require_nonempty(rollouts, "reward_variance");
  auto total = [](const RolloutRecord& r) { return r.reward.r_total; };
  return detail::population_covariance(rollouts, total, total);
}

/// Distinct normalized answers over K. Rollouts with nothing extractable are
/// each counted as their own distinct answer.
inline double disagreement(std::span<const RolloutRecord> rollouts) {
  detail::require_nonempty(rollouts, "disagreement");
  std::unordered_set<std::string> seen;
  std::size_t unparsed = 0;
  for (const auto& r : rollouts) {
    if (r.answer.empty()) {
      ++unparsed;
    } else {
      seen.insert(r.answer.normalized);
    }
  }
  return static_cast<double>(seen.size() + unparsed) / static_cast<double>(rollouts.size());
}

/// Splits the reward variance into correctness and format parts plus their
/// covariance: var_math + var_format + 2 cov == reward_variance.
inline VarianceDecomposition variance_decomposition(std::span<const RolloutRecord> rollouts) {
  detail::require_nonempty(rollouts, "variance_decomposition");
  auto c = [](const RolloutRecord& r) { return r.reward.r_correct; };
  auto f = [](const RolloutRecord& r) { return r.reward.r_format; };
  return {detail::population_covariance(rollouts, c, c), detail::population_covariance(rollouts, f, f),
          detail::population_covariance(rollouts, c, f)};
}

inline SignalVector collect_signals(const Problem& problem, std::span<const RolloutRecord> rollouts) {
  return {success_probability(rollouts), reward_variance(rollouts), disagreement(rollouts), problem.level};
}

}  // namespace sgac
