#pragma once

// The policy seen by signal collection, training bursts and evaluation.
// Implementations: SimBackend (built-in simulated learner) and RemoteBackend
// (JSON-over-HTTP to an external trainer/generator).

#include <cstdint>
#include <iostream>
#include <span>
#include <string>
#include <vector>

#include "sgac/errors.hpp"
#include "sgac/problem.hpp"
#include "sgac/rng.hpp"
#include "sgac/rollout_signals.hpp"

namespace sgac {

struct BackendCapabilities {
  bool supports_update = true;
  bool deterministic_eval = true;
  bool concurrent_generate = false;  // generate() may be called from several threads at once
};

struct GenerationParams {
  double temperature = 1.0;
  int max_new_tokens = 1024;
};

/// Seed of rollout `index` within a generate() call seeded with `call_seed`.
inline std::uint64_t rollout_seed(std::uint64_t call_seed, std::uint64_t index) {
  return derive_seed({call_seed, index});
}

class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;

  virtual BackendCapabilities capabilities() const = 0;

  /// n sampled responses. Temperature 0 means greedy: identical inputs give
  /// identical outputs.
  virtual std::vector<std::string> generate(const Problem& problem, int n, const GenerationParams& params,
                                            std::uint64_t seed) const = 0;

  /// One policy-gradient step on a single problem; returns the step's loss.
  /// All-zero advantages must leave the policy untouched and report 0.
  virtual double apply_update(const Problem& problem, std::span<const std::string> rollouts,
                              std::span<const double> advantages, double learning_rate) = 0;

  /// Greedy (temperature 0) responses, one per problem, in order.
  virtual std::vector<std::string> generate_greedy(std::span<const Problem> problems, int max_new_tokens) const = 0;
};

inline std::vector<RolloutRecord> generate_rollouts(const PolicyBackend& backend, const Problem& problem, int k,
                                                    double temperature, int max_new_tokens, std::uint64_t seed) {
  if (k < 1) throw ContractViolation("generate_rollouts: k must be >= 1");
  if (temperature < 0.0) throw ContractViolation("generate_rollouts: temperature must be >= 0");
  auto responses = backend.generate(problem, k, {temperature, max_new_tokens}, seed);
  if (responses.size() != static_cast<std::size_t>(k)) {
    throw BackendError("backend returned " + std::to_string(responses.size()) + " responses, expected " +
                           std::to_string(k),
                       false);
  }
  std::vector<RolloutRecord> out;
  out.reserve(responses.size());
  for (std::size_t i = 0; i < responses.size(); ++i) {
    out.push_back(make_rollout(static_cast<int>(i), std::move(responses[i]), problem.ground_truth,
                               rollout_seed(seed, i)));
  }
  return out;
}

/// Greedy accuracy on a test set. A failed batch call is retried problem by
/// problem; problems whose generation still fails count as incorrect.
inline double evaluate_policy(const PolicyBackend& backend, std::span<const Problem> testset,
                              int max_new_tokens = 1024, std::ostream* log = nullptr) {
  if (testset.empty()) throw ContractViolation("evaluate_policy: empty test set");
  std::vector<std::string> responses;
  bool batched = true;
  try {
    responses = backend.generate_greedy(testset, max_new_tokens);
    batched = responses.size() == testset.size();
  } catch (const BackendError& e) {
    if (log) *log << "eval: batch generation failed (" << e.what() << "), retrying per problem\n";
    batched = false;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < testset.size(); ++i) {
    std::string response;
    if (batched) {
      response = responses[i];
    } else {
      try {
        auto one = backend.generate_greedy(testset.subspan(i, 1), max_new_tokens);
        if (one.size() != 1) throw BackendError("eval: expected one response", false);
        response = std::move(one.front());
      } catch (const BackendError& e) {
        if (log) *log << "eval: problem " << testset[i].id << " failed: " << e.what() << "\n";
        continue;
      }
    }
    if (verify_response(response, testset[i].ground_truth).correct) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(testset.size());
}

}  // namespace sgac
