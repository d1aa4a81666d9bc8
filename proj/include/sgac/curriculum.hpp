#pragma once

// The autonomous curriculum loop: sieve a batch from the pool, measure each
// candidate with K rollouts, score and select one, train on it with a
// micro-burst, and evaluate periodically.

#include <cstdint>
#include <future>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sgac/errors.hpp"
#include "sgac/grpo.hpp"
#include "sgac/policy_backend.hpp"
#include "sgac/problem.hpp"
#include "sgac/rng.hpp"
#include "sgac/rollout_signals.hpp"
#include "sgac/selector.hpp"

namespace sgac {

/// How a candidate is chosen from the sieved batch.
enum class SelectionStrategy { Selector, MaxVariance, MaxDisagreement, MaxLevel, Random };

inline constexpr std::string_view to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::Selector: return "selector";
    case SelectionStrategy::MaxVariance: return "max_variance";
    case SelectionStrategy::MaxDisagreement: return "max_disagreement";
    case SelectionStrategy::MaxLevel: return "max_level";
    case SelectionStrategy::Random: return "random";
  }
  return "selector";
}

inline SelectionStrategy parse_strategy(std::string_view s) {
  for (auto v : {SelectionStrategy::Selector, SelectionStrategy::MaxVariance, SelectionStrategy::MaxDisagreement,
                 SelectionStrategy::MaxLevel, SelectionStrategy::Random}) {
    if (to_string(v) == s) return v;
  }
  throw ContractViolation("unknown selection strategy: " + std::string(s));
}

struct CurriculumConfig {
  int pool_size = 1000;
  std::uint64_t shuffle_seed = 42;
  int batch_size = 4;
  int rollouts_per_candidate = 4;
  int total_steps = 20;
  int eval_every = 5;
  int testset_size = 50;
  double candidate_temperature = 1.0;
  int candidate_max_new_tokens = 1024;
  int eval_max_new_tokens = 1024;
  std::uint64_t master_seed = 0;
  bool parallel_candidates = true;
  BurstConfig burst;
  SelectionStrategy strategy = SelectionStrategy::Selector;
  SelectorModel selector = SelectorModel::deployment();

  void validate() const {
    if (pool_size < 1) throw ContractViolation("config: pool_size must be >= 1");
    if (testset_size < 1) throw ContractViolation("config: testset_size must be >= 1");
    if (batch_size < 1) throw ContractViolation("config: batch_size must be >= 1");
    if (rollouts_per_candidate < 1) throw ContractViolation("config: rollouts_per_candidate must be >= 1");
    if (total_steps < 0) throw ContractViolation("config: total_steps must be >= 0");
    if (eval_every < 1) throw ContractViolation("config: eval_every must be >= 1");
    if (candidate_temperature < 0.0) throw ContractViolation("config: candidate_temperature must be >= 0");
    burst.validate();
  }
};

struct CandidateEntry {
  std::string problem_id;
  SignalVector signals;
  double score = 0.0;
  std::vector<RolloutRecord> rollouts;
};

struct StepRecord {
  int step = 0;
  std::vector<CandidateEntry> batch;
  std::string selected;
  std::size_t selected_index = 0;
  BurstReport burst;
  std::optional<double> eval_accuracy;

  const CandidateEntry& selected_entry() const { return batch.at(selected_index); }
};

/// Callbacks through which a run is persisted as it happens.
struct RunObserver {
  virtual ~RunObserver() = default;
  virtual void on_eval(int /*step*/, double /*accuracy*/) {}
  virtual void on_burst_step(int /*curriculum_step*/, const std::string& /*problem_id*/, const BurstStepEvent&) {}
  virtual void on_step(const StepRecord&) {}
  virtual void on_step_failed(int /*step*/, std::span<const std::string> /*batch_ids*/, std::string_view /*error*/) {}
};

// ---------------------------------------------------------------------------

struct PoolSplit {
  std::vector<Problem> pool;
  std::vector<Problem> testset;
};

/// Shuffles the dataset (SplitMix64-driven Fisher-Yates, shuffle_seed) and
/// takes positions [0, pool_size) as the pool and the next testset_size as
/// the held-out test set.
inline PoolSplit init_pool(std::span<const Problem> dataset, const CurriculumConfig& config) {
  if (config.pool_size < 1) throw ContractViolation("init_pool: pool_size must be >= 1");
  if (config.testset_size < 1) throw ContractViolation("init_pool: testset_size must be >= 1");
  const auto needed = static_cast<std::size_t>(config.pool_size) + static_cast<std::size_t>(config.testset_size);
  if (dataset.size() < needed) {
    throw ContractViolation("init_pool: dataset has " + std::to_string(dataset.size()) + " problems, need " +
                            std::to_string(needed));
  }
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_seeded(order, config.shuffle_seed);
  PoolSplit split;
  split.pool.reserve(static_cast<std::size_t>(config.pool_size));
  split.testset.reserve(static_cast<std::size_t>(config.testset_size));
  for (std::size_t i = 0; i < needed; ++i) {
    Problem p = dataset[order[i]];
    validate(p);
    p.pool_index = static_cast<int>(i);
    if (i < static_cast<std::size_t>(config.pool_size)) {
      split.pool.push_back(std::move(p));
    } else {
      split.testset.push_back(std::move(p));
    }
  }
  return split;
}

/// Draws batch_size problems uniformly without replacement and removes them
/// from the pool for good.
inline std::vector<Problem> sieve_batch(std::vector<Problem>& pool, int batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ContractViolation("sieve_batch: batch_size must be >= 1");
  if (pool.size() < static_cast<std::size_t>(batch_size)) {
    throw PoolExhausted("pool has " + std::to_string(pool.size()) + " problems, batch needs " +
                        std::to_string(batch_size));
  }
  SplitMix64 rng(seed);
  std::vector<Problem> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const auto idx = static_cast<std::ptrdiff_t>(rng.below(pool.size()));
    batch.push_back(std::move(pool[static_cast<std::size_t>(idx)]));
    pool.erase(pool.begin() + idx);
  }
  return batch;
}

inline std::vector<double> score_batch(std::span<const SignalVector> signals, const CurriculumConfig& config,
                                       std::uint64_t random_seed) {
  std::vector<double> scores;
  scores.reserve(signals.size());
  SplitMix64 rng(random_seed);
  for (const auto& s : signals) {
    switch (config.strategy) {
      case SelectionStrategy::Selector: scores.push_back(predict_transfer(config.selector, s)); break;
      case SelectionStrategy::MaxVariance: scores.push_back(s.var_r); break;
      case SelectionStrategy::MaxDisagreement: scores.push_back(s.disagreement); break;
      case SelectionStrategy::MaxLevel: scores.push_back(static_cast<double>(s.level)); break;
      case SelectionStrategy::Random: scores.push_back(rng.uniform()); break;
    }
  }
  return scores;
}

struct CurriculumState {
  std::vector<Problem> pool;
  std::vector<Problem> testset;
  int step = 0;
  std::vector<StepRecord> records;
};

namespace seeds {
inline constexpr std::uint64_t kSieve = 0x7369657665ULL;
inline constexpr std::uint64_t kCandidate = 0x63616e64ULL;
inline constexpr std::uint64_t kBurst = 0x6275727374ULL;
inline constexpr std::uint64_t kRandom = 0x72616e64ULL;
}  // namespace seeds

/// Seed of candidate `index`'s signal rollouts at curriculum step `step`.
inline std::uint64_t candidate_seed(std::uint64_t master, int step, std::size_t index) {
  return derive_seed({master, seeds::kCandidate, static_cast<std::uint64_t>(step), index});
}

/// One sieve/select/burst(/evaluate) round. The sieved batch is consumed even
/// if a later phase fails.
inline StepRecord curriculum_step(CurriculumState& state, PolicyBackend& backend, const CurriculumConfig& config,
                                  RunObserver* observer = nullptr) {
  const int t = state.step + 1;
  const std::uint64_t master = config.master_seed;
  std::vector<Problem> batch =
      sieve_batch(state.pool, config.batch_size, derive_seed({master, seeds::kSieve, static_cast<std::uint64_t>(t)}));
  state.step = t;

  std::vector<std::string> ids;
  for (const auto& p : batch) ids.push_back(p.id);
  try {
    // Phase B: signals, computed per candidate and gathered in batch order.
    std::vector<std::vector<RolloutRecord>> rollouts(batch.size());
    auto measure = [&](std::size_t i) {
      return generate_rollouts(backend, batch[i], config.rollouts_per_candidate, config.candidate_temperature,
                               config.candidate_max_new_tokens, candidate_seed(master, t, i));
    };
    if (config.parallel_candidates && backend.capabilities().concurrent_generate && batch.size() > 1) {
      std::vector<std::future<std::vector<RolloutRecord>>> jobs;
      for (std::size_t i = 0; i < batch.size(); ++i) jobs.push_back(std::async(std::launch::async, measure, i));
      for (std::size_t i = 0; i < batch.size(); ++i) rollouts[i] = jobs[i].get();
    } else {
      for (std::size_t i = 0; i < batch.size(); ++i) rollouts[i] = measure(i);
    }

    StepRecord record;
    record.step = t;
    std::vector<SignalVector> signals;
    for (std::size_t i = 0; i < batch.size(); ++i) signals.push_back(collect_signals(batch[i], rollouts[i]));
    const auto scores = score_batch(signals, config, derive_seed({master, seeds::kRandom, static_cast<std::uint64_t>(t)}));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      record.batch.push_back({batch[i].id, signals[i], scores[i], std::move(rollouts[i])});
    }
    record.selected_index = argmax_lowest(scores);
    record.selected = batch[record.selected_index].id;

    // Phase C: burst on the winner.
    auto on_burst_step = [&](const BurstStepEvent& e) {
      if (observer) observer->on_burst_step(t, record.selected, e);
    };
    record.burst = micro_burst(backend, batch[record.selected_index], config.burst,
                               derive_seed({master, seeds::kBurst, static_cast<std::uint64_t>(t)}), on_burst_step);

    // Phase D: periodic evaluation.
    if (t % config.eval_every == 0) {
      record.eval_accuracy = evaluate_policy(backend, state.testset, config.eval_max_new_tokens);
      if (observer) observer->on_eval(t, *record.eval_accuracy);
    }
    state.records.push_back(record);
    if (observer) observer->on_step(record);
    return record;
  } catch (const std::exception& e) {
    if (observer) observer->on_step_failed(t, ids, e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------

struct LevelDistribution {
  double level5 = 0.0;
  double level4 = 0.0;
  double level_le3 = 0.0;
};

struct SuccessBands {
  double zero = 0.0;  // P_s == 0
  double low = 0.0;   // 0 < P_s <= 0.5
  double high = 0.0;  // P_s > 0.5
};

struct DisagreementBands {
  double high = 0.0;  // D >= 0.75
  double mid = 0.0;   // 0.5 <= D < 0.75
  double low = 0.0;   // D < 0.5
};

struct PatternFrequencies {
  double active = 0.0;
  double zero = 0.0;
  double transition = 0.0;
};

struct RunSummary {
  int steps = 0;
  int problems_consumed = 0;
  std::vector<std::pair<int, double>> trajectory;
  std::optional<double> final_accuracy;
  LevelDistribution levels;
  SuccessBands success;
  DisagreementBands disagreement;
  PatternFrequencies patterns;
  std::vector<int> selected_levels;
};

/// Selection and loss-pattern distributions over a run's step records, plus
/// the (step, accuracy) trajectory when evaluations are present.
inline RunSummary summarize_run(std::span<const StepRecord> records, std::optional<double> baseline = std::nullopt) {
  if (records.empty()) throw ContractViolation("summarize_run: no step records");
  RunSummary s;
  s.steps = static_cast<int>(records.size());
  const double n = static_cast<double>(records.size());
  if (baseline) s.trajectory.emplace_back(0, *baseline);
  for (const auto& r : records) {
    s.problems_consumed += static_cast<int>(r.batch.size());
    if (r.eval_accuracy) s.trajectory.emplace_back(r.step, *r.eval_accuracy);
    const SignalVector& sig = r.selected_entry().signals;
    s.selected_levels.push_back(sig.level);
    if (sig.level >= 5) {
      s.levels.level5 += 1;
    } else if (sig.level == 4) {
      s.levels.level4 += 1;
    } else {
      s.levels.level_le3 += 1;
    }
    if (sig.p_s == 0.0) {
      s.success.zero += 1;
    } else if (sig.p_s <= 0.5) {
      s.success.low += 1;
    } else {
      s.success.high += 1;
    }
    if (sig.disagreement >= 0.75) {
      s.disagreement.high += 1;
    } else if (sig.disagreement >= 0.5) {
      s.disagreement.mid += 1;
    } else {
      s.disagreement.low += 1;
    }
    switch (r.burst.pattern) {
      case LossPattern::Active: s.patterns.active += 1; break;
      case LossPattern::Zero: s.patterns.zero += 1; break;
      case LossPattern::Transition: s.patterns.transition += 1; break;
    }
  }
  for (double* v : {&s.levels.level5, &s.levels.level4, &s.levels.level_le3, &s.success.zero, &s.success.low,
                    &s.success.high, &s.disagreement.high, &s.disagreement.mid, &s.disagreement.low,
                    &s.patterns.active, &s.patterns.zero, &s.patterns.transition}) {
    *v /= n;
  }
  if (!s.trajectory.empty()) s.final_accuracy = s.trajectory.back().second;
  return s;
}

struct RunResult {
  CurriculumState state;
  RunSummary summary;
  double baseline_accuracy = 0.0;
};

/// Baseline evaluation at step 0, then total_steps curriculum steps.
/// Everything completed is reported to the observer before any error
/// propagates.
inline RunResult run_curriculum(std::span<const Problem> dataset, PolicyBackend& backend,
                                const CurriculumConfig& config, RunObserver* observer = nullptr) {
  config.validate();
  RunResult result;
  auto split = init_pool(dataset, config);
  result.state.pool = std::move(split.pool);
  result.state.testset = std::move(split.testset);

  result.baseline_accuracy = evaluate_policy(backend, result.state.testset, config.eval_max_new_tokens);
  if (observer) observer->on_eval(0, result.baseline_accuracy);

  for (int i = 0; i < config.total_steps; ++i) curriculum_step(result.state, backend, config, observer);

  if (result.state.records.empty()) {
    result.summary.trajectory.emplace_back(0, result.baseline_accuracy);
    result.summary.final_accuracy = result.baseline_accuracy;
  } else {
    result.summary = summarize_run(result.state.records, result.baseline_accuracy);
  }
  return result;
}

}  // namespace sgac
