#pragma once

// PolicyBackend over HTTP. The server owns the model and trainer:
//   POST /generate {problem_id, prompt, n, temperature, max_new_tokens, seed} -> {responses}
//   POST /update   {problem_id, rollouts, advantages, learning_rate, max_steps} -> {losses}
//   POST /eval     {prompts, temperature: 0, max_new_tokens} -> {responses}
// Every request carries an Idempotency-Key that stays fixed across retries.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "sgac/errors.hpp"
#include "sgac/policy_backend.hpp"
#include "sgac/rng.hpp"

namespace sgac {

struct RemoteOptions {
  std::string base_url;  // e.g. http://127.0.0.1:8000
  std::string auth_token;
  int attempts = 3;
  std::chrono::milliseconds backoff{200};  // doubled after each failed attempt
  std::chrono::seconds connect_timeout{10};
  std::chrono::seconds read_timeout{600};
  std::string prompt_template =
      "{statement}\nPlease reason step by step, and put your final answer within \\boxed{}.";

  /// Reads the bearer token from SGAC_REMOTE_TOKEN when set.
  static RemoteOptions from_env(std::string base_url) {
    RemoteOptions o;
    o.base_url = std::move(base_url);
    if (const char* tok = std::getenv("SGAC_REMOTE_TOKEN")) o.auth_token = tok;
    return o;
  }
};

inline std::string render_prompt(const std::string& tmpl, const Problem& p) {
  std::string out = tmpl;
  static constexpr std::string_view kSlot = "{statement}";
  for (std::size_t pos = out.find(kSlot); pos != std::string::npos; pos = out.find(kSlot, pos + p.statement.size())) {
    out.replace(pos, kSlot.size(), p.statement);
  }
  return out;
}

class RemoteBackend final : public PolicyBackend {
 public:
  using json = nlohmann::json;

  explicit RemoteBackend(RemoteOptions options) : opts_(std::move(options)) {
    if (opts_.base_url.empty()) throw ContractViolation("remote backend: empty URL");
    if (opts_.attempts < 1) throw ContractViolation("remote backend: attempts must be >= 1");
  }

  BackendCapabilities capabilities() const override { return {true, true, true}; }

  std::vector<std::string> generate(const Problem& problem, int n, const GenerationParams& params,
                                    std::uint64_t seed) const override {
    json body{{"problem_id", problem.id},          {"prompt", render_prompt(opts_.prompt_template, problem)},
              {"n", n},                            {"temperature", params.temperature},
              {"max_new_tokens", params.max_new_tokens}, {"seed", seed}};
    return responses_of(post("/generate", body), static_cast<std::size_t>(n));
  }

  double apply_update(const Problem& problem, std::span<const std::string> rollouts, std::span<const double> advantages,
                      double learning_rate) override {
    if (rollouts.size() != advantages.size()) throw ContractViolation("remote update: rollout/advantage length mismatch");
    bool all_zero = true;
    for (double a : advantages) all_zero = all_zero && a == 0.0;
    if (all_zero) return 0.0;
    json body{{"problem_id", problem.id},
              {"rollouts", std::vector<std::string>(rollouts.begin(), rollouts.end())},
              {"advantages", std::vector<double>(advantages.begin(), advantages.end())},
              {"learning_rate", learning_rate},
              {"max_steps", 1}};
    const json reply = post("/update", body);
    if (!reply.contains("losses") || !reply["losses"].is_array() || reply["losses"].empty()) {
      throw BackendError("/update reply has no losses", false);
    }
    try {
      return reply["losses"].back().get<double>();
    } catch (const json::exception& e) {
      throw BackendError(std::string("/update reply: ") + e.what(), false);
    }
  }

  std::vector<std::string> generate_greedy(std::span<const Problem> problems, int max_new_tokens) const override {
    std::vector<std::string> prompts;
    prompts.reserve(problems.size());
    for (const auto& p : problems) prompts.push_back(render_prompt(opts_.prompt_template, p));
    json body{{"prompts", prompts}, {"temperature", 0}, {"max_new_tokens", max_new_tokens}};
    return responses_of(post("/eval", body), problems.size());
  }

  const RemoteOptions& options() const noexcept { return opts_; }

 private:
  static std::vector<std::string> responses_of(const json& reply, std::size_t expected) {
    if (!reply.contains("responses") || !reply["responses"].is_array()) {
      throw BackendError("reply has no responses array", false);
    }
    std::vector<std::string> out;
    try {
      out = reply["responses"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw BackendError(std::string("bad responses array: ") + e.what(), false);
    }
    if (out.size() != expected) {
      throw BackendError("expected " + std::to_string(expected) + " responses, got " + std::to_string(out.size()),
                         false);
    }
    return out;
  }

  json post(const std::string& path, const json& body) const {
    const std::string payload = body.dump();
    const std::uint64_t serial = counter_.fetch_add(1);
    char key[17];
    std::snprintf(key, sizeof key, "%016llx",
                  static_cast<unsigned long long>(derive_seed({fnv1a64(path), fnv1a64(payload), serial})));

    httplib::Headers headers{{"Idempotency-Key", key}};
    if (!opts_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + opts_.auth_token);

    std::string last_error;
    auto delay = opts_.backoff;
    for (int attempt = 1; attempt <= opts_.attempts; ++attempt) {
      httplib::Client client(opts_.base_url);
      client.set_connection_timeout(opts_.connect_timeout);
      client.set_read_timeout(opts_.read_timeout);
      auto res = client.Post(path, headers, payload, "application/json");
      if (!res) {
        last_error = path + ": transport error " + httplib::to_string(res.error());
      } else if (res->status == 200) {
        try {
          return json::parse(res->body);
        } catch (const json::exception& e) {
          throw BackendError(path + ": unparseable reply: " + e.what(), false);
        }
      } else if (res->status == 429 || res->status >= 500) {
        last_error = path + ": HTTP " + std::to_string(res->status);
      } else {
        throw BackendError(path + ": HTTP " + std::to_string(res->status) + " " + res->body, false);
      }
      if (attempt < opts_.attempts) {
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
    throw BackendError(last_error + " (after " + std::to_string(opts_.attempts) + " attempts)", true);
  }

  RemoteOptions opts_;
  mutable std::atomic<std::uint64_t> counter_{0};
};

}  // namespace sgac
