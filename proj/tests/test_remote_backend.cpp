#include <gtest/gtest.h>

#include <atomic>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "sgac/grpo.hpp"
#include "sgac/remote_backend.hpp"

using namespace sgac;
using nlohmann::json;

namespace {

struct Seen {
  std::string path;
  std::string idempotency_key;
  std::string authorization;
  json body;
};

/// Local server whose first `failures` replies on each path use `fail_status`.
class MockServer {
 public:
  MockServer(int failures, int fail_status) : failures_(failures), fail_status_(fail_status) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); };
    server_.Post("/generate", handler);
    server_.Post("/update", handler);
    server_.Post("/eval", handler);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::vector<Seen> seen() {
    std::lock_guard lock(mu_);
    return seen_;
  }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    seen_.push_back({req.path, req.get_header_value("Idempotency-Key"), req.get_header_value("Authorization"),
                     json::parse(req.body)});
    if (failed_[req.path]++ < failures_) {
      res.status = fail_status_;
      res.set_content("nope", "text/plain");
      return;
    }
    const json& body = seen_.back().body;
    json reply;
    if (req.path == "/generate") {
      std::vector<std::string> rs;
      for (int i = 0; i < body["n"].get<int>(); ++i) rs.push_back("\\boxed{" + std::to_string(i) + "}");
      reply["responses"] = rs;
    } else if (req.path == "/update") {
      reply["losses"] = {-0.25, -0.5};
    } else {
      std::vector<std::string> rs;
      for (const auto& p : body["prompts"]) rs.push_back("echo: " + p.get<std::string>());
      reply["responses"] = rs;
    }
    res.set_content(reply.dump(), "application/json");
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  int failures_;
  int fail_status_;
  std::mutex mu_;
  std::vector<Seen> seen_;
  std::map<std::string, int> failed_;
};

RemoteOptions fast(const std::string& url) {
  RemoteOptions o;
  o.base_url = url;
  o.backoff = std::chrono::milliseconds(1);
  o.connect_timeout = std::chrono::seconds(2);
  o.read_timeout = std::chrono::seconds(5);
  return o;
}

Problem problem() {
  Problem p;
  p.id = "r1";
  p.statement = "What is 1+1?";
  p.ground_truth = "2";
  p.level = 1;
  p.subject = "Algebra";
  return p;
}

}  // namespace

TEST(RenderPrompt, FillsEverySlot) {
  EXPECT_EQ(render_prompt("Q: {statement} / {statement}", problem()), "Q: What is 1+1? / What is 1+1?");
  EXPECT_EQ(render_prompt("no slot", problem()), "no slot");
  Problem tricky = problem();
  tricky.statement = "{statement}";
  EXPECT_EQ(render_prompt("<{statement}>", tricky), "<{statement}>");
}

TEST(RemoteBackend, GenerateSendsPromptSeedAndToken) {
  MockServer server(0, 500);
  auto opts = fast(server.url());
  opts.auth_token = "secret";
  opts.prompt_template = "Solve: {statement}";
  RemoteBackend backend(opts);
  const auto rs = backend.generate(problem(), 3, {0.7, 128}, 99);
  EXPECT_EQ(rs, (std::vector<std::string>{"\\boxed{0}", "\\boxed{1}", "\\boxed{2}"}));
  const auto seen = server.seen();
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_EQ(seen[0].authorization, "Bearer secret");
  EXPECT_EQ(seen[0].body["prompt"], "Solve: What is 1+1?");
  EXPECT_EQ(seen[0].body["seed"], 99u);
  EXPECT_EQ(seen[0].body["n"], 3);
  EXPECT_DOUBLE_EQ(seen[0].body["temperature"].get<double>(), 0.7);
  EXPECT_EQ(seen[0].idempotency_key.size(), 16u);
}

TEST(RemoteBackend, NoTokenMeansNoAuthorizationHeader) {
  MockServer server(0, 500);
  RemoteBackend backend(fast(server.url()));
  backend.generate(problem(), 1, {}, 0);
  EXPECT_TRUE(server.seen().at(0).authorization.empty());
}

TEST(RemoteBackend, RetriesTransientStatusWithStableKey) {
  for (int status : {503, 429}) {
    MockServer server(2, status);
    RemoteBackend backend(fast(server.url()));
    EXPECT_EQ(backend.generate(problem(), 2, {}, 5).size(), 2u);
    const auto seen = server.seen();
    ASSERT_EQ(seen.size(), 3u) << status;
    EXPECT_EQ(seen[0].idempotency_key, seen[1].idempotency_key);
    EXPECT_EQ(seen[1].idempotency_key, seen[2].idempotency_key);
  }
}

TEST(RemoteBackend, DistinctCallsGetDistinctKeys) {
  MockServer server(0, 500);
  RemoteBackend backend(fast(server.url()));
  backend.generate(problem(), 2, {}, 5);
  backend.generate(problem(), 2, {}, 5);
  const auto seen = server.seen();
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_NE(seen[0].idempotency_key, seen[1].idempotency_key);
}

TEST(RemoteBackend, ClientErrorFailsImmediately) {
  MockServer server(5, 400);
  RemoteBackend backend(fast(server.url()));
  try {
    backend.generate(problem(), 2, {}, 5);
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_FALSE(e.retriable);
  }
  EXPECT_EQ(server.seen().size(), 1u);
}

TEST(RemoteBackend, ExhaustedRetriesAreRetriable) {
  MockServer server(10, 500);
  RemoteBackend backend(fast(server.url()));
  try {
    backend.generate(problem(), 2, {}, 5);
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_TRUE(e.retriable);
  }
  EXPECT_EQ(server.seen().size(), 3u);
}

TEST(RemoteBackend, UnreachableServerIsRetriable) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto opts = fast("http://127.0.0.1:" + std::to_string(port));
  opts.attempts = 2;
  RemoteBackend backend(opts);
  try {
    backend.generate(problem(), 1, {}, 0);
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_TRUE(e.retriable);
  }
}

TEST(RemoteBackend, UpdateAndEvalRoundTrip) {
  MockServer server(0, 500);
  RemoteBackend backend(fast(server.url()));
  const std::vector<std::string> rs{"a", "b"};
  const std::vector<double> adv{1.0, -1.0};
  EXPECT_DOUBLE_EQ(backend.apply_update(problem(), rs, adv, 2e-5), -0.5);
  const std::vector<Problem> ps{problem(), problem()};
  const auto out = backend.generate_greedy(ps, 64);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].rfind("echo: What is 1+1?", 0), 0u);

  const auto seen = server.seen();
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen[0].path, "/update");
  EXPECT_EQ(seen[0].body["advantages"], json({1.0, -1.0}));
  EXPECT_EQ(seen[0].body["max_steps"], 1);
  EXPECT_EQ(seen[1].path, "/eval");
  EXPECT_EQ(seen[1].body["temperature"], 0);
}

TEST(RemoteBackend, ZeroAdvantagesSkipTheServer) {
  MockServer server(0, 500);
  RemoteBackend backend(fast(server.url()));
  const std::vector<std::string> rs{"a", "b", "c"};
  const std::vector<double> zeros(3, 0.0);
  EXPECT_EQ(backend.apply_update(problem(), rs, zeros, 2e-5), 0.0);
  EXPECT_TRUE(server.seen().empty());
}

TEST(RemoteBackend, DrivesAMicroBurst) {
  MockServer server(0, 500);
  RemoteBackend backend(fast(server.url()));
  Problem p = problem();
  p.ground_truth = "1";  // the mock answers 0, 1, 2, ... so exactly one rollout is right
  const auto report = micro_burst(backend, p, BurstConfig{}, 7);
  EXPECT_EQ(report.pattern, LossPattern::Active);
  for (double l : report.step_losses) EXPECT_DOUBLE_EQ(l, -0.5);
}

TEST(RemoteBackend, RejectsBadOptions) {
  EXPECT_THROW(RemoteBackend(RemoteOptions{}), ContractViolation);
  auto o = fast("http://127.0.0.1:1");
  o.attempts = 0;
  EXPECT_THROW(RemoteBackend{o}, ContractViolation);
}
