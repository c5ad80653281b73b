#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "llmtrack/backends.hpp"

using namespace llmtrack;

namespace {

Snapshot snapshot(Step step, double cost, Vec2 robot0 = Vec2(-5, -5), WeightVector w = WeightVector()) {
  std::vector<RobotState> robots(2);
  robots[0].id = 21;
  robots[0].position = robot0;
  robots[0].capacity = 1;
  robots[1].id = 26;
  robots[1].position = Vec2(5, 5);
  robots[1].capacity = 1;
  std::vector<TargetBelief> beliefs(2);
  beliefs[0].target_id = 122;
  beliefs[0].mean << 4, 4, 0, 0;
  beliefs[1].target_id = 124;
  beliefs[1].mean << -4, -4, 0, 0;
  const std::vector<DangerZone> zones{{1, ZoneKind::sensing, Vec2(0, 0), 1.0, 0.3, 10}};
  return make_snapshot(step, robots, beliefs, zones, Assignment::zeros(2, 2), w, cost);
}

LlmRequest request(Role role, std::vector<Snapshot> hist, std::string user = "status") {
  LlmRequest r;
  r.role = role;
  r.system = "sys";
  r.user = std::move(user);
  r.max_tokens = 200;
  r.history = std::move(hist);
  return r;
}

QueryContext qc() {
  QueryContext q;
  q.robot_ids = {21, 26};
  q.target_ids = {122, 124};
  q.capacities = {1, 1};
  return q;
}

WeightVector weights_of(const LlmResponse& r) { return parse_weights(r.text); }

}  // namespace

TEST(MockBackend, TaskAnswerIsGreedyOfLatestSnapshot) {
  MockBackend mock;
  const auto s = snapshot(3, 4.0);
  const auto resp = mock.complete(request(Role::task, {snapshot(2, 4.0), s}));
  const auto a = parse_assignment(resp.text, s.robot_ids(), s.target_ids());
  EXPECT_EQ(a, greedy_assign(s.targets, s.robot_states(), s.capacities()));
  EXPECT_NE(resp.text.find("Drone 21 will track Target 124"), std::string::npos);
  EXPECT_GT(resp.tokens_prompt, 0);
  EXPECT_EQ(resp.tokens_response, count_tokens(resp.text));
}

TEST(MockBackend, QueryAcceptsTaskAnswer) {
  MockBackend mock;
  const auto s = snapshot(3, 4.0);
  const auto ex = query(Role::task, mock, {"sys", "user"}, 200, qc(), 3, {s});
  EXPECT_EQ(ex.verdict, Verdict::accepted);
  EXPECT_EQ(*ex.assignment, greedy_assign(s.targets, s.robot_states(), s.capacities()));
}

TEST(MockBackend, DecaysTowardOnesWhenCalm) {
  MockBackend mock;
  const auto w = weights_of(mock.complete(request(Role::action, {snapshot(1, 4.0, Vec2(-5, -5), WeightVector(3, 0.5, 1, 1))})));
  EXPECT_NEAR(w[0], 2.8, 1e-9);
  EXPECT_NEAR(w[1], 0.55, 1e-9);
  EXPECT_NEAR(w[2], 1.0, 1e-9);
}

TEST(MockBackend, RaisesSafetyNearZone) {
  MockBackend mock;
  // 1.1 from the center: outside the zone, inside the inflated disk.
  const auto w = weights_of(mock.complete(request(Role::action, {snapshot(1, 4.0, Vec2(1.1, 0))})));
  EXPECT_EQ(w, WeightVector(1, 1, 1.5, 1.5));
}

TEST(MockBackend, RaisesTrackingWhenCostRose) {
  MockBackend mock;
  const auto w = weights_of(mock.complete(request(Role::action, {snapshot(1, 3.0), snapshot(2, 3.5), snapshot(3, 4.0)})));
  EXPECT_EQ(w, WeightVector(1.5, 1, 1, 1));
}

TEST(MockBackend, SupervisorTrackingComplaint) {
  MockBackend mock;
  const std::string user = "status\n" + std::string(kSupervisorPrefix) + ":\n- (performance) Focus more on tracking targets; The trace is not good.\n";
  const auto w = weights_of(mock.complete(request(Role::action, {snapshot(1, 4.0)}, user)));
  EXPECT_NEAR(w[0], 1.5, 1e-12);
  EXPECT_FALSE(MockBackend::supervisor_mentions_tracking("track the trace"));  // no suffix
}

TEST(MockBackend, ClipsToBounds) {
  MockBackend mock;
  auto req = request(Role::action, {snapshot(1, 3.0), snapshot(2, 4.0, Vec2(0.5, 0), WeightVector(49, 1, 90, 90))});
  const auto w = weights_of(mock.complete(req));
  EXPECT_TRUE(WeightBounds{}.contains(w));
  EXPECT_EQ(w[0], 50.0);
  EXPECT_EQ(w[2], 100.0);
}

TEST(MockBackend, Deterministic) {
  MockBackend a, b;
  const auto req = request(Role::action, {snapshot(1, 3.0), snapshot(2, 4.0)});
  EXPECT_EQ(a.complete(req).text, b.complete(req).text);
  EXPECT_TRUE(a.deterministic());
}

TEST(FaultyBackend, AlwaysFaultyAlwaysSkipped) {
  FaultyBackend f(1.0, 7);
  for (int k = 0; k < 30; ++k) {
    const auto s = snapshot(k + 1, 4.0);
    EXPECT_EQ(query(Role::task, f, {"s", "u"}, 200, qc(), k, {s}).verdict, Verdict::skipped_format);
    EXPECT_EQ(query(Role::action, f, {"s", "u"}, 200, qc(), k, {s}).verdict, Verdict::skipped_format);
  }
}

TEST(FaultyBackend, NeverFaultyMatchesMock) {
  FaultyBackend f(0.0, 7);
  MockBackend m;
  const auto req = request(Role::task, {snapshot(1, 4.0)});
  EXPECT_EQ(f.complete(req).text, m.complete(req).text);
}

TEST(FaultyBackend, CalibratedRate) {
  FaultyBackend f(0.3, 11);
  int ok = 0;
  for (int k = 0; k < 2000; ++k)
    ok += query(Role::task, f, {"s", "u"}, 200, qc(), k, {snapshot(1, 4.0)}).verdict == Verdict::accepted;
  // 3-sigma binomial band around 0.7.
  EXPECT_NEAR(ok / 2000.0, 0.7, 3 * std::sqrt(0.21 / 2000));
}

TEST(FaultyBackend, FaultCountTracksRateOnEveryPrefix) {
  MockBackend m;
  const auto req = request(Role::task, {snapshot(1, 4.0)});
  const std::string clean = m.complete(req).text;
  for (double p : {0.1, 0.3, 0.5, 0.77}) {
    FaultyBackend f(p, 5);
    int faults = 0;
    for (int n = 1; n <= 500; ++n) {
      faults += f.complete(req).text != clean;
      ASSERT_GE(faults, static_cast<int>(std::floor(n * p))) << "p " << p << " n " << n;
      ASSERT_LE(faults, static_cast<int>(std::ceil(n * p))) << "p " << p << " n " << n;
    }
  }
}

TEST(FaultyBackend, EachQueryFaultedWithProbabilityP) {
  MockBackend m;
  const auto req = request(Role::action, {snapshot(1, 4.0)});
  const std::string clean = m.complete(req).text;
  int faults = 0;
  const int seeds = 4000;
  for (int s = 0; s < seeds; ++s) {
    FaultyBackend f(0.3, static_cast<std::uint64_t>(s));
    faults += f.complete(req).text != clean;
  }
  EXPECT_NEAR(faults / static_cast<double>(seeds), 0.3, 3 * std::sqrt(0.21 / seeds));
}

TEST(FaultyBackend, RolesHaveIndependentSequences) {
  const auto task = request(Role::task, {snapshot(1, 4.0)});
  const auto action = request(Role::action, {snapshot(1, 4.0)});
  FaultyBackend alone(0.3, 8), mixed(0.3, 8);
  MockBackend m;
  const std::string clean = m.complete(task).text;
  for (int k = 0; k < 100; ++k) {
    mixed.complete(action);
    ASSERT_EQ(alone.complete(task).text != clean, mixed.complete(task).text != clean) << k;
  }
}

TEST(FaultyBackend, SameSeedSameFaults) {
  FaultyBackend a(0.5, 3), b(0.5, 3);
  for (int k = 0; k < 50; ++k) {
    const auto req = request(k % 2 ? Role::task : Role::action, {snapshot(1, 4.0)});
    ASSERT_EQ(a.complete(req).text, b.complete(req).text);
  }
  EXPECT_THROW(FaultyBackend(1.5, 1), ConfigError);
}

TEST(MakeBackend, Specs) {
  EXPECT_EQ(make_backend("mock", 1)->name(), "mock");
  EXPECT_EQ(make_backend("faulty:0.3", 1)->name(), "faulty");
  EXPECT_THROW(make_backend("faulty:abc", 1), ConfigError);
  EXPECT_THROW(make_backend("gpt", 1), ConfigError);
}

class HttpBackendTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body_ = nlohmann::json::parse(req.body);
      last_auth_ = req.get_header_value("Authorization");
      if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
      if (status_ != 200) {
        res.status = status_;
        return;
      }
      nlohmann::json out{{"choices", {{{"message", {{"role", "assistant"}, {"content", "[1, 2, 3, 4]"}}}}}},
                         {"usage", {{"prompt_tokens", 42}, {"completion_tokens", 9}}}};
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  HttpBackendConfig config(double timeout = 2.0) {
    HttpBackendConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_);
    c.model = "test-model";
    c.api_key = "secret";
    c.timeout_s = timeout;
    return c;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  nlohmann::json last_body_;
  std::string last_auth_;
  std::chrono::milliseconds delay_{0};
  int status_ = 200;
};

TEST_F(HttpBackendTest, SendsChatRequest) {
  HttpBackend be(config());
  LlmRequest req = request(Role::action, {});
  req.max_tokens = 200;
  const auto resp = be.complete(req);
  EXPECT_EQ(resp.text, "[1, 2, 3, 4]");
  EXPECT_EQ(resp.tokens_prompt, 42);
  EXPECT_EQ(resp.tokens_response, 9);
  EXPECT_EQ(last_body_["model"], "test-model");
  EXPECT_EQ(last_body_["temperature"], 0.0);
  EXPECT_EQ(last_body_["max_tokens"], 200);
  EXPECT_EQ(last_body_["messages"][0]["role"], "system");
  EXPECT_EQ(last_body_["messages"][1]["content"], "status");
  EXPECT_EQ(last_auth_, "Bearer secret");
  EXPECT_FALSE(be.deterministic());
}

TEST_F(HttpBackendTest, TimeoutBecomesTransportSkip) {
  delay_ = std::chrono::milliseconds(800);
  HttpBackend be(config(0.2));
  const auto ex = query(Role::action, be, {"s", "u"}, 100, qc(), 1);
  EXPECT_EQ(ex.verdict, Verdict::skipped_format);
  EXPECT_NE(ex.reason.find("transport"), std::string::npos);
}

TEST_F(HttpBackendTest, HttpErrorStatusIsTransportError) {
  status_ = 500;
  HttpBackend be(config());
  EXPECT_THROW(be.complete(request(Role::task, {})), TransportError);
}

TEST(HttpBackendConfig, RequiresEnvironment) {
  ::unsetenv("LLMTRACK_LLM_BASE_URL");
  EXPECT_THROW(HttpBackendConfig::from_env(), ConfigError);
  ::setenv("LLMTRACK_LLM_BASE_URL", "http://127.0.0.1:1", 1);
  ::setenv("LLMTRACK_LLM_MODEL", "m", 1);
  const auto c = HttpBackendConfig::from_env();
  EXPECT_EQ(c.path, "/v1/chat/completions");
  EXPECT_EQ(c.timeout_s, 10.0);
  ::unsetenv("LLMTRACK_LLM_BASE_URL");
  ::unsetenv("LLMTRACK_LLM_MODEL");
}
