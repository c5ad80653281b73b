#include <gtest/gtest.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "llmtrack/harness.hpp"
#include "llmtrack/service.hpp"
#include "schema_check.hpp"

using namespace llmtrack;
using namespace std::chrono_literals;
namespace net = boost::asio;
namespace http = boost::beast::http;
namespace websocket = boost::beast::websocket;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

const Scenario& scenario() {
  static const Scenario s = load_scenario(std::string(LLMTRACK_SOURCE_DIR) + "/scenarios/ablation.json");
  return s;
}

struct HttpReply {
  int status = 0;
  std::string body;
  std::string allow_origin;
  json parsed() const { return json::parse(body); }
};

HttpReply request(unsigned short port, http::verb verb, const std::string& target, const std::string& body = "") {
  net::io_context ioc;
  tcp::socket socket(ioc);
  socket.connect({net::ip::make_address("127.0.0.1"), port});
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  req.set(http::field::content_type, "application/json");
  req.body() = body;
  req.prepare_payload();
  http::write(socket, req);
  boost::beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(socket, buffer, res);
  boost::system::error_code ec;
  socket.shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body(), std::string(res[http::field::access_control_allow_origin])};
}

HttpReply get_state(unsigned short port) { return request(port, http::verb::get, "/v1/state"); }

HttpReply post(unsigned short port, const std::string& target, const json& body) {
  return request(port, http::verb::post, target, body.dump());
}

class WsClient {
 public:
  explicit WsClient(unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    net::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/v1/stream");
  }

  json read() {
    boost::beast::flat_buffer buffer;
    ws_.read(buffer);
    return json::parse(boost::beast::buffers_to_string(buffer.data()));
  }

  /// Reads until the final frame arrives.
  std::vector<json> read_until_final() {
    std::vector<json> frames;
    for (;;) {
      frames.push_back(read());
      if (frames.back()["final"].get<bool>()) return frames;
    }
  }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

/// One simulation behind a live service; the stepper runs on its own thread.
class LiveRun {
 public:
  LiveRun(Step steps, std::chrono::milliseconds period, bool start_paused = false)
      : sim_(scenario(), options(steps)), service_(gw_, 0), period_(period) {
    if (start_paused) gw_.control(ControlCommand::pause);
  }

  ~LiveRun() {
    gw_.control(ControlCommand::stop);
    join();
    service_.stop();
  }

  void start() {
    stepper_ = std::thread([this] { drive(sim_, gw_, period_); });
  }

  void join() {
    if (stepper_.joinable()) stepper_.join();
  }

  unsigned short port() const { return service_.port(); }
  Gateway& gateway() { return gw_; }

  /// Polls GET /v1/state until `pred` holds or the deadline passes.
  template <class Pred>
  std::optional<json> wait_state(Pred pred, std::chrono::milliseconds deadline = 10s) {
    const auto end = std::chrono::steady_clock::now() + deadline;
    while (std::chrono::steady_clock::now() < end) {
      const auto r = get_state(port());
      if (r.status == 200) {
        json f = r.parsed();
        if (pred(f)) return f;
      }
      std::this_thread::sleep_for(5ms);
    }
    return std::nullopt;
  }

 private:
  static RunOptions options(Step steps) {
    RunOptions o;
    o.mode = Mode::llm;
    o.steps = steps;
    return o;
  }

  Gateway gw_;
  Simulation sim_;
  Service service_;
  std::chrono::milliseconds period_;
  std::thread stepper_;
};

}  // namespace

TEST(Gateway, OutOfOrderFramesAreDropped) {
  Gateway gw;
  StateFrame f;
  f.step = 5;
  gw.publish(f);
  f.step = 3;
  gw.publish(f);
  const auto latest = gw.latest();
  ASSERT_TRUE(latest);
  EXPECT_EQ(json::parse(latest->second)["step"], 5);
  EXPECT_EQ(latest->first, 1u);
}

TEST(Gateway, SupervisorValidation) {
  Gateway gw;
  EXPECT_TRUE(gw.post_supervisor("performance", "The Drone 21 should focus on tracking target 122.").accepted);
  EXPECT_TRUE(gw.post_supervisor("risk", std::string(Gateway::kMaxSupervisorChars, 'a')).accepted);
  const auto oversize = gw.post_supervisor("risk", std::string(Gateway::kMaxSupervisorChars + 1, 'a'));
  EXPECT_FALSE(oversize.accepted);
  EXPECT_NE(oversize.reason.find("500"), std::string::npos);
  EXPECT_FALSE(gw.post_supervisor("abnormal", "  \n").accepted);
  EXPECT_FALSE(gw.post_supervisor("gossip", "hello").accepted);
  const auto inbox = gw.drain_inbox();
  ASSERT_EQ(inbox.size(), 2u);
  EXPECT_EQ(inbox[0].category, HumanCategory::performance);
  EXPECT_TRUE(gw.drain_inbox().empty());
}

TEST(Gateway, StopIsIdempotentAndReleasesStepper) {
  Gateway gw;
  gw.control(ControlCommand::pause);
  std::atomic<bool> runnable{true};
  std::thread t([&] { runnable = gw.wait_runnable(); });
  std::this_thread::sleep_for(20ms);
  gw.control(ControlCommand::stop);
  gw.control(ControlCommand::stop);
  t.join();
  EXPECT_FALSE(runnable);
  EXPECT_TRUE(gw.stopped());
}

TEST(Gateway, WaitNewerTimesOut) {
  Gateway gw;
  EXPECT_FALSE(gw.wait_newer(0, 10ms));
  gw.publish(StateFrame{});
  const auto f = gw.wait_newer(0, 10ms);
  ASSERT_TRUE(f);
  EXPECT_FALSE(gw.wait_newer(f->first, 10ms));
}

TEST(Service, StateUnavailableBeforeFirstFrame) {
  Gateway gw;
  Service svc(gw, 0);
  EXPECT_EQ(get_state(svc.port()).status, 503);
}

TEST(Service, StateMatchesFinishedRun) {
  LiveRun run(10, 0ms);
  run.start();
  run.join();
  const auto r = get_state(run.port());
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.allow_origin, "*");
  const json f = r.parsed();
  EXPECT_EQ(f["step"], 10);
  EXPECT_EQ(f["final"], true);
  EXPECT_EQ(f["status"], "finished");
  EXPECT_EQ(f["version"], StateFrame::kVersion);
  EXPECT_EQ(to_json(frame_from_json(f)), f);
  EXPECT_EQ(f["metrics"]["steps"], 10);
}

TEST(Service, RoutesAndMethods) {
  LiveRun run(1, 0ms);
  run.start();
  run.join();
  EXPECT_EQ(request(run.port(), http::verb::get, "/v1/nothing").status, 404);
  EXPECT_EQ(request(run.port(), http::verb::get, "/state").status, 404);
  EXPECT_EQ(request(run.port(), http::verb::post, "/v1/state").status, 404);
  EXPECT_EQ(request(run.port(), http::verb::get, "/v1/supervisor").status, 404);
  const auto pre = request(run.port(), http::verb::options, "/v1/supervisor");
  EXPECT_EQ(pre.status, 204);
  EXPECT_EQ(pre.allow_origin, "*");
}

TEST(Service, SupervisorEndpointValidates) {
  LiveRun run(5, 0ms);
  run.start();
  run.join();
  const auto ok = post(run.port(), "/v1/supervisor",
                       {{"category", "performance"}, {"text", "The Drone 21 should focus on tracking target 122."}});
  EXPECT_EQ(ok.status, 200);
  EXPECT_EQ(ok.parsed()["queued_at_step"], 5);
  EXPECT_EQ(post(run.port(), "/v1/supervisor", {{"category", "performance"}, {"text", ""}}).status, 400);
  const auto big = post(run.port(), "/v1/supervisor", {{"category", "risk"}, {"text", std::string(501, 'x')}});
  EXPECT_EQ(big.status, 400);
  EXPECT_TRUE(big.parsed().contains("error"));
  EXPECT_EQ(post(run.port(), "/v1/supervisor", {{"category", "weather"}, {"text", "rain"}}).status, 400);
  EXPECT_EQ(post(run.port(), "/v1/supervisor", {{"text", "no category"}}).status, 400);
  EXPECT_EQ(request(run.port(), http::verb::post, "/v1/supervisor", "{not json").status, 400);
}

TEST(Service, BodiesConformToWireSchema) {
  const auto schema = schema_check::load(std::string(LLMTRACK_SOURCE_DIR) + "/schema/state_frame.schema.json");
  LiveRun run(5, 0ms);
  run.start();
  run.join();
  EXPECT_TRUE(schema_check::validate(schema, get_state(run.port()).parsed()).empty());
  const json sup{{"category", "abnormal"}, {"text", "Drone 26 is drifting."}};
  EXPECT_TRUE(schema_check::validate_def(schema, "supervisor_request", sup).empty());
  EXPECT_TRUE(schema_check::validate_def(schema, "supervisor_response", post(run.port(), "/v1/supervisor", sup).parsed())
                  .empty());
  EXPECT_TRUE(schema_check::validate_def(schema, "error_response",
                                         post(run.port(), "/v1/supervisor", {{"text", "x"}}).parsed())
                  .empty());
  const json ctl{{"command", "pause"}};
  EXPECT_TRUE(schema_check::validate_def(schema, "control_request", ctl).empty());
  EXPECT_TRUE(
      schema_check::validate_def(schema, "control_response", post(run.port(), "/v1/control", ctl).parsed()).empty());
  EXPECT_FALSE(schema_check::validate_def(schema, "supervisor_request", {{"category", "weather"}, {"text", "x"}}).empty());
}

TEST(Service, ControlEndpointValidates) {
  LiveRun run(3, 0ms);
  run.start();
  run.join();
  EXPECT_EQ(post(run.port(), "/v1/control", {{"command", "explode"}}).status, 400);
  EXPECT_EQ(post(run.port(), "/v1/control", {{"cmd", "stop"}}).status, 400);
  const auto a = post(run.port(), "/v1/control", {{"command", "stop"}});
  const auto b = post(run.port(), "/v1/control", {{"command", "stop"}});
  EXPECT_EQ(a.status, 200);
  EXPECT_EQ(b.status, 200);
  EXPECT_EQ(a.parsed()["ack"], "stop");
}

TEST(Service, StreamDeliversOrderedFramesEndingWithFinal) {
  LiveRun run(10, 5ms, /*start_paused=*/true);
  run.start();
  ASSERT_TRUE(run.wait_state([](const json& f) { return f["status"] == "paused"; }));
  WsClient ws(run.port());
  const json first = ws.read();
  EXPECT_EQ(first["step"], 0);
  post(run.port(), "/v1/control", {{"command", "resume"}});
  std::vector<json> frames = ws.read_until_final();
  frames.insert(frames.begin(), first);

  int stepped = 0;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    EXPECT_GE(frames[i]["step"].get<int>(), frames[i - 1]["step"].get<int>());
    stepped += frames[i]["step"].get<int>() > 0;
  }
  EXPECT_LE(stepped, 10);
  EXPECT_EQ(frames.back()["step"], 10);
  EXPECT_EQ(frames.back()["status"], "finished");
  for (const auto& f : frames) EXPECT_EQ(to_json(frame_from_json(f)), f);
}

TEST(Service, ReconnectReceivesCurrentFrameFirst) {
  LiveRun run(10, 0ms);
  run.start();
  run.join();
  for (int k = 0; k < 2; ++k) {
    WsClient ws(run.port());
    const json f = ws.read();
    EXPECT_EQ(f["step"], 10);
    EXPECT_EQ(f["final"], true);
  }
}

TEST(Service, ConcurrentReadersSeeTheSameFinalFrame) {
  LiveRun run(20, 2ms, /*start_paused=*/true);
  run.start();
  ASSERT_TRUE(run.wait_state([](const json& f) { return f["status"] == "paused"; }));
  std::vector<json> finals(3);
  std::vector<std::thread> readers;
  std::atomic<int> connected{0};
  for (int i = 0; i < 3; ++i)
    readers.emplace_back([&, i] {
      WsClient ws(run.port());
      ++connected;
      finals[i] = ws.read_until_final().back();
    });
  while (connected < 3) std::this_thread::sleep_for(1ms);
  post(run.port(), "/v1/control", {{"command", "resume"}});
  for (auto& t : readers) t.join();
  for (const auto& f : finals) {
    EXPECT_EQ(f["step"], 20);
    EXPECT_EQ(f, finals[0]);
  }
}

TEST(Service, PauseHoldsStepsAndQueuesSupervisorInput) {
  LiveRun run(300, 2ms);
  run.start();
  ASSERT_TRUE(run.wait_state([](const json& f) { return f["step"].get<int>() >= 3; }));
  ASSERT_EQ(post(run.port(), "/v1/control", {{"command", "pause"}}).status, 200);
  const auto paused = run.wait_state([](const json& f) { return f["status"] == "paused"; });
  ASSERT_TRUE(paused);
  const int held = (*paused)["step"].get<int>();
  std::this_thread::sleep_for(100ms);
  EXPECT_EQ(get_state(run.port()).parsed()["step"], held);

  const std::string text = "The Drone 21 should focus on tracking target 122.";
  const auto ack = post(run.port(), "/v1/supervisor", {{"category", "performance"}, {"text", text}});
  ASSERT_EQ(ack.status, 200);
  EXPECT_EQ(ack.parsed()["queued_at_step"], held);
  std::this_thread::sleep_for(50ms);
  EXPECT_EQ(get_state(run.port()).parsed()["step"], held);

  ASSERT_EQ(post(run.port(), "/v1/control", {{"command", "resume"}}).status, 200);
  const int cadence = std::max(scenario().cadence.action, scenario().cadence.task);
  std::set<std::string> roles;
  const auto seen = run.wait_state([&](const json& f) {
    for (const auto& e : f["exchanges"]) {
      for (const auto& s : e["supervisor_inputs"]) {
        if (s.get<std::string>().find(text) == std::string::npos) continue;
        EXPECT_LE(e["issued_step"].get<int>(), held + cadence + 1);
        roles.insert(e["role"].get<std::string>());
      }
    }
    return roles.size() == 2;
  });
  ASSERT_TRUE(seen);
  EXPECT_GT((*seen)["step"].get<int>(), held);

  ASSERT_EQ(post(run.port(), "/v1/control", {{"command", "stop"}}).status, 200);
  run.join();
  const json last = get_state(run.port()).parsed();
  EXPECT_EQ(last["status"], "stopped");
  EXPECT_EQ(last["final"], true);
  EXPECT_LT(last["step"].get<int>(), 300);
}

TEST(Service, ResumeContinuesWithoutGap) {
  LiveRun run(40, 2ms);
  run.start();
  WsClient ws(run.port());
  std::vector<int> steps;
  bool paused_once = false;
  for (;;) {
    const json f = ws.read();
    steps.push_back(f["step"].get<int>());
    if (!paused_once && steps.back() >= 10) {
      paused_once = true;
      post(run.port(), "/v1/control", {{"command", "pause"}});
      std::this_thread::sleep_for(30ms);
      post(run.port(), "/v1/control", {{"command", "resume"}});
    }
    if (f["final"].get<bool>()) break;
  }
  EXPECT_EQ(steps.back(), 40);
  for (std::size_t i = 1; i < steps.size(); ++i) EXPECT_GE(steps[i], steps[i - 1]);
  run.join();
  const json last = get_state(run.port()).parsed();
  EXPECT_EQ(last["metrics"]["steps"], 40);
  EXPECT_EQ(last["metrics"]["action_queries"], 20);
}
