#pragma once

#include <sys/socket.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "llmtrack/frame.hpp"
#include "llmtrack/harness.hpp"

namespace llmtrack {

enum class ControlCommand { pause, resume, stop };

inline ControlCommand control_from_string(std::string_view s) {
  if (s == "pause") return ControlCommand::pause;
  if (s == "resume") return ControlCommand::resume;
  if (s == "stop") return ControlCommand::stop;
  throw PreconditionError("unknown control command '" + std::string(s) + "'");
}

struct SupervisorAck {
  bool accepted = false;
  Step queued_at_step = 0;
  std::string reason;
};

/// Shared state between the stepper thread and the network threads. The
/// stepper publishes frames and drains the inbox; network threads read frames
/// and enqueue supervisor messages and control commands.
class Gateway {
 public:
  static constexpr std::size_t kMaxSupervisorChars = 500;

  void publish(const StateFrame& frame) {
    std::string body = to_json(frame).dump();
    {
      std::lock_guard lock(mu_);
      if (latest_ && frame.step < latest_step_) return;  // never out of order
      latest_ = std::move(body);
      latest_step_ = frame.step;
      ++seq_;
    }
    cv_.notify_all();
  }

  /// Latest serialized frame and its sequence number.
  std::optional<std::pair<std::uint64_t, std::string>> latest() const {
    std::lock_guard lock(mu_);
    if (!latest_) return std::nullopt;
    return std::make_pair(seq_, *latest_);
  }

  /// Blocks until a frame newer than `seen` exists, the timeout passes or the
  /// gateway shuts down.
  std::optional<std::pair<std::uint64_t, std::string>> wait_newer(std::uint64_t seen,
                                                                   std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return closed_ || (latest_ && seq_ > seen); });
    if (!latest_ || seq_ <= seen) return std::nullopt;
    return std::make_pair(seq_, *latest_);
  }

  SupervisorAck post_supervisor(std::string_view category, std::string text) {
    HumanCategory cat;
    try {
      cat = human_category_from_string(category);
    } catch (const ConfigError& e) {
      return {false, 0, e.what()};
    }
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {false, 0, "text must not be empty"};
    if (text.size() > kMaxSupervisorChars)
      return {false, 0, "text exceeds " + std::to_string(kMaxSupervisorChars) + " characters"};
    std::lock_guard lock(mu_);
    inbox_.push_back({latest_step_, cat, std::move(text)});
    return {true, latest_step_, {}};
  }

  std::vector<ScriptedInput> drain_inbox() {
    std::lock_guard lock(mu_);
    std::vector<ScriptedInput> out(inbox_.begin(), inbox_.end());
    inbox_.clear();
    return out;
  }

  Step control(ControlCommand c) {
    {
      std::lock_guard lock(mu_);
      switch (c) {
        case ControlCommand::pause: paused_ = true; break;
        case ControlCommand::resume: paused_ = false; break;
        case ControlCommand::stop: stopped_ = true; break;
      }
    }
    cv_.notify_all();
    std::lock_guard lock(mu_);
    return latest_step_;
  }

  /// Stepper side: blocks while paused. Returns false once stop was requested.
  bool wait_runnable() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !paused_ || stopped_ || closed_; });
    return !stopped_ && !closed_;
  }

  bool paused() const {
    std::lock_guard lock(mu_);
    return paused_;
  }
  bool stopped() const {
    std::lock_guard lock(mu_);
    return stopped_;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<std::string> latest_;
  Step latest_step_ = 0;
  std::uint64_t seq_ = 0;
  std::deque<ScriptedInput> inbox_;
  bool paused_ = false;
  bool stopped_ = false;
  bool closed_ = false;
};

/// Steps `sim` until it finishes or a stop arrives, honoring pause/resume and
/// feeding supervisor messages in at step boundaries.
inline void drive(Simulation& sim, Gateway& gw, std::chrono::milliseconds step_period = std::chrono::milliseconds(0)) {
  gw.publish(sim.frame(gw.paused() ? "paused" : "running"));
  bool stopped = false;
  while (!sim.finished()) {
    if (gw.paused()) gw.publish(sim.frame("paused"));
    if (!gw.wait_runnable()) {
      stopped = true;
      break;
    }
    for (auto& in : gw.drain_inbox()) sim.ingest_human(in.category, std::move(in.text));
    sim.step();
    if (!sim.finished()) gw.publish(sim.frame("running"));
    if (step_period.count() > 0) std::this_thread::sleep_for(step_period);
  }
  StateFrame last = sim.frame(stopped ? "stopped" : "finished");
  last.final = true;
  gw.publish(last);
}

/// HTTP + WebSocket front end for a Gateway.
///   GET  /v1/state       latest frame
///   POST /v1/supervisor  {"category": ..., "text": ...}
///   POST /v1/control     {"command": "pause" | "resume" | "stop"}
///   WS   /v1/stream      frame feed, current frame first
class Service {
 public:
  Service(Gateway& gw, unsigned short port, std::string address = "127.0.0.1")
      : gw_(gw), acceptor_(ioc_) {
    namespace net = boost::asio;
    const auto ep = net::ip::tcp::endpoint(net::ip::make_address(address), port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ~Service() { stop(); }

  unsigned short port() const { return port_; }

  void stop() {
    if (stopping_.exchange(true)) return;
    gw_.close();
    // Wake the blocking accept.
    try {
      boost::asio::io_context ioc;
      boost::asio::ip::tcp::socket s(ioc);
      s.connect({boost::asio::ip::make_address("127.0.0.1"), port_});
    } catch (const std::exception&) {
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    {
      std::lock_guard lock(mu_);
      for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& t : sessions_)
      if (t.joinable()) t.join();
  }

 private:
  using tcp = boost::asio::ip::tcp;
  using Request = boost::beast::http::request<boost::beast::http::string_body>;
  using Response = boost::beast::http::response<boost::beast::http::string_body>;

  void accept_loop() {
    while (!stopping_) {
      tcp::socket socket(ioc_);
      boost::system::error_code ec;
      acceptor_.accept(socket, ec);
      if (ec || stopping_) continue;
      const int fd = socket.native_handle();
      {
        std::lock_guard lock(mu_);
        open_fds_.push_back(fd);
      }
      sessions_.emplace_back([this, s = std::move(socket), fd]() mutable {
        session(std::move(s));
        std::lock_guard lock(mu_);
        std::erase(open_fds_, fd);
      });
    }
  }

  void session(tcp::socket socket) {
    namespace http = boost::beast::http;
    namespace ws = boost::beast::websocket;
    boost::beast::flat_buffer buffer;
    boost::system::error_code ec;
    for (;;) {
      Request req;
      http::read(socket, buffer, req, ec);
      if (ec) return;
      if (ws::is_upgrade(req)) {
        if (req.target() == "/v1/stream") stream(std::move(socket), std::move(req));
        return;
      }
      Response res = handle(req);
      res.keep_alive(req.keep_alive());
      res.prepare_payload();
      http::write(socket, res, ec);
      if (ec || !req.keep_alive()) break;
    }
    socket.shutdown(tcp::socket::shutdown_send, ec);
  }

  Response handle(const Request& req) {
    namespace http = boost::beast::http;
    const auto reply = [&](http::status st, const nlohmann::json& body) {
      Response res{st, req.version()};
      res.set(http::field::content_type, "application/json");
      res.set(http::field::access_control_allow_origin, "*");
      res.body() = body.dump();
      return res;
    };
    const std::string target(req.target());

    if (req.method() == http::verb::options) {
      Response res{http::status::no_content, req.version()};
      res.set(http::field::access_control_allow_origin, "*");
      res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
      res.set(http::field::access_control_allow_headers, "Content-Type");
      return res;
    }
    if (target == "/v1/state" && req.method() == http::verb::get) {
      auto latest = gw_.latest();
      if (!latest) return reply(http::status::service_unavailable, {{"error", "no frame yet"}});
      Response res{http::status::ok, req.version()};
      res.set(http::field::content_type, "application/json");
      res.set(http::field::access_control_allow_origin, "*");
      res.body() = latest->second;
      return res;
    }
    if (target == "/v1/supervisor" && req.method() == http::verb::post) {
      nlohmann::json body = nlohmann::json::parse(req.body(), nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("category") || !body.contains("text") ||
          !body["category"].is_string() || !body["text"].is_string())
        return reply(http::status::bad_request, {{"error", "expected {\"category\": string, \"text\": string}"}});
      const SupervisorAck ack = gw_.post_supervisor(body["category"].get<std::string>(), body["text"].get<std::string>());
      if (!ack.accepted) return reply(http::status::bad_request, {{"error", ack.reason}});
      return reply(http::status::ok, {{"queued_at_step", ack.queued_at_step}});
    }
    if (target == "/v1/control" && req.method() == http::verb::post) {
      nlohmann::json body = nlohmann::json::parse(req.body(), nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("command") || !body["command"].is_string())
        return reply(http::status::bad_request, {{"error", "expected {\"command\": string}"}});
      try {
        const auto cmd = control_from_string(body["command"].get<std::string>());
        const Step s = gw_.control(cmd);
        return reply(http::status::ok, {{"ack", body["command"]}, {"step", s}});
      } catch (const PreconditionError& e) {
        return reply(http::status::bad_request, {{"error", e.what()}});
      }
    }
    return reply(http::status::not_found, {{"error", "no route for " + target}});
  }

  void stream(tcp::socket socket, Request req) {
    namespace ws = boost::beast::websocket;
    ws::stream<tcp::socket> wsock(std::move(socket));
    boost::system::error_code ec;
    wsock.accept(req, ec);
    if (ec) return;
    wsock.text(true);
    std::uint64_t seen = 0;
    if (auto cur = gw_.latest()) {
      wsock.write(boost::asio::buffer(cur->second), ec);
      if (ec) return;
      seen = cur->first;
    }
    while (!stopping_) {
      auto next = gw_.wait_newer(seen, std::chrono::milliseconds(100));
      if (!next) continue;
      wsock.write(boost::asio::buffer(next->second), ec);
      if (ec) return;
      seen = next->first;
    }
    wsock.close(ws::close_code::going_away, ec);
  }

  Gateway& gw_;
  boost::asio::io_context ioc_;
  tcp::acceptor acceptor_;
  unsigned short port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<int> open_fds_;
  std::vector<std::thread> sessions_;
};

}  // namespace llmtrack
