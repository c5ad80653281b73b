#pragma once

#include <cstdlib>
#include <memory>
#include <string>

// Eigen must come before httplib, whose <resolv.h> defines a `_res` macro.
#include "llmtrack/llm_loop.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace llmtrack {

/// Offline stand-in for the LLMs. The task role answers with the greedy
/// assignment of the latest snapshot; the action role nudges weights with a
/// fixed rule (safety up near zones, tracking up when the cost rises or the
/// supervisor complains about tracking, otherwise relax toward all ones).
class MockBackend : public Backend {
 public:
  LlmResponse complete(const LlmRequest& req) override {
    if (req.history.empty()) throw PreconditionError("mock backend needs at least one snapshot");
    std::string text = req.role == Role::task ? answer_task(req) : answer_action(req);
    text = truncate_to_tokens(text, req.max_tokens);
    return {text, count_tokens(req.system) + count_tokens(req.user), count_tokens(text)};
  }

  bool deterministic() const override { return true; }
  std::string name() const override { return "mock"; }

  static bool supervisor_mentions_tracking(const std::string& user_prompt) {
    const auto pos = user_prompt.find(kSupervisorPrefix);
    if (pos == std::string::npos) return false;
    std::string tail = user_prompt.substr(pos + kSupervisorPrefix.size());
    for (auto& c : tail) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return tail.find("track") != std::string::npos || tail.find("trace") != std::string::npos;
  }

 private:
  static std::string answer_task(const LlmRequest& req) {
    const Snapshot& s = req.history.back();
    const Assignment a = greedy_assign(s.targets, s.robot_states(), s.capacities());
    return "Based on the information provided, here is the new tracking assignment for each drone:\n" +
           render_assignment(a, s.robot_ids(), s.target_ids());
  }

  static std::string answer_action(const LlmRequest& req) {
    const Snapshot& s = req.history.back();
    WeightVector w = s.weights;

    bool near_zone = false;
    for (const auto& r : s.robots) {
      for (const auto& z : s.zones) {
        const DangerZone dz{z.id, z.kind, z.center, z.radius};
        if (zone_excess(r.position, dz, req.safety_margin) > 0.0) near_zone = true;
      }
    }
    const bool cost_rose = req.history.size() >= 2 && req.history.back().last_cost > req.history.front().last_cost;

    if (near_zone) {
      w[2] *= 1.5;
      w[3] *= 1.5;
    }
    if (cost_rose) w[0] *= 1.5;
    if (!near_zone && !cost_rose)
      for (std::size_t i = 0; i < 4; ++i) w[i] += 0.1 * (1.0 - w[i]);
    if (supervisor_mentions_tracking(req.user)) w[0] *= 1.5;
    w = req.bounds.clip(w);
    return "Based on the current status, the new weights are " + detail::fmt_weights(w) + ".";
  }
};

/// Wraps another backend and, with probability p per query, replaces its
/// reply with a malformed one. Faults follow a randomly phased systematic
/// sequence per role: query k of a role is faulted iff
/// floor((k+1)p + phase) > floor(kp + phase), so each query is faulted with
/// probability p and any n consecutive queries carry n*p faults, rounded up or
/// down. Corruption kinds cycle: truncated reply, wrong-length answer, prose
/// only.
class FaultyBackend : public Backend {
 public:
  FaultyBackend(double p, std::uint64_t seed, std::unique_ptr<Backend> inner = std::make_unique<MockBackend>())
      : p_(p), inner_(std::move(inner)) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("fault rate must lie in [0,1]");
    RngStream rng(RngStream::split(seed, kBackendStream));
    for (auto& ph : phase_) ph = rng.uniform();
  }

  LlmResponse complete(const LlmRequest& req) override {
    LlmResponse resp = inner_->complete(req);
    const auto r = static_cast<std::size_t>(req.role);
    const double k = static_cast<double>(issued_[r]++);
    if (std::floor((k + 1.0) * p_ + phase_[r]) <= std::floor(k * p_ + phase_[r])) return resp;
    const int kind = counter_++ % 3;
    resp.text = req.role == Role::task ? corrupt_task(resp.text, kind) : corrupt_action(resp.text, kind);
    resp.tokens_response = count_tokens(resp.text);
    return resp;
  }

  bool deterministic() const override { return inner_->deterministic(); }
  std::string name() const override { return "faulty"; }

 private:
  static std::string corrupt_task(const std::string& text, int kind) {
    switch (kind) {
      case 0: {
        const auto pos = text.find("Drone ");
        return text.substr(0, pos == std::string::npos ? text.size() / 2 : pos) + "Dro";
      }
      case 1: {
        // Drop the last drone line.
        std::string t = text;
        while (!t.empty() && t.back() == '\n') t.pop_back();
        const auto pos = t.rfind('\n');
        return pos == std::string::npos ? std::string() : t.substr(0, pos + 1);
      }
      default: return "I think the drones are fine as they are.";
    }
  }

  static std::string corrupt_action(const std::string& text, int kind) {
    switch (kind) {
      case 0: {
        const auto open = text.find('[');
        const auto c1 = text.find(',', open == std::string::npos ? 0 : open);
        const auto c2 = c1 == std::string::npos ? c1 : text.find(',', c1 + 1);
        return text.substr(0, c2 == std::string::npos ? text.size() / 2 : c2);
      }
      case 1: {
        const auto c3 = text.rfind(',');
        const auto close = text.find(']', c3 == std::string::npos ? 0 : c3);
        if (c3 == std::string::npos || close == std::string::npos) return "[1.00, 1.00, 1.00]";
        return text.substr(0, c3) + text.substr(close);
      }
      default: return "The weights look reasonable; no change is needed.";
    }
  }

  double p_;
  std::array<double, 2> phase_{};
  std::array<long long, 2> issued_{};
  std::unique_ptr<Backend> inner_;
  int counter_ = 0;
};

struct HttpBackendConfig {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key;
  double timeout_s = 10.0;

  /// Reads LLMTRACK_LLM_BASE_URL, LLMTRACK_LLM_MODEL, LLMTRACK_LLM_API_KEY
  /// and optionally LLMTRACK_LLM_PATH.
  static HttpBackendConfig from_env() {
    const auto get = [](const char* k) -> std::string {
      const char* v = std::getenv(k);
      return v ? v : "";
    };
    HttpBackendConfig c;
    c.base_url = get("LLMTRACK_LLM_BASE_URL");
    c.model = get("LLMTRACK_LLM_MODEL");
    c.api_key = get("LLMTRACK_LLM_API_KEY");
    if (auto p = get("LLMTRACK_LLM_PATH"); !p.empty()) c.path = p;
    if (c.base_url.empty()) throw ConfigError("LLMTRACK_LLM_BASE_URL is not set");
    if (c.model.empty()) throw ConfigError("LLMTRACK_LLM_MODEL is not set");
    return c;
  }
};

/// OpenAI-compatible chat completion endpoint.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {}

  LlmResponse complete(const LlmRequest& req) override {
    httplib::Client cli(cfg_.base_url);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);

    const nlohmann::json body{
        {"model", cfg_.model},
        {"temperature", req.temperature},
        {"max_tokens", req.max_tokens},
        {"messages", nlohmann::json::array({{{"role", "system"}, {"content", req.system}},
                                            {{"role", "user"}, {"content", req.user}}})},
    };
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    auto res = cli.Post(cfg_.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw TransportError("HTTP status " + std::to_string(res->status));

    try {
      const auto j = nlohmann::json::parse(res->body);
      LlmResponse out;
      out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      if (j.contains("usage")) {
        out.tokens_prompt = j["usage"].value("prompt_tokens", 0);
        out.tokens_response = j["usage"].value("completion_tokens", 0);
      } else {
        out.tokens_prompt = count_tokens(req.system) + count_tokens(req.user);
        out.tokens_response = count_tokens(out.text);
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed completion body: ") + e.what());
    }
  }

  bool deterministic() const override { return false; }
  std::string name() const override { return "http"; }

 private:
  HttpBackendConfig cfg_;
};

/// "mock", "faulty:<p>" or "http".
inline std::unique_ptr<Backend> make_backend(const std::string& spec, std::uint64_t seed) {
  if (spec == "mock") return std::make_unique<MockBackend>();
  if (spec.rfind("faulty", 0) == 0) {
    double p = 0.3;
    if (const auto colon = spec.find(':'); colon != std::string::npos) {
      try {
        p = std::stod(spec.substr(colon + 1));
      } catch (const std::exception&) {
        throw ConfigError("bad fault rate in backend spec '" + spec + "'");
      }
    }
    return std::make_unique<FaultyBackend>(p, seed);
  }
  if (spec == "http") return std::make_unique<HttpBackend>(HttpBackendConfig::from_env());
  throw ConfigError("unknown backend '" + spec + "' (expected mock, faulty:<p> or http)");
}

}  // namespace llmtrack
