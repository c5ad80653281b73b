#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmtrack/llm_loop.hpp"

namespace llmtrack {

struct RunMetrics {
  Step steps = 0;
  double accumulated_trace = 0.0;  // sum over steps of post-fusion tracking cost
  int sensing_attacks = 0;
  int comm_attacks = 0;
  double trajectory_length = 0.0;  // meters, summed over robots
  int sensing_incursion_steps = 0;  // robot-steps spent inside a sensing zone
  int comm_incursion_steps = 0;
  int task_queries = 0;
  int task_accepted = 0;
  int action_queries = 0;
  int action_accepted = 0;
  double task_success_rate = 0.0;
  double action_success_rate = 0.0;
  long long tokens_prompt = 0;
  long long tokens_response = 0;

  void update_rates() {
    task_success_rate = task_queries ? static_cast<double>(task_accepted) / task_queries : 0.0;
    action_success_rate = action_queries ? static_cast<double>(action_accepted) / action_queries : 0.0;
  }

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

inline void to_json(nlohmann::json& j, const RunMetrics& m) {
  j = {{"steps", m.steps},
       {"accumulated_trace", m.accumulated_trace},
       {"sensing_attacks", m.sensing_attacks},
       {"comm_attacks", m.comm_attacks},
       {"trajectory_length", m.trajectory_length},
       {"sensing_incursion_steps", m.sensing_incursion_steps},
       {"comm_incursion_steps", m.comm_incursion_steps},
       {"task_queries", m.task_queries},
       {"task_accepted", m.task_accepted},
       {"action_queries", m.action_queries},
       {"action_accepted", m.action_accepted},
       {"task_success_rate", m.task_success_rate},
       {"action_success_rate", m.action_success_rate},
       {"tokens_prompt", m.tokens_prompt},
       {"tokens_response", m.tokens_response}};
}

inline void from_json(const nlohmann::json& j, RunMetrics& m) {
  j.at("steps").get_to(m.steps);
  j.at("accumulated_trace").get_to(m.accumulated_trace);
  j.at("sensing_attacks").get_to(m.sensing_attacks);
  j.at("comm_attacks").get_to(m.comm_attacks);
  j.at("trajectory_length").get_to(m.trajectory_length);
  j.at("sensing_incursion_steps").get_to(m.sensing_incursion_steps);
  j.at("comm_incursion_steps").get_to(m.comm_incursion_steps);
  j.at("task_queries").get_to(m.task_queries);
  j.at("task_accepted").get_to(m.task_accepted);
  j.at("action_queries").get_to(m.action_queries);
  j.at("action_accepted").get_to(m.action_accepted);
  j.at("task_success_rate").get_to(m.task_success_rate);
  j.at("action_success_rate").get_to(m.action_success_rate);
  j.at("tokens_prompt").get_to(m.tokens_prompt);
  j.at("tokens_response").get_to(m.tokens_response);
}

struct RobotFrame {
  RobotId id = 0;
  Vec2 position = Vec2::Zero();
  int capacity = 1;
  bool sensing_attacked = false;
  bool comm_attacked = false;
  std::vector<int> assignment_row;
};

struct TargetFrame {
  TargetId id = 0;
  Vec2 true_position = Vec2::Zero();
  Vec2 belief_mean = Vec2::Zero();
  Mat2 position_covariance = Mat2::Identity();
  double trace = 0.0;
};

struct ExchangeSummary {
  Role role = Role::task;
  Step issued_step = 0;
  Verdict verdict = Verdict::skipped_format;
  std::string reason;
  std::optional<int> beta;
  std::string response;
  std::vector<std::string> supervisor_inputs;  // supervisor lines injected into this prompt
  int tokens_prompt = 0;
  int tokens_response = 0;
};

/// Supervisor lines injected at the end of a prompt, if any.
inline std::vector<std::string> extract_supervisor_inputs(const std::string& user_prompt) {
  std::vector<std::string> out;
  const auto pos = user_prompt.find(kSupervisorPrefix);
  if (pos == std::string::npos) return out;
  std::istringstream is(user_prompt.substr(pos));
  std::string line;
  std::getline(is, line);  // the prefix line
  while (std::getline(is, line))
    if (line.rfind("- ", 0) == 0) out.push_back(line.substr(2));
  return out;
}

inline ExchangeSummary summarize(const LlmExchange& ex) {
  return {ex.role,           ex.issued_step,   ex.verdict, ex.reason, ex.beta, ex.response,
          extract_supervisor_inputs(ex.user_prompt), ex.tokens_prompt, ex.tokens_response};
}

/// One live view of the run, as streamed to supervisors.
struct StateFrame {
  static constexpr int kVersion = 1;

  Step step = 0;
  std::string status = "running";  // running | paused | stopped | finished
  bool final = false;
  std::vector<RobotFrame> robots;
  std::vector<TargetFrame> targets;
  std::vector<ZoneGeometry> zones;
  WeightVector weights;
  double tracking_cost = 0.0;
  std::vector<ExchangeSummary> exchanges;  // most recent last, at most 20
  RunMetrics metrics;
};

namespace detail {

inline nlohmann::json arr2(const Vec2& v) { return nlohmann::json::array({v.x(), v.y()}); }
inline Vec2 vec_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline Verdict verdict_from_string(const std::string& s) {
  if (s == "accepted") return Verdict::accepted;
  if (s == "skipped_format") return Verdict::skipped_format;
  if (s == "skipped_constraint") return Verdict::skipped_constraint;
  throw FormatError("unknown verdict", s);
}

}  // namespace detail

inline nlohmann::json to_json(const StateFrame& f) {
  using detail::arr2;
  nlohmann::json j;
  j["version"] = StateFrame::kVersion;
  j["step"] = f.step;
  j["status"] = f.status;
  j["final"] = f.final;
  j["robots"] = nlohmann::json::array();
  for (const auto& r : f.robots)
    j["robots"].push_back({{"id", r.id},
                           {"position", arr2(r.position)},
                           {"capacity", r.capacity},
                           {"sensing_attacked", r.sensing_attacked},
                           {"comm_attacked", r.comm_attacked},
                           {"assignment_row", r.assignment_row}});
  j["targets"] = nlohmann::json::array();
  for (const auto& t : f.targets)
    j["targets"].push_back({{"id", t.id},
                            {"true_position", arr2(t.true_position)},
                            {"belief_mean", arr2(t.belief_mean)},
                            {"position_covariance",
                             {t.position_covariance(0, 0), t.position_covariance(0, 1), t.position_covariance(1, 1)}},
                            {"trace", t.trace}});
  j["zones"] = nlohmann::json::array();
  for (const auto& z : f.zones)
    j["zones"].push_back({{"id", z.id}, {"kind", to_string(z.kind)}, {"center", arr2(z.center)}, {"radius", z.radius}});
  j["weights"] = f.weights.w;
  j["tracking_cost"] = f.tracking_cost;
  j["exchanges"] = nlohmann::json::array();
  for (const auto& e : f.exchanges) {
    nlohmann::json ej{{"role", to_string(e.role)},
                      {"issued_step", e.issued_step},
                      {"verdict", to_string(e.verdict)},
                      {"reason", e.reason},
                      {"response", e.response},
                      {"supervisor_inputs", e.supervisor_inputs},
                      {"tokens_prompt", e.tokens_prompt},
                      {"tokens_response", e.tokens_response}};
    ej["beta"] = e.beta ? nlohmann::json(*e.beta) : nlohmann::json(nullptr);
    j["exchanges"].push_back(std::move(ej));
  }
  j["metrics"] = f.metrics;
  return j;
}

inline StateFrame frame_from_json(const nlohmann::json& j) {
  using detail::vec_from;
  try {
    if (j.at("version").get<int>() != StateFrame::kVersion) throw FormatError("unsupported frame version");
    StateFrame f;
    f.step = j.at("step").get<Step>();
    f.status = j.at("status").get<std::string>();
    f.final = j.at("final").get<bool>();
    for (const auto& r : j.at("robots")) {
      RobotFrame rf;
      rf.id = r.at("id").get<int>();
      rf.position = vec_from(r.at("position"));
      rf.capacity = r.at("capacity").get<int>();
      rf.sensing_attacked = r.at("sensing_attacked").get<bool>();
      rf.comm_attacked = r.at("comm_attacked").get<bool>();
      rf.assignment_row = r.at("assignment_row").get<std::vector<int>>();
      f.robots.push_back(std::move(rf));
    }
    for (const auto& t : j.at("targets")) {
      TargetFrame tf;
      tf.id = t.at("id").get<int>();
      tf.true_position = vec_from(t.at("true_position"));
      tf.belief_mean = vec_from(t.at("belief_mean"));
      const auto& c = t.at("position_covariance");
      tf.position_covariance << c.at(0).get<double>(), c.at(1).get<double>(), c.at(1).get<double>(), c.at(2).get<double>();
      tf.trace = t.at("trace").get<double>();
      f.targets.push_back(tf);
    }
    for (const auto& z : j.at("zones"))
      f.zones.push_back({z.at("id").get<int>(), zone_kind_from_string(z.at("kind").get<std::string>()),
                         vec_from(z.at("center")), z.at("radius").get<double>()});
    f.weights = WeightVector(j.at("weights").get<std::array<double, 4>>());
    f.tracking_cost = j.at("tracking_cost").get<double>();
    for (const auto& e : j.at("exchanges")) {
      ExchangeSummary s;
      s.role = e.at("role").get<std::string>() == "task" ? Role::task : Role::action;
      s.issued_step = e.at("issued_step").get<Step>();
      s.verdict = detail::verdict_from_string(e.at("verdict").get<std::string>());
      s.reason = e.at("reason").get<std::string>();
      if (!e.at("beta").is_null()) s.beta = e.at("beta").get<int>();
      s.response = e.at("response").get<std::string>();
      s.supervisor_inputs = e.at("supervisor_inputs").get<std::vector<std::string>>();
      s.tokens_prompt = e.at("tokens_prompt").get<int>();
      s.tokens_response = e.at("tokens_response").get<int>();
      f.exchanges.push_back(std::move(s));
    }
    f.metrics = j.at("metrics").get<RunMetrics>();
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed state frame: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed state frame: ") + e.what());
  }
}

}  // namespace llmtrack
