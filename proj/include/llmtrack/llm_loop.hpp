#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmtrack/core.hpp"
#include "llmtrack/estimation.hpp"
#include "llmtrack/inner_opt.hpp"
#include "llmtrack/task_alloc.hpp"
#include "llmtrack/world.hpp"

namespace llmtrack {

enum class Role { task, action };
enum class Verdict { accepted, skipped_format, skipped_constraint };
enum class HumanCategory { performance, risk, abnormal };
enum class ModelClass { base, rich };

inline std::string_view to_string(Role r) { return r == Role::task ? "task" : "action"; }

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::accepted: return "accepted";
    case Verdict::skipped_format: return "skipped_format";
    case Verdict::skipped_constraint: return "skipped_constraint";
  }
  return "?";
}

inline std::string_view to_string(HumanCategory c) {
  switch (c) {
    case HumanCategory::performance: return "performance";
    case HumanCategory::risk: return "risk";
    case HumanCategory::abnormal: return "abnormal";
  }
  return "?";
}

inline HumanCategory human_category_from_string(std::string_view s) {
  if (s == "performance") return HumanCategory::performance;
  if (s == "risk") return HumanCategory::risk;
  if (s == "abnormal") return HumanCategory::abnormal;
  throw ConfigError("unknown supervisor category '" + std::string(s) + "'");
}

// Fixed prompt fragments.
inline constexpr std::string_view kTaskSystemPrompt =
    "You are an optimizer with the goal of assigning robots to track targets.";
inline constexpr std::string_view kActionSystemPrompt =
    "You are a multiple objective optimizer with the goal of specifying the weights of each objective function.";
inline constexpr std::string_view kSupervisorPrefix = "In addition, the human supervisor has some input";
inline constexpr std::array<std::string_view, 4> kObjectiveDescriptions{
    "tracking error computed by the trace of the estimation covariance matrix of the targets",
    "control cost computed by the norm of control input",
    "slack variables of safety constraints to avoid sensing danger zones",
    "slack variables of safety constraints to avoid communication danger zones",
};
inline constexpr std::size_t kRepairNoteLimit = 200;

struct ZoneGeometry {
  ZoneId id = 0;
  ZoneKind kind = ZoneKind::sensing;
  Vec2 center = Vec2::Zero();
  double radius = 1.0;
};

struct RobotSummary {
  RobotId id = 0;
  Vec2 position = Vec2::Zero();
  int capacity = 1;
  std::optional<Step> sensing_attacked_until;
  std::optional<Step> comm_attacked_until;
  std::vector<ZoneId> known_zones;
};

/// Immutable view of the run at the end of one step, as the LLMs see it.
/// Zone attack parameters stay on the ground-truth side.
struct Snapshot {
  Step step = 0;
  std::vector<RobotSummary> robots;
  std::vector<TargetBelief> targets;
  std::vector<ZoneGeometry> zones;
  Assignment assignment;
  WeightVector weights;
  double last_cost = 0.0;

  std::vector<int> capacities() const {
    std::vector<int> c;
    for (const auto& r : robots) c.push_back(r.capacity);
    return c;
  }
  std::vector<RobotId> robot_ids() const {
    std::vector<RobotId> ids;
    for (const auto& r : robots) ids.push_back(r.id);
    return ids;
  }
  std::vector<TargetId> target_ids() const {
    std::vector<TargetId> ids;
    for (const auto& t : targets) ids.push_back(t.target_id);
    return ids;
  }
  /// Robot states suitable for greedy_assign (positions and capacities only).
  std::vector<RobotState> robot_states() const {
    std::vector<RobotState> out;
    for (const auto& r : robots) {
      RobotState s;
      s.id = r.id;
      s.position = r.position;
      s.capacity = r.capacity;
      out.push_back(s);
    }
    return out;
  }
};

/// Builds a snapshot from live state. Robots, targets and zones are sorted by id.
inline Snapshot make_snapshot(Step step, const std::vector<RobotState>& robots,
                              const std::vector<TargetBelief>& beliefs, const std::vector<DangerZone>& zones,
                              const Assignment& assignment, const WeightVector& weights, double last_cost) {
  Snapshot s;
  s.step = step;
  for (const auto& r : robots) {
    RobotSummary rs{r.id, r.position, r.capacity, {}, {}, {r.known_zones.begin(), r.known_zones.end()}};
    if (r.sensing_attacked(step)) rs.sensing_attacked_until = r.sensing_attacked_until;
    if (r.comm_attacked(step)) rs.comm_attacked_until = r.comm_attacked_until;
    s.robots.push_back(std::move(rs));
  }
  s.targets = beliefs;
  for (const auto& z : zones) s.zones.push_back({z.id, z.kind, z.center, z.radius});
  std::sort(s.zones.begin(), s.zones.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  s.assignment = assignment;
  s.weights = weights;
  s.last_cost = last_cost;
  return s;
}

struct HumanInput {
  HumanCategory category = HumanCategory::performance;
  std::string text;
  bool task_drained = false;
  bool action_drained = false;
};

/// History of recent snapshots plus supervisor input waiting to be injected.
class PromptContext {
 public:
  explicit PromptContext(std::size_t history_window = 5) : window_(history_window) {
    if (window_ == 0) throw ConfigError("history window must be >= 1");
  }

  void push(Snapshot s) {
    if (!history_.empty() && s.step <= history_.back().step)
      throw PreconditionError("snapshot steps must strictly increase");
    history_.push_back(std::move(s));
    while (history_.size() > window_) history_.pop_front();
  }

  const std::deque<Snapshot>& history() const { return history_; }
  std::size_t window() const { return window_; }

  void ingest_human(HumanCategory category, std::string text) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
      throw PreconditionError("supervisor input must not be empty");
    pending_.push_back({category, std::move(text)});
  }

  /// Pending inputs not yet injected into a prompt of `role`, in arrival order.
  std::vector<HumanInput> pending(Role role) const {
    std::vector<HumanInput> out;
    for (const auto& h : pending_)
      if (!(role == Role::task ? h.task_drained : h.action_drained)) out.push_back(h);
    return out;
  }

  std::vector<HumanInput> drain(Role role) {
    std::vector<HumanInput> out;
    for (auto& h : pending_) {
      bool& flag = role == Role::task ? h.task_drained : h.action_drained;
      if (flag) continue;
      flag = true;
      out.push_back(h);
    }
    std::erase_if(pending_, [](const HumanInput& h) { return h.task_drained && h.action_drained; });
    return out;
  }

  void set_repair_note(Role role, std::string note) {
    if (note.size() > kRepairNoteLimit) note.resize(kRepairNoteLimit);
    repair_[static_cast<int>(role)] = std::move(note);
  }

  std::optional<std::string> take_repair_note(Role role) {
    auto& slot = repair_[static_cast<int>(role)];
    auto out = std::move(slot);
    slot.reset();
    return out;
  }

 private:
  std::size_t window_;
  std::deque<Snapshot> history_;
  std::vector<HumanInput> pending_;
  std::array<std::optional<std::string>, 2> repair_;
};

inline void ingest_human(PromptContext& ctx, HumanCategory category, std::string text) {
  ctx.ingest_human(category, std::move(text));
}

struct Prompt {
  std::string system;
  std::string user;
};

namespace detail {

inline std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

inline std::string fmt_vec(const Vec2& v) { return "(" + fmt2(v.x()) + ", " + fmt2(v.y()) + ")"; }

inline std::string fmt_weights(const WeightVector& w) {
  return "[" + fmt2(w[0]) + ", " + fmt2(w[1]) + ", " + fmt2(w[2]) + ", " + fmt2(w[3]) + "]";
}

inline void render_zone_list(std::ostringstream& os, const Snapshot& s, ZoneKind kind) {
  os << (kind == ZoneKind::sensing ? "The known sensing zones are: " : "The known communication zones are: ");
  bool any = false;
  for (const auto& r : s.robots) {
    for (const auto& z : s.zones) {
      if (z.kind != kind || std::find(r.known_zones.begin(), r.known_zones.end(), z.id) == r.known_zones.end())
        continue;
      os << (any ? ", " : "") << "Drone " << r.id << " knows the "
         << (kind == ZoneKind::sensing ? "sensor" : "communication") << " zone " << z.id << " located at "
         << fmt_vec(z.center) << " with radius " << fmt2(z.radius);
      any = true;
    }
  }
  os << (any ? ".\n" : "none.\n");
}

inline void render_status(std::ostringstream& os, const Snapshot& s) {
  os << "Drones are currently at the following positions: ";
  for (std::size_t i = 0; i < s.robots.size(); ++i)
    os << (i ? ", " : "") << "Drone " << s.robots[i].id << " is at " << fmt_vec(s.robots[i].position);
  os << ".\n";

  os << "Targets are currently at the following positions: ";
  for (std::size_t j = 0; j < s.targets.size(); ++j) {
    const auto& t = s.targets[j];
    os << (j ? ", " : "") << "Target " << t.target_id << " is at " << fmt_vec(t.position()) << " with velocity "
       << fmt_vec(t.mean.tail<2>());
  }
  os << ".\n";

  render_zone_list(os, s, ZoneKind::sensing);
  render_zone_list(os, s, ZoneKind::communication);

  std::vector<std::string> attacks;
  for (const auto& r : s.robots) {
    if (r.sensing_attacked_until)
      attacks.push_back("Drone " + std::to_string(r.id) + " is under sensing attack until step " +
                        std::to_string(*r.sensing_attacked_until));
    if (r.comm_attacked_until)
      attacks.push_back("Drone " + std::to_string(r.id) + " is under communication attack until step " +
                        std::to_string(*r.comm_attacked_until));
  }
  if (attacks.empty()) {
    os << "No attack has been detected.\n";
  } else {
    os << "Attacks detected: ";
    for (std::size_t i = 0; i < attacks.size(); ++i) os << (i ? "; " : "") << attacks[i];
    os << ".\n";
  }

  if (s.assignment.robots() == static_cast<int>(s.robots.size()) &&
      s.assignment.targets() == static_cast<int>(s.targets.size())) {
    os << "The current assignment is: ";
    for (std::size_t i = 0; i < s.robots.size(); ++i) {
      os << (i ? "; " : "") << "Drone " << s.robots[i].id << " tracks ";
      bool first = true;
      for (std::size_t j = 0; j < s.targets.size(); ++j) {
        if (s.assignment.matrix(static_cast<int>(i), static_cast<int>(j)) == 0) continue;
        os << (first ? "" : " and ") << "Target " << s.targets[j].target_id;
        first = false;
      }
      if (first) os << "no targets";
    }
    os << ".\n";
  }

  os << "The last trace of the tracking estimation covariances matrix is " << fmt2(s.last_cost) << " (";
  for (std::size_t j = 0; j < s.targets.size(); ++j)
    os << (j ? ", " : "") << "Target " << s.targets[j].target_id << ": " << fmt2(s.targets[j].trace());
  os << ").\n";
}

inline void render_tail(std::ostringstream& os, std::optional<std::string> repair,
                        const std::vector<HumanInput>& inputs) {
  if (repair) os << *repair << "\n";
  if (inputs.empty()) return;
  os << kSupervisorPrefix << ":\n";
  for (const auto& h : inputs) os << "- (" << to_string(h.category) << ") " << h.text << "\n";
}

}  // namespace detail

inline std::string capacity_sentence(const std::vector<RobotSummary>& robots) {
  std::ostringstream os;
  const bool uniform = std::all_of(robots.begin(), robots.end(),
                                   [&](const RobotSummary& r) { return r.capacity == robots.front().capacity; });
  os << "Each drone has the ability to track at most ";
  if (uniform && !robots.empty()) {
    os << robots.front().capacity << (robots.front().capacity == 1 ? " target" : " targets");
  } else {
    os << "the following number of targets (";
    for (std::size_t i = 0; i < robots.size(); ++i)
      os << (i ? ", " : "") << "Drone " << robots[i].id << ": " << robots[i].capacity;
    os << ")";
  }
  os << ", and each target should be tracked by at least one drone as possible. "
        "Please provide the new tracking assignment for each drone in each line with "
        "'Drone [ID] will track Target [ID]'.";
  return os.str();
}

/// Task prompt over the whole history window, oldest first. Drains the
/// task-side supervisor input and repair note.
inline Prompt build_task_prompt(PromptContext& ctx, const std::vector<int>& capacities) {
  const auto& hist = ctx.history();
  if (hist.empty()) throw PreconditionError("build_task_prompt: history is empty");

  std::vector<RobotSummary> roster = hist.back().robots;
  if (capacities.size() != roster.size()) throw DimensionError("build_task_prompt: one capacity per robot required");
  for (std::size_t i = 0; i < roster.size(); ++i) roster[i].capacity = capacities[i];

  std::ostringstream os;
  os << "The recent " << hist.size() << " results of status and observations are as follows.\n";
  for (std::size_t k = 0; k < hist.size(); ++k) {
    os << "The " << (k + 1) << "th information is as follows (step " << hist[k].step << ").\n";
    detail::render_status(os, hist[k]);
  }
  os << capacity_sentence(roster) << "\n";
  detail::render_tail(os, ctx.take_repair_note(Role::task), ctx.drain(Role::task));
  return {std::string(kTaskSystemPrompt), os.str()};
}

/// Action prompt over the latest snapshot only.
inline Prompt build_action_prompt(PromptContext& ctx, const WeightVector& weights) {
  const auto& hist = ctx.history();
  if (hist.empty()) throw PreconditionError("build_action_prompt: history is empty");

  std::ostringstream os;
  os << "The current status (step " << hist.back().step << ") is as follows.\n";
  detail::render_status(os, hist.back());
  os << "The objective function has four components:\n";
  for (std::size_t i = 0; i < kObjectiveDescriptions.size(); ++i)
    os << (i + 1) << ". " << kObjectiveDescriptions[i] << "\n";
  os << "The current weights for objective functions are: " << detail::fmt_weights(weights)
     << ". You should give a new weight as a list with a length of 4.\n";
  detail::render_tail(os, ctx.take_repair_note(Role::action), ctx.drain(Role::action));
  return {std::string(kActionSystemPrompt), os.str()};
}

/// First bracketed list, or failing that the first comma-separated run of
/// numbers. Exactly four finite numbers are required.
inline WeightVector parse_weights(const std::string& text) {
  static const std::regex bracket_re(R"(\[([^\[\]]*)\])");
  static const std::regex number_re(R"(^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*$)");
  static const std::regex run_re(
      R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?(?:\s*,\s*[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)+)");

  std::string body;
  std::smatch m;
  if (std::regex_search(text, m, bracket_re)) {
    body = m[1].str();
  } else if (std::regex_search(text, m, run_re)) {
    body = m[0].str();
  } else {
    throw FormatError("no weight list found", text.substr(0, text.find('\n')));
  }

  std::vector<double> values;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::smatch nm;
    if (!std::regex_match(item, nm, number_re)) throw FormatError("non-numeric weight entry", item);
    values.push_back(std::stod(nm[1].str()));
  }
  if (values.size() != 4)
    throw FormatError("weight list has length " + std::to_string(values.size()) + ", expected 4", body);
  for (double v : values)
    if (!std::isfinite(v)) throw FormatError("non-finite weight", body);
  return WeightVector(values[0], values[1], values[2], values[3]);
}

inline AcceptDecision verify_weights(const WeightVector& w, const WeightBounds& bounds) {
  static constexpr std::array<const char*, 4> names{"w1", "w2", "w3", "w4"};
  for (std::size_t i = 0; i < 4; ++i) {
    if (w[i] < bounds.lo[i])
      return {false, 0, std::string(names[i]) + "=" + detail::fmt2(w[i]) + " below bound " + detail::fmt2(bounds.lo[i])};
    if (w[i] > bounds.hi[i])
      return {false, 0, std::string(names[i]) + "=" + detail::fmt2(w[i]) + " above bound " + detail::fmt2(bounds.hi[i])};
    if (!std::isfinite(w[i])) return {false, 0, std::string(names[i]) + " is not finite"};
  }
  return {true, 0, {}};
}

/// Response token cap: round(50 (mean_capacity + 2)), plus 200 for the rich
/// model class.
inline int token_budget(double mean_capacity, ModelClass model_class) {
  if (!(mean_capacity >= 1.0)) throw PreconditionError("token_budget: mean capacity must be >= 1");
  const int base = static_cast<int>(std::lround(50.0 * (mean_capacity + 2.0)));
  return model_class == ModelClass::rich ? base + 200 : base;
}

struct RoleSet {
  bool action = false;
  bool task = false;

  bool empty() const { return !action && !task; }
  friend bool operator==(const RoleSet&, const RoleSet&) = default;
};

/// Fixed-modulus cadence. Step 0 triggers nothing.
inline RoleSet schedule(Step step, int cadence_action, int cadence_task) {
  if (step <= 0) return {};
  return {step % cadence_action == 0, step % cadence_task == 0};
}

struct CadenceConfig {
  int action = 2;
  int task = 10;
  bool jitter = false;
  std::array<int, 2> action_range{2, 3};
  std::array<int, 2> task_range{8, 10};

  void validate() const {
    if (action_range[0] < 1 || action_range[0] > action_range[1] || task_range[0] < 1 ||
        task_range[0] > task_range[1])
      throw ConfigError("cadence ranges must be non-empty and positive");
    if (action < action_range[0] || action > action_range[1])
      throw ConfigError("action cadence outside [" + std::to_string(action_range[0]) + "," +
                        std::to_string(action_range[1]) + "]");
    if (task < task_range[0] || task > task_range[1])
      throw ConfigError("task cadence outside [" + std::to_string(task_range[0]) + "," +
                        std::to_string(task_range[1]) + "]");
  }
};

/// Fixed-modulus schedule, or with `jitter` seeded intervals drawn from the
/// configured ranges.
class CadenceScheduler {
 public:
  CadenceScheduler(CadenceConfig cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(RngStream::split(seed, kSchedulerStream)) {
    cfg_.validate();
    if (cfg_.jitter) {
      next_action_ = draw(cfg_.action_range);
      next_task_ = draw(cfg_.task_range);
    }
  }

  RoleSet due(Step step) {
    if (!cfg_.jitter) return schedule(step, cfg_.action, cfg_.task);
    RoleSet r;
    if (step >= next_action_) {
      r.action = true;
      next_action_ = step + draw(cfg_.action_range);
    }
    if (step >= next_task_) {
      r.task = true;
      next_task_ = step + draw(cfg_.task_range);
    }
    return r;
  }

  int max_cadence() const { return std::max(cfg_.jitter ? cfg_.action_range[1] : cfg_.action,
                                            cfg_.jitter ? cfg_.task_range[1] : cfg_.task); }

 private:
  Step draw(const std::array<int, 2>& range) { return rng_.uniform_int(range[0], range[1]); }

  CadenceConfig cfg_;
  RngStream rng_;
  Step next_action_ = 0;
  Step next_task_ = 0;
};

/// Rough token count: alphanumeric runs plus standalone punctuation.
inline int count_tokens(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool alnum = std::isalnum(static_cast<unsigned char>(c)) != 0;
    if (alnum) {
      if (!in_word) ++n;
      in_word = true;
    } else {
      in_word = false;
      if (!std::isspace(static_cast<unsigned char>(c))) ++n;
    }
  }
  return n;
}

/// Longest prefix of `text` with at most `max_tokens` tokens.
inline std::string truncate_to_tokens(const std::string& text, int max_tokens) {
  if (count_tokens(text) <= max_tokens) return text;
  std::size_t lo = 0, hi = text.size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi + 1) / 2;
    if (count_tokens(std::string_view(text).substr(0, mid)) <= max_tokens)
      lo = mid;
    else
      hi = mid - 1;
  }
  return text.substr(0, lo);
}

/// What a backend receives. `history`, `bounds` and `safety_margin` are side
/// information for the offline backends; remote backends only see the prompts.
struct LlmRequest {
  Role role = Role::task;
  std::string system;
  std::string user;
  int max_tokens = 0;
  double temperature = 0.0;
  std::vector<Snapshot> history;
  WeightBounds bounds;
  double safety_margin = 0.2;
};

struct LlmResponse {
  std::string text;
  int tokens_prompt = 0;
  int tokens_response = 0;
};

struct TransportError : Error {
  using Error::Error;
};

class Backend {
 public:
  virtual ~Backend() = default;
  /// May throw TransportError.
  virtual LlmResponse complete(const LlmRequest& request) = 0;
  /// Deterministic backends are queried inline by the runner.
  virtual bool deterministic() const = 0;
  virtual std::string name() const = 0;
};

struct LlmExchange {
  Role role = Role::task;
  Step issued_step = 0;
  std::string system_prompt;
  std::string user_prompt;
  std::string response;
  Verdict verdict = Verdict::skipped_format;
  std::string reason;
  int max_tokens = 0;
  int tokens_prompt = 0;
  int tokens_response = 0;
  double latency = 0.0;  // seconds
  std::optional<int> beta;
  std::optional<Assignment> assignment;
  std::optional<WeightVector> weights;
};

/// Rosters and limits the parsers and verifiers check against.
struct QueryContext {
  std::vector<RobotId> robot_ids;
  std::vector<TargetId> target_ids;
  std::vector<int> capacities;
  WeightBounds bounds;
};

/// Runs one single-shot exchange: send, then parse and verify the reply.
/// Transport failures and malformed replies become skipped verdicts.
inline LlmExchange query(Role role, Backend& backend, const Prompt& prompt, int budget, const QueryContext& qc,
                         Step issued_step, std::vector<Snapshot> history = {}, double safety_margin = 0.2) {
  LlmExchange ex;
  ex.role = role;
  ex.issued_step = issued_step;
  ex.system_prompt = prompt.system;
  ex.user_prompt = prompt.user;
  ex.max_tokens = budget;

  LlmRequest req{role, prompt.system, prompt.user, budget, 0.0, std::move(history), qc.bounds, safety_margin};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    LlmResponse resp = backend.complete(req);
    ex.response = std::move(resp.text);
    ex.tokens_prompt = resp.tokens_prompt;
    ex.tokens_response = resp.tokens_response;
  } catch (const TransportError& e) {
    ex.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ex.verdict = Verdict::skipped_format;
    ex.reason = std::string("transport: ") + e.what();
    return ex;
  }
  ex.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  try {
    if (role == Role::task) {
      Assignment a = parse_assignment(ex.response, qc.robot_ids, qc.target_ids);
      a.epoch = issued_step;
      const AcceptDecision d = accept_assignment(a, qc.capacities);
      ex.beta = d.beta;
      ex.verdict = d.accepted ? Verdict::accepted : Verdict::skipped_constraint;
      ex.reason = d.reason;
      if (d.accepted) ex.assignment = std::move(a);
    } else {
      const WeightVector w = parse_weights(ex.response);
      const AcceptDecision d = verify_weights(w, qc.bounds);
      ex.verdict = d.accepted ? Verdict::accepted : Verdict::skipped_constraint;
      ex.reason = d.reason;
      if (d.accepted) ex.weights = w;
    }
  } catch (const FormatError& e) {
    ex.verdict = Verdict::skipped_format;
    ex.reason = std::string("format: ") + e.what();
  }
  return ex;
}

/// One-line note appended to the next prompt of the role after a skip.
inline std::string repair_note(const LlmExchange& ex) {
  std::string note = "Note: the previous answer was not used (" + ex.reason + ").";
  if (note.size() > kRepairNoteLimit) {
    note.resize(kRepairNoteLimit - 4);
    note += "...)";
  }
  std::replace(note.begin(), note.end(), '\n', ' ');
  return note;
}

/// Single-consumer channel from query workers to the stepper. At each step
/// boundary the newest pending exchange per role is handed out; exchanges
/// issued no later than the last applied one for their role are discarded.
class Mailbox {
 public:
  void post(LlmExchange ex) {
    std::lock_guard lock(mu_);
    pending_.push_back(std::move(ex));
  }

  std::vector<LlmExchange> collect() {
    std::vector<LlmExchange> pending;
    {
      std::lock_guard lock(mu_);
      pending.swap(pending_);
    }
    std::vector<LlmExchange> out;
    for (Role role : {Role::task, Role::action}) {
      std::optional<LlmExchange> newest;
      for (auto& ex : pending) {
        if (ex.role != role) continue;
        if (last_applied_[static_cast<int>(role)] && ex.issued_step <= *last_applied_[static_cast<int>(role)]) continue;
        if (!newest || ex.issued_step > newest->issued_step) newest = std::move(ex);
      }
      if (newest) {
        last_applied_[static_cast<int>(role)] = newest->issued_step;
        out.push_back(std::move(*newest));
      }
    }
    return out;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return pending_.size();
  }

 private:
  mutable std::mutex mu_;
  std::vector<LlmExchange> pending_;
  std::array<std::optional<Step>, 2> last_applied_;
};

inline nlohmann::json to_json(const LlmExchange& ex, bool include_latency) {
  nlohmann::json j{
      {"type", "llm_exchange"},
      {"role", to_string(ex.role)},
      {"issued_step", ex.issued_step},
      {"system_prompt", ex.system_prompt},
      {"user_prompt", ex.user_prompt},
      {"response", ex.response},
      {"verdict", to_string(ex.verdict)},
      {"reason", ex.reason},
      {"max_tokens", ex.max_tokens},
      {"tokens_prompt", ex.tokens_prompt},
      {"tokens_response", ex.tokens_response},
  };
  if (include_latency) j["latency_s"] = ex.latency;
  if (ex.beta) j["beta"] = *ex.beta;
  if (ex.weights) j["weights"] = ex.weights->w;
  return j;
}

}  // namespace llmtrack
