#pragma once

#include <cmath>
#include <deque>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmtrack/backends.hpp"
#include "llmtrack/estimation.hpp"
#include "llmtrack/frame.hpp"
#include "llmtrack/inner_opt.hpp"
#include "llmtrack/llm_loop.hpp"
#include "llmtrack/scenario.hpp"
#include "llmtrack/task_alloc.hpp"
#include "llmtrack/world.hpp"

namespace llmtrack {

enum class Mode { no_llm, llm, llm_human };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::no_llm: return "no_llm";
    case Mode::llm: return "llm";
    case Mode::llm_human: return "llm_human";
  }
  return "?";
}

inline Mode mode_from_string(std::string_view s) {
  if (s == "no_llm") return Mode::no_llm;
  if (s == "llm") return Mode::llm;
  if (s == "llm_human") return Mode::llm_human;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected no_llm, llm or llm_human)");
}

struct RunOptions {
  Mode mode = Mode::llm;
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  Step steps = 300;
  std::string backend = "mock";
  std::shared_ptr<Backend> backend_instance;  // takes precedence over `backend`
  HumanScript script;                          // replayed in llm_human mode
  std::optional<WeightVector> pinned_weights;  // fixes weights and disables the action role
  std::ostream* log = nullptr;                 // JSONL sink
  std::optional<bool> log_latency;             // default: only for non-deterministic backends
};

/// One run: world, estimator, solver and the two LLM roles. Not thread-safe;
/// the owning thread calls step() and ingest_human().
class Simulation {
 public:
  static constexpr std::size_t kExchangeWindow = 20;

  Simulation(Scenario scenario, RunOptions opts)
      : scenario_(prepare(std::move(scenario), opts)),
        opts_(std::move(opts)),
        world_(scenario_.world, scenario_.robots, scenario_.targets, scenario_.zones),
        measurement_rng_(RngStream::split(scenario_.world.rng_seed, kMeasurementStream)),
        scheduler_(scenario_.cadence, scenario_.world.rng_seed),
        ctx_(static_cast<std::size_t>(scenario_.history_window)) {
    if (opts_.steps < 0) throw ConfigError("steps must be >= 0");
    if (opts_.mode != Mode::no_llm) {
      backend_ = opts_.backend_instance ? opts_.backend_instance
                                        : std::shared_ptr<Backend>(make_backend(opts_.backend, scenario_.world.rng_seed));
    }
    log_latency_ = opts_.log_latency.value_or(backend_ && !backend_->deterministic());
    weights_ = opts_.pinned_weights.value_or(scenario_.weights);
    if (!scenario_.bounds.contains(weights_) && !opts_.pinned_weights)
      throw ConfigError("initial weights outside bounds");

    for (const auto& t : scenario_.targets) {
      TargetBelief b;
      b.target_id = t.id;
      b.mean << t.position, t.velocity;
      b.covariance = scenario_.initial_covariance * Mat4::Identity();
      beliefs_.push_back(b);
    }
    controls_.assign(scenario_.robots.size(), Vec2::Zero());
    last_cost_ = tracking_cost(beliefs_);
    assignment_ = greedy_assign(beliefs_, world_.robots(), scenario_.capacities());
    assignment_.epoch = 0;
    ctx_.push(snapshot());
    query_ctx_.capacities = scenario_.capacities();
    query_ctx_.bounds = scenario_.bounds;
    for (const auto& r : scenario_.robots) query_ctx_.robot_ids.push_back(r.id);
    for (const auto& t : scenario_.targets) query_ctx_.target_ids.push_back(t.id);
    budget_ = token_budget(scenario_.mean_capacity(), scenario_.model_class);
    next_script_ = 0;
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  ~Simulation() {
    for (auto& w : workers_)
      if (w.joinable()) w.join();
  }

  Step current_step() const { return world_.current_step(); }
  bool finished() const { return world_.current_step() >= opts_.steps; }

  /// Queues supervisor input for the next prompt of each role.
  void ingest_human(HumanCategory category, std::string text) { ctx_.ingest_human(category, std::move(text)); }

  void step() {
    if (finished()) throw PreconditionError("run already finished");
    const Step s = world_.current_step() + 1;
    const Step status_step = world_.current_step();

    if (opts_.mode == Mode::llm_human) {
      while (next_script_ < opts_.script.size() && opts_.script[next_script_].step <= s) {
        const auto& in = opts_.script[next_script_++];
        ctx_.ingest_human(in.category, in.text);
      }
    }

    run_schedule(s);

    // Estimation: predict, then fuse this step's measurements.
    for (auto& b : beliefs_) b = kf_predict(b, scenario_.world.dt, scenario_.planner.process_noise);
    auto meas = take_measurements(world_.robots(), world_.targets(), scenario_.planner.sensor, status_step,
                                  measurement_rng_);
    beliefs_ = fuse_team(std::move(beliefs_), std::move(meas), world_.robots(), status_step);
    last_cost_ = tracking_cost(beliefs_);
    metrics_.accumulated_trace += last_cost_;

    // Per-robot control solves.
    const auto& robots = world_.robots();
    for (std::size_t i = 0; i < robots.size(); ++i) {
      const SolveReport rep =
          solve_step(robots[i], assignment_.row(static_cast<int>(i)), beliefs_, known_zones(robots[i], world_.zones()),
                     weights_, scenario_.planner, scenario_.world, controls_[i]);
      controls_[i] = rep.control;
    }

    std::vector<Vec2> before;
    for (const auto& r : robots) before.push_back(r.position);
    const auto events = world_.step(controls_);
    for (std::size_t i = 0; i < world_.robots().size(); ++i) {
      const auto& r = world_.robots()[i];
      metrics_.trajectory_length += (r.position - before[i]).norm();
      for (const auto& z : world_.zones()) {
        if ((r.position - z.center).norm() >= z.radius) continue;
        if (z.kind == ZoneKind::sensing)
          ++metrics_.sensing_incursion_steps;
        else
          ++metrics_.comm_incursion_steps;
      }
    }
    for (const auto& e : events) (e.kind == ZoneKind::sensing ? metrics_.sensing_attacks : metrics_.comm_attacks)++;
    metrics_.steps = s;

    ctx_.push(snapshot());
    log_step(s, events);
    if (finished()) finish();
  }

  void run_to_end() {
    while (!finished()) step();
    if (opts_.steps == 0) finish();
  }

  RunMetrics metrics() const {
    RunMetrics m = metrics_;
    m.update_rates();
    return m;
  }

  StateFrame frame(std::string status = "running") const {
    StateFrame f;
    f.step = world_.current_step();
    f.status = std::move(status);
    f.final = finished();
    const auto& robots = world_.robots();
    for (std::size_t i = 0; i < robots.size(); ++i) {
      const auto& r = robots[i];
      f.robots.push_back({r.id, r.position, r.capacity, r.sensing_attacked(f.step), r.comm_attacked(f.step),
                          assignment_.row(static_cast<int>(i))});
    }
    for (std::size_t j = 0; j < beliefs_.size(); ++j) {
      const auto& b = beliefs_[j];
      f.targets.push_back({b.target_id, world_.targets()[j].position, b.position(),
                           b.covariance.topLeftCorner<2, 2>(), b.trace()});
    }
    for (const auto& z : world_.zones()) f.zones.push_back({z.id, z.kind, z.center, z.radius});
    f.weights = weights_;
    f.tracking_cost = last_cost_;
    f.exchanges.assign(recent_.begin(), recent_.end());
    f.metrics = metrics();
    return f;
  }

  const World& world() const { return world_; }
  const std::vector<TargetBelief>& beliefs() const { return beliefs_; }
  const Assignment& assignment() const { return assignment_; }
  const WeightVector& weights() const { return weights_; }
  const Scenario& scenario() const { return scenario_; }
  const PromptContext& prompt_context() const { return ctx_; }
  int max_cadence() const { return scheduler_.max_cadence(); }

 private:
  static Scenario prepare(Scenario s, const RunOptions& o) {
    if (o.seed) s.world.rng_seed = *o.seed;
    s.validate();
    return s;
  }

  Snapshot snapshot() const {
    return make_snapshot(world_.current_step(), world_.robots(), beliefs_, world_.zones(), assignment_, weights_,
                         last_cost_);
  }

  void run_schedule(Step s) {
    RoleSet due = scheduler_.due(s);
    if (opts_.pinned_weights) due.action = false;

    if (opts_.mode == Mode::no_llm) {
      if (due.task) {
        assignment_ = greedy_assign(beliefs_, world_.robots(), scenario_.capacities());
        assignment_.epoch = s;
      }
      return;
    }

    if (due.task) issue(Role::task, build_task_prompt(ctx_, scenario_.capacities()), s);
    if (due.action) issue(Role::action, build_action_prompt(ctx_, weights_), s);

    for (auto& ex : mailbox_.collect()) apply(std::move(ex), s);
  }

  void issue(Role role, Prompt prompt, Step s) {
    std::vector<Snapshot> hist(ctx_.history().begin(), ctx_.history().end());
    if (backend_->deterministic()) {
      mailbox_.post(query(role, *backend_, prompt, budget_, query_ctx_, s, std::move(hist),
                          scenario_.planner.safety_margin));
      return;
    }
    workers_.emplace_back([this, role, prompt = std::move(prompt), s, hist = std::move(hist),
                           backend = backend_, qc = query_ctx_, budget = budget_,
                           margin = scenario_.planner.safety_margin]() mutable {
      mailbox_.post(query(role, *backend, prompt, budget, qc, s, std::move(hist), margin));
    });
  }

  void apply(LlmExchange ex, Step s) {
    const bool task = ex.role == Role::task;
    (task ? metrics_.task_queries : metrics_.action_queries)++;
    metrics_.tokens_prompt += ex.tokens_prompt;
    metrics_.tokens_response += ex.tokens_response;
    if (ex.verdict == Verdict::accepted) {
      (task ? metrics_.task_accepted : metrics_.action_accepted)++;
      if (task) {
        assignment_ = *ex.assignment;
        assignment_.epoch = s;
      } else {
        weights_ = *ex.weights;
      }
    } else {
      ctx_.set_repair_note(ex.role, repair_note(ex));
    }
    if (opts_.log) *opts_.log << to_json(ex, log_latency_).dump() << '\n';
    recent_.push_back(summarize(ex));
    while (recent_.size() > kExchangeWindow) recent_.pop_front();
  }

  void log_step(Step s, const std::vector<AttackEvent>& events) const {
    if (!opts_.log) return;
    using detail::arr2;
    nlohmann::json j{{"type", "step"}, {"step", s}, {"tracking_cost", last_cost_}, {"weights", weights_.w}};
    const auto& robots = world_.robots();
    j["robots"] = nlohmann::json::array();
    for (std::size_t i = 0; i < robots.size(); ++i)
      j["robots"].push_back({{"id", robots[i].id},
                             {"position", arr2(robots[i].position)},
                             {"control", arr2(controls_[i])},
                             {"sensing_attacked", robots[i].sensing_attacked(s)},
                             {"comm_attacked", robots[i].comm_attacked(s)},
                             {"assignment_row", assignment_.row(static_cast<int>(i))}});
    j["targets"] = nlohmann::json::array();
    for (std::size_t k = 0; k < beliefs_.size(); ++k)
      j["targets"].push_back({{"id", beliefs_[k].target_id},
                              {"true_position", arr2(world_.targets()[k].position)},
                              {"belief_mean", arr2(beliefs_[k].position())},
                              {"trace", beliefs_[k].trace()}});
    j["attacks"] = nlohmann::json::array();
    for (const auto& e : events)
      j["attacks"].push_back({{"robot", e.robot}, {"zone", e.zone}, {"kind", to_string(e.kind)}, {"until", e.until}});
    *opts_.log << j.dump() << '\n';
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    for (auto& w : workers_)
      if (w.joinable()) w.join();
    if (opts_.log) {
      nlohmann::json j = metrics();
      j["type"] = "metrics";
      j["mode"] = to_string(opts_.mode);
      j["seed"] = scenario_.world.rng_seed;
      *opts_.log << j.dump() << '\n';
      opts_.log->flush();
    }
  }

  Scenario scenario_;
  RunOptions opts_;
  World world_;
  RngStream measurement_rng_;
  CadenceScheduler scheduler_;
  PromptContext ctx_;
  std::shared_ptr<Backend> backend_;
  Mailbox mailbox_;
  std::vector<std::thread> workers_;
  QueryContext query_ctx_;
  int budget_ = 0;
  bool log_latency_ = false;

  std::vector<TargetBelief> beliefs_;
  std::vector<Vec2> controls_;
  Assignment assignment_;
  WeightVector weights_;
  double last_cost_ = 0.0;
  RunMetrics metrics_;
  std::deque<ExchangeSummary> recent_;
  std::size_t next_script_ = 0;
  bool finished_ = false;
};

inline RunMetrics run_scenario(const Scenario& scenario, RunOptions opts) {
  Simulation sim(scenario, std::move(opts));
  sim.run_to_end();
  return sim.metrics();
}

/// Default supervisor script for the ablation: a tracking complaint every
/// `period` steps.
inline HumanScript periodic_script(Step steps, Step period, const std::string& text,
                                   HumanCategory category = HumanCategory::performance) {
  HumanScript s;
  for (Step t = period; t <= steps; t += period) s.push_back({t, category, text});
  return s;
}

inline constexpr const char* kAblationHumanInput = "Focus more on tracking targets; The trace is not good.";

struct MetricStat {
  double mean = 0.0;
  double sd = 0.0;
};

inline MetricStat stat_of(const std::vector<double>& v) {
  MetricStat s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.sd += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(s.sd / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct AblationRow {
  Mode mode = Mode::no_llm;
  MetricStat accumulated_trace;
  MetricStat sensing_attacks;
  MetricStat comm_attacks;
  MetricStat trajectory_length;
  MetricStat sensing_incursion_steps;
  std::vector<RunMetrics> runs;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // no_llm, llm, llm_human

  const AblationRow& row(Mode m) const {
    for (const auto& r : rows)
      if (r.mode == m) return r;
    throw PreconditionError("ablation row missing");
  }

  std::string table() const {
    std::ostringstream os;
    os << std::left << std::setw(12) << "mode" << std::right << std::setw(20) << "accumulated trace"
       << std::setw(18) << "sensing attacks" << std::setw(16) << "comm attacks" << std::setw(22)
       << "trajectory length (m)" << '\n';
    for (const auto& r : rows) {
      const auto cell = [](const MetricStat& s, int prec) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(prec) << s.mean << " +- " << s.sd;
        return c.str();
      };
      os << std::left << std::setw(12) << to_string(r.mode) << std::right << std::setw(20)
         << cell(r.accumulated_trace, 2) << std::setw(18) << cell(r.sensing_attacks, 1) << std::setw(16)
         << cell(r.comm_attacks, 1) << std::setw(22) << cell(r.trajectory_length, 2) << '\n';
    }
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
      const auto st = [](const MetricStat& s) { return nlohmann::json{{"mean", s.mean}, {"sd", s.sd}}; };
      j.push_back({{"mode", to_string(r.mode)},
                   {"seeds", r.runs.size()},
                   {"accumulated_trace", st(r.accumulated_trace)},
                   {"sensing_attacks", st(r.sensing_attacks)},
                   {"comm_attacks", st(r.comm_attacks)},
                   {"trajectory_length", st(r.trajectory_length)},
                   {"sensing_incursion_steps", st(r.sensing_incursion_steps)}});
    }
    return j;
  }
};

struct AblationOptions {
  int seeds = 10;
  std::uint64_t base_seed = 1;
  Step steps = 300;
  std::string backend = "mock";
  std::optional<HumanScript> script;  // default: periodic tracking complaint
  Step human_period = 20;
};

/// Runs the three modes over the same seeds and reports mean and sd.
inline AblationResult ablation(const Scenario& scenario, const AblationOptions& o) {
  if (o.seeds < 1) throw ConfigError("ablation needs at least one seed");
  const HumanScript script = o.script.value_or(periodic_script(o.steps, o.human_period, kAblationHumanInput));
  AblationResult res;
  for (Mode mode : {Mode::no_llm, Mode::llm, Mode::llm_human}) {
    AblationRow row;
    row.mode = mode;
    std::vector<double> trace, sa, ca, len, inc;
    for (int k = 0; k < o.seeds; ++k) {
      RunOptions ro;
      ro.mode = mode;
      ro.seed = o.base_seed + static_cast<std::uint64_t>(k);
      ro.steps = o.steps;
      ro.backend = o.backend;
      ro.script = script;
      const RunMetrics m = run_scenario(scenario, ro);
      trace.push_back(m.accumulated_trace);
      sa.push_back(m.sensing_attacks);
      ca.push_back(m.comm_attacks);
      len.push_back(m.trajectory_length);
      inc.push_back(m.sensing_incursion_steps);
      row.runs.push_back(m);
    }
    row.accumulated_trace = stat_of(trace);
    row.sensing_attacks = stat_of(sa);
    row.comm_attacks = stat_of(ca);
    row.trajectory_length = stat_of(len);
    row.sensing_incursion_steps = stat_of(inc);
    res.rows.push_back(std::move(row));
  }
  return res;
}

struct SweepCell {
  int robots = 0;
  int targets = 0;
  int capacity = 1;
  int queries = 0;
  double task_success = 0.0;
  double action_success = 0.0;
  double task_tokens = 0.0;    // mean response tokens
  double action_tokens = 0.0;
};

struct SweepResult {
  std::array<int, 2> robot_range{2, 8};
  std::array<int, 2> target_range{2, 8};
  std::vector<SweepCell> cells;  // row-major over robots then targets

  const SweepCell& at(int m, int n) const {
    for (const auto& c : cells)
      if (c.robots == m && c.targets == n) return c;
    throw PreconditionError("sweep cell missing");
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : cells)
      j.push_back({{"robots", c.robots},
                   {"targets", c.targets},
                   {"capacity", c.capacity},
                   {"queries", c.queries},
                   {"task_success", c.task_success},
                   {"action_success", c.action_success},
                   {"task_tokens", c.task_tokens},
                   {"action_tokens", c.action_tokens}});
    return j;
  }

  std::string table(bool task) const {
    std::ostringstream os;
    os << (task ? "task" : "action") << " success rate (rows: robots, cols: targets)\n     ";
    for (int n = target_range[0]; n <= target_range[1]; ++n) os << std::setw(7) << n;
    os << '\n';
    for (int m = robot_range[0]; m <= robot_range[1]; ++m) {
      os << std::setw(5) << m;
      for (int n = target_range[0]; n <= target_range[1]; ++n)
        os << std::setw(7) << std::fixed << std::setprecision(3)
           << (task ? at(m, n).task_success : at(m, n).action_success);
      os << '\n';
    }
    return os.str();
  }
};

/// Per-robot capacity used in sweeps: half the target count, at least one.
inline int sweep_capacity(int targets) { return std::max(1, targets / 2); }

/// Random full-information environment with five sensing and two
/// communication zones.
inline Scenario sweep_scenario(int robots, int targets, std::uint64_t seed) {
  RngStream rng(splitmix64(seed));
  Scenario s;
  s.world.rng_seed = seed;
  const auto point = [&] { return Vec2(rng.uniform(-9.0, 9.0), rng.uniform(-9.0, 9.0)); };
  for (int k = 0; k < 7; ++k) {
    DangerZone z;
    z.id = k + 1;
    z.kind = k < 5 ? ZoneKind::sensing : ZoneKind::communication;
    z.center = point();
    z.radius = rng.uniform(1.0, 2.0);
    z.p_max = 0.3;
    s.zones.push_back(z);
  }
  for (int i = 0; i < robots; ++i) {
    RobotState r;
    r.id = i + 1;
    r.position = point();
    r.capacity = sweep_capacity(targets);
    for (const auto& z : s.zones) r.known_zones.insert(z.id);
    s.robots.push_back(r);
  }
  for (int j = 0; j < targets; ++j)
    s.targets.push_back({100 + j + 1, point(), Vec2(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))});
  s.validate();
  return s;
}

/// Fraction of accepted task and action replies per (robots, targets) cell.
/// Each query sees a freshly sampled history window of the cell's scenario.
inline SweepResult sweep_success(std::array<int, 2> robot_range, std::array<int, 2> target_range,
                                 const std::string& backend_spec, int queries_per_cell, std::uint64_t seed = 1,
                                 ModelClass model_class = ModelClass::base) {
  for (int v : {robot_range[0], robot_range[1], target_range[0], target_range[1]})
    if (v < 2 || v > 8) throw ConfigError("sweep ranges must lie within [2, 8]");
  if (robot_range[0] > robot_range[1] || target_range[0] > target_range[1])
    throw ConfigError("sweep range bounds out of order");
  if (queries_per_cell < 1) throw ConfigError("queries per cell must be >= 1");

  SweepResult out;
  out.robot_range = robot_range;
  out.target_range = target_range;
  for (int m = robot_range[0]; m <= robot_range[1]; ++m) {
    for (int n = target_range[0]; n <= target_range[1]; ++n) {
      const std::uint64_t cell_seed = splitmix64(seed * 1000003ULL + static_cast<std::uint64_t>(m * 16 + n));
      const Scenario sc = sweep_scenario(m, n, cell_seed);
      auto backend = make_backend(backend_spec, cell_seed);
      RngStream rng(splitmix64(cell_seed ^ 0xabcdefULL));

      QueryContext qc;
      qc.capacities = sc.capacities();
      qc.bounds = sc.bounds;
      for (const auto& r : sc.robots) qc.robot_ids.push_back(r.id);
      for (const auto& t : sc.targets) qc.target_ids.push_back(t.id);
      const int budget = token_budget(sc.mean_capacity(), model_class);

      SweepCell cell{m, n, sweep_capacity(n), queries_per_cell};
      int task_ok = 0, action_ok = 0;
      double task_tok = 0.0, action_tok = 0.0;
      for (int q = 0; q < queries_per_cell; ++q) {
        PromptContext ctx(5);
        std::vector<RobotState> robots = sc.robots;
        std::vector<TargetBelief> beliefs;
        for (const auto& t : sc.targets) {
          TargetBelief b;
          b.target_id = t.id;
          beliefs.push_back(b);
        }
        for (Step k = 1; k <= 5; ++k) {
          for (auto& r : robots) r.position = Vec2(rng.uniform(-9.5, 9.5), rng.uniform(-9.5, 9.5));
          for (auto& b : beliefs) {
            b.mean << rng.uniform(-9.5, 9.5), rng.uniform(-9.5, 9.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5);
            b.covariance = rng.uniform(0.05, 1.0) * Mat4::Identity();
          }
          const Assignment a = greedy_assign(beliefs, robots, qc.capacities);
          ctx.push(make_snapshot(k, robots, beliefs, sc.zones, a, sc.weights, tracking_cost(beliefs)));
        }
        std::vector<Snapshot> hist(ctx.history().begin(), ctx.history().end());
        const auto t = query(Role::task, *backend, build_task_prompt(ctx, qc.capacities), budget, qc, 5, hist,
                             sc.planner.safety_margin);
        const auto a = query(Role::action, *backend, build_action_prompt(ctx, sc.weights), budget, qc, 5, hist,
                             sc.planner.safety_margin);
        task_ok += t.verdict == Verdict::accepted;
        action_ok += a.verdict == Verdict::accepted;
        task_tok += t.tokens_response;
        action_tok += a.tokens_response;
      }
      cell.task_success = static_cast<double>(task_ok) / queries_per_cell;
      cell.action_success = static_cast<double>(action_ok) / queries_per_cell;
      cell.task_tokens = task_tok / queries_per_cell;
      cell.action_tokens = action_tok / queries_per_cell;
      out.cells.push_back(cell);
    }
  }
  return out;
}

}  // namespace llmtrack
