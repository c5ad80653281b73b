#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmtrack/estimation.hpp"
#include "llmtrack/inner_opt.hpp"
#include "llmtrack/llm_loop.hpp"
#include "llmtrack/world.hpp"

namespace llmtrack {

/// Everything needed to start a run. See README for the file format.
struct Scenario {
  WorldConfig world;
  std::vector<RobotState> robots;
  std::vector<TargetTruth> targets;
  std::vector<DangerZone> zones;
  PlannerParams planner;
  double initial_covariance = 1.0;
  WeightVector weights;
  WeightBounds bounds;
  CadenceConfig cadence;
  int history_window = 5;
  ModelClass model_class = ModelClass::base;

  std::vector<int> capacities() const {
    std::vector<int> c;
    for (const auto& r : robots) c.push_back(r.capacity);
    return c;
  }

  double mean_capacity() const {
    if (robots.empty()) return 1.0;
    double s = 0.0;
    for (const auto& r : robots) s += r.capacity;
    return s / static_cast<double>(robots.size());
  }

  void validate() const {
    world.validate();
    planner.sensor.validate();
    bounds.validate();
    cadence.validate();
    if (planner.process_noise < 0.0) throw ConfigError("process_noise must be >= 0");
    if (planner.safety_margin < 0.0) throw ConfigError("safety_margin must be >= 0");
    if (!(initial_covariance > 0.0)) throw ConfigError("initial_covariance must be > 0");
    if (history_window < 1) throw ConfigError("history_window must be >= 1");
    if (robots.empty()) throw ConfigError("scenario needs at least one robot");
    if (targets.empty()) throw ConfigError("scenario needs at least one target");
    if (!bounds.contains(weights)) throw ConfigError("initial weights outside weight_bounds");

    std::set<int> ids;
    for (const auto& r : robots) {
      if (!ids.insert(r.id).second) throw ConfigError("duplicate robot id " + std::to_string(r.id));
      if (r.capacity < 1) throw ConfigError("robot " + std::to_string(r.id) + ": capacity must be >= 1");
      if (!world.workspace.contains(r.position))
        throw ConfigError("robot " + std::to_string(r.id) + ": start outside workspace");
    }
    ids.clear();
    for (const auto& t : targets) {
      if (!ids.insert(t.id).second) throw ConfigError("duplicate target id " + std::to_string(t.id));
      if (!world.workspace.contains(t.position))
        throw ConfigError("target " + std::to_string(t.id) + ": start outside workspace");
    }
    ids.clear();
    for (const auto& z : zones) {
      z.validate();
      if (!ids.insert(z.id).second) throw ConfigError("duplicate zone id " + std::to_string(z.id));
    }
    for (const auto& r : robots)
      for (ZoneId k : r.known_zones)
        if (!ids.contains(k))
          throw ConfigError("robot " + std::to_string(r.id) + " knows unknown zone " + std::to_string(k));
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown field '" + key + "'");
  }
}

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  return j.at(key);
}

inline Vec2 vec2(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError(where + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline std::array<double, 4> arr4(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw ConfigError(where + ": expected a list of 4 numbers");
  std::array<double, 4> a{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number()) throw ConfigError(where + ": expected a list of 4 numbers");
    a[i] = j[i].get<double>();
  }
  return a;
}

template <class T>
T number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  }
  return j.get<T>();
}

inline json to_arr(const Vec2& v) { return json::array({v.x(), v.y()}); }

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
  using namespace detail;
  Scenario s;
  try {
    reject_unknown(j,
                   {"workspace", "dt", "u_max", "seed", "target_noise_std", "robots", "targets", "zones", "sensor",
                    "process_noise", "safety_margin", "initial_covariance", "weights", "weight_bounds", "cadence",
                    "history_window", "model_class"},
                   "scenario");

    const json& ws = require(j, "workspace", "scenario");
    reject_unknown(ws, {"min", "max"}, "workspace");
    s.world.workspace.min = vec2(require(ws, "min", "workspace"), "workspace.min");
    s.world.workspace.max = vec2(require(ws, "max", "workspace"), "workspace.max");
    if (j.contains("dt")) s.world.dt = number<double>(j["dt"], "dt");
    if (j.contains("u_max")) s.world.u_max = number<double>(j["u_max"], "u_max");
    if (j.contains("seed")) s.world.rng_seed = number<std::uint64_t>(j["seed"], "seed");
    if (j.contains("target_noise_std")) s.world.target_noise_std = number<double>(j["target_noise_std"], "target_noise_std");

    std::vector<ZoneId> all_zone_ids;
    if (j.contains("zones")) {
      for (const auto& z : j["zones"]) {
        reject_unknown(z, {"id", "kind", "center", "radius", "p_max", "attack_duration"}, "zone");
        DangerZone dz;
        dz.id = number<int>(require(z, "id", "zone"), "zone.id");
        const std::string where = "zone " + std::to_string(dz.id);
        dz.kind = zone_kind_from_string(require(z, "kind", where).get<std::string>());
        dz.center = vec2(require(z, "center", where), where + ".center");
        dz.radius = number<double>(require(z, "radius", where), where + ".radius");
        if (z.contains("p_max")) dz.p_max = number<double>(z["p_max"], where + ".p_max");
        if (z.contains("attack_duration")) dz.attack_duration = number<int>(z["attack_duration"], where + ".attack_duration");
        s.zones.push_back(dz);
        all_zone_ids.push_back(dz.id);
      }
    }

    for (const auto& r : require(j, "robots", "scenario")) {
      reject_unknown(r, {"id", "start", "capacity", "known_zones"}, "robot");
      RobotState rs;
      rs.id = number<int>(require(r, "id", "robot"), "robot.id");
      const std::string where = "robot " + std::to_string(rs.id);
      rs.position = vec2(require(r, "start", where), where + ".start");
      if (r.contains("capacity")) rs.capacity = number<int>(r["capacity"], where + ".capacity");
      if (r.contains("known_zones")) {
        for (const auto& k : r["known_zones"]) rs.known_zones.insert(number<int>(k, where + ".known_zones"));
      } else {
        rs.known_zones.insert(all_zone_ids.begin(), all_zone_ids.end());
      }
      s.robots.push_back(rs);
    }

    for (const auto& t : require(j, "targets", "scenario")) {
      reject_unknown(t, {"id", "start", "velocity"}, "target");
      TargetTruth tt;
      tt.id = number<int>(require(t, "id", "target"), "target.id");
      const std::string where = "target " + std::to_string(tt.id);
      tt.position = vec2(require(t, "start", where), where + ".start");
      if (t.contains("velocity")) tt.velocity = vec2(t["velocity"], where + ".velocity");
      s.targets.push_back(tt);
    }

    if (j.contains("sensor")) {
      const json& sj = j["sensor"];
      reject_unknown(sj, {"sigma0", "sigma1", "max_range"}, "sensor");
      if (sj.contains("sigma0")) s.planner.sensor.sigma0 = number<double>(sj["sigma0"], "sensor.sigma0");
      if (sj.contains("sigma1")) s.planner.sensor.sigma1 = number<double>(sj["sigma1"], "sensor.sigma1");
      if (sj.contains("max_range")) {
        if (sj["max_range"].is_null())
          s.planner.sensor.max_range.reset();
        else
          s.planner.sensor.max_range = number<double>(sj["max_range"], "sensor.max_range");
      }
    }
    if (j.contains("process_noise")) s.planner.process_noise = number<double>(j["process_noise"], "process_noise");
    if (j.contains("safety_margin")) s.planner.safety_margin = number<double>(j["safety_margin"], "safety_margin");
    if (j.contains("initial_covariance"))
      s.initial_covariance = number<double>(j["initial_covariance"], "initial_covariance");
    if (j.contains("weights")) s.weights = WeightVector(arr4(j["weights"], "weights"));
    if (j.contains("weight_bounds")) {
      const json& b = j["weight_bounds"];
      reject_unknown(b, {"lo", "hi"}, "weight_bounds");
      if (b.contains("lo")) s.bounds.lo = arr4(b["lo"], "weight_bounds.lo");
      if (b.contains("hi")) s.bounds.hi = arr4(b["hi"], "weight_bounds.hi");
    }
    if (j.contains("cadence")) {
      const json& c = j["cadence"];
      reject_unknown(c, {"action", "task", "jitter"}, "cadence");
      if (c.contains("action")) s.cadence.action = number<int>(c["action"], "cadence.action");
      if (c.contains("task")) s.cadence.task = number<int>(c["task"], "cadence.task");
      if (c.contains("jitter")) {
        if (!c["jitter"].is_boolean()) throw ConfigError("cadence.jitter: expected a boolean");
        s.cadence.jitter = c["jitter"].get<bool>();
      }
    }
    if (j.contains("history_window")) s.history_window = number<int>(j["history_window"], "history_window");
    if (j.contains("model_class")) {
      const auto m = j["model_class"].get<std::string>();
      if (m == "base")
        s.model_class = ModelClass::base;
      else if (m == "rich")
        s.model_class = ModelClass::rich;
      else
        throw ConfigError("model_class must be 'base' or 'rich'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
  using detail::to_arr;
  nlohmann::json j;
  j["workspace"] = {{"min", to_arr(s.world.workspace.min)}, {"max", to_arr(s.world.workspace.max)}};
  j["dt"] = s.world.dt;
  j["u_max"] = s.world.u_max;
  j["seed"] = s.world.rng_seed;
  j["target_noise_std"] = s.world.target_noise_std;
  for (const auto& r : s.robots)
    j["robots"].push_back({{"id", r.id},
                           {"start", to_arr(r.position)},
                           {"capacity", r.capacity},
                           {"known_zones", std::vector<int>(r.known_zones.begin(), r.known_zones.end())}});
  for (const auto& t : s.targets)
    j["targets"].push_back({{"id", t.id}, {"start", to_arr(t.position)}, {"velocity", to_arr(t.velocity)}});
  j["zones"] = nlohmann::json::array();
  for (const auto& z : s.zones)
    j["zones"].push_back({{"id", z.id},
                          {"kind", to_string(z.kind)},
                          {"center", to_arr(z.center)},
                          {"radius", z.radius},
                          {"p_max", z.p_max},
                          {"attack_duration", z.attack_duration}});
  j["sensor"] = {{"sigma0", s.planner.sensor.sigma0}, {"sigma1", s.planner.sensor.sigma1}};
  j["sensor"]["max_range"] = s.planner.sensor.max_range ? nlohmann::json(*s.planner.sensor.max_range) : nlohmann::json(nullptr);
  j["process_noise"] = s.planner.process_noise;
  j["safety_margin"] = s.planner.safety_margin;
  j["initial_covariance"] = s.initial_covariance;
  j["weights"] = s.weights.w;
  j["weight_bounds"] = {{"lo", s.bounds.lo}, {"hi", s.bounds.hi}};
  j["cadence"] = {{"action", s.cadence.action}, {"task", s.cadence.task}, {"jitter", s.cadence.jitter}};
  j["history_window"] = s.history_window;
  j["model_class"] = s.model_class == ModelClass::base ? "base" : "rich";
  return j;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario '" + path + "': " + e.what());
  }
  return parse_scenario(j);
}

struct ScriptedInput {
  Step step = 0;
  HumanCategory category = HumanCategory::performance;
  std::string text;
};

/// Supervisor messages replayed at fixed steps. One per line:
///   <step> <performance|risk|abnormal> <text>
/// Blank lines and lines starting with '#' are ignored.
using HumanScript = std::vector<ScriptedInput>;

inline HumanScript parse_human_script(std::istream& in) {
  HumanScript script;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    ScriptedInput s;
    std::string category;
    if (!(ls >> s.step >> category) || s.step < 1)
      throw ConfigError("human script line " + std::to_string(lineno) + ": expected '<step> <category> <text>'");
    s.category = human_category_from_string(category);
    std::getline(ls, s.text);
    const auto b = s.text.find_first_not_of(" \t");
    const auto e = s.text.find_last_not_of(" \t\r");
    if (b == std::string::npos) throw ConfigError("human script line " + std::to_string(lineno) + ": empty text");
    s.text = s.text.substr(b, e - b + 1);
    script.push_back(std::move(s));
  }
  std::stable_sort(script.begin(), script.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
  return script;
}

inline HumanScript load_human_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open human script '" + path + "'");
  return parse_human_script(in);
}

}  // namespace llmtrack
