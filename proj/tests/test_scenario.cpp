#include <gtest/gtest.h>

#include <fstream>
#include <functional>
#include <sstream>

#include "llmtrack/harness.hpp"
#include "llmtrack/scenario.hpp"

using namespace llmtrack;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "workspace": {"min": [-5, -5], "max": [5, 5]},
    "robots": [{"id": 1, "start": [0, 0], "capacity": 2}],
    "targets": [{"id": 10, "start": [1, 1], "velocity": [0.1, 0]}],
    "zones": [{"id": 3, "kind": "sensing", "center": [2, 2], "radius": 1}]
  })");
}

std::string source_path(const std::string& rel) { return std::string(LLMTRACK_SOURCE_DIR) + "/" + rel; }

}  // namespace

TEST(ScenarioParse, MinimalUsesDefaults) {
  const Scenario s = parse_scenario(minimal());
  ASSERT_EQ(s.robots.size(), 1u);
  ASSERT_EQ(s.targets.size(), 1u);
  ASSERT_EQ(s.zones.size(), 1u);
  EXPECT_EQ(s.robots[0].capacity, 2);
  EXPECT_EQ(s.robots[0].known_zones, std::set<ZoneId>{3});
  EXPECT_EQ(s.weights.w, (std::array<double, 4>{1, 1, 1, 1}));
  EXPECT_EQ(s.history_window, 5);
  EXPECT_EQ(s.model_class, ModelClass::base);
}

TEST(ScenarioParse, UnknownFieldRejectedAtEveryLevel) {
  const std::vector<std::function<void(json&)>> mutations = {
      [](json& j) { j["extra"] = 1; },
      [](json& j) { j["workspace"]["z"] = 1; },
      [](json& j) { j["robots"][0]["speed"] = 1; },
      [](json& j) { j["targets"][0]["accel"] = 1; },
      [](json& j) { j["zones"][0]["color"] = "red"; },
      [](json& j) { j["sensor"] = {{"sigma2", 1}}; },
      [](json& j) { j["weight_bounds"] = {{"mid", {1, 1, 1, 1}}}; },
      [](json& j) { j["cadence"] = {{"human", 3}}; },
  };
  for (std::size_t i = 0; i < mutations.size(); ++i) {
    json j = minimal();
    mutations[i](j);
    EXPECT_THROW(parse_scenario(j), ConfigError) << "mutation " << i;
  }
}

TEST(ScenarioParse, MissingRequiredFields) {
  for (const char* key : {"workspace", "robots", "targets"}) {
    json j = minimal();
    j.erase(key);
    EXPECT_THROW(parse_scenario(j), ConfigError) << key;
  }
  json j = minimal();
  j["robots"][0].erase("start");
  EXPECT_THROW(parse_scenario(j), ConfigError);
}

TEST(ScenarioParse, InvalidValuesRejected) {
  const std::vector<std::function<void(json&)>> mutations = {
      [](json& j) { j["dt"] = 0; },
      [](json& j) { j["dt"] = "fast"; },
      [](json& j) { j["robots"][0]["capacity"] = 0; },
      [](json& j) { j["robots"][0]["start"] = {9, 9}; },
      [](json& j) { j["robots"].push_back(j["robots"][0]); },
      [](json& j) { j["robots"][0]["known_zones"] = {99}; },
      [](json& j) { j["zones"][0]["kind"] = "radiation"; },
      [](json& j) { j["weights"] = {1, 1, 1}; },
      [](json& j) { j["weights"] = {1000, 1, 1, 1}; },
      [](json& j) { j["history_window"] = 0; },
      [](json& j) { j["model_class"] = "huge"; },
      [](json& j) { j["cadence"] = {{"jitter", 1}}; },
      [](json& j) { j["initial_covariance"] = -1; },
  };
  for (std::size_t i = 0; i < mutations.size(); ++i) {
    json j = minimal();
    mutations[i](j);
    EXPECT_THROW(parse_scenario(j), ConfigError) << "mutation " << i;
  }
}

TEST(ScenarioParse, MaxRangeNullMeansUnlimited) {
  json j = minimal();
  j["sensor"] = {{"max_range", nullptr}};
  EXPECT_FALSE(parse_scenario(j).planner.sensor.max_range.has_value());
  j["sensor"] = {{"max_range", 4.5}};
  EXPECT_DOUBLE_EQ(*parse_scenario(j).planner.sensor.max_range, 4.5);
}

TEST(ScenarioParse, JsonRoundTrip) {
  const Scenario a = load_scenario(source_path("scenarios/ablation.json"));
  const json ja = scenario_to_json(a);
  const Scenario b = parse_scenario(ja);
  EXPECT_EQ(scenario_to_json(b), ja);
}

TEST(ScenarioFile, AblationScenarioShape) {
  const Scenario s = load_scenario(source_path("scenarios/ablation.json"));
  EXPECT_EQ(s.robots.size(), 2u);
  EXPECT_EQ(s.targets.size(), 4u);
  int sensing = 0, comm = 0;
  for (const auto& z : s.zones) (z.kind == ZoneKind::sensing ? sensing : comm)++;
  EXPECT_EQ(sensing, 2);
  EXPECT_EQ(comm, 1);
  for (std::size_t i = 1; i < s.targets.size(); ++i) {
    EXPECT_GT(s.targets[i].velocity.x(), 0.0);
    EXPECT_NE(s.targets[i].velocity.norm(), s.targets[0].velocity.norm());
  }
  EXPECT_EQ(s.weights.w, (std::array<double, 4>{1, 1, 1, 1}));
}

TEST(ScenarioFile, MissingFileAndBadJson) {
  EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), ConfigError);
  const std::string path = testing::TempDir() + "bad_scenario.json";
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(load_scenario(path), ConfigError);
}

TEST(HumanScript, ParsesAndSortsByStep) {
  std::istringstream in(
      "# comment\n"
      "\n"
      "40 risk Keep away from zone 2.\n"
      "20 performance Focus more on tracking targets; The trace is not good.\r\n"
      "20 abnormal Drone 21 looks stuck.\n");
  const HumanScript s = parse_human_script(in);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].step, 20);
  EXPECT_EQ(s[0].category, HumanCategory::performance);
  EXPECT_EQ(s[0].text, "Focus more on tracking targets; The trace is not good.");
  EXPECT_EQ(s[1].step, 20);
  EXPECT_EQ(s[1].category, HumanCategory::abnormal);
  EXPECT_EQ(s[2].step, 40);
  EXPECT_EQ(s[2].category, HumanCategory::risk);
}

TEST(HumanScript, RejectsMalformedLines) {
  for (const char* bad : {"x performance hi\n", "0 performance hi\n", "5 rumor hi\n", "5 risk\n", "5 risk   \n"}) {
    std::istringstream in(bad);
    EXPECT_THROW(parse_human_script(in), ConfigError) << bad;
  }
}

TEST(HumanScript, ErrorNamesLine) {
  std::istringstream in("1 risk ok\n2 nonsense text\n");
  try {
    parse_human_script(in);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("nonsense"), std::string::npos);
  }
  std::istringstream in2("1 risk ok\nbad\n");
  try {
    parse_human_script(in2);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(HumanScript, ShippedAblationScript) {
  const HumanScript s = load_human_script(source_path("scenarios/ablation_human.txt"));
  ASSERT_FALSE(s.empty());
  for (const auto& in : s) EXPECT_EQ(in.text, std::string(kAblationHumanInput));
}
