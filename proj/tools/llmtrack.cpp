// Command-line front end: run, ablation, sweep and serve.

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "llmtrack/harness.hpp"
#include "llmtrack/scenario.hpp"
#include "llmtrack/service.hpp"

namespace {

using namespace llmtrack;

std::array<int, 2> parse_range(const std::string& s) {
  const auto dash = s.find('-');
  try {
    if (dash == std::string::npos) {
      const int v = std::stoi(s);
      return {v, v};
    }
    return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
  } catch (const std::exception&) {
    throw ConfigError("bad range '" + s + "' (expected N or LO-HI)");
  }
}

void print_metrics(const RunMetrics& m) {
  std::cout << nlohmann::json(m).dump(2) << '\n';
}

std::atomic<bool> g_interrupted{false};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-robot target tracking with LLM-in-the-loop task and weight adaptation"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run one scenario");
  std::string scenario_path, mode_name = "llm", human_path, backend = "mock", log_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  Step steps = 300;
  run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--mode", mode_name, "no_llm | llm | llm_human")->check(CLI::IsMember({"no_llm", "llm", "llm_human"}));
  run->add_option("--human-script", human_path, "Step-indexed supervisor script (llm_human mode)");
  run->add_option("--seed", seed, "Seed overriding the scenario seed")->each([&](const std::string&) { seed_set = true; });
  run->add_option("--steps", steps, "Number of steps");
  run->add_option("--backend", backend, "mock | faulty:<p> | http");
  run->add_option("--log", log_path, "JSONL run log");
  std::vector<double> pin;
  run->add_option("--weights", pin, "Pin weights w1 w2 w3 w4 and disable the action role")->expected(4);

  // ablation
  auto* abl = app.add_subcommand("ablation", "Compare no_llm, llm and llm_human over several seeds");
  std::string abl_scenario, abl_json, abl_human;
  int abl_seeds = 10;
  Step abl_steps = 300;
  std::uint64_t abl_base = 1;
  abl->add_option("--scenario", abl_scenario, "Scenario JSON file")->required();
  abl->add_option("--seeds", abl_seeds, "Number of seeds (>= 10 recommended)");
  abl->add_option("--base-seed", abl_base, "First seed");
  abl->add_option("--steps", abl_steps, "Steps per run");
  abl->add_option("--human-script", abl_human, "Supervisor script (default: periodic tracking complaint)");
  abl->add_option("--json", abl_json, "Write machine-readable results here");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Success rate of LLM replies over robot/target counts");
  std::string sw_backend = "mock", sw_robots = "2-8", sw_targets = "2-8", sw_json, sw_model = "base";
  int sw_queries = 100;
  std::uint64_t sw_seed = 1;
  sw->add_option("--backend", sw_backend, "mock | faulty:<p> | http");
  sw->add_option("--queries", sw_queries, "Queries per cell");
  sw->add_option("--robots", sw_robots, "Robot range, e.g. 2-8");
  sw->add_option("--targets", sw_targets, "Target range, e.g. 2-8");
  sw->add_option("--seed", sw_seed, "Seed");
  sw->add_option("--model-class", sw_model, "base | rich")->check(CLI::IsMember({"base", "rich"}));
  sw->add_option("--json", sw_json, "Write machine-readable results here");

  // serve
  auto* sv = app.add_subcommand("serve", "Run a scenario behind the supervisor gateway");
  std::string sv_scenario, sv_backend = "mock", sv_log, sv_address = "127.0.0.1";
  unsigned short sv_port = 8080;
  Step sv_steps = 300;
  int sv_step_ms = 200;
  std::uint64_t sv_seed = 0;
  bool sv_seed_set = false, sv_paused = false;
  sv->add_option("--scenario", sv_scenario, "Scenario JSON file")->required();
  sv->add_option("--port", sv_port, "TCP port");
  sv->add_option("--address", sv_address, "Bind address");
  sv->add_option("--backend", sv_backend, "mock | faulty:<p> | http");
  sv->add_option("--steps", sv_steps, "Number of steps");
  sv->add_option("--step-ms", sv_step_ms, "Wall-clock pause between steps");
  sv->add_option("--seed", sv_seed, "Seed")->each([&](const std::string&) { sv_seed_set = true; });
  sv->add_option("--log", sv_log, "JSONL run log");
  sv->add_flag("--start-paused", sv_paused, "Wait for a resume command before the first step");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const Scenario sc = load_scenario(scenario_path);
      RunOptions o;
      o.mode = mode_from_string(mode_name);
      if (seed_set) o.seed = seed;
      o.steps = steps;
      o.backend = backend;
      if (!pin.empty()) o.pinned_weights = WeightVector(std::array<double, 4>{pin[0], pin[1], pin[2], pin[3]});
      if (!human_path.empty()) o.script = load_human_script(human_path);
      if (o.mode == Mode::llm_human && human_path.empty())
        o.script = periodic_script(steps, 20, kAblationHumanInput);
      std::ofstream log;
      if (!log_path.empty()) {
        log.open(log_path);
        if (!log) throw ConfigError("cannot open log file '" + log_path + "'");
        o.log = &log;
      }
      Simulation sim(sc, o);
      while (!sim.finished()) {
        try {
          sim.step();
        } catch (const NumericError& e) {
          std::cerr << "aborted at step " << sim.current_step() + 1 << ": " << e.what() << '\n';
          if (log) log << nlohmann::json{{"type", "abort"}, {"step", sim.current_step() + 1}, {"error", e.what()}}.dump()
                       << '\n';
          return 3;
        }
      }
      if (steps == 0) sim.run_to_end();
      print_metrics(sim.metrics());
      return 0;
    }

    if (*abl) {
      const Scenario sc = load_scenario(abl_scenario);
      AblationOptions o;
      o.seeds = abl_seeds;
      o.base_seed = abl_base;
      o.steps = abl_steps;
      if (!abl_human.empty()) o.script = load_human_script(abl_human);
      const AblationResult res = ablation(sc, o);
      std::cout << res.table();
      if (!abl_json.empty()) std::ofstream(abl_json) << res.to_json().dump(2) << '\n';
      return 0;
    }

    if (*sw) {
      const auto res = sweep_success(parse_range(sw_robots), parse_range(sw_targets), sw_backend, sw_queries, sw_seed,
                                     sw_model == "rich" ? ModelClass::rich : ModelClass::base);
      std::cout << res.table(true) << '\n' << res.table(false);
      if (!sw_json.empty()) std::ofstream(sw_json) << res.to_json().dump(2) << '\n';
      return 0;
    }

    if (*sv) {
      const Scenario sc = load_scenario(sv_scenario);
      RunOptions o;
      o.mode = Mode::llm_human;
      if (sv_seed_set) o.seed = sv_seed;
      o.steps = sv_steps;
      o.backend = sv_backend;
      std::ofstream log;
      if (!sv_log.empty()) {
        log.open(sv_log);
        o.log = &log;
      }
      Simulation sim(sc, o);
      Gateway gw;
      if (sv_paused) gw.control(ControlCommand::pause);
      Service service(gw, sv_port, sv_address);
      std::cerr << "serving on http://" << sv_address << ":" << service.port() << "/v1 (ws /v1/stream)\n";
      std::signal(SIGINT, [](int) { g_interrupted = true; });
      std::signal(SIGTERM, [](int) { g_interrupted = true; });
      std::thread stepper([&] { drive(sim, gw, std::chrono::milliseconds(sv_step_ms)); });
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      gw.control(ControlCommand::stop);
      service.stop();
      stepper.join();
      print_metrics(sim.metrics());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
