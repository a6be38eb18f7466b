// motorlance command-line tool: simulation runs, feasibility tables, and the
// dispatch server.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "motorlance/api/gateway.hpp"
#include "motorlance/feasibility/cost.hpp"
#include "motorlance/feasibility/survey.hpp"
#include "motorlance/sim.hpp"

namespace {

using motorlance::ErrorCode;
using nlohmann::json;
namespace fz = motorlance::feasibility;
namespace sim = motorlance::sim;

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) motorlance::fail(ErrorCode::Config, "cannot write " + path);
  out << j.dump(2) << '\n';
}

sim::Scenario scenario_with_seed(const std::string& path, std::optional<std::uint64_t> seed) {
  sim::Scenario s = sim::load_scenario(path);
  if (seed) s.seed = *seed;
  return s;
}

int sim_run(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out, bool as_json) {
  const auto report = sim::run(scenario_with_seed(path, seed));
  if (as_json) {
    std::cout << to_json(report).dump(2) << '\n';
  } else {
    std::cout << sim::format_table(report);
  }
  if (!out.empty()) write_json(out, to_json(report));
  return 0;
}

int sim_compare(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out, bool as_json) {
  const auto cmp = sim::compare_modes(scenario_with_seed(path, seed));
  if (as_json) {
    std::cout << to_json(cmp).dump(2) << '\n';
  } else {
    std::cout << "-- motorlance fleet\n" << sim::format_table(cmp.motorlance);
    std::cout << "-- ambulance fleet\n" << sim::format_table(cmp.ambulance);
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << cmp.reduction_percent;
    std::cout << "mean response-time reduction: " << os.str() << "%\n";
  }
  if (!out.empty()) write_json(out, to_json(cmp));
  return 0;
}

int feasibility_costs(const std::string& budget_text) {
  const fz::CostModel model;
  const auto t = fz::cost_table(model);
  auto cell = [](fz::Php v, fz::Percent1 p) { return v.str() + " (" + p.str() + "%)"; };
  std::cout << std::left << std::setw(12) << "" << std::setw(28) << "max" << "min\n";
  std::cout << std::setw(12) << "ambulance" << std::setw(28) << cell(t.ambulance_max, t.ambulance_max_pct)
            << cell(t.ambulance_min, t.ambulance_min_pct) << "\n";
  std::cout << std::setw(12) << "motorlance" << std::setw(28) << cell(t.motorlance_max, t.motorlance_max_pct)
            << cell(t.motorlance_min, t.motorlance_min_pct) << "\n";
  std::cout << "motorlance max is compared with ambulance min, motorlance min with ambulance max\n";
  std::cout << "operating cost reduction (reference): "
            << fz::Percent1::from_tenths(model.operating_cost_reduction_reference.basis_points() / 10).str() << "%\n";
  if (!budget_text.empty()) {
    const fz::Php budget = fz::Php::parse(budget_text);
    std::cout << "budget " << budget.str() << " buys:\n";
    std::cout << "  ambulances   " << fz::fleet_for_budget(budget, t.ambulance_max) << " to "
              << fz::fleet_for_budget(budget, t.ambulance_min) << "\n";
    std::cout << "  motorlances  " << fz::fleet_for_budget(budget, t.motorlance_max) << " to "
              << fz::fleet_for_budget(budget, t.motorlance_min) << "\n";
  }
  return 0;
}

int feasibility_survey(const std::string& csv, const std::string& out) {
  std::ifstream in(csv);
  if (!in) motorlance::fail(ErrorCode::Config, "cannot open " + csv);
  const auto load = fz::load_survey(in);
  const auto stats = fz::tabulate(load.responses);
  json j = to_json(stats);
  j["input_rows"] = load.input_rows;
  j["excluded"] = load.excluded;
  if (!out.empty()) write_json(out, j);
  std::cout << "rows " << load.input_rows << ", excluded " << load.excluded << ", retained " << stats.n << "\n";
  std::cout << "female " << stats.female.percent.str() << "%  phone " << stats.phone.percent.str() << "%  internet "
            << stats.internet.percent.str() << "%\n";
  std::cout << "q7 >= 4 " << stats.regular_app_use.percent.str() << "%  ios "
            << stats.os.at(std::string(fz::to_string(fz::PhoneOs::Ios))).percent.str() << "%  tnc for emergency "
            << stats.tnc_for_emergency.percent.str() << "%\n";
  return 0;
}

int serve(const std::string& config_path) {
  auto config = motorlance::api::load_server_config(config_path);
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);  // worker threads inherit the mask

  motorlance::api::Gateway gateway(std::move(config));
  const int port = gateway.start();
  std::cout << "motorlance gateway listening on port " << port << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  std::cout << "shutting down" << std::endl;
  gateway.stop();
  return 0;
}

bool is_config_error(ErrorCode c) {
  return c == ErrorCode::Config || c == ErrorCode::Parse || c == ErrorCode::Validation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Community motorlance dispatch: simulator, feasibility toolkit, and server"};
  app.require_subcommand(1);

  std::string scenario, out, budget, csv, config;
  std::optional<std::uint64_t> seed;
  bool as_json = false;

  auto* sim_cmd = app.add_subcommand("sim", "Discrete-event simulation");
  sim_cmd->require_subcommand(1);
  auto* run = sim_cmd->add_subcommand("run", "Run one scenario");
  auto* compare = sim_cmd->add_subcommand("compare", "Compare the fleet against an all-ambulance fleet");
  for (auto* c : {run, compare}) {
    c->add_option("--scenario", scenario, "Scenario JSON file")->required();
    c->add_option("--seed", seed, "Override the scenario seed");
    c->add_option("--out", out, "Write the JSON report here");
    c->add_flag("--json", as_json, "Print JSON instead of a table");
  }

  auto* feas = app.add_subcommand("feasibility", "Cost table and survey tabulation");
  feas->require_subcommand(1);
  auto* costs = feas->add_subcommand("costs", "Print the cost table");
  costs->add_option("--budget", budget, "Budget in PHP, e.g. 1,000,000");
  auto* survey = feas->add_subcommand("survey", "Tabulate a survey CSV");
  survey->add_option("file", csv, "Survey CSV")->required();
  survey->add_option("--out", out, "Write statistics JSON here");

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP gateway");
  serve_cmd->add_option("--config", config, "Server config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) return sim_run(scenario, seed, out, as_json);
    if (compare->parsed()) return sim_compare(scenario, seed, out, as_json);
    if (costs->parsed()) return feasibility_costs(budget);
    if (survey->parsed()) return feasibility_survey(csv, out);
    if (serve_cmd->parsed()) return serve(config);
  } catch (const motorlance::Error& e) {
    std::cerr << "error [" << motorlance::to_string(e.code()) << "]: " << e.what() << "\n";
    return is_config_error(e.code()) ? kExitConfig : kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
