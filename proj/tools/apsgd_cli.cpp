// Command-line front end. Exit status: 0 success, 2 precondition failure,
// 1 any other error.

#include "apsgd/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> trials;
  std::string out;
};

apsgd::ExperimentConfig resolve(const Globals& g) {
  apsgd::ExperimentConfig c = g.config.empty() ? apsgd::ExperimentConfig{} : apsgd::load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (g.trials) c.trials = *g.trials;
  if (!g.out.empty()) c.output_dir = g.out;
  apsgd::validate(c);
  return c;
}

void print(const apsgd::Json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous perturbed SGD: simulation, diagnostics and delay-recursion tools"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--trials", g.trials, "Override the Monte-Carlo trial count");
  app.add_option("--out", g.out, "Output directory");

  auto* params = app.add_subcommand("params", "Derive hyperparameters and check the conditions");
  bool feasible = false;
  params->add_flag("--feasible-search", feasible, "Search w and u for a configuration meeting every condition");

  auto* run = app.add_subcommand("run", "Run the iteration and write the trajectory");
  bool live = false;
  std::int64_t workers = 0;
  run->add_flag("--live", live, "Use worker threads instead of a simulated schedule");
  run->add_option("--workers", workers, "Worker threads in live mode");

  auto* classify = app.add_subcommand("classify", "Run and classify T-blocks, report certified points");
  classify->add_flag("--live", live, "Use worker threads instead of a simulated schedule");
  classify->add_option("--workers", workers, "Worker threads in live mode");

  app.add_subcommand("tl2", "Monte-Carlo estimate of the escape-or-descent event from the config start point");
  app.add_subcommand("escape", "Coupled-run escape statistics from the config start point");
  app.add_subcommand("tds", "Fundamental solution tables and certificates for the config schedule");

  auto* sw = app.add_subcommand("sweep", "Run one experiment over a list of values of a config field");
  std::string kind_name = "escape", axis;
  std::vector<double> values;
  sw->add_option("--experiment", kind_name, "params, run, classify, tl2, escape or tds");
  sw->add_option("--axis", axis, "Field to vary, e.g. T, eta, seed, problem.gamma")->required();
  sw->add_option("--values", values, "Values of the axis, space or comma separated")->required()->expected(1, -1)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    auto c = resolve(g);
    if (live) c.live = true;
    if (workers > 0) c.workers = workers;
    apsgd::validate(c);
    const std::filesystem::path out = c.output_dir;

    if (params->parsed() && feasible) {
      const auto res = apsgd::feasible_search(c.base);
      apsgd::Json j = {{"found", res.found}, {"evaluations", res.evaluations}};
      if (res.found) {
        j["base"] = apsgd::to_json(res.base);
        j["params"] = apsgd::to_json(res.params);
        j["conditions"] = apsgd::to_json(res.report);
      }
      print(j);
      return res.found ? 0 : 2;
    }
    if (sw->parsed()) {
      const auto kind = apsgd::experiment_kind_from_string(kind_name);
      const auto records = apsgd::sweep(c, kind, axis, values, out);
      apsgd::Json all = apsgd::Json::array();
      for (const auto& r : records) all.push_back(apsgd::to_json(r));
      apsgd::write_file_atomic(out / "records.json", all.dump(2) + "\n");
      apsgd::write_file_atomic(out / "report.csv", apsgd::report(records));
      std::cout << apsgd::report(records);
      return 0;
    }
    for (auto* sub : app.get_subcommands()) {
      const auto rec = apsgd::run_experiment(c, apsgd::experiment_kind_from_string(sub->get_name()), out);
      print(apsgd::to_json(rec));
    }
    return 0;
  } catch (const apsgd::PreconditionError& e) {
    std::cerr << "precondition: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
