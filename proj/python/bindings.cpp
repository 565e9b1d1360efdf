// Python surface: reward recursions, environment helpers and the harness.
#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spot/blockworld.hpp"
#include "spot/gridworld.hpp"
#include "spot/harness.hpp"
#include "spot/rewards.hpp"
#include "spot/trainer.hpp"

namespace py = pybind11;

namespace {

py::dict train(const std::map<std::string, std::string>& config) {
  const spot::harness::ExperimentSpec spec = spot::harness::spec_from_key_values(config);
  spec.validate(1);
  const spot::harness::Cell& cell = spec.cells.front();
  spot::AgentConfig cfg = spec.agent;
  cfg.use_mask = cell.use_mask;
  cfg.use_spotq = cell.use_spotq;
  cfg.reward.kind = cell.reward;
  cfg.seed = spec.seeds.front();
  const spot::EnvFactory factory = spot::harness::make_env_factory(spec);

  spot::TrainingResult trained;
  spot::EvalSummary eval;
  {
    py::gil_scoped_release release;
    trained = spot::run_training(factory, cfg);
    eval = spot::evaluate(*trained.q, factory, spec.eval_trials, spec.eval_seed, cell.use_mask);
  }
  std::ostringstream q_text;
  trained.q->save(q_text);

  py::dict out;
  out["cell"] = cell.label();
  out["seed"] = cfg.seed;
  out["training_trials"] = trained.trials.size();
  out["completion_rate"] = eval.completion_rate;
  out["mean_efficiency"] = eval.mean_efficiency;
  out["convergence_action"] = trained.convergence_action;
  out["lava_entries"] = trained.lava_entries;
  out["masked_actions_executed"] = trained.masked_actions_executed;
  out["q_table"] = q_text.str();
  return out;
}

py::tuple cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"spot"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = spot::harness::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SPOT: schedule for positive task reinforcement learning";

  py::register_exception<spot::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def(
      "trial_backfill",
      [](const std::vector<double>& instants, bool completed, double gamma) {
        return spot::trial_backfill(instants, completed, gamma);
      },
      py::arg("instants"), py::arg("completed"),
      py::arg("gamma") = 0.65, "Trial rewards R_trial for one finished trial.");
  m.def(
      "discounted_backfill",
      [](const std::vector<double>& instants, double gamma) { return spot::discounted_backfill(instants, gamma); },
      py::arg("instants"), py::arg("gamma") = 0.65,
      "Discounted sparse rewards for one finished trial.");

  m.def(
      "grid_ideal_actions",
      [](std::uint64_t seed) { return spot::grid::ideal_actions(spot::grid::generate(seed)); },
      py::arg("seed"), "Minimum actions from start to goal on the generated layout.");
  m.def(
      "grid_layout", [](std::uint64_t seed) { return spot::grid::to_text(spot::grid::generate(seed)); },
      py::arg("seed"), "Text rendering of the generated grid layout.");
  m.def(
      "block_ideal_actions",
      [](const std::string& task, int num_blocks, int goal_size) {
        return spot::blocks::ideal_actions(spot::blocks::task_from_string(task), num_blocks, goal_size);
      },
      py::arg("task"), py::arg("num_blocks") = 4, py::arg("goal_size") = 4);

  m.def("train", &train, py::arg("config"),
        "Train and evaluate the first cell and seed of a key=value configuration.");
  m.def("cli", &cli, py::arg("args"), "Run the spot command line; returns (exit_code, stdout, stderr).");
}
