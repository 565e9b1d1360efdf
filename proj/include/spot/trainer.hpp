#pragma once

// Agent loop: epsilon-greedy (optionally masked) action selection, situation
// removal resets, trial reward finalization, online and replayed SPOT-Q
// updates, periodic greedy validation, and evaluation.
//
// Random streams in the deterministic mode, all derived from cfg.seed:
//   explore  (stream 1)  epsilon coin and uniform exploratory draws
//   tie      (stream 2)  tie-breaking in masked_argmax while acting
//   replay   (stream 3)  prioritized sampling
//   validate (stream 4)  tie-breaking during validation trials
// Environment seeds come from disjoint ranges: training [0, 2^62),
// validation [2^62, 2^63), evaluation [2^63, 2^64).

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "spot/environment.hpp"
#include "spot/replay.hpp"
#include "spot/rewards.hpp"
#include "spot/spotq.hpp"

namespace spot {

struct AgentConfig {
  double epsilon_start = 0.5;
  double epsilon_end = 0.05;
  // 0 means 20% of the training budget.
  std::size_t epsilon_decay_steps = 0;
  double learning_rate = 0.5;
  int train_steps_per_action = 1;
  bool use_mask = true;
  bool use_spotq = true;
  RewardConfig reward = RewardConfig::grid_world_defaults();
  std::uint64_t seed = 1;
  std::size_t training_action_budget = 10000;
  // 0 disables validation.
  std::size_t validation_every = 1000;
  std::size_t validation_trials = 30;
  ReplayConfig replay;
  bool record_steps = false;
  // Replay training runs on a second thread; results are not reproducible.
  bool concurrent = false;

  void validate() const;
  double epsilon_at(std::size_t action) const;
};

/// Independent sub-seed for one random stream of a run (streams listed above;
/// evaluation tie-breaking uses stream 5).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

enum class SeedRange { Training, Validation, Evaluation };

std::uint64_t training_seed(std::uint64_t run_seed, std::uint64_t trial);
std::uint64_t validation_seed(std::uint64_t run_seed, std::uint64_t k);
std::uint64_t evaluation_seed(std::uint64_t eval_seed, std::uint64_t k);
SeedRange seed_range(std::uint64_t env_seed);

struct TrialRecord {
  std::uint64_t trial_id = 0;
  bool completed = false;
  int actions_taken = 0;
  int ideal_actions = 0;
  std::array<int, kNumActionTypes> attempts{};
  std::array<int, kNumActionTypes> successes{};
  Termination termination = Termination::None;

  /// ideal / actual, clamped to at most 1.
  double efficiency() const;
  bool operator==(const TrialRecord&) const = default;
};

struct StepRecord {
  std::uint64_t trial_id = 0;
  int step = 0;
  ActionType action_type = ActionType::Grasp;
  ActionId action_id = 0;
  bool masked_policy = false;
  bool success = false;
  double instant_reward = 0.0;
  std::optional<double> trial_reward;
  double progress = 0.0;
  double epsilon = 0.0;
};

struct ValidationPoint {
  std::size_t action = 0;
  std::size_t completed = 0;
  std::size_t trials = 0;
};

struct TrainingResult {
  std::unique_ptr<TabularQ> q;
  std::vector<TrialRecord> trials;
  std::optional<std::size_t> convergence_action;
  std::vector<ValidationPoint> validations;
  std::vector<StepRecord> steps;
  std::size_t actions = 0;
  std::size_t lava_entries = 0;
  // Executed actions the environment mask disallowed.
  std::size_t masked_actions_executed = 0;
};

/// With probability epsilon a uniform draw over the allowed set (the mask
/// when use_mask, every action otherwise); else masked_argmax.
ActionId select_action(const QFunction& q, const Observation& s, bool use_mask, double epsilon,
                       Rng& explore_rng, Rng& tie_rng);

TrainingResult run_training(const EnvFactory& env_factory, const AgentConfig& cfg);

struct EvalSummary {
  std::size_t trials = 0;
  std::size_t completed = 0;
  double completion_rate = 0.0;
  // Mean clamped efficiency over completed trials; 0 when none completed.
  double mean_efficiency = 0.0;
  std::array<std::optional<double>, kNumActionTypes> success_rate{};
  std::vector<TrialRecord> records;
};

/// Greedy policy, no learning, no situation removal resets.
EvalSummary evaluate(const QFunction& q, const EnvFactory& env_factory, std::size_t n_trials,
                     std::uint64_t seed, bool use_mask = true);

/// Aggregates trial records the way evaluate() does.
EvalSummary summarize(std::vector<TrialRecord> records);

/// One greedy trial without learning. Returns its record.
TrialRecord run_greedy_trial(const QFunction& q, Environment& env, bool use_mask, Rng& tie_rng,
                             std::uint64_t trial_id = 0);

}  // namespace spot
