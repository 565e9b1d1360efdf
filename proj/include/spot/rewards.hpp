#pragma once

// Reward functions for sub-task shaped manipulation and navigation tasks.
//
// Every function here is a pure function of StepOutcome histories. No
// environment internals leak in, so any environment that reports action
// type, success and task progress can use them.

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spot {

/// Sub-task tag attached to every action. Each environment uses a fixed
/// subset: the block world uses Grasp/Push/Place, the grid world uses
/// Forward/TurnLeft/TurnRight.
enum class ActionType { Grasp, Push, Place, Forward, TurnLeft, TurnRight };

inline constexpr int kNumActionTypes = 6;

std::string_view to_string(ActionType t);
ActionType action_type_from_string(std::string_view name);

/// Which instant reward feeds learning.
///
/// Sparse is the environment's built-in reward: 1 on task completion and 0
/// everywhere else.
enum class RewardKind { Base, SR, Progress, Trial, Discounted, Sparse };

std::string_view to_string(RewardKind k);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RewardConfig {
  std::map<ActionType, double> weights;
  double trial_discount = 0.65;
  double learn_discount = 0.65;
  RewardKind kind = RewardKind::Progress;
  // Inner instant reward for Trial; must be SR or Progress.
  RewardKind trial_inner = RewardKind::Progress;

  /// Throws ConfigError on negative weights, discounts outside (0,1) or an
  /// invalid trial_inner.
  void validate() const;

  bool uses_trial_rewards() const {
    return kind == RewardKind::Trial || kind == RewardKind::Discounted;
  }
  /// Situation removal resets apply to every kind that observes progress.
  bool applies_situation_removal() const {
    return kind == RewardKind::SR || kind == RewardKind::Progress || kind == RewardKind::Trial;
  }

  /// W_push=0.1, W_grasp=1, W_place=1 for the block world.
  static RewardConfig block_world_defaults();
  /// Unit weight on every navigation action.
  static RewardConfig grid_world_defaults();
};

struct StepOutcome {
  ActionType action_type = ActionType::Grasp;
  bool success = false;
  double progress_before = 0.0;
  double progress_after = 0.0;
  bool terminal = false;
  bool task_complete = false;
};

double base_reward(const StepOutcome& o, const RewardConfig& cfg);
int sr_indicator(const StepOutcome& o);
double sr_reward(const StepOutcome& o, const RewardConfig& cfg);
double progress_reward(const StepOutcome& o, const RewardConfig& cfg);
double sparse_reward(const StepOutcome& o);

/// The instant reward selected by cfg.kind (for Trial: the inner kind; for
/// Discounted: R_P on the final step of a trial and 0 before it).
double instant_reward(const StepOutcome& o, const RewardConfig& cfg, bool final_step);

/// Backward recursion over one trial: 0 where the instant reward is 0, twice
/// the instant reward on the final step of a completed trial, otherwise the
/// instant reward plus the discounted trial reward of the next step.
std::vector<double> trial_backfill(std::span<const double> instants, bool completed, double gamma);

/// R_t = gamma * R_{t+1} backward from the final reward, ignoring zeros.
std::vector<double> discounted_backfill(std::span<const double> instants, double gamma);

}  // namespace spot
