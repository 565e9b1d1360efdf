#include "spot/rewards.hpp"

#include <array>
#include <cmath>

namespace spot {

namespace {

constexpr std::array<std::string_view, kNumActionTypes> kActionTypeNames = {
    "grasp", "push", "place", "forward", "turn_left", "turn_right"};

double weight_for(const RewardConfig& cfg, ActionType t) {
  auto it = cfg.weights.find(t);
  if (it == cfg.weights.end()) {
    throw ConfigError("no reward weight configured for action type '" +
                      std::string(to_string(t)) + "'");
  }
  return it->second;
}

}  // namespace

std::string_view to_string(ActionType t) { return kActionTypeNames[static_cast<int>(t)]; }

ActionType action_type_from_string(std::string_view name) {
  for (int i = 0; i < kNumActionTypes; ++i) {
    if (kActionTypeNames[i] == name) return static_cast<ActionType>(i);
  }
  throw ConfigError("unknown action type '" + std::string(name) + "'");
}

std::string_view to_string(RewardKind k) {
  switch (k) {
    case RewardKind::Base: return "base";
    case RewardKind::SR: return "sr";
    case RewardKind::Progress: return "progress";
    case RewardKind::Trial: return "trial";
    case RewardKind::Discounted: return "discounted";
    case RewardKind::Sparse: return "sparse";
  }
  return "?";
}

void RewardConfig::validate() const {
  for (const auto& [type, w] : weights) {
    if (!(w >= 0.0)) {
      throw ConfigError("reward weight for '" + std::string(to_string(type)) + "' must be >= 0");
    }
  }
  if (!(trial_discount > 0.0 && trial_discount < 1.0)) {
    throw ConfigError("trial_discount must lie strictly inside (0, 1)");
  }
  if (!(learn_discount > 0.0 && learn_discount < 1.0)) {
    throw ConfigError("learn_discount must lie strictly inside (0, 1)");
  }
  if (kind == RewardKind::Trial && trial_inner != RewardKind::SR &&
      trial_inner != RewardKind::Progress) {
    throw ConfigError("trial reward needs an SR or progress inner reward");
  }
}

RewardConfig RewardConfig::block_world_defaults() {
  RewardConfig cfg;
  cfg.weights = {{ActionType::Push, 0.1}, {ActionType::Grasp, 1.0}, {ActionType::Place, 1.0}};
  return cfg;
}

RewardConfig RewardConfig::grid_world_defaults() {
  RewardConfig cfg;
  cfg.weights = {
      {ActionType::Forward, 1.0}, {ActionType::TurnLeft, 1.0}, {ActionType::TurnRight, 1.0}};
  return cfg;
}

double base_reward(const StepOutcome& o, const RewardConfig& cfg) {
  const double w = weight_for(cfg, o.action_type);
  return o.success ? w : 0.0;
}

int sr_indicator(const StepOutcome& o) { return o.progress_after >= o.progress_before ? 1 : 0; }

double sr_reward(const StepOutcome& o, const RewardConfig& cfg) {
  const double base = base_reward(o, cfg);
  return sr_indicator(o) == 1 ? base : 0.0;
}

double progress_reward(const StepOutcome& o, const RewardConfig& cfg) {
  return o.progress_after * sr_reward(o, cfg);
}

double sparse_reward(const StepOutcome& o) { return o.task_complete ? 1.0 : 0.0; }

double instant_reward(const StepOutcome& o, const RewardConfig& cfg, bool final_step) {
  switch (cfg.kind) {
    case RewardKind::Base: return base_reward(o, cfg);
    case RewardKind::SR: return sr_reward(o, cfg);
    case RewardKind::Progress: return progress_reward(o, cfg);
    case RewardKind::Trial:
      return cfg.trial_inner == RewardKind::SR ? sr_reward(o, cfg) : progress_reward(o, cfg);
    case RewardKind::Discounted: return final_step ? progress_reward(o, cfg) : 0.0;
    case RewardKind::Sparse: return sparse_reward(o);
  }
  return 0.0;
}

std::vector<double> trial_backfill(std::span<const double> instants, bool completed, double gamma) {
  std::vector<double> out(instants.size(), 0.0);
  if (instants.empty()) return out;
  const std::size_t last = instants.size() - 1;
  for (std::size_t i = instants.size(); i-- > 0;) {
    const double r = instants[i];
    if (r == 0.0) {
      out[i] = 0.0;
    } else if (i == last) {
      out[i] = completed ? 2.0 * r : r;
    } else {
      out[i] = r + gamma * out[i + 1];
    }
  }
  return out;
}

std::vector<double> discounted_backfill(std::span<const double> instants, double gamma) {
  std::vector<double> out(instants.size(), 0.0);
  if (instants.empty()) return out;
  out.back() = instants.back();
  for (std::size_t i = instants.size() - 1; i-- > 0;) out[i] = gamma * out[i + 1];
  return out;
}

}  // namespace spot
