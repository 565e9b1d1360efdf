#include "spot/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

namespace spot {

namespace {

constexpr std::uint64_t kRangeBits = 62;
constexpr std::uint64_t kRangeMask = (std::uint64_t{1} << kRangeBits) - 1;

std::uint64_t ranged_seed(std::uint64_t range, std::uint64_t run_seed, std::uint64_t k) {
  return (range << kRangeBits) | (mix64(stream_seed(run_seed, 16 + range) + k) & kRangeMask);
}

std::size_t type_index(ActionType t) { return static_cast<std::size_t>(t); }

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL));
}

void AgentConfig::validate() const {
  reward.validate();
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0)) {
    throw ConfigError("epsilon must lie in [0, 1]");
  }
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ConfigError("learning rate must lie in (0, 1]");
  }
  if (train_steps_per_action < 0) throw ConfigError("train_steps_per_action must be >= 0");
  if (use_spotq && !use_mask) throw ConfigError("SPOT-Q requires the action mask");
}

double AgentConfig::epsilon_at(std::size_t action) const {
  const std::size_t decay =
      epsilon_decay_steps > 0 ? epsilon_decay_steps : std::max<std::size_t>(1, training_action_budget / 5);
  const double frac = std::min(1.0, static_cast<double>(action) / static_cast<double>(decay));
  return epsilon_start + (epsilon_end - epsilon_start) * frac;
}

std::uint64_t training_seed(std::uint64_t run_seed, std::uint64_t trial) {
  return ranged_seed(0, run_seed, trial);
}

std::uint64_t validation_seed(std::uint64_t run_seed, std::uint64_t k) {
  return ranged_seed(1, run_seed, k);
}

std::uint64_t evaluation_seed(std::uint64_t eval_seed, std::uint64_t k) {
  return ranged_seed(2 + (k & 1), eval_seed, k);
}

SeedRange seed_range(std::uint64_t env_seed) {
  switch (env_seed >> kRangeBits) {
    case 0: return SeedRange::Training;
    case 1: return SeedRange::Validation;
    default: return SeedRange::Evaluation;
  }
}

double TrialRecord::efficiency() const {
  if (actions_taken <= 0) return 0.0;
  return std::min(1.0, static_cast<double>(ideal_actions) / static_cast<double>(actions_taken));
}

ActionId select_action(const QFunction& q, const Observation& s, bool use_mask, double epsilon,
                       Rng& explore_rng, Rng& tie_rng) {
  const ActionMask allowed = use_mask ? s.mask : ActionMask::all(s.num_actions());
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(explore_rng) < epsilon) {
    std::vector<ActionId> choices;
    for (ActionId a = 0; a < allowed.size(); ++a) {
      if (allowed[a]) choices.push_back(a);
    }
    if (choices.empty()) throw EmptyActionSpaceError();
    std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
    return choices[pick(explore_rng)];
  }
  return masked_argmax(q, s, allowed, tie_rng);
}

TrialRecord run_greedy_trial(const QFunction& q, Environment& env, bool use_mask, Rng& tie_rng,
                             std::uint64_t trial_id) {
  TrialRecord rec;
  rec.trial_id = trial_id;
  rec.ideal_actions = env.ideal_actions();
  while (!env.terminal()) {
    const Observation obs = env.observe();
    const ActionMask allowed = use_mask ? obs.mask : ActionMask::all(obs.num_actions());
    const ActionId a = masked_argmax(q, obs, allowed, tie_rng);
    const Transition tr = env.step(a);
    ++rec.actions_taken;
    ++rec.attempts[type_index(tr.outcome.action_type)];
    if (tr.outcome.success) ++rec.successes[type_index(tr.outcome.action_type)];
    if (tr.outcome.terminal) {
      rec.termination = tr.event;
      rec.completed = tr.outcome.task_complete;
    }
  }
  return rec;
}

EvalSummary summarize(std::vector<TrialRecord> records) {
  EvalSummary out;
  out.trials = records.size();
  double efficiency_sum = 0.0;
  std::array<long, kNumActionTypes> attempts{};
  std::array<long, kNumActionTypes> successes{};
  for (const TrialRecord& r : records) {
    if (r.completed) {
      ++out.completed;
      efficiency_sum += r.efficiency();
    }
    for (int t = 0; t < kNumActionTypes; ++t) {
      attempts[t] += r.attempts[t];
      successes[t] += r.successes[t];
    }
  }
  if (out.trials > 0) out.completion_rate = static_cast<double>(out.completed) / static_cast<double>(out.trials);
  if (out.completed > 0) out.mean_efficiency = efficiency_sum / static_cast<double>(out.completed);
  for (int t = 0; t < kNumActionTypes; ++t) {
    if (attempts[t] > 0) out.success_rate[t] = static_cast<double>(successes[t]) / static_cast<double>(attempts[t]);
  }
  out.records = std::move(records);
  return out;
}

EvalSummary evaluate(const QFunction& q, const EnvFactory& env_factory, std::size_t n_trials,
                     std::uint64_t seed, bool use_mask) {
  Rng tie_rng(stream_seed(seed, 5));
  auto env = env_factory();
  std::vector<TrialRecord> records;
  records.reserve(n_trials);
  for (std::size_t i = 0; i < n_trials; ++i) {
    env->reset(evaluation_seed(seed, i));
    records.push_back(run_greedy_trial(q, *env, use_mask, tie_rng, i));
  }
  return summarize(std::move(records));
}

TrainingResult run_training(const EnvFactory& env_factory, const AgentConfig& cfg) {
  cfg.validate();
  TrainingResult result;
  result.q = std::make_unique<TabularQ>();
  TabularQ& q = *result.q;

  Rng explore_rng(stream_seed(cfg.seed, 1));
  Rng tie_rng(stream_seed(cfg.seed, 2));
  Rng replay_rng(stream_seed(cfg.seed, 3));
  Rng validate_rng(stream_seed(cfg.seed, 4));

  ReplayConfig replay_cfg = cfg.replay;
  replay_cfg.finalized_only = cfg.reward.uses_trial_rewards();
  ReplayBuffer buffer(replay_cfg);
  const MaskFn spot_mask = cfg.use_spotq ? MaskFn(observed_mask) : MaskFn(unrestricted_mask);
  const bool situation_removal = cfg.reward.applies_situation_removal();

  // Concurrent mode: replay updates happen on a trainer thread; both sides
  // serialize through one mutex guarding the buffer and Q.
  std::mutex guard;
  std::atomic<bool> stop{false};
  std::jthread replay_worker;
  if (cfg.concurrent) {
    replay_worker = std::jthread([&] {
      while (!stop.load()) {
        {
          std::lock_guard lock(guard);
          if (buffer.candidate_count() > 0) {
            train_step(buffer, q, spot_mask, cfg.reward, cfg.learning_rate, replay_rng);
          }
        }
        std::this_thread::yield();
      }
    });
  }

  auto env = env_factory();
  std::uint64_t trial_id = 0;
  env->reset(training_seed(cfg.seed, trial_id));
  auto obs = std::make_shared<const Observation>(env->observe());
  TrialRecord current;
  current.ideal_actions = env->ideal_actions();
  std::vector<std::pair<ReplayBuffer::Index, std::size_t>> trial_steps;  // buffer index, step record
  std::size_t validation_round = 0;

  const auto validate_now = [&](std::size_t action) {
    ValidationPoint point{action, 0, cfg.validation_trials};
    auto val_env = env_factory();
    for (std::size_t i = 0; i < cfg.validation_trials; ++i) {
      val_env->reset(validation_seed(cfg.seed, validation_round * cfg.validation_trials + i));
      std::unique_lock lock(guard, std::defer_lock);
      if (cfg.concurrent) lock.lock();
      if (run_greedy_trial(q, *val_env, cfg.use_mask, validate_rng).completed) ++point.completed;
    }
    ++validation_round;
    result.validations.push_back(point);
    if (point.completed == point.trials && !result.convergence_action) {
      result.convergence_action = action;
    }
  };

  for (std::size_t action = 0; action < cfg.training_action_budget;) {
    const double epsilon = cfg.epsilon_at(action);
    std::unique_lock lock(guard, std::defer_lock);
    if (cfg.concurrent) lock.lock();

    const ActionId a = select_action(q, *obs, cfg.use_mask, epsilon, explore_rng, tie_rng);
    const bool masked_policy = cfg.use_mask && !obs->mask[greedy_action(q, *obs)];
    const double predicted = q.value(*obs, a);
    if (!obs->mask[a]) ++result.masked_actions_executed;

    const Transition tr = env->step(a);
    ++action;
    const StepOutcome& o = tr.outcome;
    if (tr.event == Termination::LavaDeath) ++result.lava_entries;

    const bool removed = situation_removal && !o.task_complete && env->situation_removal(o);
    const bool trial_end = o.terminal || removed;
    const double instant = removed ? 0.0 : instant_reward(o, cfg.reward, trial_end);
    auto next = std::make_shared<const Observation>(env->observe());

    Experience e;
    e.state = obs;
    e.action_id = a;
    e.action_type = o.action_type;
    e.instant_reward = instant;
    e.predicted_q = predicted;
    e.success = o.success;
    e.trial_id = trial_id;
    e.step_index = static_cast<std::uint32_t>(current.actions_taken);
    e.next_state = next;
    // Hitting the action limit truncates the trial without cutting the bootstrap.
    e.terminal = o.task_complete || tr.event == Termination::LavaDeath || removed;
    const ReplayBuffer::Index idx = buffer.push(std::move(e));

    ++current.actions_taken;
    ++current.attempts[type_index(o.action_type)];
    if (o.success) ++current.successes[type_index(o.action_type)];
    if (cfg.record_steps) {
      result.steps.push_back(StepRecord{trial_id, current.actions_taken - 1, o.action_type, a,
                                        masked_policy, o.success, instant, std::nullopt,
                                        o.progress_after, epsilon});
      trial_steps.emplace_back(idx, result.steps.size() - 1);
    }

    if (trial_end) {
      current.trial_id = trial_id;
      current.completed = o.task_complete;
      current.termination = removed ? Termination::SituationRemoval : tr.event;
      buffer.finalize_trial(trial_id, current.completed, cfg.reward);
      for (const auto& [buffer_index, step_index] : trial_steps) {
        if (buffer.contains(buffer_index)) {
          result.steps[step_index].trial_reward = buffer.at(buffer_index).trial_reward;
        }
      }
      trial_steps.clear();
    }

    learn_from(buffer.at(idx), instant, q, spot_mask, cfg.reward, cfg.learning_rate);
    if (!cfg.concurrent) {
      for (int k = 0; k < cfg.train_steps_per_action && buffer.candidate_count() > 0; ++k) {
        train_step(buffer, q, spot_mask, cfg.reward, cfg.learning_rate, replay_rng);
      }
    }

    if (trial_end) {
      result.trials.push_back(current);
      ++trial_id;
      env->reset(training_seed(cfg.seed, trial_id));
      current = TrialRecord{};
      current.ideal_actions = env->ideal_actions();
      obs = std::make_shared<const Observation>(env->observe());
    } else {
      obs = std::move(next);
    }
    if (lock.owns_lock()) lock.unlock();

    if (cfg.validation_every > 0 && cfg.validation_trials > 0 && !result.convergence_action &&
        action % cfg.validation_every == 0) {
      validate_now(action);
    }
  }

  if (cfg.concurrent) {
    stop = true;
    replay_worker.join();
  }
  result.actions = cfg.training_action_budget;
  return result;
}

}  // namespace spot
