#include <gtest/gtest.h>

#include <set>

#include "spot/blockworld.hpp"
#include "spot/gridworld.hpp"
#include "spot/trainer.hpp"

namespace spot {
namespace {

EnvFactory grid_factory() {
  return [] { return std::make_unique<grid::GridWorldEnv>(); };
}

EnvFactory block_factory() {
  return [] { return std::make_unique<blocks::BlockWorldEnv>(blocks::Task::StackOfK); };
}

AgentConfig small_config(RewardKind kind, bool mask, bool spotq, std::size_t budget = 3000) {
  AgentConfig cfg;
  cfg.reward = RewardConfig::block_world_defaults();
  cfg.reward.kind = kind;
  cfg.use_mask = mask;
  cfg.use_spotq = spotq;
  cfg.training_action_budget = budget;
  cfg.validation_every = 0;
  cfg.record_steps = true;
  cfg.learning_rate = 0.1;
  return cfg;
}

TEST(AgentConfig, EpsilonScheduleIsLinearThenFlat) {
  AgentConfig cfg;
  cfg.epsilon_start = 0.5;
  cfg.epsilon_end = 0.1;
  cfg.training_action_budget = 1000;
  EXPECT_DOUBLE_EQ(cfg.epsilon_at(0), 0.5);
  EXPECT_DOUBLE_EQ(cfg.epsilon_at(100), 0.3);
  EXPECT_DOUBLE_EQ(cfg.epsilon_at(200), 0.1);
  EXPECT_DOUBLE_EQ(cfg.epsilon_at(900), 0.1);
  cfg.epsilon_decay_steps = 400;
  EXPECT_DOUBLE_EQ(cfg.epsilon_at(200), 0.3);
}

TEST(AgentConfig, ValidateRejectsBadValues) {
  AgentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.epsilon_start = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = AgentConfig{};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = AgentConfig{};
  cfg.use_mask = false;
  cfg.use_spotq = true;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(SelectAction, EpsilonOneIsUniformOverAllowed) {
  Observation s;
  for (std::uint32_t a = 0; a < 4; ++a) s.keys.push_back(QKey{1, a});
  s.mask = ActionMask{{1, 0, 1, 1}};
  TabularQ q;
  Rng explore(1);
  Rng tie(2);
  std::array<int, 4> counts{};
  for (int i = 0; i < 9000; ++i) ++counts[select_action(q, s, true, 1.0, explore, tie)];
  EXPECT_EQ(counts[1], 0);
  for (int a : {0, 2, 3}) EXPECT_NEAR(counts[a] / 9000.0, 1.0 / 3.0, 0.03);
  // Without the mask every action is a candidate.
  std::set<ActionId> seen;
  for (int i = 0; i < 500; ++i) seen.insert(select_action(q, s, false, 1.0, explore, tie));
  EXPECT_EQ(seen.size(), 4u);
}

TEST(SelectAction, EpsilonZeroIsMaskedGreedy) {
  Observation s;
  for (std::uint32_t a = 0; a < 3; ++a) s.keys.push_back(QKey{1, a});
  s.mask = ActionMask{{1, 0, 1}};
  TabularQ q;
  q.set(s.keys[0], 0.2);
  q.set(s.keys[1], 0.9);
  q.set(s.keys[2], 0.5);
  Rng explore(1);
  Rng tie(2);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(select_action(q, s, true, 0.0, explore, tie), 2u);
    EXPECT_EQ(select_action(q, s, false, 0.0, explore, tie), 1u);
  }
}

TEST(Seeds, RangesAreDisjoint) {
  for (std::uint64_t run = 1; run < 20; ++run) {
    for (std::uint64_t k = 0; k < 200; ++k) {
      EXPECT_EQ(seed_range(training_seed(run, k)), SeedRange::Training);
      EXPECT_EQ(seed_range(validation_seed(run, k)), SeedRange::Validation);
      EXPECT_EQ(seed_range(evaluation_seed(run, k)), SeedRange::Evaluation);
    }
  }
  EXPECT_NE(training_seed(1, 0), training_seed(2, 0));
  EXPECT_NE(training_seed(1, 0), training_seed(1, 1));
}

TEST(RunTraining, DeterministicForAFixedSeed) {
  const AgentConfig cfg = small_config(RewardKind::Trial, true, true);
  const TrainingResult a = run_training(block_factory(), cfg);
  const TrainingResult b = run_training(block_factory(), cfg);
  EXPECT_EQ(a.trials, b.trials);
  EXPECT_EQ(a.q->sorted_entries(), b.q->sorted_entries());
  AgentConfig other = cfg;
  other.seed = 2;
  EXPECT_NE(run_training(block_factory(), other).q->sorted_entries(), a.q->sorted_entries());
}

TEST(RunTraining, ZeroBudgetProducesNothing) {
  const TrainingResult r = run_training(grid_factory(), small_config(RewardKind::Sparse, true, true, 0));
  EXPECT_TRUE(r.trials.empty());
  EXPECT_TRUE(r.steps.empty());
  EXPECT_EQ(r.actions, 0u);
  EXPECT_EQ(r.q->size(), 0u);
}

TEST(RunTraining, SituationRemovalEndsTrialsWithoutTerminalBonus) {
  const TrainingResult r = run_training(block_factory(), small_config(RewardKind::Trial, false, false, 5000));
  ASSERT_FALSE(r.trials.empty());
  for (std::size_t i = 0; i < r.trials.size(); ++i) EXPECT_EQ(r.trials[i].trial_id, i);
  std::size_t removals = 0;
  std::size_t step = 0;
  for (const TrialRecord& t : r.trials) {
    const StepRecord& last = r.steps[step + static_cast<std::size_t>(t.actions_taken) - 1];
    EXPECT_EQ(last.trial_id, t.trial_id);
    if (t.termination == Termination::SituationRemoval) {
      ++removals;
      EXPECT_FALSE(t.completed);
      EXPECT_EQ(last.instant_reward, 0.0);
      ASSERT_TRUE(last.trial_reward.has_value());
      EXPECT_EQ(*last.trial_reward, 0.0);
    }
    step += static_cast<std::size_t>(t.actions_taken);
  }
  EXPECT_GT(removals, 0u);
}

TEST(RunTraining, CompletedTrialsDoubleTheFinalReward) {
  const TrainingResult r = run_training(block_factory(), small_config(RewardKind::Trial, true, true, 20000));
  std::size_t step = 0;
  std::size_t completed = 0;
  for (const TrialRecord& t : r.trials) {
    const StepRecord& last = r.steps[step + static_cast<std::size_t>(t.actions_taken) - 1];
    if (t.completed && last.trial_reward) {
      ++completed;
      EXPECT_DOUBLE_EQ(*last.trial_reward, 2.0 * last.instant_reward);
    }
    step += static_cast<std::size_t>(t.actions_taken);
  }
  EXPECT_GT(completed, 0u);
}

TEST(RunTraining, MaskedRunsNeverExecuteMaskedActions) {
  const TrainingResult block = run_training(block_factory(), small_config(RewardKind::Progress, true, false, 5000));
  EXPECT_EQ(block.masked_actions_executed, 0u);
  AgentConfig g = small_config(RewardKind::Sparse, true, true, 5000);
  g.reward = RewardConfig::grid_world_defaults();
  const TrainingResult grid = run_training(grid_factory(), g);
  EXPECT_EQ(grid.masked_actions_executed, 0u);
  EXPECT_EQ(grid.lava_entries, 0u);
  AgentConfig nomask = g;
  nomask.use_mask = nomask.use_spotq = false;
  const TrainingResult free = run_training(grid_factory(), nomask);
  EXPECT_GT(free.masked_actions_executed, 0u);
}

TEST(Evaluate, NoCompletionsMeansZeroEfficiency) {
  TabularQ q;  // all-zero table: greedy keeps the lowest-index ties random
  const EvalSummary s = evaluate(q, grid_factory(), 5, 3, true);
  EXPECT_EQ(s.trials, 5u);
  if (s.completed == 0) EXPECT_EQ(s.mean_efficiency, 0.0);
  TrialRecord failed;
  failed.actions_taken = 10;
  failed.ideal_actions = 5;
  const EvalSummary none = summarize({failed, failed});
  EXPECT_EQ(none.completion_rate, 0.0);
  EXPECT_EQ(none.mean_efficiency, 0.0);
  TrialRecord done = failed;
  done.completed = true;
  const EvalSummary half = summarize({failed, done});
  EXPECT_DOUBLE_EQ(half.completion_rate, 0.5);
  EXPECT_DOUBLE_EQ(half.mean_efficiency, 0.5);
}

TEST(Evaluate, DeterministicPerSeed) {
  const TrainingResult r = run_training(block_factory(), small_config(RewardKind::Progress, true, true, 3000));
  const EvalSummary a = evaluate(*r.q, block_factory(), 20, 11);
  const EvalSummary b = evaluate(*r.q, block_factory(), 20, 11);
  EXPECT_EQ(a.records, b.records);
}

TEST(TrialRecord, EfficiencyClampsToOne) {
  TrialRecord t;
  t.actions_taken = 4;
  t.ideal_actions = 6;
  EXPECT_DOUBLE_EQ(t.efficiency(), 1.0);
  t.actions_taken = 12;
  EXPECT_DOUBLE_EQ(t.efficiency(), 0.5);
}

}  // namespace
}  // namespace spot
