#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "spot/rewards.hpp"

namespace spot {
namespace {

StepOutcome outcome(ActionType t, bool success, double before, double after) {
  StepOutcome o;
  o.action_type = t;
  o.success = success;
  o.progress_before = before;
  o.progress_after = after;
  return o;
}

// Independent forward evaluation of Eq. 6: for a step with nonzero reward,
// sum the discounted rewards of the unbroken nonzero run that starts there,
// plus one more copy of the final reward when the run reaches the end of a
// completed trial.
std::vector<double> forward_trial_oracle(const std::vector<double>& r, bool completed, double gamma) {
  std::vector<double> out(r.size(), 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) {
    if (r[t] == 0.0) continue;
    double sum = 0.0;
    double discount = 1.0;
    std::size_t k = t;
    for (; k < r.size() && r[k] != 0.0; ++k) {
      sum += discount * r[k];
      if (k + 1 < r.size() && r[k + 1] != 0.0) discount *= gamma;
    }
    if (k == r.size() && completed) sum += discount * r.back();
    out[t] = sum;
  }
  return out;
}

TEST(BaseReward, PaperFootnoteWeights) {
  const RewardConfig cfg = RewardConfig::block_world_defaults();
  EXPECT_DOUBLE_EQ(base_reward(outcome(ActionType::Grasp, true, 0, 0), cfg), 1.0);
  EXPECT_DOUBLE_EQ(base_reward(outcome(ActionType::Push, false, 0, 0), cfg), 0.0);
  EXPECT_DOUBLE_EQ(base_reward(outcome(ActionType::Push, true, 0, 0), cfg), 0.1);
}

TEST(BaseReward, MissingWeightIsConfigError) {
  const RewardConfig cfg = RewardConfig::block_world_defaults();
  EXPECT_THROW(base_reward(outcome(ActionType::Forward, true, 0, 0), cfg), ConfigError);
}

TEST(SrIndicator, Examples) {
  EXPECT_EQ(sr_indicator(outcome(ActionType::Grasp, true, 0.5, 0.75)), 1);
  EXPECT_EQ(sr_indicator(outcome(ActionType::Grasp, true, 0.75, 0.25)), 0);
  EXPECT_EQ(sr_indicator(outcome(ActionType::Grasp, true, 0.5, 0.5)), 1);
}

TEST(SrReward, Examples) {
  const RewardConfig cfg = RewardConfig::block_world_defaults();
  EXPECT_DOUBLE_EQ(sr_reward(outcome(ActionType::Grasp, true, 0.25, 0.5), cfg), 1.0);
  EXPECT_DOUBLE_EQ(sr_reward(outcome(ActionType::Place, true, 0.75, 0.25), cfg), 0.0);
  EXPECT_DOUBLE_EQ(sr_reward(outcome(ActionType::Grasp, false, 0.5, 0.5), cfg), 0.0);
}

TEST(ProgressReward, Examples) {
  const RewardConfig cfg = RewardConfig::block_world_defaults();
  EXPECT_DOUBLE_EQ(progress_reward(outcome(ActionType::Place, true, 0.25, 0.5), cfg), 0.5);
  EXPECT_DOUBLE_EQ(progress_reward(outcome(ActionType::Place, true, 0.75, 1.0), cfg), 1.0);
  EXPECT_DOUBLE_EQ(progress_reward(outcome(ActionType::Grasp, true, 0.75, 0.5), cfg), 0.0);
}

TEST(SparseReward, OnlyTaskCompletionPays) {
  StepOutcome o = outcome(ActionType::Forward, true, 0.2, 0.4);
  EXPECT_DOUBLE_EQ(sparse_reward(o), 0.0);
  o.terminal = o.task_complete = true;
  o.progress_after = 1.0;
  EXPECT_DOUBLE_EQ(sparse_reward(o), 1.0);
}

TEST(InstantReward, DispatchesOnKind) {
  RewardConfig cfg = RewardConfig::block_world_defaults();
  const StepOutcome o = outcome(ActionType::Place, true, 0.25, 0.5);
  cfg.kind = RewardKind::Base;
  EXPECT_DOUBLE_EQ(instant_reward(o, cfg, false), 1.0);
  cfg.kind = RewardKind::Progress;
  EXPECT_DOUBLE_EQ(instant_reward(o, cfg, false), 0.5);
  cfg.kind = RewardKind::Trial;
  cfg.trial_inner = RewardKind::SR;
  EXPECT_DOUBLE_EQ(instant_reward(o, cfg, false), 1.0);
  cfg.kind = RewardKind::Discounted;
  EXPECT_DOUBLE_EQ(instant_reward(o, cfg, false), 0.0);
  EXPECT_DOUBLE_EQ(instant_reward(o, cfg, true), 0.5);
}

TEST(RewardConfig, ValidateRejectsBadValues) {
  RewardConfig cfg = RewardConfig::block_world_defaults();
  EXPECT_NO_THROW(cfg.validate());
  cfg.weights[ActionType::Push] = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RewardConfig::block_world_defaults();
  cfg.trial_discount = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RewardConfig::block_world_defaults();
  cfg.learn_discount = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RewardConfig::block_world_defaults();
  cfg.kind = RewardKind::Trial;
  cfg.trial_inner = RewardKind::Base;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TrialBackfill, SpecExample) {
  const std::vector<double> r{1, 0, 1, 1};
  const auto out = trial_backfill(r, true, 0.65);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_NEAR(out[0], 1.0, 1e-12);
  EXPECT_NEAR(out[1], 0.0, 1e-12);
  EXPECT_NEAR(out[2], 2.3, 1e-12);
  EXPECT_NEAR(out[3], 2.0, 1e-12);
}

TEST(TrialBackfill, EdgeCases) {
  EXPECT_TRUE(trial_backfill(std::vector<double>{}, true, 0.65).empty());
  const auto zeros = trial_backfill(std::vector<double>{0, 0, 0}, true, 0.65);
  for (double v : zeros) EXPECT_EQ(v, 0.0);
  // No terminal bonus without completion.
  EXPECT_DOUBLE_EQ(trial_backfill(std::vector<double>{0.5}, false, 0.65)[0], 0.5);
  EXPECT_DOUBLE_EQ(trial_backfill(std::vector<double>{0.5}, true, 0.65)[0], 1.0);
}

TEST(TrialBackfill, MatchesForwardOracleOnRandomTrials) {
  std::mt19937_64 rng(12345);
  std::uniform_int_distribution<int> len(1, 30);
  std::uniform_real_distribution<double> value(0.01, 1.5);
  std::bernoulli_distribution zero(0.3);
  std::bernoulli_distribution done(0.5);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> r(static_cast<std::size_t>(len(rng)));
    for (double& v : r) v = zero(rng) ? 0.0 : value(rng);
    const bool completed = done(rng);
    const auto got = trial_backfill(r, completed, 0.65);
    const auto want = forward_trial_oracle(r, completed, 0.65);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12) << "trial " << trial;
  }
}

TEST(TrialBackfill, ConstantRewardClosedForm) {
  // r * sum_{k=0}^{n-1-t} gamma^k plus the doubled terminal term gamma^{n-1-t} r.
  const double r = 0.7;
  const double g = 0.65;
  for (int n = 1; n <= 20; ++n) {
    const auto out = trial_backfill(std::vector<double>(static_cast<std::size_t>(n), r), true, g);
    for (int t = 0; t < n; ++t) {
      const int m = n - 1 - t;
      const double closed = r * (1.0 - std::pow(g, m + 1)) / (1.0 - g) + r * std::pow(g, m);
      EXPECT_NEAR(out[static_cast<std::size_t>(t)], closed, 1e-12);
    }
  }
}

TEST(TrialBackfill, ZeroCutsPropagationRegardlessOfFuture) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> value(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(12);
    for (double& v : r) v = value(rng);
    const std::size_t cut = trial % r.size();
    r[cut] = 0.0;
    const auto a = trial_backfill(r, true, 0.65);
    for (std::size_t i = cut + 1; i < r.size(); ++i) r[i] = value(rng);
    const auto b = trial_backfill(r, true, 0.65);
    EXPECT_EQ(a[cut], 0.0);
    for (std::size_t i = 0; i <= cut; ++i) EXPECT_EQ(a[i], b[i]);
  }
}

TEST(DiscountedBackfill, Examples) {
  const auto out = discounted_backfill(std::vector<double>{0, 0, 1.0}, 0.9);
  EXPECT_NEAR(out[0], 0.81, 1e-12);
  EXPECT_NEAR(out[1], 0.9, 1e-12);
  EXPECT_NEAR(out[2], 1.0, 1e-12);
  for (double v : discounted_backfill(std::vector<double>{0, 0, 0}, 0.9)) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(discounted_backfill(std::vector<double>{0.4}, 0.9), std::vector<double>{0.4});
}

TEST(RewardProperties, ShapedRewardsAreNested) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const RewardConfig cfg = RewardConfig::block_world_defaults();
  const ActionType types[] = {ActionType::Grasp, ActionType::Push, ActionType::Place};
  for (int i = 0; i < 5000; ++i) {
    const StepOutcome o = outcome(types[i % 3], coin(rng), p(rng), p(rng));
    const double b = base_reward(o, cfg);
    const double s = sr_reward(o, cfg);
    const double pr = progress_reward(o, cfg);
    EXPECT_LE(0.0, s);
    EXPECT_LE(s, b);
    EXPECT_LE(0.0, pr);
    EXPECT_LE(pr, s);
  }
}

TEST(RewardProperties, SrIndicatorShiftInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> p(0.0, 0.5);
  for (int i = 0; i < 1000; ++i) {
    const double a = p(rng);
    const double b = p(rng);
    const double c = p(rng);
    EXPECT_EQ(sr_indicator(outcome(ActionType::Grasp, true, a, b)),
              sr_indicator(outcome(ActionType::Grasp, true, a + c, b + c)));
  }
}

TEST(RewardProperties, DiscountedAgreesWithTrialOnTerminalOnlyReward) {
  // [0,...,0,r]: trial rewards are cut by the zeros, discounted ones are not;
  // they agree on the final step up to the terminal doubling.
  const std::vector<double> r{0, 0, 0, 0.8};
  const auto d = discounted_backfill(r, 0.65);
  const auto t = trial_backfill(r, false, 0.65);
  EXPECT_DOUBLE_EQ(d.back(), t.back());
  EXPECT_DOUBLE_EQ(trial_backfill(r, true, 0.65).back(), 2.0 * d.back());
}

}  // namespace
}  // namespace spot
