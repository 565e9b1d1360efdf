#pragma once

// Trial-aware experience replay.
//
// Candidates are kept sorted by surprise |reward - predicted_q| (largest
// first) and sampled by rank from a power law P(r) ~ (r + 1)^-exponent.
// With probability type_filter_prob the candidates are first restricted to
// experiences of the same action type as the newest experience whose success
// flag differs from it. Surprise is recorded once and only changes when a
// trial is finalized; sampling never refreshes it.

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "spot/rewards.hpp"
#include "spot/spotq.hpp"

namespace spot {

struct Experience {
  std::shared_ptr<const Observation> state;
  ActionId action_id = 0;
  ActionType action_type = ActionType::Grasp;
  double instant_reward = 0.0;
  std::optional<double> trial_reward;
  double predicted_q = 0.0;
  bool success = false;
  std::uint64_t trial_id = 0;
  std::uint32_t step_index = 0;
  std::shared_ptr<const Observation> next_state;
  bool terminal = false;

  double training_reward() const { return trial_reward.value_or(instant_reward); }
  double surprise() const;
};

class ReplayOrderError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnknownTrialError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class EmptyBufferError : public std::runtime_error {
 public:
  EmptyBufferError() : std::runtime_error("replay buffer has no sampling candidates") {}
};

struct ReplayConfig {
  std::size_t capacity = 100000;
  double per_exponent = 2.0;
  double type_filter_prob = 0.95;
  // Only finalized trials are sampling candidates (trial reward kinds).
  bool finalized_only = false;
};

class ReplayBuffer {
 public:
  /// Sequence numbers are stable for the lifetime of an experience.
  using Index = std::uint64_t;

  explicit ReplayBuffer(ReplayConfig cfg = {});
  ~ReplayBuffer();
  ReplayBuffer(ReplayBuffer&&) noexcept;
  ReplayBuffer& operator=(ReplayBuffer&&) noexcept;

  const ReplayConfig& config() const { return cfg_; }

  /// Appends; evicts the oldest whole trial when full. Throws
  /// ReplayOrderError on a decreasing trial id or non-increasing step index.
  Index push(Experience e);

  /// Fills trial_reward for every stored step of the trial (trial or
  /// discounted backfill, by cfg.kind). Idempotent.
  void finalize_trial(std::uint64_t trial_id, bool completed, const RewardConfig& cfg);
  bool is_finalized(std::uint64_t trial_id) const;

  Index sample(Rng& rng, ActionType last_action_type, bool last_success) const;
  /// Samples against the newest stored experience.
  Index sample(Rng& rng) const;

  /// Power-law rank draw over n sorted candidates.
  std::size_t draw_rank(Rng& rng, std::size_t n) const;
  /// Probability mass of rank r among n candidates.
  double rank_probability(std::size_t r, std::size_t n) const;

  /// Candidate indices in surprise order (largest first).
  std::vector<Index> surprise_order() const;

  const Experience& at(Index i) const;
  bool contains(Index i) const;
  const Experience& newest() const;
  std::size_t size() const { return experiences_.size(); }
  bool empty() const { return experiences_.empty(); }
  std::size_t candidate_count() const;
  Index first_index() const { return first_index_; }

  /// One JSON object per line, fields in Experience declaration order.
  void dump(std::ostream& out) const;
  static ReplayBuffer restore(std::istream& in, ReplayConfig cfg);

 private:
  struct RankIndex;

  void evict_front_trial(std::uint64_t incoming_trial);
  void index_insert(Index i);
  void index_erase(Index i);
  int group_of(ActionType t, bool success) const;
  void ensure_mass_table(std::size_t n) const;

  ReplayConfig cfg_;
  std::deque<Experience> experiences_;
  Index first_index_ = 0;
  std::optional<std::uint64_t> newest_trial_;
  std::unique_ptr<RankIndex> rank_;
  mutable std::vector<double> cumulative_mass_;
};

/// Huber losses and Q updates toward the executed target and, when present,
/// the zero-reward masked target. Returns the summed loss.
double learn_from(const Experience& e, double reward, QFunction& q, const MaskFn& mask_fn,
                  const RewardConfig& cfg, double learning_rate);

/// Samples one experience and learns from it with its training reward.
double train_step(const ReplayBuffer& buf, QFunction& q, const MaskFn& mask_fn,
                  const RewardConfig& cfg, double learning_rate, Rng& rng);

}  // namespace spot
