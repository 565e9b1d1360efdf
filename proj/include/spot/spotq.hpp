#pragma once

// Dynamic action spaces and the SPOT-Q learning target.
//
// A QFunction is addressed through an Observation: for every discrete action
// id the environment names a QKey (context, slot). Tabular environments use
// (exact state, action id); the block world uses action-centred local
// contexts so that values generalize across cells.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "spot/rewards.hpp"

namespace spot {

using ActionId = std::uint32_t;
using Rng = std::mt19937_64;

/// M(s, a) over every discrete action; 1 where the action is not certain to fail.
struct ActionMask {
  std::vector<std::uint8_t> allowed;

  static ActionMask all(std::size_t n) { return ActionMask{std::vector<std::uint8_t>(n, 1)}; }

  std::size_t size() const { return allowed.size(); }
  bool operator[](ActionId a) const { return allowed[a] != 0; }
  std::size_t count() const;
  bool any() const { return count() > 0; }
  bool operator==(const ActionMask&) const = default;
};

struct QKey {
  std::uint64_t context = 0;
  std::uint32_t slot = 0;
  bool operator==(const QKey&) const = default;
  auto operator<=>(const QKey&) const = default;
};

struct QKeyHash {
  std::size_t operator()(const QKey& k) const noexcept {
    std::uint64_t h = k.context ^ (0x9e3779b97f4a7c15ULL * (k.slot + 1));
    h ^= h >> 31;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 29;
    return static_cast<std::size_t>(h);
  }
};

/// What the learner sees of a state: one QKey per action plus the
/// environment's certain-failure mask.
struct Observation {
  std::vector<QKey> keys;
  ActionMask mask;

  std::size_t num_actions() const { return keys.size(); }
};

class EmptyActionSpaceError : public std::runtime_error {
 public:
  EmptyActionSpaceError() : std::runtime_error("empty dynamic action space") {}
};

class QFunction {
 public:
  virtual ~QFunction() = default;

  virtual double value(const Observation& s, ActionId a) const = 0;
  virtual void update(const Observation& s, ActionId a, double target, double learning_rate) = 0;
  virtual std::unique_ptr<QFunction> snapshot() const = 0;

  std::vector<double> values(const Observation& s) const;
};

/// One value per distinct QKey, default-initialized to zero. Updates blend
/// toward the target: Q <- Q + lr * (target - Q).
class TabularQ final : public QFunction {
 public:
  TabularQ() = default;

  double value(const Observation& s, ActionId a) const override;
  void update(const Observation& s, ActionId a, double target, double learning_rate) override;
  std::unique_ptr<QFunction> snapshot() const override;

  double value(const QKey& k) const;
  void set(const QKey& k, double v) { table_[k] = v; }
  std::size_t size() const { return table_.size(); }

  /// Sorted "context slot value" text records, one per line.
  void save(std::ostream& out) const;
  static TabularQ load(std::istream& in);

  /// Entries sorted by key; stable across platforms for diffs and equality.
  std::vector<std::pair<QKey, double>> sorted_entries() const;

 private:
  std::unordered_map<QKey, double, QKeyHash> table_;
};

using MaskFn = std::function<ActionMask(const Observation&)>;

/// Mask function reading the environment mask carried by the observation.
ActionMask observed_mask(const Observation& s);
/// Mask function that allows every action.
ActionMask unrestricted_mask(const Observation& s);

/// Allowed action with the highest value; exact ties are broken uniformly
/// with tie_rng (the stream is untouched when there is a single maximizer).
ActionId masked_argmax(const QFunction& q, const Observation& s, const ActionMask& mask, Rng& tie_rng);

/// Lowest-index maximizer over all actions. Used inside targets, which are
/// pure functions of a Q snapshot.
ActionId greedy_action(const QFunction& q, const Observation& s);
/// Lowest-index maximizer over the allowed actions.
ActionId greedy_action(const QFunction& q, const Observation& s, const ActionMask& mask);

struct SpotQTargets {
  double executed_target = 0.0;
  std::optional<double> masked_target;
  std::optional<ActionId> masked_action;
};

/// Executed target r + gamma * Q(s', pi(s')) (no bootstrap when terminal),
/// where pi(s') is the lowest-index greedy action among those mask_fn(s')
/// allows: the masked policy under SPOT-Q, plain argmax otherwise.
/// When the unrestricted greedy action at s is disallowed by mask_fn(s), an
/// additional zero-reward target gamma * Q(s', pi(s)) is emitted for it.
SpotQTargets spotq_targets(const Observation& state, double reward, const Observation& next_state,
                           bool terminal, const QFunction& q, const MaskFn& mask_fn,
                           const RewardConfig& cfg);

/// Smooth L1 with threshold 1.
double huber_loss(double prediction, double target);

}  // namespace spot
