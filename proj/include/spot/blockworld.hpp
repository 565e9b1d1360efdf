#pragma once

// Abstract tabletop with grasp, place and push primitives over a small grid
// of block stacks. Placing onto a stack of height h >= 2 topples it with
// probability min(cap, rate * (h - 1)); pushing a stack of height >= 2
// always topples it. Toppled blocks scatter to the nearest empty cells.
//
// Text state: optional "grid: W H", "task: stack|row|clear K",
// "limit: N", "step: N" and "removed: [ids]" header lines, then one
// "cell x y: [ids bottom->top]" line per occupied cell and a
// "gripper: id|empty" line.

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spot/environment.hpp"

namespace spot::blocks {

enum class Task { StackOfK, RowOfK, ClearAll };
enum class Direction { North, East, South, West };

std::string_view to_string(Task t);
Task task_from_string(std::string_view name);

/// Action slots per cell: grasp, place, then push north/east/south/west.
inline constexpr int kSlotsPerCell = 6;

struct BlockAction {
  ActionType type = ActionType::Grasp;
  int x = 0;
  int y = 0;
  std::optional<Direction> direction;  // Push only
};

struct BlockState {
  int width = 4;
  int height = 4;
  std::vector<std::vector<int>> stacks;  // per cell, bottom -> top
  std::optional<int> gripper;
  std::vector<int> removed;  // cleared off the table
  int num_blocks = 4;
  Task task = Task::StackOfK;
  int goal_size = 4;
  int step_count = 0;
  int action_limit = 50;
  double topple_rate = 0.1;
  double topple_cap = 0.5;
  Rng rng;
  bool terminal = false;

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  const std::vector<int>& stack(int x, int y) const { return stacks[y * width + x]; }
  std::vector<int>& stack(int x, int y) { return stacks[y * width + x]; }
  int stack_height(int x, int y) const { return static_cast<int>(stack(x, y).size()); }
  std::size_t num_actions() const { return static_cast<std::size_t>(width * height * kSlotsPerCell); }
};

struct ResetOptions {
  int width = 4;
  int height = 4;
  int num_blocks = 4;
  int goal_size = 4;
  int action_limit = 0;  // 0: 50 for stacks and rows, 30 for clearing
  double topple_rate = 0.1;
  double topple_cap = 0.5;
};

class BlockWorldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Blocks on distinct random cells, empty gripper, deterministic per seed.
BlockState reset(std::uint64_t seed, Task task, const ResetOptions& opts = {});

struct StepResult {
  BlockState next;
  StepOutcome outcome;
  Termination event = Termination::None;
};

StepResult step(const BlockState& s, const BlockAction& a);

/// Integer progress measure: tallest stack, longest row of single blocks, or
/// blocks removed.
int progress_level(const BlockState& s);
double progress(const BlockState& s);

/// Certain-failure mask over encoded action ids.
ActionMask mask(const BlockState& s);

/// Ideal action counts: 2(K-1) for a stack of K, K for a row of K, one per
/// block when clearing.
int ideal_actions(Task task, int num_blocks = 4, int goal_size = 4);

double topple_probability(const BlockState& s, int stack_height);

ActionId encode_action(const BlockState& s, const BlockAction& a);
BlockAction decode_action(const BlockState& s, ActionId id);

/// Longest straight run through (x, y) of height-1 cells, counting (x, y)
/// as a single block regardless of its contents.
int run_through(const BlockState& s, int x, int y);

std::string to_text(const BlockState& s);
BlockState from_text(std::string_view text, std::uint64_t seed = 0);

/// Q keys: Local gives action-centred contexts shared across cells
/// (one-hot linear features); Exact keys the full canonical occupancy.
enum class Encoding { Local, Exact };

class BlockWorldEnv final : public Environment {
 public:
  BlockWorldEnv(Task task, ResetOptions opts = {}, Encoding encoding = Encoding::Local);
  /// Scripted scenario: every reset restores this state (topple draws reseeded).
  BlockWorldEnv(BlockState fixed, Encoding encoding = Encoding::Local);

  std::string name() const override { return "blockworld"; }
  void reset(std::uint64_t seed) override;
  std::size_t num_actions() const override { return state_.num_actions(); }
  Observation observe() const override;
  ActionMask mask() const override { return blocks::mask(state_); }
  ActionType action_type(ActionId a) const override;
  Transition step(ActionId a) override;
  bool situation_removal(const StepOutcome& o) const override;
  int ideal_actions() const override;
  double progress() const override { return blocks::progress(state_); }
  bool terminal() const override { return state_.terminal; }
  std::string serialize() const override { return to_text(state_); }

  const BlockState& state() const { return state_; }

 private:
  Task task_;
  ResetOptions opts_;
  Encoding encoding_;
  std::optional<BlockState> fixed_;
  BlockState state_;
};

}  // namespace spot::blocks
