#pragma once

// Lava-crossing grid world. The agent moves forward or turns on a walled
// grid with two vertical lava walls, each broken by a single-cell gap, and
// must reach the goal in the far corner.
//
// Text layout: one character per cell, '.' empty, '#' wall, 'L' lava,
// 'G' goal, agent as one of "^>v<" (standing on an empty cell).

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spot/environment.hpp"

namespace spot::grid {

enum class Cell : std::uint8_t { Empty, Wall, Lava, Goal };
enum class Heading : std::uint8_t { North, East, South, West };
enum class Action : ActionId { Forward = 0, TurnLeft = 1, TurnRight = 2 };

inline constexpr std::size_t kNumActions = 3;

struct Pose {
  int x = 0;
  int y = 0;
  Heading heading = Heading::East;
  bool operator==(const Pose&) const = default;
};

struct GridWorld {
  int width = 9;
  int height = 9;
  std::vector<Cell> cells;
  Pose agent;
  Pose start;
  int consecutive_turns = 0;
  int step_count = 0;
  int action_limit = 100;
  std::uint64_t rng_seed = 0;
  bool terminal = false;

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  Cell at(int x, int y) const { return in_bounds(x, y) ? cells[y * width + x] : Cell::Wall; }
  Cell& at(int x, int y) { return cells[y * width + x]; }
  /// Cell in front of the agent.
  Cell facing() const;
};

struct DistanceField {
  static constexpr int kUnreachable = -1;
  int width = 0;
  int height = 0;
  std::vector<int> dist;

  int at(int x, int y) const { return dist[y * width + x]; }
};

struct GenerateOptions {
  int width = 9;
  int height = 9;
  int action_limit = 100;
};

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic per seed; regenerates until the goal is reachable.
GridWorld generate(std::uint64_t seed, const GenerateOptions& opts = {});

/// BFS distances from the goal over 4-neighbours that are neither lava nor
/// wall. Throws LayoutError when the start is unreachable.
DistanceField wavefront(const GridWorld& g);

/// 1 - dist(agent) / dist(start).
double progress(const GridWorld& g, const DistanceField& field);

struct StepResult {
  GridWorld next;
  StepOutcome outcome;
  Termination event = Termination::None;
};

StepResult step(const GridWorld& g, Action action, const DistanceField& field);

/// Hard reset rule: progress decreased or more than two consecutive turns.
bool situation_removal_check(const GridWorld& g, double progress_before, double progress_after);

/// Forward is masked when facing lava or a wall; turns are always allowed.
ActionMask mask(const GridWorld& g);

/// Shortest-path forward count plus the fewest turns along any such path,
/// from a planner over (x, y, heading).
int ideal_actions(const GridWorld& g);

Pose advance(const Pose& p);
Heading turn_left(Heading h);
Heading turn_right(Heading h);

std::string to_text(const GridWorld& g);
GridWorld from_text(std::string_view text, int action_limit = 100);

/// Environment adapter. A fixed layout, when given, replaces generation on
/// every reset.
/// Q keys: Local keys the pose plus the contents of every lava column at or
/// east of the agent (the only layout details the rest of an eastward
/// crossing depends on); Exact keys the pose plus the whole layout.
enum class Encoding { Local, Exact };

class GridWorldEnv final : public Environment {
 public:
  explicit GridWorldEnv(GenerateOptions opts = {}, Encoding encoding = Encoding::Local);
  explicit GridWorldEnv(GridWorld fixed_layout, Encoding encoding = Encoding::Local);

  std::string name() const override { return "gridworld"; }
  void reset(std::uint64_t seed) override;
  std::size_t num_actions() const override { return kNumActions; }
  Observation observe() const override;
  ActionMask mask() const override { return grid::mask(world_); }
  ActionType action_type(ActionId a) const override;
  Transition step(ActionId a) override;
  bool situation_removal(const StepOutcome& o) const override;
  int ideal_actions() const override { return ideal_; }
  double progress() const override { return grid::progress(world_, field_); }
  bool terminal() const override { return world_.terminal; }
  std::string serialize() const override { return to_text(world_); }

  const GridWorld& world() const { return world_; }
  const DistanceField& field() const { return field_; }

 private:
  void adopt(GridWorld g);

  GenerateOptions opts_;
  std::optional<GridWorld> fixed_;
  GridWorld world_;
  DistanceField field_;
  Encoding encoding_ = Encoding::Local;
  std::uint64_t layout_hash_ = 0;
  std::vector<std::uint64_t> next_lava_;
  int ideal_ = 0;
};

}  // namespace spot::grid
