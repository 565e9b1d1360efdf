#include "spot/gridworld.hpp"

#include <array>
#include <deque>
#include <queue>
#include <random>
#include <sstream>
#include <tuple>

namespace spot {

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::None: return "none";
    case Termination::Complete: return "complete";
    case Termination::ActionLimit: return "action_limit";
    case Termination::SituationRemoval: return "situation_removal";
    case Termination::LavaDeath: return "lava_death";
  }
  return "?";
}

}  // namespace spot

namespace spot::grid {

namespace {

constexpr std::array<int, 4> kDx = {0, 1, 0, -1};
constexpr std::array<int, 4> kDy = {-1, 0, 1, 0};
constexpr std::string_view kHeadingChars = "^>v<";

bool passable(Cell c) { return c == Cell::Empty || c == Cell::Goal; }

std::pair<int, int> goal_of(const GridWorld& g) {
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (g.at(x, y) == Cell::Goal) return {x, y};
    }
  }
  throw LayoutError("layout has no goal cell");
}

}  // namespace

Cell GridWorld::facing() const {
  const Pose p = advance(agent);
  return at(p.x, p.y);
}

Pose advance(const Pose& p) {
  const int h = static_cast<int>(p.heading);
  return Pose{p.x + kDx[h], p.y + kDy[h], p.heading};
}

Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }

GridWorld generate(std::uint64_t seed, const GenerateOptions& opts) {
  if (opts.width < 7 || opts.height < 4) throw LayoutError("grid too small for two lava walls");
  Rng rng(mix64(seed));
  std::uniform_int_distribution<int> gap_row(1, opts.height - 2);
  const std::array<int, 2> lava_columns = {opts.width / 3, 2 * opts.width / 3};

  for (;;) {
    GridWorld g;
    g.width = opts.width;
    g.height = opts.height;
    g.action_limit = opts.action_limit;
    g.rng_seed = seed;
    g.cells.assign(static_cast<std::size_t>(g.width * g.height), Cell::Empty);
    for (int x = 0; x < g.width; ++x) g.at(x, 0) = g.at(x, g.height - 1) = Cell::Wall;
    for (int y = 0; y < g.height; ++y) g.at(0, y) = g.at(g.width - 1, y) = Cell::Wall;
    for (int column : lava_columns) {
      const int gap = gap_row(rng);
      for (int y = 1; y < g.height - 1; ++y) {
        if (y != gap) g.at(column, y) = Cell::Lava;
      }
    }
    g.at(g.width - 2, g.height - 2) = Cell::Goal;
    g.start = g.agent = Pose{1, 1, Heading::East};

    try {
      wavefront(g);
      return g;
    } catch (const LayoutError&) {
      continue;
    }
  }
}

DistanceField wavefront(const GridWorld& g) {
  DistanceField field{g.width, g.height,
                      std::vector<int>(static_cast<std::size_t>(g.width * g.height),
                                       DistanceField::kUnreachable)};
  const auto [gx, gy] = goal_of(g);
  std::deque<std::pair<int, int>> frontier;
  field.dist[gy * g.width + gx] = 0;
  frontier.emplace_back(gx, gy);
  while (!frontier.empty()) {
    const auto [x, y] = frontier.front();
    frontier.pop_front();
    const int d = field.at(x, y);
    for (int k = 0; k < 4; ++k) {
      const int nx = x + kDx[k];
      const int ny = y + kDy[k];
      if (!g.in_bounds(nx, ny) || !passable(g.at(nx, ny))) continue;
      int& nd = field.dist[ny * g.width + nx];
      if (nd != DistanceField::kUnreachable) continue;
      nd = d + 1;
      frontier.emplace_back(nx, ny);
    }
  }
  if (field.at(g.start.x, g.start.y) == DistanceField::kUnreachable) {
    throw LayoutError("start cannot reach the goal");
  }
  return field;
}

double progress(const GridWorld& g, const DistanceField& field) {
  const int start = field.at(g.start.x, g.start.y);
  const int here = field.at(g.agent.x, g.agent.y);
  if (here == DistanceField::kUnreachable || start <= 0) return 0.0;
  return 1.0 - static_cast<double>(here) / static_cast<double>(start);
}

StepResult step(const GridWorld& g, Action action, const DistanceField& field) {
  if (g.terminal) throw TerminalStateError();
  StepResult r{g, {}, Termination::None};
  GridWorld& n = r.next;
  StepOutcome& o = r.outcome;
  o.progress_before = progress(g, field);

  switch (action) {
    case Action::Forward: {
      o.action_type = ActionType::Forward;
      n.consecutive_turns = 0;
      const Pose ahead = advance(g.agent);
      const Cell target = g.at(ahead.x, ahead.y);
      if (target == Cell::Wall) break;
      n.agent = ahead;
      if (target == Cell::Lava) {
        n.terminal = true;
        r.event = Termination::LavaDeath;
      } else if (target == Cell::Goal) {
        n.terminal = true;
        r.event = Termination::Complete;
        o.task_complete = true;
      }
      break;
    }
    case Action::TurnLeft:
      o.action_type = ActionType::TurnLeft;
      n.agent.heading = turn_left(g.agent.heading);
      ++n.consecutive_turns;
      break;
    case Action::TurnRight:
      o.action_type = ActionType::TurnRight;
      n.agent.heading = turn_right(g.agent.heading);
      ++n.consecutive_turns;
      break;
  }

  ++n.step_count;
  if (!n.terminal && n.step_count >= n.action_limit) {
    n.terminal = true;
    r.event = Termination::ActionLimit;
  }
  o.progress_after = o.task_complete ? 1.0 : progress(n, field);
  o.success = o.progress_after > o.progress_before;
  o.terminal = n.terminal;
  return r;
}

bool situation_removal_check(const GridWorld& g, double progress_before, double progress_after) {
  return progress_after < progress_before || g.consecutive_turns > 2;
}

ActionMask mask(const GridWorld& g) {
  ActionMask m = ActionMask::all(kNumActions);
  const Cell ahead = g.facing();
  if (ahead == Cell::Lava || ahead == Cell::Wall) m.allowed[static_cast<ActionId>(Action::Forward)] = 0;
  return m;
}

int ideal_actions(const GridWorld& g) {
  // Lexicographic Dijkstra over poses: fewest forward moves, then fewest turns.
  using Cost = std::pair<int, int>;
  constexpr Cost kInf{1 << 29, 1 << 29};
  const auto index = [&](const Pose& p) {
    return (p.y * g.width + p.x) * 4 + static_cast<int>(p.heading);
  };
  std::vector<Cost> best(static_cast<std::size_t>(g.width * g.height * 4), kInf);
  using Item = std::tuple<int, int, int, int, int>;  // forwards, turns, x, y, heading
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  best[index(g.start)] = {0, 0};
  open.emplace(0, 0, g.start.x, g.start.y, static_cast<int>(g.start.heading));

  while (!open.empty()) {
    const auto [f, t, x, y, h] = open.top();
    open.pop();
    const Pose p{x, y, static_cast<Heading>(h)};
    if (Cost{f, t} != best[index(p)]) continue;
    if (g.at(x, y) == Cell::Goal) return f + t;

    const auto relax = [&](const Pose& q, Cost c) {
      if (c < best[index(q)]) {
        best[index(q)] = c;
        open.emplace(c.first, c.second, q.x, q.y, static_cast<int>(q.heading));
      }
    };
    relax(Pose{x, y, turn_left(p.heading)}, {f, t + 1});
    relax(Pose{x, y, turn_right(p.heading)}, {f, t + 1});
    const Pose ahead = advance(p);
    if (passable(g.at(ahead.x, ahead.y))) relax(ahead, {f + 1, t});
  }
  throw LayoutError("goal unreachable from start");
}

std::string to_text(const GridWorld& g) {
  std::string out;
  out.reserve(static_cast<std::size_t>((g.width + 1) * g.height));
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (g.agent.x == x && g.agent.y == y && g.at(x, y) != Cell::Lava) {
        out += kHeadingChars[static_cast<int>(g.agent.heading)];
        continue;
      }
      switch (g.at(x, y)) {
        case Cell::Empty: out += '.'; break;
        case Cell::Wall: out += '#'; break;
        case Cell::Lava: out += 'L'; break;
        case Cell::Goal: out += 'G'; break;
      }
    }
    out += '\n';
  }
  return out;
}

GridWorld from_text(std::string_view text, int action_limit) {
  GridWorld g;
  g.action_limit = action_limit;
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) rows.push_back(line);
  }
  if (rows.empty()) throw LayoutError("empty layout");
  g.height = static_cast<int>(rows.size());
  g.width = static_cast<int>(rows.front().size());
  g.cells.assign(static_cast<std::size_t>(g.width * g.height), Cell::Empty);
  int agents = 0;
  int goals = 0;
  for (int y = 0; y < g.height; ++y) {
    if (static_cast<int>(rows[y].size()) != g.width) throw LayoutError("ragged layout rows");
    for (int x = 0; x < g.width; ++x) {
      const char c = rows[y][x];
      switch (c) {
        case '.': break;
        case '#': g.at(x, y) = Cell::Wall; break;
        case 'L': g.at(x, y) = Cell::Lava; break;
        case 'G': g.at(x, y) = Cell::Goal; ++goals; break;
        default: {
          const auto h = kHeadingChars.find(c);
          if (h == std::string_view::npos) {
            throw LayoutError(std::string("unexpected layout character '") + c + "'");
          }
          g.agent = g.start = Pose{x, y, static_cast<Heading>(h)};
          ++agents;
        }
      }
    }
  }
  if (goals != 1) throw LayoutError("layout needs exactly one goal");
  if (agents != 1) throw LayoutError("layout needs exactly one agent");
  wavefront(g);
  return g;
}

GridWorldEnv::GridWorldEnv(GenerateOptions opts, Encoding encoding)
    : opts_(opts), encoding_(encoding) {
  reset(0);
}

GridWorldEnv::GridWorldEnv(GridWorld fixed_layout, Encoding encoding)
    : fixed_(std::move(fixed_layout)), encoding_(encoding) {
  opts_.width = fixed_->width;
  opts_.height = fixed_->height;
  opts_.action_limit = fixed_->action_limit;
  reset(0);
}

void GridWorldEnv::reset(std::uint64_t seed) {
  if (fixed_) {
    GridWorld g = *fixed_;
    g.agent = g.start;
    g.consecutive_turns = g.step_count = 0;
    g.terminal = false;
    g.rng_seed = seed;
    adopt(std::move(g));
  } else {
    adopt(generate(seed, opts_));
  }
}

void GridWorldEnv::adopt(GridWorld g) {
  world_ = std::move(g);
  field_ = wavefront(world_);
  ideal_ = grid::ideal_actions(world_);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Cell c : world_.cells) h = (h ^ static_cast<std::uint64_t>(c)) * 0x100000001b3ULL;
  layout_hash_ = mix64(h ^ static_cast<std::uint64_t>(world_.width));

  // next_lava_[x]: combined hash of every lava column at or east of x.
  next_lava_.assign(static_cast<std::size_t>(world_.width), 0);
  std::uint64_t ahead = 0;
  for (int x = world_.width - 1; x >= 0; --x) {
    std::uint64_t col = 0xcbf29ce484222325ULL;
    bool has_lava = false;
    for (int y = 0; y < world_.height; ++y) {
      const Cell c = world_.at(x, y);
      has_lava = has_lava || c == Cell::Lava;
      col = (col ^ static_cast<std::uint64_t>(c)) * 0x100000001b3ULL;
    }
    if (has_lava) ahead = mix64(ahead ^ col ^ static_cast<std::uint64_t>(x));
    next_lava_[x] = ahead;
  }
}

Observation GridWorldEnv::observe() const {
  const auto& p = world_.agent;
  const auto pose_code =
      static_cast<std::uint64_t>((p.y * world_.width + p.x) * 4 + static_cast<int>(p.heading));
  const std::uint64_t scope = encoding_ == Encoding::Exact ? layout_hash_ : next_lava_[p.x];
  const std::uint64_t context = mix64(scope + pose_code);
  Observation obs;
  obs.keys.reserve(kNumActions);
  for (ActionId a = 0; a < kNumActions; ++a) obs.keys.push_back(QKey{context, a});
  obs.mask = grid::mask(world_);
  return obs;
}

ActionType GridWorldEnv::action_type(ActionId a) const {
  switch (static_cast<Action>(a)) {
    case Action::Forward: return ActionType::Forward;
    case Action::TurnLeft: return ActionType::TurnLeft;
    case Action::TurnRight: return ActionType::TurnRight;
  }
  throw std::out_of_range("grid action id out of range");
}

Transition GridWorldEnv::step(ActionId a) {
  if (a >= kNumActions) throw std::out_of_range("grid action id out of range");
  StepResult r = grid::step(world_, static_cast<Action>(a), field_);
  world_ = std::move(r.next);
  return Transition{r.outcome, r.event};
}

bool GridWorldEnv::situation_removal(const StepOutcome& o) const {
  return situation_removal_check(world_, o.progress_before, o.progress_after);
}

}  // namespace spot::grid
