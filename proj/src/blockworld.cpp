#include "spot/blockworld.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <sstream>

namespace spot::blocks {

namespace {

constexpr std::array<int, 4> kDx = {0, 1, 0, -1};
constexpr std::array<int, 4> kDy = {-1, 0, 1, 0};

int direction_index(Direction d) { return static_cast<int>(d); }

int longest_run(const BlockState& s) {
  int best = 0;
  for (int y = 0; y < s.height; ++y) {
    int run = 0;
    for (int x = 0; x < s.width; ++x) {
      run = s.stack_height(x, y) == 1 ? run + 1 : 0;
      best = std::max(best, run);
    }
  }
  for (int x = 0; x < s.width; ++x) {
    int run = 0;
    for (int y = 0; y < s.height; ++y) {
      run = s.stack_height(x, y) == 1 ? run + 1 : 0;
      best = std::max(best, run);
    }
  }
  return best;
}

int tallest_stack(const BlockState& s) {
  int best = 0;
  for (const auto& st : s.stacks) best = std::max(best, static_cast<int>(st.size()));
  return best;
}

// Moves each block to the nearest empty cell (Chebyshev rings around the
// origin), choosing uniformly within the first ring that has room.
void scatter(BlockState& s, int ox, int oy, std::vector<int> blocks) {
  for (int id : blocks) {
    bool placed = false;
    for (int ring = 1; !placed && ring < std::max(s.width, s.height); ++ring) {
      std::vector<std::pair<int, int>> free;
      for (int y = oy - ring; y <= oy + ring; ++y) {
        for (int x = ox - ring; x <= ox + ring; ++x) {
          if (std::max(std::abs(x - ox), std::abs(y - oy)) != ring) continue;
          if (s.in_bounds(x, y) && s.stack(x, y).empty()) free.emplace_back(x, y);
        }
      }
      if (free.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
      const auto [x, y] = free[pick(s.rng)];
      s.stack(x, y).push_back(id);
      placed = true;
    }
    // No empty cell anywhere: the block lands back on the origin stack.
    if (!placed) s.stack(ox, oy).push_back(id);
  }
}

void topple(BlockState& s, int x, int y, std::optional<int> extra) {
  auto& st = s.stack(x, y);
  std::vector<int> falling(st.begin() + 1, st.end());
  st.resize(1);
  if (extra) falling.push_back(*extra);
  scatter(s, x, y, std::move(falling));
}

}  // namespace

std::string_view to_string(Task t) {
  switch (t) {
    case Task::StackOfK: return "stack";
    case Task::RowOfK: return "row";
    case Task::ClearAll: return "clear";
  }
  return "?";
}

Task task_from_string(std::string_view name) {
  if (name == "stack") return Task::StackOfK;
  if (name == "row") return Task::RowOfK;
  if (name == "clear") return Task::ClearAll;
  throw ConfigError("unknown block task '" + std::string(name) + "'");
}

BlockState reset(std::uint64_t seed, Task task, const ResetOptions& opts) {
  const int cells = opts.width * opts.height;
  if (opts.num_blocks < 1 || opts.num_blocks > cells) {
    throw BlockWorldError("block count must fit on distinct cells");
  }
  if (opts.goal_size < 1) throw BlockWorldError("goal size must be positive");
  BlockState s;
  s.width = opts.width;
  s.height = opts.height;
  s.num_blocks = opts.num_blocks;
  s.task = task;
  s.goal_size = opts.goal_size;
  s.topple_rate = opts.topple_rate;
  s.topple_cap = opts.topple_cap;
  s.action_limit = opts.action_limit > 0 ? opts.action_limit : (task == Task::ClearAll ? 30 : 50);
  s.rng.seed(mix64(seed));

  std::vector<int> order(static_cast<std::size_t>(cells));
  for (int attempt = 0;; ++attempt) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), s.rng);
    s.stacks.assign(static_cast<std::size_t>(cells), {});
    for (int b = 0; b < s.num_blocks; ++b) s.stacks[order[b]].push_back(b);
    // A reset that already satisfies the task is redrawn.
    if (progress(s) < 1.0 || attempt > 100) break;
  }
  return s;
}

int progress_level(const BlockState& s) {
  switch (s.task) {
    case Task::StackOfK: return tallest_stack(s);
    case Task::RowOfK: return longest_run(s);
    case Task::ClearAll: return static_cast<int>(s.removed.size());
  }
  return 0;
}

double progress(const BlockState& s) {
  const int goal = s.task == Task::ClearAll ? s.num_blocks : s.goal_size;
  return std::min(1.0, static_cast<double>(progress_level(s)) / static_cast<double>(goal));
}

double topple_probability(const BlockState& s, int stack_height) {
  if (stack_height < 2) return 0.0;
  return std::min(s.topple_cap, s.topple_rate * static_cast<double>(stack_height - 1));
}

StepResult step(const BlockState& s, const BlockAction& a) {
  if (s.terminal) throw TerminalStateError();
  if (!s.in_bounds(a.x, a.y)) throw std::out_of_range("block action outside the grid");
  StepResult r{s, {}, Termination::None};
  BlockState& n = r.next;
  StepOutcome& o = r.outcome;
  o.action_type = a.type;
  o.progress_before = progress(s);
  bool acted = false;
  bool toppled = false;

  auto& target = n.stack(a.x, a.y);
  switch (a.type) {
    case ActionType::Grasp:
      if (!n.gripper && !target.empty()) {
        const int id = target.back();
        target.pop_back();
        if (n.task == Task::ClearAll) {
          n.removed.push_back(id);
        } else {
          n.gripper = id;
        }
        acted = true;
      }
      break;
    case ActionType::Place:
      if (n.gripper) {
        const int id = *n.gripper;
        n.gripper.reset();
        const int h = static_cast<int>(target.size());
        std::uniform_real_distribution<double> draw(0.0, 1.0);
        if (h >= 2 && draw(n.rng) < topple_probability(n, h)) {
          topple(n, a.x, a.y, id);
          toppled = true;
        } else {
          target.push_back(id);
        }
        acted = true;
      }
      break;
    case ActionType::Push: {
      if (!a.direction) throw std::invalid_argument("push needs a direction");
      if (n.gripper || target.empty()) break;
      if (target.size() >= 2) {
        topple(n, a.x, a.y, std::nullopt);
        acted = true;
        break;
      }
      const int d = direction_index(*a.direction);
      const int tx = a.x + kDx[d];
      const int ty = a.y + kDy[d];
      if (n.in_bounds(tx, ty) && n.stack(tx, ty).empty()) {
        n.stack(tx, ty).push_back(target.back());
        target.pop_back();
        acted = true;
      }
      break;
    }
    default:
      throw std::invalid_argument("action type is not a block primitive");
  }

  ++n.step_count;
  o.progress_after = progress(n);
  o.task_complete = o.progress_after >= 1.0;
  if (a.type == ActionType::Place) {
    o.success = acted && !toppled && o.progress_after > o.progress_before;
  } else {
    o.success = acted;
  }
  if (o.task_complete) {
    n.terminal = true;
    r.event = Termination::Complete;
  } else if (n.step_count >= n.action_limit) {
    n.terminal = true;
    r.event = Termination::ActionLimit;
  }
  o.terminal = n.terminal;
  return r;
}

ActionMask mask(const BlockState& s) {
  ActionMask m{std::vector<std::uint8_t>(s.num_actions(), 0)};
  const bool holding = s.gripper.has_value();
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const int h = s.stack_height(x, y);
      const std::size_t base = static_cast<std::size_t>((y * s.width + x) * kSlotsPerCell);
      m.allowed[base + 0] = !holding && h > 0;
      m.allowed[base + 1] = holding;
      for (int d = 0; d < 4; ++d) {
        bool ok = !holding && h > 0;
        if (ok && h == 1) {
          const int tx = x + kDx[d];
          const int ty = y + kDy[d];
          ok = s.in_bounds(tx, ty) && s.stack(tx, ty).empty();
        }
        m.allowed[base + 2 + d] = ok;
      }
    }
  }
  return m;
}

int ideal_actions(Task task, int num_blocks, int goal_size) {
  switch (task) {
    case Task::StackOfK: return 2 * (goal_size - 1);
    case Task::RowOfK: return goal_size;
    case Task::ClearAll: return num_blocks;
  }
  throw ConfigError("unknown block task");
}

ActionId encode_action(const BlockState& s, const BlockAction& a) {
  int slot = 0;
  switch (a.type) {
    case ActionType::Grasp: slot = 0; break;
    case ActionType::Place: slot = 1; break;
    case ActionType::Push:
      if (!a.direction) throw std::invalid_argument("push needs a direction");
      slot = 2 + direction_index(*a.direction);
      break;
    default: throw std::invalid_argument("action type is not a block primitive");
  }
  return static_cast<ActionId>((a.y * s.width + a.x) * kSlotsPerCell + slot);
}

BlockAction decode_action(const BlockState& s, ActionId id) {
  if (id >= s.num_actions()) throw std::out_of_range("block action id out of range");
  const int cell = static_cast<int>(id) / kSlotsPerCell;
  const int slot = static_cast<int>(id) % kSlotsPerCell;
  BlockAction a;
  a.x = cell % s.width;
  a.y = cell / s.width;
  if (slot == 0) {
    a.type = ActionType::Grasp;
  } else if (slot == 1) {
    a.type = ActionType::Place;
  } else {
    a.type = ActionType::Push;
    a.direction = static_cast<Direction>(slot - 2);
  }
  return a;
}

int run_through(const BlockState& s, int x, int y) {
  const auto single = [&](int cx, int cy) {
    return (cx == x && cy == y) || (s.in_bounds(cx, cy) && s.stack_height(cx, cy) == 1);
  };
  int best = 0;
  for (int axis = 0; axis < 2; ++axis) {
    const int dx = axis == 0 ? 1 : 0;
    const int dy = axis == 0 ? 0 : 1;
    int run = 1;
    for (int k = 1; s.in_bounds(x + k * dx, y + k * dy) && single(x + k * dx, y + k * dy); ++k) ++run;
    for (int k = 1; s.in_bounds(x - k * dx, y - k * dy) && single(x - k * dx, y - k * dy); ++k) ++run;
    best = std::max(best, run);
  }
  return best;
}

namespace {

std::string ids_to_text(const std::vector<int>& ids) {
  std::string out = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(ids[i]);
  }
  return out + "]";
}

std::vector<int> ids_from_text(std::string_view text) {
  const auto open = text.find('[');
  const auto close = text.find(']');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw BlockWorldError("expected a bracketed id list");
  }
  std::string body(text.substr(open + 1, close - open - 1));
  std::replace(body.begin(), body.end(), ',', ' ');
  std::istringstream in(body);
  std::vector<int> ids;
  for (int id; in >> id;) ids.push_back(id);
  return ids;
}

}  // namespace

std::string to_text(const BlockState& s) {
  std::ostringstream out;
  out << "grid: " << s.width << ' ' << s.height << '\n';
  out << "task: " << to_string(s.task) << ' ' << s.goal_size << '\n';
  out << "limit: " << s.action_limit << '\n';
  out << "step: " << s.step_count << '\n';
  if (!s.removed.empty()) out << "removed: " << ids_to_text(s.removed) << '\n';
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (!s.stack(x, y).empty()) out << "cell " << x << ' ' << y << ": " << ids_to_text(s.stack(x, y)) << '\n';
    }
  }
  out << "gripper: " << (s.gripper ? std::to_string(*s.gripper) : std::string("empty")) << '\n';
  return out.str();
}

BlockState from_text(std::string_view text, std::uint64_t seed) {
  BlockState s;
  s.rng.seed(mix64(seed));
  std::vector<std::tuple<int, int, std::vector<int>>> cells;
  bool limit_given = false;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::string head;
    fields >> head;
    if (head == "grid:") {
      fields >> s.width >> s.height;
    } else if (head == "task:") {
      std::string name;
      fields >> name >> s.goal_size;
      s.task = task_from_string(name);
    } else if (head == "limit:") {
      fields >> s.action_limit;
      limit_given = true;
    } else if (head == "step:") {
      fields >> s.step_count;
    } else if (head == "removed:") {
      s.removed = ids_from_text(line);
    } else if (head == "cell") {
      int x = 0;
      int y = 0;
      fields >> x >> y;
      cells.emplace_back(x, y, ids_from_text(line));
    } else if (head == "gripper:") {
      std::string what;
      fields >> what;
      if (what != "empty") s.gripper = std::stoi(what);
    } else {
      throw BlockWorldError("unrecognized state line: " + line);
    }
    if (fields.fail()) throw BlockWorldError("malformed state line: " + line);
  }
  if (!limit_given) s.action_limit = s.task == Task::ClearAll ? 30 : 50;
  s.stacks.assign(static_cast<std::size_t>(s.width * s.height), {});
  std::vector<int> seen;
  for (auto& [x, y, ids] : cells) {
    if (!s.in_bounds(x, y)) throw BlockWorldError("cell outside the grid");
    auto& st = s.stack(x, y);
    st.insert(st.end(), ids.begin(), ids.end());
    seen.insert(seen.end(), ids.begin(), ids.end());
  }
  if (s.gripper) seen.push_back(*s.gripper);
  seen.insert(seen.end(), s.removed.begin(), s.removed.end());
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    throw BlockWorldError("block id appears more than once");
  }
  s.num_blocks = static_cast<int>(seen.size());
  s.terminal = progress(s) >= 1.0 || s.step_count >= s.action_limit;
  return s;
}

BlockWorldEnv::BlockWorldEnv(Task task, ResetOptions opts, Encoding encoding)
    : task_(task), opts_(opts), encoding_(encoding) {
  reset(0);
}

BlockWorldEnv::BlockWorldEnv(BlockState fixed, Encoding encoding)
    : task_(fixed.task), encoding_(encoding), fixed_(std::move(fixed)) {
  opts_.width = fixed_->width;
  opts_.height = fixed_->height;
  opts_.num_blocks = fixed_->num_blocks;
  opts_.goal_size = fixed_->goal_size;
  opts_.action_limit = fixed_->action_limit;
  opts_.topple_rate = fixed_->topple_rate;
  opts_.topple_cap = fixed_->topple_cap;
  reset(0);
}

void BlockWorldEnv::reset(std::uint64_t seed) {
  if (fixed_) {
    state_ = *fixed_;
    state_.rng.seed(mix64(seed));
  } else {
    state_ = blocks::reset(seed, task_, opts_);
  }
}

Observation BlockWorldEnv::observe() const {
  const BlockState& s = state_;
  Observation obs;
  obs.mask = blocks::mask(s);
  obs.keys.resize(s.num_actions());

  if (encoding_ == Encoding::Exact) {
    std::uint64_t h = mix64(static_cast<std::uint64_t>(s.task) * 131 + static_cast<std::uint64_t>(s.goal_size));
    for (const auto& st : s.stacks) h = mix64(h ^ st.size());
    h = mix64(h ^ (s.gripper ? 1u : 0u) ^ (s.removed.size() << 1));
    for (ActionId a = 0; a < obs.keys.size(); ++a) obs.keys[a] = QKey{h, a};
    return obs;
  }

  const int level = progress_level(s);
  int at_level = 0;
  for (const auto& st : s.stacks) at_level += static_cast<int>(st.size()) == level ? 1 : 0;
  const std::uint64_t shared = static_cast<std::uint64_t>(s.task) |
                               static_cast<std::uint64_t>(std::min(s.goal_size, 15)) << 2 |
                               static_cast<std::uint64_t>(s.gripper ? 1 : 0) << 6 |
                               static_cast<std::uint64_t>(std::min(level, 15)) << 7;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const int h = std::min(s.stack_height(x, y), 7);
      const int run = s.task == Task::RowOfK ? std::min(run_through(s, x, y), 7) : 0;
      const int unique_top = s.task == Task::StackOfK && h == level && at_level == 1 ? 1 : 0;
      const std::uint64_t cell_ctx = shared | static_cast<std::uint64_t>(h) << 11 |
                                     static_cast<std::uint64_t>(run) << 14 |
                                     static_cast<std::uint64_t>(unique_top) << 17;
      const ActionId base = static_cast<ActionId>((y * s.width + x) * kSlotsPerCell);
      for (int slot = 0; slot < kSlotsPerCell; ++slot) {
        std::uint64_t ctx = cell_ctx;
        if (slot >= 2) {
          const int d = slot - 2;
          const int tx = x + kDx[d];
          const int ty = y + kDy[d];
          const int dest = s.in_bounds(tx, ty) ? std::min(s.stack_height(tx, ty), 6) : 7;
          ctx |= static_cast<std::uint64_t>(dest) << 18;
        }
        obs.keys[base + slot] = QKey{ctx, static_cast<std::uint32_t>(slot)};
      }
    }
  }
  return obs;
}

ActionType BlockWorldEnv::action_type(ActionId a) const { return decode_action(state_, a).type; }

Transition BlockWorldEnv::step(ActionId a) {
  StepResult r = blocks::step(state_, decode_action(state_, a));
  state_ = std::move(r.next);
  return Transition{r.outcome, r.event};
}

bool BlockWorldEnv::situation_removal(const StepOutcome& o) const {
  return o.progress_after < o.progress_before;
}

int BlockWorldEnv::ideal_actions() const {
  return blocks::ideal_actions(task_, state_.num_blocks, state_.goal_size);
}

}  // namespace spot::blocks
