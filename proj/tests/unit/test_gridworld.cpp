#include <gtest/gtest.h>

#include <array>
#include <deque>
#include <map>
#include <queue>
#include <random>
#include <set>

#include "spot/gridworld.hpp"

namespace spot::grid {
namespace {

bool open_cell(const GridWorld& g, int x, int y) {
  const Cell c = g.at(x, y);
  return c == Cell::Empty || c == Cell::Goal;
}

// Independent Dijkstra with unit weights, expanded from the goal.
std::vector<int> dijkstra_oracle(const GridWorld& g) {
  std::vector<int> dist(static_cast<std::size_t>(g.width * g.height), -1);
  using Item = std::pair<int, int>;  // distance, cell index
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  for (int i = 0; i < g.width * g.height; ++i) {
    if (g.cells[i] == Cell::Goal) {
      dist[i] = 0;
      open.emplace(0, i);
    }
  }
  while (!open.empty()) {
    const auto [d, i] = open.top();
    open.pop();
    if (d != dist[i]) continue;
    const int x = i % g.width;
    const int y = i / g.width;
    const int nbrs[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
    for (const auto& n : nbrs) {
      if (!g.in_bounds(n[0], n[1]) || !open_cell(g, n[0], n[1])) continue;
      const int j = n[1] * g.width + n[0];
      if (dist[j] == -1 || d + 1 < dist[j]) {
        dist[j] = d + 1;
        open.emplace(d + 1, j);
      }
    }
  }
  return dist;
}

// Plain BFS over (x, y, heading) with one edge per action.
int pose_bfs_oracle(const GridWorld& g) {
  const int dx[4] = {0, 1, 0, -1};
  const int dy[4] = {-1, 0, 1, 0};
  std::map<std::array<int, 3>, int> seen;
  std::deque<std::array<int, 3>> frontier;
  const std::array<int, 3> start{g.start.x, g.start.y, static_cast<int>(g.start.heading)};
  seen[start] = 0;
  frontier.push_back(start);
  while (!frontier.empty()) {
    const auto p = frontier.front();
    frontier.pop_front();
    const int d = seen[p];
    if (g.at(p[0], p[1]) == Cell::Goal) return d;
    const std::array<std::array<int, 3>, 3> next{{{p[0], p[1], (p[2] + 1) % 4},
                                                  {p[0], p[1], (p[2] + 3) % 4},
                                                  {p[0] + dx[p[2]], p[1] + dy[p[2]], p[2]}}};
    for (std::size_t k = 0; k < next.size(); ++k) {
      const auto& q = next[k];
      if (k == 2 && !open_cell(g, q[0], q[1])) continue;
      if (seen.emplace(q, d + 1).second) frontier.push_back(q);
    }
  }
  return -1;
}

std::string open_grid_text() {
  std::string t;
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 9; ++x) t += (x == 0 && y == 0) ? '>' : (x == 8 && y == 8) ? 'G' : '.';
    t += '\n';
  }
  return t;
}

TEST(Generate, DeterministicPerSeed) {
  EXPECT_EQ(to_text(generate(5)), to_text(generate(5)));
  std::set<std::string> layouts;
  for (std::uint64_t s = 0; s < 10; ++s) layouts.insert(to_text(generate(s)));
  EXPECT_GE(layouts.size(), 2u);
}

TEST(Generate, AlwaysSolvableWithOneGoal) {
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const GridWorld g = generate(s);
    int goals = 0;
    for (Cell c : g.cells) goals += c == Cell::Goal;
    ASSERT_EQ(goals, 1);
    ASSERT_NE(wavefront(g).at(g.start.x, g.start.y), DistanceField::kUnreachable);
    ASSERT_NE(g.at(g.agent.x, g.agent.y), Cell::Wall);
  }
}

TEST(Wavefront, Examples) {
  const GridWorld g = from_text(open_grid_text());
  const DistanceField f = wavefront(g);
  EXPECT_EQ(f.at(8, 8), 0);
  EXPECT_EQ(f.at(7, 8), 1);
  EXPECT_EQ(f.at(0, 0), 16);
}

TEST(Wavefront, MatchesDijkstraOracle) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const GridWorld g = generate(s * 7919);
    const DistanceField f = wavefront(g);
    const auto oracle = dijkstra_oracle(g);
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const int want = oracle[y * g.width + x];
        ASSERT_EQ(f.at(x, y), want < 0 ? DistanceField::kUnreachable : want) << "seed " << s;
      }
    }
  }
}

TEST(Wavefront, MonotoneNeighbour) {
  const GridWorld g = generate(3);
  const DistanceField f = wavefront(g);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const int d = f.at(x, y);
      if (d <= 0) continue;
      bool lower = false;
      for (auto [nx, ny] : {std::pair{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}}) {
        lower = lower || (g.in_bounds(nx, ny) && f.at(nx, ny) == d - 1);
      }
      EXPECT_TRUE(lower);
    }
  }
}

TEST(Progress, Examples) {
  GridWorld g = from_text(open_grid_text());
  const DistanceField f = wavefront(g);
  EXPECT_DOUBLE_EQ(progress(g, f), 0.0);
  g.agent = Pose{4, 4, Heading::East};
  EXPECT_DOUBLE_EQ(progress(g, f), 0.5);
  g.agent = Pose{8, 8, Heading::East};
  EXPECT_DOUBLE_EQ(progress(g, f), 1.0);
}

TEST(Step, ForwardIntoGoal) {
  const GridWorld g = from_text("#####\n#.>G#\n#####\n");
  const StepResult r = step(g, Action::Forward, wavefront(g));
  EXPECT_TRUE(r.next.terminal);
  EXPECT_TRUE(r.outcome.task_complete);
  EXPECT_EQ(r.event, Termination::Complete);
  EXPECT_DOUBLE_EQ(r.outcome.progress_after, 1.0);
}

TEST(Step, ForwardIntoLavaWithoutMask) {
  const GridWorld g = from_text("######\n#>L.G#\n#....#\n######\n");
  const StepResult r = step(g, Action::Forward, wavefront(g));
  EXPECT_TRUE(r.next.terminal);
  EXPECT_FALSE(r.outcome.task_complete);
  EXPECT_EQ(r.event, Termination::LavaDeath);
  EXPECT_DOUBLE_EQ(sparse_reward(r.outcome), 0.0);
}

TEST(Step, WallIsNoOpAndActionLimitEndsTrial) {
  GridWorld g = from_text("#####\n#..>#\n#G..#\n#####\n", 100);
  const DistanceField f = wavefront(g);
  const StepResult bump = step(g, Action::Forward, f);
  EXPECT_EQ(bump.next.agent, g.agent);
  EXPECT_FALSE(bump.outcome.success);
  for (int i = 0; i < 99; ++i) {
    const StepResult r = step(g, i % 2 ? Action::TurnLeft : Action::TurnRight, f);
    EXPECT_FALSE(r.next.terminal);
    g = r.next;
  }
  const StepResult last = step(g, Action::TurnLeft, f);
  EXPECT_TRUE(last.next.terminal);
  EXPECT_EQ(last.event, Termination::ActionLimit);
  EXPECT_THROW(step(last.next, Action::Forward, f), TerminalStateError);
}

TEST(Step, TurnsCountAndForwardResets) {
  const GridWorld g = from_text(open_grid_text());
  const DistanceField f = wavefront(g);
  StepResult r = step(g, Action::TurnLeft, f);
  r = step(r.next, Action::TurnRight, f);
  EXPECT_EQ(r.next.consecutive_turns, 2);
  r = step(r.next, Action::Forward, f);
  EXPECT_EQ(r.next.consecutive_turns, 0);
  EXPECT_TRUE(r.outcome.success);
}

TEST(SituationRemoval, Examples) {
  GridWorld g = from_text(open_grid_text());
  const DistanceField f = wavefront(g);
  StepResult r = step(g, Action::TurnLeft, f);
  r = step(r.next, Action::TurnLeft, f);
  EXPECT_FALSE(situation_removal_check(r.next, r.outcome.progress_before, r.outcome.progress_after));
  r = step(r.next, Action::TurnLeft, f);
  EXPECT_TRUE(situation_removal_check(r.next, r.outcome.progress_before, r.outcome.progress_after));
  EXPECT_TRUE(situation_removal_check(g, 0.5, 0.4));
  const StepResult fwd = step(g, Action::Forward, f);
  EXPECT_FALSE(situation_removal_check(fwd.next, fwd.outcome.progress_before, fwd.outcome.progress_after));
}

TEST(Mask, Examples) {
  const GridWorld lava = from_text("######\n#>L.G#\n#....#\n######\n");
  EXPECT_EQ(mask(lava), (ActionMask{{0, 1, 1}}));
  const GridWorld open = from_text(open_grid_text());
  EXPECT_EQ(mask(open), ActionMask::all(3));
  const GridWorld wall = from_text("#####\n#..>#\n#G..#\n#####\n");
  EXPECT_EQ(mask(wall), (ActionMask{{0, 1, 1}}));
}

TEST(IdealActions, MatchesPoseGraphBfs) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const GridWorld g = generate(s * 104729 + 1);
    EXPECT_EQ(ideal_actions(g), pose_bfs_oracle(g)) << "seed " << s;
  }
  // Open grid, facing east from the corner: 16 moves and one turn.
  EXPECT_EQ(ideal_actions(from_text(open_grid_text())), 17);
}

TEST(Text, RoundTripsAndRejectsBadLayouts) {
  const GridWorld g = generate(11);
  EXPECT_EQ(to_text(from_text(to_text(g))), to_text(g));
  EXPECT_THROW(from_text(""), LayoutError);
  EXPECT_THROW(from_text("#>#\n#.#\n"), LayoutError);       // no goal
  EXPECT_THROW(from_text("#>G\n#..#\n"), LayoutError);      // ragged
  EXPECT_THROW(from_text("#>G?\n"), LayoutError);           // bad char
  EXPECT_THROW(from_text(">LG\n"), LayoutError);            // unreachable
}

TEST(GridEnv, MaskedRandomPlayNeverEntersLava) {
  GridWorldEnv env;
  Rng rng(2024);
  std::uint64_t seed = 0;
  env.reset(seed);
  int lava = 0;
  for (int i = 0; i < 100000; ++i) {
    const Observation o = env.observe();
    std::vector<ActionId> allowed;
    for (ActionId a = 0; a < kNumActions; ++a) {
      if (o.mask[a]) allowed.push_back(a);
    }
    ASSERT_FALSE(allowed.empty());
    const ActionId a = allowed[std::uniform_int_distribution<std::size_t>(0, allowed.size() - 1)(rng)];
    const Transition t = env.step(a);
    lava += t.event == Termination::LavaDeath;
    if (env.terminal()) env.reset(++seed);
  }
  EXPECT_EQ(lava, 0);
}

TEST(GridEnv, GreedyWavefrontPathIsMonotone) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    GridWorld g = generate(s);
    const DistanceField f = wavefront(g);
    double last = progress(g, f);
    while (!g.terminal) {
      // Face a neighbour one step closer, then move.
      const int here = f.at(g.agent.x, g.agent.y);
      Action a = Action::TurnRight;
      const Pose ahead = advance(g.agent);
      if (g.in_bounds(ahead.x, ahead.y) && f.at(ahead.x, ahead.y) == here - 1) a = Action::Forward;
      const StepResult r = step(g, a, f);
      EXPECT_GE(r.outcome.progress_after, last);
      if (a == Action::Forward) EXPECT_GT(r.outcome.progress_after, last);
      last = r.outcome.progress_after;
      g = r.next;
    }
    EXPECT_DOUBLE_EQ(last, 1.0);
  }
}

TEST(GridEnv, LocalKeyIgnoresColumnsBehindTheAgent) {
  // Same lava column east of x=3, different lava column west of it.
  const GridWorld a = from_text("#########\n#.L..L..#\n#...>L..#\n#.L.....#\n#.....LG#\n#########\n");
  const GridWorld b = from_text("#########\n#....L..#\n#.L.>L..#\n#.L.....#\n#.....LG#\n#########\n");
  GridWorldEnv la(a);
  GridWorldEnv lb(b);
  EXPECT_EQ(la.observe().keys, lb.observe().keys);
  GridWorldEnv ea(a, Encoding::Exact);
  GridWorldEnv eb(b, Encoding::Exact);
  EXPECT_NE(ea.observe().keys, eb.observe().keys);
}

TEST(GridEnv, SerializeAndIdeal) {
  GridWorldEnv env;
  env.reset(42);
  EXPECT_EQ(env.serialize(), to_text(generate(42)));
  EXPECT_EQ(env.ideal_actions(), ideal_actions(generate(42)));
  EXPECT_EQ(env.num_actions(), kNumActions);
  EXPECT_EQ(env.action_type(0), ActionType::Forward);
  EXPECT_THROW(env.step(3), std::out_of_range);
}

}  // namespace
}  // namespace spot::grid
