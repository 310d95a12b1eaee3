#include <cmath>
#include <deque>
#include <set>

#include "doctest.h"
#include "imbrl/errors.hpp"
#include "imbrl/grid.hpp"

using namespace imbrl;

namespace {

// Independent breadth-first distances over raw text, used as the oracle.
std::vector<int> oracle_distances(const std::vector<std::string>& rows, State target) {
  const int w = static_cast<int>(rows[0].size()), h = static_cast<int>(rows.size());
  std::vector<int> dist(static_cast<std::size_t>(w * h), -1);
  std::deque<State> q{target};
  dist[target.y * w + target.x] = 0;
  const int dx[4] = {0, 0, -1, 1}, dy[4] = {-1, 1, 0, 0};
  while (!q.empty()) {
    const State s = q.front();
    q.pop_front();
    for (int k = 0; k < 4; ++k) {
      const State n{s.x + dx[k], s.y + dy[k]};
      if (n.x < 0 || n.y < 0 || n.x >= w || n.y >= h || rows[n.y][n.x] == '#') continue;
      if (dist[n.y * w + n.x] >= 0) continue;
      dist[n.y * w + n.x] = dist[s.y * w + s.x] + 1;
      q.push_back(n);
    }
  }
  return dist;
}

std::vector<std::string> rows_of(const GridSpec& g) {
  std::vector<std::string> rows;
  std::string text = g.to_text(), line;
  for (char c : text) {
    if (c == '\n') {
      rows.push_back(line);
      line.clear();
    } else {
      line += c;
    }
  }
  if (!line.empty()) rows.push_back(line);
  return rows;
}

}  // namespace

TEST_CASE("four_room layout") {
  const GridSpec g = four_room();
  CHECK(g.width() == 25);
  CHECK(g.height() == 7);
  CHECK(g.num_rooms() == 4);
  CHECK(g.room_of(g.start()) == 0);
  CHECK(g.room_of(g.goal()) == 3);
  const auto dist = bfs_distances(g, g.goal());
  CHECK(dist[g.index(g.start())] == 38);
  CHECK(dist == oracle_distances(rows_of(g), g.goal()));

  // Every divider column has exactly one opening, and it is a doorway.
  for (int w = 1; w <= 3; ++w) {
    const int x = w * 6;
    int openings = 0;
    for (int y = 1; y < g.height() - 1; ++y)
      if (g.feasible({x, y})) {
        ++openings;
        CHECK(g.is_doorway({x, y}));
        CHECK(g.room_of({x, y}) == kNoRoom);
      }
    CHECK(openings == 1);
  }
  CHECK(g.doorways().size() == 3);
}

TEST_CASE("four_room rooms are ordered along the path") {
  const GridSpec g = four_room(3);
  const auto policy = shortest_path_policy(g, g.goal());
  State s = g.start();
  int last_room = 0;
  while (s != g.goal()) {
    const int r = g.room_of(s);
    if (r != kNoRoom) {
      CHECK(r >= last_room);
      last_room = r;
    }
    s = step(g, s, policy.at(s)).next;
  }
  CHECK(last_room == 3);
  CHECK_THROWS_AS(four_room(1), ConfigError);
}

TEST_CASE("step dynamics") {
  const GridSpec g = four_room();
  const State left_of_goal{g.goal().x - 1, g.goal().y};
  CHECK(step(g, left_of_goal, Action::Right) == StepResult{g.goal(), 10.0, true});
  CHECK(step(g, g.start(), Action::Up) == StepResult{g.start(), 0.0, false});
  CHECK(step(g, g.start(), Action::Left) == StepResult{g.start(), 0.0, false});
  CHECK(step(g, g.start(), Action::Down) == StepResult{{1, 2}, 0.0, false});
  CHECK(step(g, g.start(), Action::Right) == StepResult{{2, 1}, 0.0, false});
  CHECK_THROWS_AS(step(g, {0, 0}, Action::Up), CorruptStateError);
  CHECK_THROWS_AS(step(g, {-1, 3}, Action::Up), CorruptStateError);

  for (State s : g.feasible_states())
    for (Action a : kAllActions) {
      const StepResult r = step(g, s, a);
      CHECK(r == step(g, s, a));
      CHECK(std::abs(r.next.x - s.x) + std::abs(r.next.y - s.y) <= 1);
      CHECK(r.done == (r.next == g.goal()));
      CHECK(r.reward == (r.done ? 10.0 : 0.0));
    }
}

TEST_CASE("shortest path policy") {
  const GridSpec g = four_room();
  const auto policy = shortest_path_policy(g, g.goal());
  const auto dist = bfs_distances(g, g.goal());
  CHECK(policy.size() == g.feasible_states().size() - 1);
  CHECK_FALSE(policy.contains(g.goal()));
  for (const auto& [s, a] : policy)
    CHECK(dist[g.index(step(g, s, a).next)] == dist[g.index(s)] - 1);

  State s = g.start();
  int steps = 0;
  while (s != g.goal()) {
    s = step(g, s, policy.at(s)).next;
    ++steps;
  }
  CHECK(steps == dist[g.index(g.start())]);
  CHECK(policy.at({g.goal().x - 1, g.goal().y}) == Action::Right);
  CHECK(policy.at({g.goal().x, g.goal().y + 1}) == Action::Up);
}

TEST_CASE("shortest path ties resolve Up, Down, Left, Right") {
  const GridSpec g = GridSpec::from_text(
      "#####\n"
      "#S..#\n"
      "#...#\n"
      "#..G#\n"
      "#####\n");
  const auto policy = shortest_path_policy(g, g.goal());
  CHECK(policy.at({1, 1}) == Action::Down);
  CHECK(policy.at({2, 2}) == Action::Down);
  CHECK(policy.at({3, 1}) == Action::Down);
  CHECK(policy.at({1, 3}) == Action::Right);
}

TEST_CASE("value iteration closed form") {
  const GridSpec g = four_room();
  const auto dist = bfs_distances(g, g.goal());
  const ValueTable vt = value_iteration(g, 0.99, 1e-10);
  CHECK(vt.residual < 1e-10);
  CHECK(bellman_residual(g, vt.v, 0.99) < 1e-10);
  for (State s : g.feasible_states()) {
    const int i = g.index(s);
    if (s == g.goal()) {
      CHECK(vt.v(i) == 0.0);
      continue;
    }
    CHECK(vt.v(i) == doctest::Approx(10.0 * std::pow(0.99, dist[i] - 1)).epsilon(1e-9));
    CHECK(vt.v(i) == vt.q.row(i).maxCoeff());
  }
}

TEST_CASE("value iteration with gamma 0") {
  const GridSpec g = four_room();
  const auto dist = bfs_distances(g, g.goal());
  const ValueTable vt = value_iteration(g, 0.0, 1e-12);
  for (State s : g.feasible_states()) {
    if (s == g.goal()) continue;
    CHECK(vt.v(g.index(s)) == (dist[g.index(s)] == 1 ? 10.0 : 0.0));
  }
  CHECK_THROWS_AS(value_iteration(g, 1.0, 1e-6), ConfigError);
  CHECK_THROWS_AS(value_iteration(g, 0.9, 0.0), ConfigError);
}

TEST_CASE("greedy value-iteration policy reaches the goal from everywhere") {
  const GridSpec g = four_room(4);
  const ValueTable vt = value_iteration(g, 0.95, 1e-10);
  const int limit = static_cast<int>(g.feasible_states().size());
  for (State s0 : g.feasible_states()) {
    if (s0 == g.goal()) continue;
    State s = s0;
    int t = 0;
    while (s != g.goal() && t < limit) {
      s = step(g, s, greedy_action(vt.q.row(g.index(s)).transpose())).next;
      ++t;
    }
    CHECK(s == g.goal());
  }
}

TEST_CASE("text map round trip and validation") {
  const GridSpec g = four_room();
  const GridSpec back = GridSpec::from_text(g.to_text());
  CHECK(back.to_text() == g.to_text());
  CHECK(back.hash() == g.hash());
  CHECK(four_room(4).hash() != g.hash());

  CHECK_THROWS_AS(GridSpec::from_text("#S#G#\n"), FormatError);          // unreachable
  CHECK_THROWS_AS(GridSpec::from_text("S..\n..\n"), FormatError);        // ragged
  CHECK_THROWS_AS(GridSpec::from_text("S.x.G\n"), FormatError);          // bad glyph
  CHECK_THROWS_AS(GridSpec::from_text("S...\n"), FormatError);           // no goal
  CHECK_THROWS_AS(GridSpec(3, 1, {}, {0, 0}, {0, 0}), ConfigError);      // start == goal
  CHECK_THROWS_AS(GridSpec(3, 1, {{2, 0}}, {0, 0}, {2, 0}), ConfigError);  // goal on wall
  CHECK_THROWS_AS(GridSpec(3, 1, {}, {0, 0}, {5, 0}), ConfigError);      // out of bounds
}

TEST_CASE("greedy action helpers") {
  Eigen::Vector4d v(1.0, 3.0, 3.0, 2.0);
  CHECK(greedy_action(v) == Action::Down);
  CHECK_FALSE(all_tied(v));
  CHECK(all_tied(Eigen::Vector4d::Zero()));
  CHECK(greedy_action(Eigen::Vector4d::Zero()) == Action::Up);
  CHECK(action_glyph(Action::Left) != action_glyph(Action::Right));
}
