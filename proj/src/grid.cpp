#include "imbrl/grid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "imbrl/errors.hpp"

namespace imbrl {

char action_glyph(Action a) {
  switch (a) {
    case Action::Up: return '^';
    case Action::Down: return 'v';
    case Action::Left: return '<';
    case Action::Right: return '>';
  }
  return '?';
}

State neighbor(State s, Action a) {
  switch (a) {
    case Action::Up: return {s.x, s.y - 1};
    case Action::Down: return {s.x, s.y + 1};
    case Action::Left: return {s.x - 1, s.y};
    case Action::Right: return {s.x + 1, s.y};
  }
  return s;
}

GridSpec::GridSpec(int width, int height, std::vector<State> walls, State start, State goal)
    : width_(width), height_(height), start_(start), goal_(goal) {
  if (width <= 0 || height <= 0) throw ConfigError("grid dimensions must be positive");
  blocked_.assign(static_cast<std::size_t>(num_cells()), false);
  for (State w : walls) {
    if (!in_bounds(w)) throw ConfigError("wall cell out of bounds");
    blocked_[index(w)] = true;
  }
  if (!feasible(start_)) throw ConfigError("start cell is not feasible");
  if (!feasible(goal_)) throw ConfigError("goal cell is not feasible");
  if (start_ == goal_) throw ConfigError("start and goal coincide");

  for (int i = 0; i < num_cells(); ++i)
    if (!blocked_[i]) feasible_.push_back(state_at(i));

  if (bfs_distances(*this, goal_)[index(start_)] < 0)
    throw ConfigError("goal is not reachable from start");

  auto wall_or_edge = [this](State s) { return !feasible(s); };
  doorway_.assign(static_cast<std::size_t>(num_cells()), false);
  for (State s : feasible_) {
    const bool vertical_pinch = wall_or_edge({s.x, s.y - 1}) && wall_or_edge({s.x, s.y + 1});
    const bool horizontal_pinch = wall_or_edge({s.x - 1, s.y}) && wall_or_edge({s.x + 1, s.y});
    doorway_[index(s)] = (vertical_pinch || horizontal_pinch) && s != start_ && s != goal_;
  }
  label_rooms();
}

void GridSpec::label_rooms() {
  // Connected components of non-doorway cells, then renumbered in BFS
  // discovery order from the start.
  std::vector<int> component(static_cast<std::size_t>(num_cells()), kNoRoom);
  int n_components = 0;
  for (State seed : feasible_) {
    if (doorway_[index(seed)] || component[index(seed)] != kNoRoom) continue;
    std::deque<State> frontier{seed};
    component[index(seed)] = n_components;
    while (!frontier.empty()) {
      State s = frontier.front();
      frontier.pop_front();
      for (Action a : kAllActions) {
        State n = neighbor(s, a);
        if (!feasible(n) || doorway_[index(n)] || component[index(n)] != kNoRoom) continue;
        component[index(n)] = n_components;
        frontier.push_back(n);
      }
    }
    ++n_components;
  }

  std::vector<int> renumber(static_cast<std::size_t>(n_components), kNoRoom);
  std::vector<bool> seen(static_cast<std::size_t>(num_cells()), false);
  std::deque<State> frontier{start_};
  seen[index(start_)] = true;
  num_rooms_ = 0;
  while (!frontier.empty()) {
    State s = frontier.front();
    frontier.pop_front();
    const int c = component[index(s)];
    if (c != kNoRoom && renumber[c] == kNoRoom) renumber[c] = num_rooms_++;
    for (Action a : kAllActions) {
      State n = neighbor(s, a);
      if (!feasible(n) || seen[index(n)]) continue;
      seen[index(n)] = true;
      frontier.push_back(n);
    }
  }
  for (int c = 0; c < n_components; ++c)
    if (renumber[c] == kNoRoom) renumber[c] = num_rooms_++;

  room_.assign(static_cast<std::size_t>(num_cells()), kNoRoom);
  for (State s : feasible_) {
    const int c = component[index(s)];
    if (c != kNoRoom) room_[index(s)] = renumber[c];
  }
}

std::vector<State> GridSpec::doorways() const {
  std::vector<State> out;
  for (State s : feasible_)
    if (doorway_[index(s)]) out.push_back(s);
  return out;
}

std::vector<State> GridSpec::walls() const {
  std::vector<State> out;
  for (int i = 0; i < num_cells(); ++i)
    if (blocked_[i]) out.push_back(state_at(i));
  return out;
}

std::string GridSpec::to_text() const {
  std::string out;
  out.reserve(static_cast<std::size_t>((width_ + 1) * height_));
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      State s{x, y};
      if (s == start_) out += 'S';
      else if (s == goal_) out += 'G';
      else out += is_wall(s) ? '#' : '.';
    }
    out += '\n';
  }
  return out;
}

GridSpec GridSpec::from_text(std::string_view text) {
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) rows.push_back(line);
  }
  if (rows.empty()) throw FormatError("empty grid map");
  const int width = static_cast<int>(rows.front().size());
  std::vector<State> walls;
  std::optional<State> start, goal;
  for (int y = 0; y < static_cast<int>(rows.size()); ++y) {
    if (static_cast<int>(rows[y].size()) != width)
      throw FormatError("grid map rows have unequal length at row " + std::to_string(y));
    for (int x = 0; x < width; ++x) {
      switch (rows[y][x]) {
        case '#': walls.push_back({x, y}); break;
        case '.': break;
        case 'S':
          if (start) throw FormatError("grid map has more than one start");
          start = State{x, y};
          break;
        case 'G':
          if (goal) throw FormatError("grid map has more than one goal");
          goal = State{x, y};
          break;
        default:
          throw FormatError(std::string("unexpected character '") + rows[y][x] + "' in grid map");
      }
    }
  }
  if (!start || !goal) throw FormatError("grid map needs exactly one 'S' and one 'G'");
  try {
    return GridSpec(width, static_cast<int>(rows.size()), std::move(walls), *start, *goal);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid grid map: ") + e.what());
  }
}

std::uint64_t GridSpec::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

GridSpec four_room(int room_size) {
  if (room_size < 2) throw ConfigError("four_room needs room_size >= 2");
  const int n = room_size;
  const int width = 4 * n + 5;
  const int height = n + 2;
  // Doorways alternate between the bottom and top rows so the shortest path
  // zig-zags through every room.
  const int door_rows[3] = {n, 1, n};
  std::vector<State> walls;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const bool border = x == 0 || y == 0 || x == width - 1 || y == height - 1;
      bool divider = false;
      for (int w = 0; w < 3; ++w)
        if (x == (w + 1) * (n + 1) && y != door_rows[w]) divider = true;
      if (border || divider) walls.push_back({x, y});
    }
  }
  return GridSpec(width, height, std::move(walls), State{1, 1}, State{width - 2, 1});
}

StepResult step(const GridSpec& grid, State s, Action a) {
  if (!grid.feasible(s))
    throw CorruptStateError("step from infeasible state (" + std::to_string(s.x) + "," +
                            std::to_string(s.y) + ")");
  State next = neighbor(s, a);
  if (!grid.feasible(next)) next = s;
  const bool done = next == grid.goal();
  return {next, done ? kGoalReward : 0.0, done};
}

std::vector<int> bfs_distances(const GridSpec& grid, State target) {
  std::vector<int> dist(static_cast<std::size_t>(grid.num_cells()), -1);
  if (!grid.feasible(target)) return dist;
  std::deque<State> frontier{target};
  dist[grid.index(target)] = 0;
  while (!frontier.empty()) {
    State s = frontier.front();
    frontier.pop_front();
    // Moves are reversible, so predecessors are the feasible neighbours.
    for (Action a : kAllActions) {
      State n = neighbor(s, a);
      if (!grid.feasible(n) || dist[grid.index(n)] >= 0) continue;
      dist[grid.index(n)] = dist[grid.index(s)] + 1;
      frontier.push_back(n);
    }
  }
  return dist;
}

std::map<State, Action> shortest_path_policy(const GridSpec& grid, State goal) {
  std::map<State, Action> policy;
  if (!grid.feasible(goal)) return policy;
  const std::vector<int> dist = bfs_distances(grid, goal);
  for (State s : grid.feasible_states()) {
    const int d = dist[grid.index(s)];
    if (d <= 0) continue;
    for (Action a : kAllActions) {
      State n = neighbor(s, a);
      if (grid.feasible(n) && dist[grid.index(n)] == d - 1) {
        policy.emplace(s, a);
        break;
      }
    }
  }
  return policy;
}

namespace {

Eigen::Matrix<double, Eigen::Dynamic, kNumActions> backup(const GridSpec& grid,
                                                          const Eigen::VectorXd& v, double gamma) {
  Eigen::Matrix<double, Eigen::Dynamic, kNumActions> q =
      Eigen::Matrix<double, Eigen::Dynamic, kNumActions>::Zero(grid.num_cells(), kNumActions);
  for (State s : grid.feasible_states()) {
    if (s == grid.goal()) continue;
    for (Action a : kAllActions) {
      const StepResult r = step(grid, s, a);
      q(grid.index(s), action_index(a)) = r.reward + (r.done ? 0.0 : gamma * v(grid.index(r.next)));
    }
  }
  return q;
}

}  // namespace

double bellman_residual(const GridSpec& grid, const Eigen::VectorXd& v, double gamma) {
  const auto q = backup(grid, v, gamma);
  double worst = 0.0;
  for (State s : grid.feasible_states()) {
    const int i = grid.index(s);
    worst = std::max(worst, std::abs(v(i) - q.row(i).maxCoeff()));
  }
  return worst;
}

ValueTable value_iteration(const GridSpec& grid, double gamma, double tol) {
  if (!(tol > 0.0)) throw ConfigError("value_iteration tolerance must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("discount must lie in [0, 1)");

  ValueTable out;
  out.v = Eigen::VectorXd::Zero(grid.num_cells());
  for (;;) {
    out.q = backup(grid, out.v, gamma);
    Eigen::VectorXd next = out.q.rowwise().maxCoeff();
    const double change = (next - out.v).lpNorm<Eigen::Infinity>();
    out.v = std::move(next);
    ++out.iterations;
    // |T v' - v'| <= gamma |v' - v| once v' = T v.
    if (gamma * change < tol) break;
  }
  out.q = backup(grid, out.v, gamma);
  out.v = out.q.rowwise().maxCoeff();
  out.residual = bellman_residual(grid, out.v, gamma);
  return out;
}

}  // namespace imbrl
