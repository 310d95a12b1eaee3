#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace imbrl {

/// Grid cell; x grows to the right, y grows downwards (row 0 is the top row
/// of the text map).
struct State {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const State&, const State&) = default;
};

enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };

inline constexpr int kNumActions = 4;
inline constexpr std::array<Action, kNumActions> kAllActions = {Action::Up, Action::Down,
                                                                Action::Left, Action::Right};
inline constexpr double kGoalReward = 10.0;
inline constexpr int kNoRoom = -1;

constexpr int action_index(Action a) { return static_cast<int>(a); }
constexpr Action action_from_index(int i) { return static_cast<Action>(i); }
char action_glyph(Action a);

State neighbor(State s, Action a);

/// Deterministic gridworld with walls, one start and one goal cell.
///
/// Construction validates that start and goal are feasible and distinct and
/// that the goal is reachable from the start. Cells are identified by the
/// dense index y * width + x; walls occupy indices too, which keeps tables
/// rectangular.
class GridSpec {
 public:
  GridSpec(int width, int height, std::vector<State> walls, State start, State goal);

  int width() const { return width_; }
  int height() const { return height_; }
  int num_cells() const { return width_ * height_; }
  State start() const { return start_; }
  State goal() const { return goal_; }

  bool in_bounds(State s) const { return s.x >= 0 && s.y >= 0 && s.x < width_ && s.y < height_; }
  bool is_wall(State s) const { return blocked_[index(s)]; }
  bool feasible(State s) const { return in_bounds(s) && !is_wall(s); }
  bool is_doorway(State s) const { return feasible(s) && doorway_[index(s)]; }

  int index(State s) const { return s.y * width_ + s.x; }
  State state_at(int idx) const { return {idx % width_, idx / width_}; }

  /// Room label of a feasible cell. Doorways carry kNoRoom. Rooms are
  /// numbered in order of breadth-first discovery from the start, so the
  /// start room is 0.
  int room_of(State s) const { return room_[index(s)]; }
  int num_rooms() const { return num_rooms_; }

  const std::vector<State>& feasible_states() const { return feasible_; }
  std::vector<State> doorways() const;
  std::vector<State> walls() const;

  /// Horizon cap shared by data generation and evaluation.
  int max_episode_steps() const { return 4 * width_ * height_; }

  /// Text map: '#' wall, '.' free, 'S' start, 'G' goal; row-major lines.
  std::string to_text() const;
  static GridSpec from_text(std::string_view text);

  /// FNV-1a over the text map. Stored in dataset and checkpoint headers.
  std::uint64_t hash() const;

 private:
  void label_rooms();

  int width_;
  int height_;
  State start_;
  State goal_;
  std::vector<bool> blocked_;
  std::vector<bool> doorway_;
  std::vector<int> room_;
  std::vector<State> feasible_;
  int num_rooms_ = 0;
};

/// Linear chain of four square rooms separated by walls with one doorway
/// each. Start is in the far corner of room 0, goal in the far corner of
/// room 3.
GridSpec four_room(int room_size = 5);

struct StepResult {
  State next;
  double reward = 0.0;
  bool done = false;
  friend bool operator==(const StepResult&, const StepResult&) = default;
};

/// Deterministic dynamics. Blocked moves leave the agent in place. Throws
/// CorruptStateError for infeasible input states.
StepResult step(const GridSpec& grid, State s, Action a);

/// BFS distance (in steps) from every cell to `target`; -1 for unreachable
/// cells and walls.
std::vector<int> bfs_distances(const GridSpec& grid, State target);

/// Action on a shortest path to `goal` for every state that can reach it.
/// Ties resolve in the order Up, Down, Left, Right. The goal itself is
/// absent.
std::map<State, Action> shortest_path_policy(const GridSpec& grid, State goal);

/// Optimal values. v and q are indexed by cell index; walls hold 0. The goal
/// is absorbing with value 0.
struct ValueTable {
  Eigen::VectorXd v;
  Eigen::Matrix<double, Eigen::Dynamic, kNumActions> q;
  int iterations = 0;
  double residual = 0.0;
};

ValueTable value_iteration(const GridSpec& grid, double gamma, double tol);

/// Bellman residual sup_s |v(s) - max_a [r + gamma v(s')]| of a value vector.
double bellman_residual(const GridSpec& grid, const Eigen::VectorXd& v, double gamma);

/// Lowest-index argmax over the four action values.
template <typename Derived>
Action greedy_action(const Eigen::MatrixBase<Derived>& values) {
  Eigen::Index best = 0;
  for (Eigen::Index a = 1; a < values.size(); ++a)
    if (values(a) > values(best)) best = a;
  return action_from_index(static_cast<int>(best));
}

/// True when every action value is exactly equal (rendered as "no action").
template <typename Derived>
bool all_tied(const Eigen::MatrixBase<Derived>& values) {
  return (values.array() == values(0)).all();
}

}  // namespace imbrl
