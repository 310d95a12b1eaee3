#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "imbrl/dataset.hpp"
#include "imbrl/grid.hpp"
#include "imbrl/rng.hpp"

namespace imbrl {

/// Discrete power law over ranks 1..support_size: P(x) = x^-eta / Z.
struct PowerLawSpec {
  double eta = 0.0;
  int support_size = 1;
};

/// Exact probabilities, entry i is rank i + 1.
Eigen::VectorXd power_law_probabilities(const PowerLawSpec& spec);

/// Inverse-CDF sampler with the cumulative table built once.
class PowerLawSampler {
 public:
  explicit PowerLawSampler(const PowerLawSpec& spec);
  /// Rank in 1..n.
  int operator()(Rng& rng) const;
  const Eigen::VectorXd& probabilities() const { return probs_; }

 private:
  Eigen::VectorXd probs_;
  std::vector<double> cdf_;
};

/// Single draw; builds the table each call, prefer PowerLawSampler in loops.
int sample_power_law(const PowerLawSpec& spec, Rng& rng);

/// Probability that the behaviour controller takes its shortest-path action.
///
/// Progress mode: p(s) = p_min + (p_max - p_min) * (1 - dist(s, goal) / dist(start, goal)),
/// clipped to [p_min, p_max]; noisy near the start, near-optimal near the goal.
/// Time mode: p(t) ramps linearly from p_min to p_max over `ramp_steps`
/// steps of the episode (0 means the start-goal BFS distance).
struct CorrectActionSchedule {
  enum class Mode { Progress, Time };
  /// What the controller does when it does not take the correct action.
  enum class Noise { Uniform, OtherActions };

  double p_min = 0.1;
  double p_max = 1.0;
  Mode mode = Mode::Progress;
  Noise noise = Noise::Uniform;
  int ramp_steps = 0;

  void validate() const;
  double probability(int dist_to_goal, int start_dist, int t) const;
};

Dataset generate_fourroom_dataset(const GridSpec& grid, int n_episodes,
                                  const CorrectActionSchedule& schedule, Rng& rng);

/// Candidate goals for goal-varying data: every feasible cell except the
/// start, sorted by BFS distance to the evaluation goal, farthest first
/// (ties by cell index). The evaluation goal is therefore the last rank.
std::vector<State> goal_candidates_by_distance(const GridSpec& grid);

/// Per episode a controller goal is drawn from the power law over
/// `candidates` (rank 1 = candidates[0]); rewards and termination still come
/// from the grid's own goal.
Dataset generate_goal_varying_dataset(const GridSpec& grid, const std::vector<State>& candidates,
                                      const PowerLawSpec& goal_spec, int n_episodes,
                                      const CorrectActionSchedule& schedule, Rng& rng);

/// Whole-episode mixture with about random_ratio * target_size transitions
/// from `random`; the rest is filled from `expert`.
Dataset mix_datasets(const Dataset& expert, const Dataset& random, double random_ratio,
                     std::size_t target_size, Rng& rng);

struct DatasetStats {
  std::map<State, std::size_t> counts;
  double threshold = 0.0;  ///< head iff count >= threshold
  std::vector<State> head;
  std::vector<State> tail;
};

/// Visit counts of transition source states plus a head/tail split at the
/// given quantile of the positive counts (0.5 = median).
DatasetStats dataset_stats(const Dataset& d, double quantile = 0.5);

/// Linear-interpolation quantile of a nonempty sample.
double quantile_of(std::vector<double> values, double q);

}  // namespace imbrl
