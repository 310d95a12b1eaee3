#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "imbrl/dataset.hpp"
#include "imbrl/grid.hpp"
#include "imbrl/qfunction.hpp"

namespace imbrl {

using ActionDistribution = Eigen::Matrix<double, kNumActions, 1>;

/// Maps grid states to Q-function inputs: either the cell index (tabular) or
/// a feature vector. Feature encoders may memoise a set of states; memoised
/// and live encodings are bit-identical because both call the same function.
class StateEncoder {
 public:
  using FeatureFn = std::function<Eigen::VectorXd(State)>;

  static StateEncoder tabular(const GridSpec& grid);
  static StateEncoder features(const GridSpec& grid, int dim, FeatureFn fn);

  bool is_tabular() const { return dim_ == 0; }
  int dim() const { return dim_; }
  int num_cells() const { return num_cells_; }

  /// Representation that matches this encoder.
  QRepr default_repr(const std::vector<int>& hidden = {64}) const;

  void memoize(std::span<const State> states);
  Eigen::VectorXd encode(State s) const;
  QInputs gather(std::span<const State> states) const;

 private:
  int dim_ = 0;
  int width_ = 0;
  int num_cells_ = 0;
  FeatureFn fn_;
  Eigen::MatrixXd memo_;
  std::vector<bool> memoized_;
};

/// (x / width, y / height).
StateEncoder scaled_xy_encoder(const GridSpec& grid);

/// Minibatch in the layout consumed by cql_loss.
struct Batch {
  QInputs s;
  QInputs next;
  std::vector<int> actions;
  Eigen::VectorXd rewards;
  std::vector<std::uint8_t> done;
  /// Per-sample loss weights (importance sampling); empty means all ones.
  Eigen::VectorXd weights;

  Eigen::Index size() const { return static_cast<Eigen::Index>(actions.size()); }
};

Batch make_batch(const Dataset& d, std::span<const std::size_t> indices, const StateEncoder& enc);

/// r + gamma * max_a' target(s', a'), or r on terminal transitions.
double bellman_target(const QFunction& target, const StateEncoder& enc, const Transition& t, double gamma);

/// Vectorised targets for a batch.
Eigen::VectorXd bellman_targets(const QFunction& target, const Batch& b, double gamma);

struct LossResult {
  double loss = 0.0;
  double penalty = 0.0;  ///< mean of logsumexp_a Q(s, a) - Q(s, a_data), before alpha
  double td = 0.0;       ///< half mean squared TD error
  Eigen::VectorXd grad;  ///< d loss / d q.params
  Eigen::VectorXd td_errors;  ///< Q(s, a_data) - target, per sample
};

/// Discrete CQL objective
///   alpha * mean[logsumexp_a Q(s, a) - Q(s, a_data)] + 1/2 mean[(Q(s, a_data) - y)^2]
/// with y from the frozen target network. With batch weights w the means
/// become sum_i w_i l_i / B. Throws NumericalError on non-finite output.
LossResult cql_loss(const QFunction& q, const QFunction& target, const Batch& b, double alpha, double gamma);

/// Numerically stable log-sum-exp of each column.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> logsumexp_cols(const Eigen::MatrixBase<Derived>& x) {
  const auto m = x.colwise().maxCoeff().eval();
  return m.array() + (x.rowwise() - m).array().exp().colwise().sum().log();
}

/// theta' <- tau * theta + (1 - tau) * theta'.
void polyak_update(Eigen::VectorXd& target, const Eigen::VectorXd& online, double tau);

/// Largest per-coordinate relative error |g - g_fd| / max(|g|, |g_fd|, abs_floor)
/// between an analytic gradient and central differences with step h.
/// `coords` restricts the check; empty means every coordinate.
using LossWithGradient = std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>;
double finite_diff_check(const LossWithGradient& loss_fn, const Eigen::VectorXd& params, double h,
                         std::span<const Eigen::Index> coords = {}, double abs_floor = 1e-6);

/// Empirical action frequencies per visited state with additive smoothing;
/// unvisited states get the uniform distribution.
class BehaviorPolicy {
 public:
  BehaviorPolicy(const Dataset& d, double smoothing);
  ActionDistribution operator()(State s) const;
  bool visited(State s) const { return counts_.contains(s); }
  double smoothing() const { return smoothing_; }

 private:
  std::map<State, Eigen::Matrix<double, kNumActions, 1>> counts_;
  double smoothing_;
};

BehaviorPolicy behavior_policy(const Dataset& d, double smoothing);

/// One-hot distribution on the lowest-index greedy action.
ActionDistribution greedy_distribution(const QFunction& q, const StateEncoder& enc, State s);

}  // namespace imbrl
