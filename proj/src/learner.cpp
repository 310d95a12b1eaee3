#include "imbrl/learner.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "imbrl/errors.hpp"

namespace imbrl {

StateEncoder StateEncoder::tabular(const GridSpec& grid) {
  StateEncoder e;
  e.width_ = grid.width();
  e.num_cells_ = grid.num_cells();
  return e;
}

StateEncoder StateEncoder::features(const GridSpec& grid, int dim, FeatureFn fn) {
  if (dim <= 0) throw ConfigError("feature dimension must be positive");
  StateEncoder e;
  e.dim_ = dim;
  e.width_ = grid.width();
  e.num_cells_ = grid.num_cells();
  e.fn_ = std::move(fn);
  e.memo_ = Eigen::MatrixXd::Zero(dim, grid.num_cells());
  e.memoized_.assign(static_cast<std::size_t>(grid.num_cells()), false);
  return e;
}

QRepr StateEncoder::default_repr(const std::vector<int>& hidden) const {
  return is_tabular() ? QRepr::tabular(num_cells_) : QRepr::mlp(dim_, hidden);
}

void StateEncoder::memoize(std::span<const State> states) {
  if (is_tabular()) return;
  for (State s : states) {
    const int i = s.y * width_ + s.x;
    if (memoized_[i]) continue;
    memo_.col(i) = encode(s);
    memoized_[i] = true;
  }
}

Eigen::VectorXd StateEncoder::encode(State s) const {
  if (is_tabular()) throw ConfigError("tabular encoder has no feature vector");
  Eigen::VectorXd v = fn_(s);
  if (v.size() != dim_) throw ConfigError("feature function returned the wrong dimension");
  return v;
}

QInputs StateEncoder::gather(std::span<const State> states) const {
  QInputs in;
  if (is_tabular()) {
    in.index.reserve(states.size());
    for (State s : states) in.index.push_back(s.y * width_ + s.x);
    return in;
  }
  in.features.resize(dim_, static_cast<Eigen::Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k) {
    const int i = states[k].y * width_ + states[k].x;
    in.features.col(static_cast<Eigen::Index>(k)) = memoized_[i] ? Eigen::VectorXd(memo_.col(i)) : encode(states[k]);
  }
  return in;
}

StateEncoder scaled_xy_encoder(const GridSpec& grid) {
  const double w = grid.width();
  const double h = grid.height();
  return StateEncoder::features(grid, 2, [w, h](State s) {
    return Eigen::Vector2d(s.x / w, s.y / h).eval();
  });
}

Batch make_batch(const Dataset& d, std::span<const std::size_t> indices, const StateEncoder& enc) {
  Batch b;
  std::vector<State> s, next;
  s.reserve(indices.size());
  next.reserve(indices.size());
  b.actions.reserve(indices.size());
  b.done.reserve(indices.size());
  b.rewards.resize(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Transition& t = d.transitions.at(indices[k]);
    s.push_back(t.s);
    next.push_back(t.next);
    b.actions.push_back(action_index(t.a));
    b.rewards(static_cast<Eigen::Index>(k)) = t.reward;
    b.done.push_back(t.done ? 1 : 0);
  }
  b.s = enc.gather(s);
  b.next = enc.gather(next);
  return b;
}

double bellman_target(const QFunction& target, const StateEncoder& enc, const Transition& t, double gamma) {
  if (t.done) return t.reward;
  const State next[1] = {t.next};
  return t.reward + gamma * target.forward(enc.gather(next)).col(0).maxCoeff();
}

Eigen::VectorXd bellman_targets(const QFunction& target, const Batch& b, double gamma) {
  const ActionValues qn = target.forward(b.next);
  Eigen::VectorXd y = b.rewards;
  for (Eigen::Index i = 0; i < b.size(); ++i)
    if (!b.done[i]) y(i) += gamma * qn.col(i).maxCoeff();
  return y;
}

LossResult cql_loss(const QFunction& q, const QFunction& target, const Batch& b, double alpha, double gamma) {
  const Eigen::Index n = b.size();
  if (n == 0) throw ConfigError("cql_loss needs a nonempty batch");
  const bool weighted = b.weights.size() > 0;
  if (weighted && b.weights.size() != n) throw ConfigError("batch weights have the wrong length");

  const Eigen::VectorXd y = bellman_targets(target, b, gamma);
  const ActionValues qs = q.forward(b.s);
  const auto lse = logsumexp_cols(qs).eval();

  LossResult out;
  out.td_errors.resize(n);
  ActionValues upstream = ActionValues::Zero(kNumActions, n);
  double penalty = 0.0, td = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weighted ? b.weights(i) : 1.0;
    const int a = b.actions[i];
    const double err = qs(a, i) - y(i);
    out.td_errors(i) = err;
    penalty += w * (lse(i) - qs(a, i));
    td += w * 0.5 * err * err;
    // d/dQ [alpha (lse - Q_a)] = alpha (softmax - e_a); d/dQ_a [err^2 / 2] = err.
    upstream.col(i) = (alpha * w / static_cast<double>(n)) * (qs.col(i).array() - lse(i)).exp().matrix();
    upstream(a, i) += (w / static_cast<double>(n)) * (err - alpha);
  }
  out.penalty = penalty / static_cast<double>(n);
  out.td = td / static_cast<double>(n);
  out.loss = alpha * out.penalty + out.td;
  out.grad = Eigen::VectorXd::Zero(q.params().size());
  q.backward(b.s, upstream, out.grad);

  if (!std::isfinite(out.loss) || !out.grad.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite CQL loss (loss=" << out.loss << ", penalty=" << out.penalty << ", td=" << out.td
        << ", |params|_inf=" << q.params().lpNorm<Eigen::Infinity>() << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

void polyak_update(Eigen::VectorXd& target, const Eigen::VectorXd& online, double tau) {
  if (target.size() != online.size()) throw ConfigError("polyak_update: parameter length mismatch");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("polyak_update: tau must lie in [0, 1]");
  if (tau == 1.0) {
    target = online;
    return;
  }
  target = tau * online + (1.0 - tau) * target;
}

double finite_diff_check(const LossWithGradient& loss_fn, const Eigen::VectorXd& params, double h,
                         std::span<const Eigen::Index> coords, double abs_floor) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  const Eigen::VectorXd analytic = loss_fn(params).second;
  std::vector<Eigen::Index> all;
  if (coords.empty()) {
    all.resize(static_cast<std::size_t>(params.size()));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    coords = all;
  }
  double worst = 0.0;
  Eigen::VectorXd p = params;
  for (Eigen::Index c : coords) {
    const double orig = p(c);
    p(c) = orig + h;
    const double up = loss_fn(p).first;
    p(c) = orig - h;
    const double down = loss_fn(p).first;
    p(c) = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic(c)), std::abs(numeric), abs_floor});
    worst = std::max(worst, std::abs(analytic(c) - numeric) / denom);
  }
  return worst;
}

BehaviorPolicy::BehaviorPolicy(const Dataset& d, double smoothing) : smoothing_(smoothing) {
  if (!(smoothing >= 0.0)) throw ConfigError("smoothing must be >= 0");
  for (const Transition& t : d.transitions) {
    auto [it, inserted] = counts_.try_emplace(t.s, Eigen::Matrix<double, kNumActions, 1>::Zero());
    it->second(action_index(t.a)) += 1.0;
  }
}

ActionDistribution BehaviorPolicy::operator()(State s) const {
  const auto it = counts_.find(s);
  if (it == counts_.end()) return ActionDistribution::Constant(1.0 / kNumActions);
  const ActionDistribution smoothed = it->second.array() + smoothing_;
  return smoothed / smoothed.sum();
}

BehaviorPolicy behavior_policy(const Dataset& d, double smoothing) { return BehaviorPolicy(d, smoothing); }

ActionDistribution greedy_distribution(const QFunction& q, const StateEncoder& enc, State s) {
  const State one[1] = {s};
  ActionDistribution out = ActionDistribution::Zero();
  out(action_index(greedy_action(q.forward(enc.gather(one)).col(0)))) = 1.0;
  return out;
}

}  // namespace imbrl
