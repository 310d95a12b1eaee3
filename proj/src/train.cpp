#include "imbrl/train.hpp"

#include <cmath>
#include <ostream>

#include "imbrl/errors.hpp"
#include "imbrl/io.hpp"
#include "imbrl/per.hpp"
#include "imbrl/rng.hpp"

namespace imbrl {

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (steps < 1) throw ConfigError("steps must be positive");
  if (log_interval < 1) throw ConfigError("log_interval must be positive");
  if (eval_interval < 0) throw ConfigError("eval_interval must be >= 0");
}

TrainResult train(const Dataset& d, const TrainConfig& cfg, StateEncoder& enc, const QRepr& repr) {
  cfg.validate();
  if (d.empty()) throw ConfigError("cannot train on an empty dataset");
  if ((repr.kind == QRepr::Kind::Tabular) != enc.is_tabular())
    throw ConfigError("representation " + repr.describe() + " does not match the state encoder");
  if (!enc.is_tabular() && repr.input_dim != enc.dim())
    throw ConfigError("representation input dimension does not match the state encoder");

  std::vector<State> states;
  states.reserve(2 * d.size());
  for (const Transition& t : d.transitions) {
    states.push_back(t.s);
    states.push_back(t.next);
  }
  enc.memoize(states);

  TrainResult out{QFunction(repr, derive_seed(cfg.seed, 1)), {}, {}};
  out.target = out.q;
  Rng rng(derive_seed(cfg.seed, 2));

  std::optional<PrioritizedSampler> per;
  if (cfg.sampler == SamplerKind::Prioritized) per.emplace(d.size(), cfg.per.omega, cfg.per.epsilon);

  Eigen::VectorXd adam_m, adam_v;
  if (cfg.optimizer == OptimizerKind::Adam) {
    adam_m = Eigen::VectorXd::Zero(out.q.params().size());
    adam_v = Eigen::VectorXd::Zero(out.q.params().size());
  }

  std::vector<std::size_t> indices(static_cast<std::size_t>(cfg.batch_size));
  double acc_loss = 0.0, acc_penalty = 0.0, acc_td = 0.0;
  int acc_n = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    Batch batch;
    if (per) {
      const double frac = cfg.steps > 1 ? static_cast<double>(step - 1) / (cfg.steps - 1) : 1.0;
      const double beta = cfg.per.importance_start + frac * (cfg.per.importance_end - cfg.per.importance_start);
      auto sample = per->sample(indices.size(), beta, rng);
      indices = std::move(sample.indices);
      batch = make_batch(d, indices, enc);
      batch.weights = std::move(sample.weights);
    } else {
      for (auto& i : indices) i = uniform_index(rng, d.size());
      batch = make_batch(d, indices, enc);
    }

    LossResult loss;
    try {
      loss = cql_loss(out.q, out.target, batch, cfg.alpha, cfg.gamma);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step));
    }

    if (cfg.optimizer == OptimizerKind::Sgd) {
      out.q.params() -= cfg.learning_rate * loss.grad;
    } else {
      const auto& a = cfg.adam;
      adam_m = a.beta1 * adam_m + (1.0 - a.beta1) * loss.grad;
      adam_v = a.beta2 * adam_v + (1.0 - a.beta2) * loss.grad.array().square().matrix();
      const double c1 = 1.0 - std::pow(a.beta1, step);
      const double c2 = 1.0 - std::pow(a.beta2, step);
      out.q.params().array() -= cfg.learning_rate * (adam_m.array() / c1) / ((adam_v.array() / c2).sqrt() + a.eps);
    }
    if (per)
      for (std::size_t k = 0; k < indices.size(); ++k)
        per->set_priority(indices[k], std::abs(loss.td_errors(static_cast<Eigen::Index>(k))));
    polyak_update(out.target.params(), out.q.params(), cfg.tau);

    acc_loss += loss.loss;
    acc_penalty += loss.penalty;
    acc_td += loss.td;
    ++acc_n;
    const bool eval_now = cfg.eval_interval > 0 && cfg.evaluator && step % cfg.eval_interval == 0;
    if (step % cfg.log_interval == 0 || eval_now || step == cfg.steps) {
      TrainLogRow row{step, acc_loss / acc_n, acc_penalty / acc_n, acc_td / acc_n, std::nullopt};
      if (eval_now) row.eval = cfg.evaluator(out.q);
      out.log.push_back(row);
      if (cfg.on_log) cfg.on_log(row);
      acc_loss = acc_penalty = acc_td = 0.0;
      acc_n = 0;
    }
  }
  return out;
}

QFunction behavior_cloning_q(const Dataset& d, const GridSpec& grid, double smoothing) {
  const BehaviorPolicy beta(d, smoothing);
  QFunction q(QRepr::tabular(grid.num_cells()), 0);
  for (State s : grid.feasible_states())
    q.params().segment<kNumActions>(static_cast<Eigen::Index>(grid.index(s)) * kNumActions) =
        beta(s).array().log().matrix();
  return q;
}

void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log) {
  out << "# imbrl-train-log v1\n";
  out << "step,loss,penalty,td,eval\n";
  for (const TrainLogRow& r : log) {
    out << r.step << ',' << io::format_double(r.loss) << ',' << io::format_double(r.penalty) << ','
        << io::format_double(r.td) << ',' << (r.eval ? io::format_double(*r.eval) : std::string()) << '\n';
  }
}

}  // namespace imbrl
