#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "imbrl/dataset.hpp"
#include "imbrl/learner.hpp"
#include "imbrl/qfunction.hpp"

namespace imbrl {

enum class SamplerKind { Uniform, Prioritized };
enum class OptimizerKind { Sgd, Adam };

/// PER settings. The importance exponent anneals linearly from
/// importance_start to importance_end over the run.
struct PerConfig {
  double omega = 0.6;
  double importance_start = 0.4;
  double importance_end = 1.0;
  double epsilon = 1e-4;
};

/// Adam: m <- b1 m + (1 - b1) g; v <- b2 v + (1 - b2) g^2;
/// theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
  double penalty = 0.0;
  double td = 0.0;
  std::optional<double> eval;
};

struct TrainConfig {
  double alpha = 5.0;
  double gamma = 0.99;
  double tau = 5e-3;
  int batch_size = 256;
  double learning_rate = 1e-2;
  int steps = 10000;
  std::uint64_t seed = 0;
  SamplerKind sampler = SamplerKind::Uniform;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  PerConfig per;
  AdamConfig adam;
  int log_interval = 1000;
  /// Called every eval_interval steps (0 disables) with the online network.
  int eval_interval = 0;
  std::function<double(const QFunction&)> evaluator;
  /// Invoked for every log row as it is produced, so callers can stream it.
  std::function<void(const TrainLogRow&)> on_log;

  void validate() const;
};

struct TrainResult {
  QFunction q;
  QFunction target;
  std::vector<TrainLogRow> log;
};

/// Offline CQL (alpha = 0 gives fitted Q-iteration with SGD). Each step
/// samples a batch, takes one gradient step on cql_loss and applies a Polyak
/// update to the target network. Every transition's states are memoised in
/// `enc` before training. Deterministic for a given seed.
TrainResult train(const Dataset& d, const TrainConfig& cfg, StateEncoder& enc, const QRepr& repr);

/// Behaviour cloning: tabular Q(s, a) = log beta_hat(a | s).
QFunction behavior_cloning_q(const Dataset& d, const GridSpec& grid, double smoothing = 1e-3);

/// CSV with a version comment and header row.
void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log);

}  // namespace imbrl
