#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "imbrl/dataset.hpp"
#include "imbrl/grid.hpp"
#include "imbrl/learner.hpp"
#include "imbrl/retrieval.hpp"
#include "imbrl/rng.hpp"
#include "imbrl/train.hpp"

namespace imbrl {

struct RBConfig {
  TrainConfig base;
  int k = 10;
  SimilarityMetric metric = SimilarityMetric::Euclidean;
  int partition_count = 0;
  int probes = 0;
  /// Add every feasible grid cell to the auxiliary set, not only dataset states.
  bool aux_all_grid_states = false;
  std::vector<int> hidden = {64};

  void validate() const;
};

/// Distinct scaled (x, y) vectors of the dataset's states (sources and
/// successors), optionally joined by every feasible cell; cell-index order.
Eigen::MatrixXd auxiliary_states(const GridSpec& grid, const Dataset& d, bool all_grid_states);

/// Encoder producing s_final = xy(s) ⊕ mean(top-k retrieved) with the
/// given index. Queries hit the index on every encode that is not memoised.
StateEncoder retrieval_encoder(const GridSpec& grid, std::shared_ptr<const RetrievalIndex> index, int k);

struct RBTrainResult {
  TrainResult result;
  std::shared_ptr<const RetrievalIndex> index;
};

/// Builds the static index over `aux` once, memoises retrieval for every
/// dataset state (s and s' retrieved independently) and runs CQL on the
/// augmented inputs with an MLP of cfg.hidden widths.
RBTrainResult train_rb_cql(const GridSpec& grid, const Dataset& d, const Eigen::MatrixXd& aux, const RBConfig& cfg);

struct EpisodeRecord {
  State start;
  int steps = 0;
  double discounted_return = 0.0;
  bool success = false;
  std::vector<bool> rooms_reached;
};

struct EvalReport {
  double success_rate = 0.0;
  double mean_return = 0.0;
  std::vector<double> room_reach_rate;
  std::vector<EpisodeRecord> episodes;
};

struct EvalOptions {
  int n_episodes = 100;
  double gamma = 0.99;
  /// Uniformly sampled start cells; empty means the grid's start.
  std::vector<State> start_states;
};

/// Greedy rollouts (lowest-index tie break) up to the horizon cap. Throws
/// ConfigError if q does not accept the encoder's inputs.
EvalReport evaluate(const GridSpec& grid, const QFunction& q, const StateEncoder& enc, const EvalOptions& opts,
                    Rng& rng);

void write_eval_csv(std::ostream& out, const EvalReport& report);

}  // namespace imbrl
