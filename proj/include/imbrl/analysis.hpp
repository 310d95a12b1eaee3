#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "imbrl/dataset.hpp"
#include "imbrl/learner.hpp"
#include "imbrl/rng.hpp"

namespace imbrl {

/// Divergence requested at a state that has no data and no smoothing.
class UndefinedStateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct OccupancyEstimate {
  std::map<State, double> d_beta;
  std::set<State> head;  ///< sufficiently covered (count >= threshold)
  std::set<State> tail;
  double threshold = 0.0;
};

/// Empirical visitation frequency of transition source states, split into
/// head and tail at the given quantile of the positive counts.
OccupancyEstimate state_occupancy(const Dataset& d, double quantile = 0.5);

struct PowerLawFit {
  double eta = 0.0;
  bool degenerate = false;
  int support = 0;
};

/// Exponent of the rank-frequency curve of `counts`: counts are sorted in
/// decreasing order, rank r gets weight count_r, and eta solves the
/// finite-support discrete likelihood equation
///   sum_r r^-eta ln r / sum_r r^-eta = sum_r count_r ln r / sum_r count_r.
/// Needs at least 10 distinct counts unless all are equal (eta = 0, flagged).
PowerLawFit fit_power_law_exponent(std::span<const double> counts);

enum class DivergenceMetric { KL, TotalVariation };

/// KL(p || q) in nats or total variation 1/2 |p - q|_1.
double divergence(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& q,
                  DivergenceMetric metric);

using Policy = std::function<ActionDistribution(State)>;

double policy_divergence(const Policy& pi, const BehaviorPolicy& beta, State s, DivergenceMetric metric);

/// Per-state ingredients of the differential concentrability integrand.
struct CoverageTerm {
  double divergence = 0.0;
  double occupancy = 0.0;
};

/// E[(sqrt(D(s1)/d(s1)) - sqrt(D(s2)/d(s2)))^2], s1 from head and s2 from
/// tail, each drawn proportionally to its occupancy within its group.
double differential_concentrability_exact(std::span<const CoverageTerm> head, std::span<const CoverageTerm> tail);

struct CdiffEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int n_pairs = 0;
};

CdiffEstimate differential_concentrability_mc(std::span<const CoverageTerm> head, std::span<const CoverageTerm> tail,
                                              int n_pairs, Rng& rng);

/// Monte-Carlo estimate on a dataset: occupancies and the head/tail split
/// from state_occupancy, divergences D(pi, beta_hat)(s).
CdiffEstimate differential_concentrability(const Dataset& d, const Policy& pi, const BehaviorPolicy& beta,
                                           DivergenceMetric metric, int n_pairs, Rng& rng,
                                           double quantile = 0.5);

enum class Bootstrap { Greedy, Expected };

struct GroupTdError {
  double mean_abs = 0.0;
  std::size_t transitions = 0;
};

struct TdReport {
  std::map<std::string, GroupTdError> groups;
  std::vector<std::string> warnings;
};

/// Mean |Q(s, a) - (r + gamma * bootstrap(s'))| over transitions whose source
/// state lies in each group. Greedy bootstraps with max_a' Q(s', a');
/// Expected uses sum_a' pi(a'|s') Q(s', a') with `pi` (required then).
/// Groups with no matching transitions are omitted and reported as warnings.
TdReport td_error_by_group(const QFunction& q, const StateEncoder& enc, const Dataset& d,
                           const std::map<std::string, std::vector<State>>& groups, double gamma,
                           Bootstrap bootstrap = Bootstrap::Greedy, const Policy& pi = {});

void write_occupancy_csv(std::ostream& out, const OccupancyEstimate& occ, const Dataset& d, const GridSpec& grid);
void write_td_csv(std::ostream& out, const TdReport& report);
void write_cdiff_csv(std::ostream& out, const CdiffEstimate& est, const std::string& label);

}  // namespace imbrl
