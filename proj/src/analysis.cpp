#include "imbrl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "imbrl/datagen.hpp"
#include "imbrl/errors.hpp"
#include "imbrl/io.hpp"

namespace imbrl {

OccupancyEstimate state_occupancy(const Dataset& d, double quantile) {
  if (d.empty()) throw ConfigError("state_occupancy needs a nonempty dataset");
  const DatasetStats stats = dataset_stats(d, quantile);
  OccupancyEstimate occ;
  const double total = static_cast<double>(d.size());
  for (const auto& [s, c] : stats.counts) occ.d_beta[s] = static_cast<double>(c) / total;
  occ.head.insert(stats.head.begin(), stats.head.end());
  occ.tail.insert(stats.tail.begin(), stats.tail.end());
  occ.threshold = stats.threshold;
  return occ;
}

PowerLawFit fit_power_law_exponent(std::span<const double> counts) {
  for (double c : counts)
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("power law fit needs positive finite counts");
  std::vector<double> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  PowerLawFit fit;
  fit.support = static_cast<int>(sorted.size());
  if (sorted.empty()) throw ConfigError("power law fit needs counts");
  if (sorted.front() == sorted.back()) {
    fit.degenerate = true;
    return fit;
  }
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 10) throw ConfigError("power law fit needs at least 10 distinct counts");

  const Eigen::Index n = static_cast<Eigen::Index>(sorted.size());
  const Eigen::ArrayXd log_rank = Eigen::ArrayXd::LinSpaced(n, 1.0, static_cast<double>(n)).log();
  const Eigen::Map<const Eigen::ArrayXd> weight(sorted.data(), n);
  const double target = (weight * log_rank).sum() / weight.sum();

  // Mean log-rank under the model; strictly decreasing in eta.
  auto model_mean = [&](double eta) {
    const Eigen::ArrayXd w = (-eta * log_rank).exp();
    return (w * log_rank).sum() / w.sum();
  };
  if (model_mean(0.0) <= target) return fit;
  double lo = 0.0, hi = 1.0;
  while (model_mean(hi) > target && hi < 1e3) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (model_mean(mid) > target ? lo : hi) = mid;
  }
  fit.eta = 0.5 * (lo + hi);
  return fit;
}

double divergence(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& q,
                  DivergenceMetric metric) {
  if (p.size() != q.size()) throw ConfigError("divergence between distributions of different sizes");
  if (metric == DivergenceMetric::TotalVariation) return 0.5 * (p - q).cwiseAbs().sum();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) == 0.0) continue;
    if (q(i) <= 0.0) throw UndefinedStateError("KL divergence with q = 0 where p > 0");
    kl += p(i) * std::log(p(i) / q(i));
  }
  return std::max(kl, 0.0);
}

double policy_divergence(const Policy& pi, const BehaviorPolicy& beta, State s, DivergenceMetric metric) {
  if (!beta.visited(s) && beta.smoothing() == 0.0)
    throw UndefinedStateError("state (" + std::to_string(s.x) + "," + std::to_string(s.y) +
                              ") is not in the dataset and the behaviour estimate is unsmoothed");
  return divergence(pi(s), beta(s), metric);
}

namespace {

double integrand_root(const CoverageTerm& t) {
  if (!(t.occupancy > 0.0)) throw ConfigError("coverage term needs positive occupancy");
  return std::sqrt(t.divergence / t.occupancy);
}

std::vector<double> cumulative_weights(std::span<const CoverageTerm> group) {
  std::vector<double> cdf;
  double acc = 0.0;
  for (const CoverageTerm& t : group) cdf.push_back(acc += t.occupancy);
  return cdf;
}

std::size_t draw(const std::vector<double>& cdf, Rng& rng) {
  const double u = uniform01(rng) * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

void require_split(std::span<const CoverageTerm> head, std::span<const CoverageTerm> tail) {
  if (head.empty() || tail.empty()) throw ConfigError("differential concentrability needs nonempty head and tail");
}

}  // namespace

double differential_concentrability_exact(std::span<const CoverageTerm> head, std::span<const CoverageTerm> tail) {
  require_split(head, tail);
  double wh = 0.0, wt = 0.0;
  for (const auto& t : head) wh += t.occupancy;
  for (const auto& t : tail) wt += t.occupancy;
  double acc = 0.0;
  for (const auto& h : head)
    for (const auto& t : tail) {
      const double gap = integrand_root(h) - integrand_root(t);
      acc += (h.occupancy / wh) * (t.occupancy / wt) * gap * gap;
    }
  return acc;
}

CdiffEstimate differential_concentrability_mc(std::span<const CoverageTerm> head, std::span<const CoverageTerm> tail,
                                              int n_pairs, Rng& rng) {
  require_split(head, tail);
  if (n_pairs < 1) throw ConfigError("n_pairs must be positive");
  const auto head_cdf = cumulative_weights(head);
  const auto tail_cdf = cumulative_weights(tail);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n_pairs; ++i) {
    const double gap = integrand_root(head[draw(head_cdf, rng)]) - integrand_root(tail[draw(tail_cdf, rng)]);
    const double v = gap * gap;
    sum += v;
    sum_sq += v * v;
  }
  CdiffEstimate est;
  est.n_pairs = n_pairs;
  est.mean = sum / n_pairs;
  if (n_pairs > 1) {
    const double var = std::max(0.0, (sum_sq - n_pairs * est.mean * est.mean) / (n_pairs - 1));
    est.std_error = std::sqrt(var / n_pairs);
  }
  return est;
}

CdiffEstimate differential_concentrability(const Dataset& d, const Policy& pi, const BehaviorPolicy& beta,
                                           DivergenceMetric metric, int n_pairs, Rng& rng, double quantile) {
  const OccupancyEstimate occ = state_occupancy(d, quantile);
  std::vector<CoverageTerm> head, tail;
  for (const auto& [s, p] : occ.d_beta) {
    CoverageTerm t{policy_divergence(pi, beta, s, metric), p};
    (occ.head.contains(s) ? head : tail).push_back(t);
  }
  if (head.empty() || tail.empty())
    throw ConfigError("dataset has an empty head or tail group; differential concentrability is undefined");
  return differential_concentrability_mc(head, tail, n_pairs, rng);
}

TdReport td_error_by_group(const QFunction& q, const StateEncoder& enc, const Dataset& d,
                           const std::map<std::string, std::vector<State>>& groups, double gamma,
                           Bootstrap bootstrap, const Policy& pi) {
  if (bootstrap == Bootstrap::Expected && !pi) throw ConfigError("expected bootstrap needs a policy");
  TdReport report;
  for (const auto& [name, members] : groups) {
    const std::set<State> in_group(members.begin(), members.end());
    std::vector<State> s, next;
    std::vector<const Transition*> picked;
    for (const Transition& t : d.transitions)
      if (in_group.contains(t.s)) {
        s.push_back(t.s);
        next.push_back(t.next);
        picked.push_back(&t);
      }
    if (picked.empty()) {
      report.warnings.push_back("group '" + name + "' has no transitions; excluded");
      continue;
    }
    const ActionValues qs = q.forward(enc.gather(s));
    const ActionValues qn = q.forward(enc.gather(next));
    double acc = 0.0;
    for (std::size_t i = 0; i < picked.size(); ++i) {
      const Transition& t = *picked[i];
      const auto col = static_cast<Eigen::Index>(i);
      double boot = 0.0;
      if (!t.done)
        boot = bootstrap == Bootstrap::Greedy ? qn.col(col).maxCoeff() : pi(t.next).dot(qn.col(col));
      acc += std::abs(qs(action_index(t.a), col) - (t.reward + gamma * boot));
    }
    report.groups[name] = {acc / static_cast<double>(picked.size()), picked.size()};
  }
  return report;
}

void write_occupancy_csv(std::ostream& out, const OccupancyEstimate& occ, const Dataset& d, const GridSpec& grid) {
  const DatasetStats stats = dataset_stats(d);
  out << "# imbrl-occupancy v1\n";
  out << "x,y,room,count,d_beta,group\n";
  for (const auto& [s, p] : occ.d_beta) {
    out << s.x << ',' << s.y << ',' << (grid.feasible(s) ? grid.room_of(s) : kNoRoom) << ','
        << stats.counts.at(s) << ',' << io::format_double(p) << ',' << (occ.head.contains(s) ? "head" : "tail")
        << '\n';
  }
}

void write_td_csv(std::ostream& out, const TdReport& report) {
  out << "# imbrl-td-by-group v1\n";
  out << "group,transitions,mean_abs_td\n";
  for (const auto& [name, g] : report.groups)
    out << name << ',' << g.transitions << ',' << io::format_double(g.mean_abs) << '\n';
}

void write_cdiff_csv(std::ostream& out, const CdiffEstimate& est, const std::string& label) {
  out << "# imbrl-cdiff v1\n";
  out << "policy,n_pairs,c_diff,std_error\n";
  out << label << ',' << est.n_pairs << ',' << io::format_double(est.mean) << ','
      << io::format_double(est.std_error) << '\n';
}

}  // namespace imbrl
