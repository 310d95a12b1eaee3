#include "imbrl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imbrl/errors.hpp"
#include "imbrl/io.hpp"

namespace imbrl {

Eigen::VectorXd power_law_probabilities(const PowerLawSpec& spec) {
  if (spec.support_size < 1) throw ConfigError("power law support size must be positive");
  if (!(spec.eta >= 0.0) || !std::isfinite(spec.eta)) throw ConfigError("power law exponent must be >= 0");
  Eigen::VectorXd p(spec.support_size);
  for (int x = 1; x <= spec.support_size; ++x) p(x - 1) = std::pow(static_cast<double>(x), -spec.eta);
  const double z = p.sum();
  if (!(z > 0.0)) throw ConfigError("power law normaliser underflowed");
  return p / z;
}

PowerLawSampler::PowerLawSampler(const PowerLawSpec& spec) : probs_(power_law_probabilities(spec)) {
  cdf_.resize(static_cast<std::size_t>(probs_.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs_.size(); ++i) cdf_[i] = acc += probs_(i);
  cdf_.back() = 1.0;
}

int PowerLawSampler::operator()(Rng& rng) const {
  const double u = uniform01(rng);
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf_.begin(), std::ssize(cdf_) - 1)) + 1;
}

int sample_power_law(const PowerLawSpec& spec, Rng& rng) { return PowerLawSampler(spec)(rng); }

void CorrectActionSchedule::validate() const {
  if (!(0.0 <= p_min && p_min <= p_max && p_max <= 1.0))
    throw ConfigError("schedule needs 0 <= p_min <= p_max <= 1");
  if (ramp_steps < 0) throw ConfigError("schedule ramp_steps must be >= 0");
}

double CorrectActionSchedule::probability(int dist_to_goal, int start_dist, int t) const {
  double progress = 1.0;
  if (mode == Mode::Progress) {
    if (start_dist > 0) progress = 1.0 - static_cast<double>(dist_to_goal) / start_dist;
  } else {
    const int ramp = ramp_steps > 0 ? ramp_steps : start_dist;
    if (ramp > 0) progress = static_cast<double>(t) / ramp;
  }
  return std::clamp(p_min + (p_max - p_min) * progress, p_min, p_max);
}

namespace {

std::string schedule_tag(const CorrectActionSchedule& s) {
  std::string tag = s.mode == CorrectActionSchedule::Mode::Progress ? "progress" : "time";
  tag += ":" + io::format_double(s.p_min) + ":" + io::format_double(s.p_max);
  tag += s.noise == CorrectActionSchedule::Noise::Uniform ? ":uniform" : ":other";
  if (s.mode == CorrectActionSchedule::Mode::Time) tag += ":" + std::to_string(s.ramp_steps);
  return tag;
}

struct Controller {
  std::map<State, Action> policy;
  std::vector<int> dist;
  State target;
};

Controller make_controller(const GridSpec& grid, State target) {
  return {shortest_path_policy(grid, target), bfs_distances(grid, target), target};
}

// One behaviour episode from the grid start. Stops on termination, on
// reaching the controller's own target or at the horizon cap.
std::vector<Transition> run_episode(const GridSpec& grid, const Controller& ctl,
                                    const CorrectActionSchedule& schedule, Rng& rng) {
  std::vector<Transition> out;
  const int start_dist = ctl.dist[grid.index(grid.start())];
  State s = grid.start();
  for (int t = 0; t < grid.max_episode_steps(); ++t) {
    if (s == ctl.target) break;
    const Action correct = ctl.policy.at(s);
    Action a = correct;
    if (uniform01(rng) >= schedule.probability(ctl.dist[grid.index(s)], start_dist, t)) {
      if (schedule.noise == CorrectActionSchedule::Noise::Uniform) {
        a = action_from_index(static_cast<int>(uniform_index(rng, kNumActions)));
      } else {
        int k = static_cast<int>(uniform_index(rng, kNumActions - 1));
        if (k >= action_index(correct)) ++k;
        a = action_from_index(k);
      }
    }
    const StepResult r = step(grid, s, a);
    out.push_back({s, a, r.reward, r.next, r.done});
    if (r.done) break;
    s = r.next;
  }
  return out;
}

}  // namespace

Dataset generate_fourroom_dataset(const GridSpec& grid, int n_episodes,
                                  const CorrectActionSchedule& schedule, Rng& rng) {
  if (n_episodes < 1) throw ConfigError("n_episodes must be positive");
  schedule.validate();
  const std::uint64_t base = rng();
  const Controller ctl = make_controller(grid, grid.goal());

  Dataset d;
  d.grid_hash = grid.hash();
  d.meta["source"] = "fourroom-controller";
  d.meta["episodes"] = std::to_string(n_episodes);
  d.meta["schedule"] = schedule_tag(schedule);
  d.meta["seed"] = std::to_string(base);
  for (int e = 0; e < n_episodes; ++e) {
    Rng ep_rng(derive_seed(base, static_cast<std::uint64_t>(e)));
    d.append_episode(run_episode(grid, ctl, schedule, ep_rng));
  }
  return d;
}

std::vector<State> goal_candidates_by_distance(const GridSpec& grid) {
  const std::vector<int> dist = bfs_distances(grid, grid.goal());
  std::vector<State> out;
  for (State s : grid.feasible_states())
    if (s != grid.start() && dist[grid.index(s)] >= 0) out.push_back(s);
  std::stable_sort(out.begin(), out.end(), [&](State a, State b) {
    return dist[grid.index(a)] > dist[grid.index(b)];
  });
  return out;
}

Dataset generate_goal_varying_dataset(const GridSpec& grid, const std::vector<State>& candidates,
                                      const PowerLawSpec& goal_spec, int n_episodes,
                                      const CorrectActionSchedule& schedule, Rng& rng) {
  if (candidates.empty()) throw ConfigError("goal candidate list is empty");
  if (goal_spec.support_size != static_cast<int>(candidates.size()))
    throw ConfigError("goal power law support size (" + std::to_string(goal_spec.support_size) +
                      ") differs from candidate count (" + std::to_string(candidates.size()) + ")");
  if (n_episodes < 1) throw ConfigError("n_episodes must be positive");
  schedule.validate();
  for (State c : candidates)
    if (!grid.feasible(c) || c == grid.start()) throw ConfigError("invalid goal candidate");

  const PowerLawSampler sampler(goal_spec);
  const std::uint64_t base = rng();
  std::map<State, Controller> controllers;

  Dataset d;
  d.grid_hash = grid.hash();
  d.meta["source"] = "goal-varying";
  d.meta["eta"] = io::format_double(goal_spec.eta);
  d.meta["episodes"] = std::to_string(n_episodes);
  d.meta["schedule"] = schedule_tag(schedule);
  d.meta["seed"] = std::to_string(base);
  for (int e = 0; e < n_episodes; ++e) {
    Rng ep_rng(derive_seed(base, static_cast<std::uint64_t>(e)));
    const State target = candidates[static_cast<std::size_t>(sampler(ep_rng) - 1)];
    auto it = controllers.find(target);
    if (it == controllers.end()) it = controllers.emplace(target, make_controller(grid, target)).first;
    if (it->second.dist[grid.index(grid.start())] < 0) throw ConfigError("goal candidate unreachable");
    d.append_episode(run_episode(grid, it->second, schedule, ep_rng));
  }
  return d;
}

Dataset mix_datasets(const Dataset& expert, const Dataset& random, double random_ratio,
                     std::size_t target_size, Rng& rng) {
  if (!(random_ratio >= 0.0 && random_ratio <= 1.0)) throw ConfigError("random_ratio must lie in [0, 1]");
  if (target_size == 0) throw ConfigError("target_size must be positive");
  if (expert.empty() || random.empty()) throw ConfigError("mix_datasets needs two nonempty datasets");
  if (expert.grid_hash != random.grid_hash) throw ConfigError("datasets come from different grids");

  auto shuffled_order = [&rng](std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    return order;
  };

  const auto random_target = static_cast<std::size_t>(std::llround(random_ratio * static_cast<double>(target_size)));
  Dataset out;
  out.grid_hash = expert.grid_hash;
  std::size_t from_random = 0;
  if (random_target > 0) {
    for (std::size_t e : shuffled_order(random.num_episodes())) {
      if (from_random >= random_target) break;
      out.append_episode(random.episode(e));
      from_random += random.episode(e).size();
    }
    if (from_random < random_target)
      throw ConfigError("random dataset too small: has " + std::to_string(random.size()) +
                        " transitions, needs " + std::to_string(random_target));
  }
  if (out.size() < target_size) {
    for (std::size_t e : shuffled_order(expert.num_episodes())) {
      if (out.size() >= target_size) break;
      out.append_episode(expert.episode(e));
    }
    if (out.size() < target_size)
      throw ConfigError("expert dataset too small: needs " +
                        std::to_string(target_size - from_random) + " transitions, has " +
                        std::to_string(expert.size()));
  }
  out.meta["source"] = "mixture";
  out.meta["random_ratio"] = io::format_double(random_ratio);
  out.meta["target_size"] = std::to_string(target_size);
  out.meta["random_transitions"] = std::to_string(from_random);
  out.meta["expert_transitions"] = std::to_string(out.size() - from_random);
  return out;
}

double quantile_of(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

DatasetStats dataset_stats(const Dataset& d, double quantile) {
  DatasetStats stats;
  for (const Transition& t : d.transitions) ++stats.counts[t.s];
  if (stats.counts.empty()) return stats;
  std::vector<double> positive;
  positive.reserve(stats.counts.size());
  for (const auto& [s, c] : stats.counts) positive.push_back(static_cast<double>(c));
  stats.threshold = quantile_of(positive, quantile);
  for (const auto& [s, c] : stats.counts)
    (static_cast<double>(c) >= stats.threshold ? stats.head : stats.tail).push_back(s);
  return stats;
}

}  // namespace imbrl
