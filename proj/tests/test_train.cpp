#include <cmath>
#include <sstream>

#include "doctest.h"
#include "imbrl/analysis.hpp"
#include "imbrl/datagen.hpp"
#include "imbrl/errors.hpp"
#include "imbrl/train.hpp"

using namespace imbrl;

namespace {

// One transition for every feasible (state, action) pair, goal excluded.
Dataset full_coverage(const GridSpec& g) {
  Dataset d;
  for (State s : g.feasible_states()) {
    if (s == g.goal()) continue;
    std::vector<Transition> ep;
    for (int a = 0; a < kNumActions; ++a) {
      const StepResult r = step(g, s, static_cast<Action>(a));
      ep.push_back({s, static_cast<Action>(a), r.reward, r.next, r.done});
    }
    for (const Transition& t : ep) {
      d.episode_starts.push_back(d.transitions.size());
      d.transitions.push_back(t);
    }
  }
  return d;
}

// Tiny open room keeps the fitted iteration short.
GridSpec small_room() {
  return GridSpec::from_text(
      "#######\n"
      "#S....#\n"
      "#.....#\n"
      "#....G#\n"
      "#######\n");
}

double mean_greedy_tv(const QFunction& q, const StateEncoder& enc, const Dataset& d, const BehaviorPolicy& beta) {
  const OccupancyEstimate occ = state_occupancy(d);
  double total = 0.0;
  for (const auto& [s, p] : occ.d_beta) total += p * policy_divergence([&](State x) { return greedy_distribution(q, enc, x); }, beta, s,
                                                                     DivergenceMetric::TotalVariation);
  return total;
}

}  // namespace

TEST_CASE("alpha zero on full coverage recovers the optimal policy") {
  const GridSpec g = small_room();
  const Dataset d = full_coverage(g);
  StateEncoder enc = StateEncoder::tabular(g);
  TrainConfig cfg;
  cfg.alpha = 0.0;
  cfg.gamma = 0.9;
  cfg.batch_size = 32;
  cfg.learning_rate = 8.0;
  cfg.tau = 0.05;
  cfg.steps = 8000;
  cfg.seed = 3;
  const TrainResult r = train(d, cfg, enc, enc.default_repr());

  const ValueTable vt = value_iteration(g, 0.9, 1e-12);
  const auto dist = bfs_distances(g, g.goal());
  for (State s : g.feasible_states()) {
    if (s == g.goal()) continue;
    const Eigen::Vector4d qs = r.q.values(g.index(s));
    for (int a = 0; a < kNumActions; ++a) CHECK(qs(a) == doctest::Approx(vt.q(g.index(s), a)).epsilon(1e-3));
    const int a = static_cast<int>(greedy_action(qs));
    CHECK(vt.q(g.index(s), a) == doctest::Approx(vt.q.row(g.index(s)).maxCoeff()).epsilon(1e-9));
  }
  const int d0 = dist[static_cast<std::size_t>(g.index(g.start()))];
  CHECK(r.q.values(g.index(g.start())).maxCoeff() == doctest::Approx(10.0 * std::pow(0.9, d0 - 1)).epsilon(1e-3));
}

TEST_CASE("training is deterministic for a seed") {
  const GridSpec g = four_room();
  Rng rng(1);
  const Dataset d = generate_fourroom_dataset(g, 20, {}, rng);
  TrainConfig cfg;
  cfg.steps = 300;
  cfg.seed = 9;
  for (SamplerKind sk : {SamplerKind::Uniform, SamplerKind::Prioritized}) {
    cfg.sampler = sk;
    StateEncoder e1 = StateEncoder::tabular(g), e2 = StateEncoder::tabular(g);
    const TrainResult a = train(d, cfg, e1, e1.default_repr());
    const TrainResult b = train(d, cfg, e2, e2.default_repr());
    CHECK(a.q.params() == b.q.params());
    CHECK(a.target.params() == b.target.params());
    cfg.seed = 10;
    StateEncoder e3 = StateEncoder::tabular(g);
    CHECK(train(d, cfg, e3, e3.default_repr()).q.params() != a.q.params());
    cfg.seed = 9;
  }

  StateEncoder x1 = scaled_xy_encoder(g), x2 = scaled_xy_encoder(g);
  cfg.optimizer = OptimizerKind::Adam;
  cfg.learning_rate = 1e-3;
  cfg.steps = 50;
  CHECK(train(d, cfg, x1, x1.default_repr({8})).q.params() == train(d, cfg, x2, x2.default_repr({8})).q.params());
}

TEST_CASE("log rows, hooks and the csv writer") {
  const GridSpec g = four_room();
  Rng rng(2);
  const Dataset d = generate_fourroom_dataset(g, 10, {}, rng);
  StateEncoder enc = StateEncoder::tabular(g);
  TrainConfig cfg;
  cfg.steps = 250;
  cfg.log_interval = 100;
  cfg.eval_interval = 125;
  int evals = 0;
  cfg.evaluator = [&](const QFunction&) { return static_cast<double>(++evals); };
  std::vector<int> streamed;
  cfg.on_log = [&](const TrainLogRow& row) { streamed.push_back(row.step); };
  const TrainResult r = train(d, cfg, enc, enc.default_repr());

  std::vector<int> steps;
  for (const auto& row : r.log) steps.push_back(row.step);
  CHECK(steps == std::vector<int>{100, 125, 200, 250});
  CHECK(streamed == steps);
  CHECK(evals == 2);
  CHECK(r.log[1].eval == 1.0);
  CHECK_FALSE(r.log[0].eval.has_value());
  for (const auto& row : r.log) {
    CHECK(std::isfinite(row.loss));
    CHECK(row.loss == doctest::Approx(cfg.alpha * row.penalty + row.td));
  }

  std::ostringstream csv;
  write_train_log_csv(csv, {{10, 1.5, 0.25, 0.5, std::nullopt}, {20, 1.0, 0.0, 1.0, 0.75}});
  CHECK(csv.str() == "# imbrl-train-log v1\nstep,loss,penalty,td,eval\n10,1.5,0.25,0.5,\n20,1,0,1,0.75\n");
}

TEST_CASE("configuration errors") {
  const GridSpec g = four_room();
  Rng rng(3);
  const Dataset d = generate_fourroom_dataset(g, 2, {}, rng);
  StateEncoder enc = StateEncoder::tabular(g);
  auto bad = [&](auto&& mutate) {
    TrainConfig cfg;
    cfg.steps = 5;
    mutate(cfg);
    return cfg;
  };
  CHECK_THROWS_AS(train(d, bad([](TrainConfig& c) { c.alpha = -1; }), enc, enc.default_repr()), ConfigError);
  CHECK_THROWS_AS(train(d, bad([](TrainConfig& c) { c.gamma = 1.0; }), enc, enc.default_repr()), ConfigError);
  CHECK_THROWS_AS(train(d, bad([](TrainConfig& c) { c.tau = 0.0; }), enc, enc.default_repr()), ConfigError);
  CHECK_THROWS_AS(train(d, bad([](TrainConfig& c) { c.batch_size = 0; }), enc, enc.default_repr()), ConfigError);
  CHECK_THROWS_AS(train(d, bad([](TrainConfig& c) { c.learning_rate = 0; }), enc, enc.default_repr()), ConfigError);
  CHECK_THROWS_AS(train(d, bad([](TrainConfig& c) { c.steps = 0; }), enc, enc.default_repr()), ConfigError);
  CHECK_THROWS_AS(train(Dataset{}, bad([](TrainConfig&) {}), enc, enc.default_repr()), ConfigError);
  CHECK_THROWS_AS(train(d, bad([](TrainConfig&) {}), enc, QRepr::mlp(2, {4})), ConfigError);
  StateEncoder xy = scaled_xy_encoder(g);
  CHECK_THROWS_AS(train(d, bad([](TrainConfig&) {}), xy, QRepr::mlp(3, {4})), ConfigError);

  StateEncoder blowup = StateEncoder::tabular(g);
  CHECK_THROWS_AS(train(d, bad([](TrainConfig& c) { c.learning_rate = 1e200; c.steps = 200; }), blowup,
                        blowup.default_repr()),
                  NumericalError);
}

TEST_CASE("behaviour cloning reads the empirical policy") {
  const GridSpec g = four_room();
  Rng rng(4);
  const Dataset d = generate_fourroom_dataset(g, 30, {}, rng);
  const QFunction q = behavior_cloning_q(d, g, 1e-3);
  const BehaviorPolicy beta(d, 1e-3);
  for (State s : g.feasible_states()) {
    const Eigen::Vector4d want = beta(s).array().log().matrix();
    CHECK((q.values(g.index(s)) - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("a larger alpha keeps the greedy policy closer to the data") {
  // Every pair once, plus three extra Left moves per state: the data majority is suboptimal.
  const GridSpec g = small_room();
  Dataset d = full_coverage(g);
  for (State s : g.feasible_states()) {
    if (s == g.goal()) continue;
    for (int k = 0; k < 3; ++k) {
      const StepResult r = step(g, s, Action::Left);
      d.episode_starts.push_back(d.transitions.size());
      d.transitions.push_back({s, Action::Left, r.reward, r.next, r.done});
    }
  }
  const BehaviorPolicy beta(d, 1e-3);
  auto fit = [&](double alpha) {
    StateEncoder enc = StateEncoder::tabular(g);
    TrainConfig cfg;
    cfg.alpha = alpha;
    cfg.gamma = 0.9;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.5;
    cfg.tau = 0.05;
    cfg.steps = 30000;
    cfg.seed = 1;
    const TrainResult r = train(d, cfg, enc, enc.default_repr());
    return mean_greedy_tv(r.q, enc, d, beta);
  };
  const double loose = fit(0.0), mid = fit(5.0), strict = fit(20.0);
  MESSAGE("greedy TV to beta_hat: alpha 0 -> " << loose << ", 5 -> " << mid << ", 20 -> " << strict);
  CHECK(mid <= loose + 0.02);
  CHECK(strict <= mid + 0.02);
  CHECK(strict < loose);
}
