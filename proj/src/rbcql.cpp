#include "imbrl/rbcql.hpp"

#include <map>
#include <ostream>

#include "imbrl/errors.hpp"
#include "imbrl/io.hpp"

namespace imbrl {

void RBConfig::validate() const {
  base.validate();
  if (k < 1) throw ConfigError("retrieval k must be >= 1");
  if (partition_count < 0) throw ConfigError("partition_count must be >= 0");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden widths must be positive");
}

Eigen::MatrixXd auxiliary_states(const GridSpec& grid, const Dataset& d, bool all_grid_states) {
  std::vector<bool> use(static_cast<std::size_t>(grid.num_cells()), false);
  for (const Transition& t : d.transitions) {
    use[grid.index(t.s)] = true;
    use[grid.index(t.next)] = true;
  }
  if (all_grid_states)
    for (State s : grid.feasible_states()) use[grid.index(s)] = true;
  const StateEncoder xy = scaled_xy_encoder(grid);
  std::vector<Eigen::VectorXd> cols;
  for (int i = 0; i < grid.num_cells(); ++i)
    if (use[i]) cols.push_back(xy.encode(grid.state_at(i)));
  if (cols.empty()) throw ConfigError("auxiliary dataset is empty");
  Eigen::MatrixXd out(2, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = cols[j];
  return out;
}

StateEncoder retrieval_encoder(const GridSpec& grid, std::shared_ptr<const RetrievalIndex> index, int k) {
  if (!index) throw ConfigError("retrieval encoder needs an index");
  if (k < 1 || k > index->size()) throw ConfigError("retrieval k exceeds the auxiliary dataset size");
  const auto xy = std::make_shared<StateEncoder>(scaled_xy_encoder(grid));
  if (index->dim() != xy->dim()) throw ConfigError("index dimension does not match the state encoding");
  return StateEncoder::features(grid, 2 * xy->dim(), [xy, index, k](State s) {
    const Eigen::VectorXd q = xy->encode(s);
    const auto ids = top_k(*index, q, k);
    return augment(q, gather_entries(*index, ids));
  });
}

RBTrainResult train_rb_cql(const GridSpec& grid, const Dataset& d, const Eigen::MatrixXd& aux, const RBConfig& cfg) {
  cfg.validate();
  if (d.empty()) throw ConfigError("cannot train on an empty dataset");
  if (aux.cols() == 0) throw ConfigError("auxiliary dataset is empty");
  auto index = std::make_shared<const RetrievalIndex>(aux, cfg.metric, cfg.partition_count, cfg.probes,
                                                      derive_seed(cfg.base.seed, 3));
  StateEncoder enc = retrieval_encoder(grid, index, cfg.k);
  return {train(d, cfg.base, enc, enc.default_repr(cfg.hidden)), std::move(index)};
}

EvalReport evaluate(const GridSpec& grid, const QFunction& q, const StateEncoder& enc, const EvalOptions& opts,
                    Rng& rng) {
  if (opts.n_episodes < 1) throw ConfigError("n_episodes must be positive");
  const QRepr& r = q.repr();
  if (enc.is_tabular()) {
    if (r.kind != QRepr::Kind::Tabular || r.num_states != grid.num_cells())
      throw ConfigError("Q-function " + r.describe() + " does not take tabular grid inputs");
  } else if (r.kind != QRepr::Kind::Mlp || r.input_dim != enc.dim()) {
    throw ConfigError("Q-function " + r.describe() + " does not take inputs of dimension " +
                      std::to_string(enc.dim()));
  }
  for (State s : opts.start_states)
    if (!grid.feasible(s) || s == grid.goal()) throw ConfigError("invalid evaluation start state");

  // The greedy policy is fixed during evaluation, so each state's action is
  // computed once per call.
  std::map<State, Action> actions;
  auto act = [&](State s) {
    auto it = actions.find(s);
    if (it != actions.end()) return it->second;
    const State one[1] = {s};
    const Action a = greedy_action(q.forward(enc.gather(one)).col(0));
    actions.emplace(s, a);
    return a;
  };

  EvalReport report;
  report.room_reach_rate.assign(static_cast<std::size_t>(grid.num_rooms()), 0.0);
  for (int e = 0; e < opts.n_episodes; ++e) {
    EpisodeRecord rec;
    rec.start = opts.start_states.empty()
                    ? grid.start()
                    : opts.start_states[uniform_index(rng, opts.start_states.size())];
    rec.rooms_reached.assign(static_cast<std::size_t>(grid.num_rooms()), false);
    State s = rec.start;
    double discount = 1.0;
    auto mark = [&](State c) {
      if (grid.room_of(c) != kNoRoom) rec.rooms_reached[static_cast<std::size_t>(grid.room_of(c))] = true;
    };
    mark(s);
    for (int t = 0; t < grid.max_episode_steps(); ++t) {
      const StepResult res = step(grid, s, act(s));
      rec.discounted_return += discount * res.reward;
      discount *= opts.gamma;
      ++rec.steps;
      mark(res.next);
      s = res.next;
      if (res.done) {
        rec.success = true;
        break;
      }
    }
    report.success_rate += rec.success ? 1.0 : 0.0;
    report.mean_return += rec.discounted_return;
    for (std::size_t k = 0; k < rec.rooms_reached.size(); ++k)
      report.room_reach_rate[k] += rec.rooms_reached[k] ? 1.0 : 0.0;
    report.episodes.push_back(std::move(rec));
  }
  const double n = opts.n_episodes;
  report.success_rate /= n;
  report.mean_return /= n;
  for (double& r : report.room_reach_rate) r /= n;
  return report;
}

void write_eval_csv(std::ostream& out, const EvalReport& report) {
  out << "# imbrl-eval v1\n";
  out << "episode,start_x,start_y,steps,return,success,rooms_reached\n";
  for (std::size_t e = 0; e < report.episodes.size(); ++e) {
    const EpisodeRecord& r = report.episodes[e];
    std::string rooms;
    for (std::size_t k = 0; k < r.rooms_reached.size(); ++k)
      if (r.rooms_reached[k]) rooms += (rooms.empty() ? "" : ";") + std::to_string(k);
    out << e << ',' << r.start.x << ',' << r.start.y << ',' << r.steps << ','
        << io::format_double(r.discounted_return) << ',' << (r.success ? 1 : 0) << ',' << rooms << '\n';
  }
}

}  // namespace imbrl
