#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "imbrl/analysis.hpp"
#include "imbrl/datagen.hpp"
#include "imbrl/errors.hpp"
#include "imbrl/io.hpp"
#include "imbrl/rbcql.hpp"
#include "imbrl/train.hpp"
#include "render.hpp"

namespace imbrl::cli {

namespace {

std::string fmt(double v) { return io::format_double(v); }

fs::path stem_path(const fs::path& dir, const Common& c, const std::string& suffix) {
  return dir / (c.name + suffix);
}

Eigen::Vector4d q_at(const QFunction& q, const StateEncoder& enc, State s) {
  const State one[1] = {s};
  return q.forward(enc.gather(one)).col(0);
}

CorrectActionSchedule schedule_from(const GenDataOptions& o) {
  CorrectActionSchedule s;
  s.p_min = o.p_min;
  s.p_max = o.p_max;
  s.mode = o.schedule == "time" ? CorrectActionSchedule::Mode::Time : CorrectActionSchedule::Mode::Progress;
  s.noise = o.noise == "other" ? CorrectActionSchedule::Noise::OtherActions : CorrectActionSchedule::Noise::Uniform;
  s.ramp_steps = o.ramp_steps;
  s.validate();
  return s;
}

// States ranked in cell order; each draw is a one-step episode with a uniform action.
Dataset power_law_states(const GridSpec& grid, double eta, int draws, std::uint64_t seed) {
  if (draws < 1) throw ConfigError("--draws must be positive");
  std::vector<State> states;
  for (State s : grid.feasible_states())
    if (s != grid.goal()) states.push_back(s);
  const PowerLawSampler sampler({eta, static_cast<int>(states.size())});
  Rng rng(seed);
  Dataset d;
  d.grid_hash = grid.hash();
  d.meta["source"] = "power-law";
  d.meta["eta"] = fmt(eta);
  d.meta["draws"] = std::to_string(draws);
  d.meta["seed"] = std::to_string(seed);
  for (int i = 0; i < draws; ++i) {
    const State s = states[static_cast<std::size_t>(sampler(rng) - 1)];
    const Action a = action_from_index(static_cast<int>(uniform_index(rng, kNumActions)));
    const StepResult r = step(grid, s, a);
    const Transition t{s, a, r.reward, r.next, r.done};
    d.append_episode(std::span<const Transition>(&t, 1));
  }
  return d;
}

json occupancy_summary(const Dataset& d, double quantile) {
  const DatasetStats st = dataset_stats(d, quantile);
  std::vector<double> counts;
  for (const auto& [s, n] : st.counts) counts.push_back(static_cast<double>(n));
  json j;
  j["transitions"] = d.size();
  j["episodes"] = d.num_episodes();
  j["distinct_states"] = st.counts.size();
  j["head_states"] = st.head.size();
  j["tail_states"] = st.tail.size();
  j["threshold"] = st.threshold;
  try {
    const PowerLawFit fit = fit_power_law_exponent(counts);
    j["eta_hat"] = fit.eta;
    j["degenerate"] = fit.degenerate;
  } catch (const ConfigError& e) {
    j["eta_hat"] = nullptr;
    j["degenerate"] = true;
    j["eta_note"] = e.what();
  }
  return j;
}

Dataset load_checked(const std::string& path, const GridSpec& grid) {
  require_file(path, "dataset");
  Dataset d = load_dataset(path);
  check_grid(d.grid_hash, grid, "dataset " + path);
  return d;
}

}  // namespace

// ---------------------------------------------------------------- gen-data

void setup_gen_data(CLI::App& sub, GenDataOptions& o) {
  add_common(sub, o.c, "data");
  sub.add_option("--source", o.source, "four-room | goal-varying | power-law")
      ->check(CLI::IsMember({"four-room", "goal-varying", "power-law"}))
      ->capture_default_str();
  sub.add_option("--episodes", o.episodes, "controller episodes")->capture_default_str();
  sub.add_option("--seed", o.seed)->capture_default_str();
  sub.add_option("--p-min", o.p_min, "correct-action probability far from the goal")->capture_default_str();
  sub.add_option("--p-max", o.p_max)->capture_default_str();
  sub.add_option("--schedule", o.schedule, "progress | time")
      ->check(CLI::IsMember({"progress", "time"}))
      ->capture_default_str();
  sub.add_option("--noise", o.noise, "uniform | other")->check(CLI::IsMember({"uniform", "other"}))->capture_default_str();
  sub.add_option("--ramp-steps", o.ramp_steps, "time schedule length, 0 = start-goal distance")->capture_default_str();
  sub.add_option("--eta", o.eta, "power-law exponent (goal-varying, power-law)")->capture_default_str();
  sub.add_option("--draws", o.draws, "transitions for --source power-law")->capture_default_str();
  sub.add_option("--mix", o.mix, "EXPERT RANDOM datasets to mix instead of generating")->expected(2);
  sub.add_option("--ratio", o.ratio, "random share of the mixture")->capture_default_str();
  sub.add_option("--size", o.size, "mixture size in transitions (default: expert size)");
  sub.add_option("--format", o.format, "bin | csv")->check(CLI::IsMember({"bin", "csv"}))->capture_default_str();
}

void run_gen_data(const GenDataOptions& o) {
  const GridSpec grid = load_env(o.c);
  Dataset d;
  if (!o.mix.empty()) {
    if (o.mix.size() != 2) throw ConfigError("--mix takes EXPERT RANDOM");
    const Dataset expert = load_checked(o.mix[0], grid);
    const Dataset random = load_checked(o.mix[1], grid);
    Rng rng(o.seed);
    d = mix_datasets(expert, random, o.ratio, o.size ? o.size : expert.size(), rng);
    d.meta["seed"] = std::to_string(o.seed);
  } else if (o.source == "power-law") {
    d = power_law_states(grid, o.eta, o.draws, o.seed);
  } else {
    if (o.episodes < 1) throw ConfigError("--episodes must be positive");
    const CorrectActionSchedule sched = schedule_from(o);
    Rng rng(o.seed);
    if (o.source == "goal-varying") {
      const std::vector<State> cands = goal_candidates_by_distance(grid);
      d = generate_goal_varying_dataset(grid, cands, {o.eta, static_cast<int>(cands.size())}, o.episodes, sched, rng);
    } else {
      d = generate_fourroom_dataset(grid, o.episodes, sched, rng);
    }
  }

  const fs::path dir = output_dir(o.c);
  const fs::path data_path = stem_path(dir, o.c, o.format == "csv" ? ".csv" : ".bin");
  save_dataset(data_path.string(), d);
  {
    std::ofstream occ(stem_path(dir, o.c, ".occupancy.csv"), std::ios::binary);
    write_occupancy_csv(occ, state_occupancy(d), d, grid);
  }
  json stats = occupancy_summary(d, 0.5);
  stats["meta"] = d.meta;
  stats["dataset"] = data_path.filename().string();
  write_json(stem_path(dir, o.c, ".stats.json"), stats);

  if (!o.c.quiet) {
    std::cout << "wrote " << data_path.string() << ": " << d.size() << " transitions, " << d.num_episodes()
              << " episodes, " << stats["distinct_states"] << " states";
    if (!stats["eta_hat"].is_null()) std::cout << ", eta_hat " << std::setprecision(4) << stats["eta_hat"].get<double>();
    if (d.meta.contains("random_transitions"))
      std::cout << ", random share "
                << std::stod(d.meta.at("random_transitions")) / static_cast<double>(std::max<std::size_t>(d.size(), 1));
    std::cout << "\n";
  }
}

// ---------------------------------------------------------------- train

void setup_train(CLI::App& sub, TrainOptions& o) {
  add_common(sub, o.c, "model");
  sub.add_option("--data", o.data, "dataset file");
  sub.add_option("--algo", o.algo, "cql | cql-per | fqi | bc | rb-cql")
      ->check(CLI::IsMember({"cql", "cql-per", "fqi", "bc", "rb-cql"}))
      ->capture_default_str();
  sub.add_option("--features", o.features, "tabular | xy (ignored by rb-cql)")
      ->check(CLI::IsMember({"tabular", "xy"}))
      ->capture_default_str();
  sub.add_option("--hidden", o.hidden, "MLP hidden widths")->capture_default_str();
  sub.add_option("--alpha", o.alpha, "pessimism weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  sub.add_option("--gamma", o.gamma)->capture_default_str();
  sub.add_option("--tau", o.tau, "target Polyak rate")->capture_default_str();
  sub.add_option("--batch", o.batch)->capture_default_str();
  sub.add_option("--lr", o.lr, "learning rate; 0 picks 1e-2 (sgd) or 3e-3 (adam)")->capture_default_str();
  sub.add_option("--optimizer", o.optimizer, "auto | sgd | adam; auto is adam for MLPs")
      ->check(CLI::IsMember({"auto", "sgd", "adam"}))
      ->capture_default_str();
  sub.add_option("--steps", o.steps)->capture_default_str();
  sub.add_option("--seed", o.seed)->capture_default_str();
  sub.add_option("--log-interval", o.log_interval)->capture_default_str();
  sub.add_option("--eval-interval", o.eval_interval, "0 disables")->capture_default_str();
  sub.add_option("--eval-episodes", o.eval_episodes)->capture_default_str();
  sub.add_option("--k", o.k, "retrieved neighbours")->capture_default_str();
  sub.add_option("--metric", o.metric, "euclidean | dot-softmax")->capture_default_str();
  sub.add_option("--partitions", o.partitions, "index partitions, 0 = exact search")->capture_default_str();
  sub.add_option("--probes", o.probes, "partitions scanned, 0 = a quarter")->capture_default_str();
  sub.add_flag("--aux-all", o.aux_all, "index every feasible cell, not only dataset states");
  sub.add_option("--per-omega", o.per_omega)->capture_default_str();
  sub.add_option("--per-beta0", o.per_beta0)->capture_default_str();
  sub.add_option("--smoothing", o.smoothing, "behaviour cloning count smoothing")->capture_default_str();
}

void run_train(const TrainOptions& o) {
  const GridSpec grid = load_env(o.c);
  const Dataset d = load_checked(o.data, grid);
  const fs::path dir = output_dir(o.c);
  const fs::path ckpt_path = stem_path(dir, o.c, ".ckpt");
  const fs::path log_path = stem_path(dir, o.c, ".log.csv");

  const bool rb = o.algo == "rb-cql";
  const bool mlp = rb || o.features == "xy";
  const bool adam = o.optimizer == "adam" || (o.optimizer == "auto" && mlp);

  TrainConfig cfg;
  cfg.alpha = o.algo == "fqi" ? 0.0 : o.alpha;
  cfg.gamma = o.gamma;
  cfg.tau = o.tau;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr > 0 ? o.lr : (adam ? 3e-3 : 1e-2);
  cfg.steps = o.steps;
  cfg.seed = o.seed;
  cfg.optimizer = adam ? OptimizerKind::Adam : OptimizerKind::Sgd;
  cfg.sampler = o.algo == "cql-per" ? SamplerKind::Prioritized : SamplerKind::Uniform;
  cfg.per.omega = o.per_omega;
  cfg.per.importance_start = o.per_beta0;
  cfg.log_interval = o.log_interval;
  cfg.eval_interval = o.eval_interval;

  Checkpoint ck;
  ck.meta["algo"] = o.algo;
  ck.meta["grid_hash"] = std::to_string(grid.hash());
  ck.meta["dataset"] = fs::path(o.data).filename().string();
  ck.meta["seed"] = std::to_string(o.seed);
  ck.meta["gamma"] = fmt(o.gamma);

  std::vector<TrainLogRow> rows;
  auto flush_log = [&] {
    std::ofstream out(log_path, std::ios::binary);
    write_train_log_csv(out, rows);
  };
  flush_log();

  if (o.algo == "bc") {
    ck.q = behavior_cloning_q(d, grid, o.smoothing);
    ck.meta["encoder"] = "tabular";
    ck.meta["smoothing"] = fmt(o.smoothing);
    save_checkpoint(ckpt_path.string(), ck);
    if (!o.c.quiet) std::cout << "wrote " << ckpt_path.string() << "\n";
    return;
  }

  cfg.on_log = [&](const TrainLogRow& row) {
    rows.push_back(row);
    flush_log();
  };

  std::shared_ptr<const RetrievalIndex> index;
  StateEncoder enc = StateEncoder::tabular(grid);
  RBConfig rbc;
  if (rb) {
    rbc.k = o.k;
    rbc.metric = parse_metric(o.metric);
    rbc.partition_count = o.partitions;
    rbc.probes = o.probes;
    rbc.aux_all_grid_states = o.aux_all;
    rbc.hidden = o.hidden;
    const Eigen::MatrixXd aux = auxiliary_states(grid, d, o.aux_all);
    // Same construction as train_rb_cql, so evaluation during training sees the trained index.
    index = std::make_shared<const RetrievalIndex>(aux, rbc.metric, rbc.partition_count, rbc.probes,
                                                   derive_seed(o.seed, 3));
    enc = retrieval_encoder(grid, index, o.k);
  } else if (o.features == "xy") {
    enc = scaled_xy_encoder(grid);
  }

  if (o.eval_interval > 0) {
    cfg.evaluator = [&](const QFunction& q) {
      Rng rng(derive_seed(o.seed, 7));
      EvalOptions eo;
      eo.n_episodes = o.eval_episodes;
      eo.gamma = o.gamma;
      return evaluate(grid, q, enc, eo, rng).success_rate;
    };
  }

  TrainResult result;
  if (rb) {
    rbc.base = cfg;
    RBTrainResult r = train_rb_cql(grid, d, auxiliary_states(grid, d, o.aux_all), rbc);
    if (r.index->hash() != index->hash()) throw std::logic_error("retrieval index construction diverged");
    result = std::move(r.result);
  } else {
    result = train(d, cfg, enc, enc.default_repr(o.hidden));
  }

  ck.q = std::move(result.q);
  ck.meta["encoder"] = rb ? "retrieval" : (o.features == "xy" ? "xy" : "tabular");
  ck.meta["alpha"] = fmt(cfg.alpha);
  ck.meta["steps"] = std::to_string(cfg.steps);
  ck.meta["lr"] = fmt(cfg.learning_rate);
  ck.meta["optimizer"] = adam ? "adam" : "sgd";
  ck.meta["tau"] = fmt(cfg.tau);
  ck.meta["batch"] = std::to_string(cfg.batch_size);
  if (rb) {
    const fs::path index_path = stem_path(dir, o.c, ".index");
    std::ofstream out(index_path, std::ios::binary);
    index->write(out);
    if (!out) throw std::runtime_error("write failed for " + index_path.string());
    ck.meta["index_file"] = index_path.filename().string();
    ck.meta["index_hash"] = std::to_string(index->hash());
    ck.meta["k"] = std::to_string(o.k);
    ck.meta["metric"] = metric_name(rbc.metric);
  }
  save_checkpoint(ckpt_path.string(), ck);

  if (!o.c.quiet) {
    std::cout << "wrote " << ckpt_path.string() << " (" << ck.q.repr().describe() << ")";
    if (!rows.empty()) std::cout << ", final loss " << rows.back().loss;
    std::cout << "\n";
  }
}

// ---------------------------------------------------------------- eval

void setup_eval(CLI::App& sub, EvalCmdOptions& o) {
  add_common(sub, o.c, "model");
  sub.add_option("--ckpt", o.ckpt, "checkpoint file");
  sub.add_option("--episodes", o.episodes)->capture_default_str();
  sub.add_option("--starts", o.starts, "start | all | last-room | room:<i>")->capture_default_str();
  sub.add_option("--seed", o.seed)->capture_default_str();
  sub.add_option("--gamma", o.gamma, "discount for the reported return")->capture_default_str();
}

void run_eval(const EvalCmdOptions& o) {
  const GridSpec grid = load_env(o.c);
  const Policy p = load_policy(o.ckpt, grid);
  EvalOptions eo;
  eo.n_episodes = o.episodes;
  eo.gamma = o.gamma;
  eo.start_states = start_states(grid, o.starts);
  Rng rng(o.seed);
  const EvalReport rep = evaluate(grid, p.ck.q, p.enc, eo, rng);

  const fs::path dir = output_dir(o.c);
  {
    std::ofstream out(stem_path(dir, o.c, ".eval.csv"), std::ios::binary);
    write_eval_csv(out, rep);
  }
  double steps = 0;
  for (const EpisodeRecord& e : rep.episodes) steps += e.steps;
  json j;
  j["checkpoint"] = fs::path(o.ckpt).filename().string();
  j["episodes"] = rep.episodes.size();
  j["starts"] = o.starts;
  j["seed"] = o.seed;
  j["success_rate"] = rep.success_rate;
  j["mean_return"] = rep.mean_return;
  j["mean_steps"] = steps / static_cast<double>(rep.episodes.size());
  j["room_reach_rate"] = rep.room_reach_rate;
  write_json(stem_path(dir, o.c, ".eval.json"), j);

  if (!o.c.quiet) {
    std::cout << "success " << rep.success_rate << ", mean return " << rep.mean_return << ", rooms reached";
    for (double r : rep.room_reach_rate) std::cout << ' ' << r;
    std::cout << " (" << rep.episodes.size() << " episodes)\n";
  }
}

// ---------------------------------------------------------------- analyze

void setup_analyze(CLI::App& sub, AnalyzeOptions& o) {
  add_common(sub, o.c, "analysis");
  sub.add_option("--data", o.data, "dataset file");
  sub.add_option("--ckpt", o.ckpt, "checkpoint for TD errors and C_diff");
  sub.add_option("--pairs", o.pairs, "Monte-Carlo head/tail pairs")->capture_default_str();
  sub.add_option("--seed", o.seed)->capture_default_str();
  sub.add_option("--divergence", o.divergence, "kl | tv")->check(CLI::IsMember({"kl", "tv"}))->capture_default_str();
  sub.add_option("--smoothing", o.smoothing, "behaviour policy count smoothing")->capture_default_str();
  sub.add_option("--quantile", o.quantile, "head/tail split quantile of visit counts")->capture_default_str();
  sub.add_option("--bootstrap", o.bootstrap, "greedy | expected (expectation under the behaviour policy)")
      ->check(CLI::IsMember({"greedy", "expected"}))
      ->capture_default_str();
  sub.add_flag("--sanity", o.sanity, "use the behaviour policy as pi; C_diff should be ~0");
  sub.add_flag("--td", o.td, "require TD errors by group");
  sub.add_flag("--cdiff", o.cdiff, "require C_diff");
}

void run_analyze(const AnalyzeOptions& o) {
  const GridSpec grid = load_env(o.c);
  const Dataset d = load_checked(o.data, grid);
  const bool have_policy = !o.ckpt.empty();
  if (o.td && !have_policy) throw ConfigError("--td needs --ckpt: TD errors are computed for a trained Q-function");
  if (o.cdiff && !have_policy && !o.sanity)
    throw ConfigError("--cdiff needs --ckpt (or --sanity to use the behaviour policy)");

  const fs::path dir = output_dir(o.c);
  const OccupancyEstimate occ = state_occupancy(d, o.quantile);
  {
    std::ofstream out(stem_path(dir, o.c, ".occupancy.csv"), std::ios::binary);
    write_occupancy_csv(out, occ, d, grid);
  }
  json j = occupancy_summary(d, o.quantile);
  j["dataset"] = fs::path(o.data).filename().string();

  const BehaviorPolicy beta(d, o.smoothing);
  const DivergenceMetric metric = o.divergence == "tv" ? DivergenceMetric::TotalVariation : DivergenceMetric::KL;
  std::optional<Policy> pol;
  if (have_policy) pol.emplace(load_policy(o.ckpt, grid));

  if (have_policy) {
    std::map<std::string, std::vector<State>> groups;
    groups["head"].assign(occ.head.begin(), occ.head.end());
    groups["tail"].assign(occ.tail.begin(), occ.tail.end());
    const imbrl::Policy beta_fn = [&](State s) { return beta(s); };
    const double gamma = std::stod(pol->ck.get("gamma", "0.99"));
    const TdReport td = td_error_by_group(pol->ck.q, pol->enc, d, groups, gamma,
                                          o.bootstrap == "expected" ? Bootstrap::Expected : Bootstrap::Greedy, beta_fn);
    std::ofstream out(stem_path(dir, o.c, ".td.csv"), std::ios::binary);
    write_td_csv(out, td);
    for (const auto& [name, g] : td.groups) j["td"][name] = {{"mean_abs", g.mean_abs}, {"transitions", g.transitions}};
    for (const std::string& w : td.warnings) j["warnings"].push_back(w);
  }
  if (have_policy || o.sanity) {
    imbrl::Policy pi;
    if (o.sanity) {
      pi = [&](State s) { return beta(s); };
    } else {
      pi = [&](State s) { return greedy_distribution(pol->ck.q, pol->enc, s); };
    }
    Rng rng(o.seed);
    const CdiffEstimate est = differential_concentrability(d, pi, beta, metric, o.pairs, rng, o.quantile);
    std::ofstream out(stem_path(dir, o.c, ".cdiff.csv"), std::ios::binary);
    write_cdiff_csv(out, est, o.sanity ? "behaviour" : "greedy");
    j["cdiff"] = {{"mean", est.mean}, {"std_error", est.std_error}, {"pairs", est.n_pairs},
                  {"policy", o.sanity ? "behaviour" : "greedy"}, {"divergence", o.divergence}};
  }
  write_json(stem_path(dir, o.c, ".analysis.json"), j);

  if (!o.c.quiet) {
    std::cout << j["distinct_states"] << " states (" << j["head_states"] << " head, " << j["tail_states"]
              << " tail), eta_hat " << j["eta_hat"].dump();
    if (j.contains("td"))
      for (const auto& [name, g] : j["td"].items()) std::cout << ", td " << name << ' ' << g["mean_abs"].dump();
    if (j.contains("cdiff")) std::cout << ", C_diff " << j["cdiff"]["mean"].dump();
    std::cout << "\n";
  }
}

// ---------------------------------------------------------------- render

void setup_render(CLI::App& sub, RenderOptions& o) {
  add_common(sub, o.c, "render");
  sub.add_option("--ckpt", o.ckpt, "checkpoint for value and policy maps");
  sub.add_option("--data", o.data, "dataset for the occupancy map");
  sub.add_option("--cap", o.cap, "occupancy colour scale cap")->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--cell", o.cell, "pixels per cell")->check(CLI::Range(1, 256))->capture_default_str();
}

void run_render(const RenderOptions& o) {
  if (o.ckpt.empty() && o.data.empty()) throw ConfigError("render needs --ckpt, --data or both");
  const GridSpec grid = load_env(o.c);
  const std::size_t cells = static_cast<std::size_t>(grid.num_cells());
  std::vector<fs::path> written;
  const fs::path dir = output_dir(o.c);

  if (!o.ckpt.empty()) {
    const Policy p = load_policy(o.ckpt, grid);
    std::vector<std::optional<double>> value(cells);
    std::vector<std::optional<Action>> action(cells);
    std::ostringstream vcsv, pcsv;
    vcsv << "# imbrl-value v1\nx,y,value\n";
    pcsv << "# imbrl-policy v1\nx,y,action\n";
    double lo = INFINITY, hi = -INFINITY;
    for (State s : grid.feasible_states()) {
      if (s == grid.goal()) continue;
      const Eigen::Vector4d q = q_at(p.ck.q, p.enc, s);
      const std::size_t i = static_cast<std::size_t>(grid.index(s));
      value[i] = q.maxCoeff();
      lo = std::min(lo, *value[i]);
      hi = std::max(hi, *value[i]);
      if (!all_tied(q)) action[i] = greedy_action(q);
      vcsv << s.x << ',' << s.y << ',' << fmt(*value[i]) << '\n';
      pcsv << s.x << ',' << s.y << ',' << (action[i] ? std::string(1, action_glyph(*action[i])) : "") << '\n';
    }
    value[static_cast<std::size_t>(grid.index(grid.goal()))] = hi;
    written.push_back(stem_path(dir, o.c, ".value.ppm"));
    write_text(written.back(), heatmap_ppm(grid, value, lo, hi, o.cell));
    written.push_back(stem_path(dir, o.c, ".value.csv"));
    write_text(written.back(), vcsv.str());
    written.push_back(stem_path(dir, o.c, ".policy.svg"));
    write_text(written.back(), policy_svg(grid, action, o.cell));
    written.push_back(stem_path(dir, o.c, ".policy.csv"));
    write_text(written.back(), pcsv.str());
  }

  if (!o.data.empty()) {
    const Dataset d = load_checked(o.data, grid);
    const DatasetStats st = dataset_stats(d);
    std::vector<std::optional<double>> value(cells);
    std::ostringstream csv;
    csv << "# imbrl-occupancy-map v1\nx,y,count,clipped\n";
    for (State s : grid.feasible_states()) {
      const auto it = st.counts.find(s);
      const double n = it == st.counts.end() ? 0.0 : static_cast<double>(it->second);
      value[static_cast<std::size_t>(grid.index(s))] = std::min(n, o.cap);
      csv << s.x << ',' << s.y << ',' << fmt(n) << ',' << fmt(std::min(n, o.cap)) << '\n';
    }
    written.push_back(stem_path(dir, o.c, ".occupancy.ppm"));
    write_text(written.back(), heatmap_ppm(grid, value, 0.0, o.cap, o.cell));
    written.push_back(stem_path(dir, o.c, ".occupancy-map.csv"));
    write_text(written.back(), csv.str());
  }

  if (!o.c.quiet)
    for (const fs::path& p : written) std::cout << "wrote " << p.string() << "\n";
}

// ---------------------------------------------------------------- sweep

void setup_sweep(CLI::App& sub, SweepOptions& o) {
  add_common(sub, o.c, "sweep");
  sub.add_option("--seeds", o.seeds)->capture_default_str();
  sub.add_option("--algos", o.algos, "algorithms passed to train --algo")->capture_default_str();
  sub.add_option("--alphas", o.alphas)->capture_default_str();
  sub.add_option("--jobs", o.jobs, "parallel runs")->check(CLI::Range(1, 256))->capture_default_str();
  sub.add_option("--eval-episodes", o.eval_episodes)->capture_default_str();
}

int run_sweep(const SweepOptions& o, const std::string& config_path) {
  if (o.seeds.empty()) throw ConfigError("--seeds must not be empty");
  if (o.algos.empty() || o.alphas.empty()) throw ConfigError("--algos and --alphas must not be empty");
  for (double a : o.alphas)
    if (a < 0) throw ConfigError("alphas must be >= 0");
  const fs::path dir = output_dir(o.c);

  auto base = [&](const std::string& cmd, const std::string& name) {
    std::vector<std::string> args = {cmd, "--out", dir.string(), "--name", name, "--env", o.c.env,
                                     "--room-size", std::to_string(o.c.room_size), "--quiet"};
    if (!config_path.empty()) {
      args.push_back("--config");
      args.push_back(config_path);
    }
    return args;
  };
  auto data_name = [&](std::uint64_t seed) { return o.c.name + "_data_s" + std::to_string(seed); };

  struct Run {
    std::string algo;
    double alpha;
    std::uint64_t seed;
    std::string name;
    int status = 0;
    double success = 0, ret = 0;
  };
  std::vector<Run> runs;
  for (const std::string& algo : o.algos)
    for (double alpha : o.alphas)
      for (std::uint64_t seed : o.seeds)
        runs.push_back({algo, alpha, seed, o.c.name + "_" + algo + "_a" + fmt(alpha) + "_s" + std::to_string(seed)});

  std::mutex err_mu;
  auto parallel = [&](std::size_t n, auto&& body) {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(o.jobs), n);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < n;) body(i);
      });
  };
  auto call = [&](const std::vector<std::string>& args) {
    const int rc = run_cli(args);
    if (rc != 0) {
      std::lock_guard lock(err_mu);
      std::cerr << "sweep: '" << args[0] << " --name " << args[4] << "' exited with " << rc << "\n";
    }
    return rc;
  };

  std::map<std::uint64_t, int> data_status;
  for (std::uint64_t s : o.seeds) data_status[s] = 0;
  std::vector<std::uint64_t> seeds(o.seeds.begin(), o.seeds.end());
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  std::vector<int> gen_rc(seeds.size());
  parallel(seeds.size(), [&](std::size_t i) {
    auto args = base("gen-data", data_name(seeds[i]));
    args.insert(args.end(), {"--seed", std::to_string(seeds[i]), "--format", "bin"});
    gen_rc[i] = call(args);
  });
  for (std::size_t i = 0; i < seeds.size(); ++i) data_status[seeds[i]] = gen_rc[i];

  parallel(runs.size(), [&](std::size_t i) {
    Run& r = runs[i];
    if (data_status[r.seed] != 0) {
      r.status = data_status[r.seed];
      return;
    }
    auto train = base("train", r.name);
    train.insert(train.end(), {"--data", (dir / (data_name(r.seed) + ".bin")).string(), "--algo", r.algo, "--alpha",
                               fmt(r.alpha), "--seed", std::to_string(r.seed)});
    if ((r.status = call(train)) != 0) return;
    auto eval = base("eval", r.name);
    eval.insert(eval.end(), {"--ckpt", (dir / (r.name + ".ckpt")).string(), "--episodes",
                             std::to_string(o.eval_episodes), "--seed", std::to_string(r.seed)});
    if ((r.status = call(eval)) != 0) return;
    const json j = json::parse(io::read_file((dir / (r.name + ".eval.json")).string()));
    r.success = j.at("success_rate").get<double>();
    r.ret = j.at("mean_return").get<double>();
  });

  std::ostringstream csv;
  csv << "# imbrl-sweep v1\nalgo,alpha,seed,status,success_rate,mean_return\n";
  std::map<std::pair<std::string, double>, std::vector<double>> groups;
  int failed = 0;
  for (const Run& r : runs) {
    csv << r.algo << ',' << fmt(r.alpha) << ',' << r.seed << ',' << r.status << ',';
    if (r.status == 0) {
      csv << fmt(r.success) << ',' << fmt(r.ret);
      groups[{r.algo, r.alpha}].push_back(r.success);
    } else {
      csv << ',';
      ++failed;
    }
    csv << '\n';
  }
  write_text(dir / (o.c.name + "_summary.csv"), csv.str());

  if (!o.c.quiet) {
    for (const auto& [key, v] : groups)
      std::cout << key.first << " alpha " << key.second << ": median success " << quantile_of(v, 0.5) << " over "
                << v.size() << " seeds\n";
    if (failed) std::cout << failed << " runs failed\n";
  }
  return failed;
}

// ---------------------------------------------------------------- entry point

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Offline RL under imbalanced data: datasets, CQL and RB-CQL training, diagnostics", "imbrl"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  GenDataOptions gen;
  TrainOptions tr;
  EvalCmdOptions ev;
  AnalyzeOptions an;
  RenderOptions rd;
  SweepOptions sw;
  CLI::App* s_gen = app.add_subcommand("gen-data", "generate or mix a dataset");
  CLI::App* s_train = app.add_subcommand("train", "train CQL, CQL+PER, FQI, BC or RB-CQL");
  CLI::App* s_eval = app.add_subcommand("eval", "greedy rollouts of a checkpoint");
  CLI::App* s_an = app.add_subcommand("analyze", "occupancy, power-law fit, TD error by group, C_diff");
  CLI::App* s_rd = app.add_subcommand("render", "value heatmap, policy arrows, occupancy map");
  CLI::App* s_sw = app.add_subcommand("sweep", "gen-data, train and eval over seeds, algorithms and alphas");
  setup_gen_data(*s_gen, gen);
  setup_train(*s_train, tr);
  setup_eval(*s_eval, ev);
  setup_analyze(*s_an, an);
  setup_render(*s_rd, rd);
  setup_sweep(*s_sw, sw);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::map<CLI::App*, Common*> commons = {{s_gen, &gen.c}, {s_train, &tr.c}, {s_eval, &ev.c},
                                               {s_an, &an.c},   {s_rd, &rd.c},    {s_sw, &sw.c}};
  Common& c = *commons.at(sub);
  try {
    c.out_explicit = sub->get_option("--out")->count() > 0;
    const std::string config_path = c.config;
    apply_config(app, *sub, config_path);
    if (sub == s_gen) run_gen_data(gen);
    if (sub == s_train) run_train(tr);
    if (sub == s_eval) run_eval(ev);
    if (sub == s_an) run_analyze(an);
    if (sub == s_rd) run_render(rd);
    if (sub == s_sw) return run_sweep(sw, config_path) == 0 ? 0 : 2;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace imbrl::cli
