#pragma once

#include <string>
#include <vector>

#include "common.hpp"

namespace imbrl::cli {

struct GenDataOptions {
  Common c;
  std::string source = "four-room";
  int episodes = 500;
  std::uint64_t seed = 0;
  double p_min = 0.1;
  double p_max = 1.0;
  std::string schedule = "progress";
  std::string noise = "uniform";
  int ramp_steps = 0;
  double eta = 1.0;
  int draws = 100000;
  std::vector<std::string> mix;
  double ratio = 0.95;
  std::size_t size = 0;
  std::string format = "bin";
};

struct TrainOptions {
  Common c;
  std::string data;
  std::string algo = "cql";
  std::string features = "tabular";
  std::vector<int> hidden = {64};
  double alpha = 5.0;
  double gamma = 0.99;
  double tau = 5e-3;
  int batch = 256;
  double lr = 0.0;  // 0: 1e-2 for SGD, 3e-3 for Adam
  std::string optimizer = "auto";
  int steps = 20000;
  std::uint64_t seed = 0;
  int log_interval = 1000;
  int eval_interval = 0;
  int eval_episodes = 10;
  int k = 10;
  std::string metric = "euclidean";
  int partitions = 0;
  int probes = 0;
  bool aux_all = false;
  double per_omega = 0.6;
  double per_beta0 = 0.4;
  double smoothing = 1e-3;
};

struct EvalCmdOptions {
  Common c;
  std::string ckpt;
  int episodes = 100;
  std::string starts = "start";
  std::uint64_t seed = 0;
  double gamma = 0.99;
};

struct AnalyzeOptions {
  Common c;
  std::string data;
  std::string ckpt;
  int pairs = 10000;
  std::uint64_t seed = 0;
  std::string divergence = "kl";
  double smoothing = 1e-3;
  double quantile = 0.5;
  std::string bootstrap = "greedy";
  bool sanity = false;
  bool td = false;
  bool cdiff = false;
};

struct RenderOptions {
  Common c;
  std::string ckpt;
  std::string data;
  double cap = 30.0;
  int cell = 24;
};

struct SweepOptions {
  Common c;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<std::string> algos = {"cql"};
  std::vector<double> alphas = {5.0, 20.0};
  int jobs = 1;
  int eval_episodes = 100;
};

void setup_gen_data(CLI::App& sub, GenDataOptions& o);
void setup_train(CLI::App& sub, TrainOptions& o);
void setup_eval(CLI::App& sub, EvalCmdOptions& o);
void setup_analyze(CLI::App& sub, AnalyzeOptions& o);
void setup_render(CLI::App& sub, RenderOptions& o);
void setup_sweep(CLI::App& sub, SweepOptions& o);

void run_gen_data(const GenDataOptions& o);
void run_train(const TrainOptions& o);
void run_eval(const EvalCmdOptions& o);
void run_analyze(const AnalyzeOptions& o);
void run_render(const RenderOptions& o);
/// Returns the number of failed runs.
int run_sweep(const SweepOptions& o, const std::string& config_path);

/// Full command-line entry point, also used by sweep for its stages.
/// Returns the process exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace imbrl::cli
