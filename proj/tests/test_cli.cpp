#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

#include "commands.hpp"
#include "render.hpp"
#include "doctest.h"
#include "imbrl/datagen.hpp"
#include "imbrl/io.hpp"
#include "json.hpp"

using namespace imbrl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("imbrl_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

int run(std::vector<std::string> args) {
  args.push_back("--quiet");
  return cli::run_cli(args);
}

std::string slurp(const std::string& p) { return io::read_file(p); }
json read_json(const std::string& p) { return json::parse(slurp(p)); }

std::vector<std::vector<std::string>> csv_rows(const std::string& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  std::getline(in, line);
  CHECK(line.rfind("# imbrl-", 0) == 0);
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(cells);
  }
  return rows;
}

void save_tabular(const std::string& path, const GridSpec& g, const Eigen::VectorXd& params) {
  Checkpoint ck;
  ck.q = QFunction(QRepr::tabular(g.num_cells()), params);
  ck.meta["encoder"] = "tabular";
  ck.meta["grid_hash"] = std::to_string(g.hash());
  ck.meta["gamma"] = "0.99";
  save_checkpoint(path, ck);
}

Eigen::VectorXd optimal_params(const GridSpec& g, double gamma) {
  const ValueTable vt = value_iteration(g, gamma, 1e-12);
  Eigen::VectorXd p(4 * g.num_cells());
  for (int i = 0; i < g.num_cells(); ++i) p.segment<4>(4 * i) = vt.q.row(i).transpose();
  return p;
}

// Pixel colour at the centre of a cell in a binary PPM.
std::array<unsigned char, 3> pixel(const std::string& ppm, int width_px, int cell, State s) {
  std::istringstream in(ppm);
  std::string magic;
  int w, h, maxv;
  in >> magic >> w >> h >> maxv;
  in.get();
  const std::size_t header = static_cast<std::size_t>(in.tellg());
  const int px = s.x * cell + cell / 2, py = s.y * cell + cell / 2;
  const std::size_t o = header + 3 * (static_cast<std::size_t>(py) * width_px + px);
  return {static_cast<unsigned char>(ppm[o]), static_cast<unsigned char>(ppm[o + 1]),
          static_cast<unsigned char>(ppm[o + 2])};
}

}  // namespace

TEST_CASE("gen-data writes dataset, occupancy and stats, byte-identical for a seed") {
  TempDir t;
  REQUIRE(run({"gen-data", "--out", t / "a", "--episodes", "50", "--seed", "7"}) == 0);
  REQUIRE(run({"gen-data", "--out", t / "b", "--episodes", "50", "--seed", "7"}) == 0);
  REQUIRE(run({"gen-data", "--out", t / "c", "--episodes", "50", "--seed", "8"}) == 0);
  for (const char* f : {"data.bin", "data.occupancy.csv", "data.stats.json"})
    CHECK(slurp(t / (std::string("a/") + f)) == slurp(t / (std::string("b/") + f)));
  CHECK(slurp(t / "a/data.bin") != slurp(t / "c/data.bin"));

  const Dataset d = load_dataset(t / "a/data.bin");
  const json st = read_json(t / "a/data.stats.json");
  CHECK(st["transitions"] == d.size());
  CHECK(st["episodes"] == 50);
  CHECK(st["head_states"].get<int>() + st["tail_states"].get<int>() == st["distinct_states"].get<int>());
  CHECK(csv_rows(t / "a/data.occupancy.csv").size() == st["distinct_states"].get<std::size_t>());

  REQUIRE(run({"gen-data", "--out", t / "a", "--name", "text", "--episodes", "5", "--format", "csv"}) == 0);
  CHECK(load_dataset(t / "a/text.csv").num_episodes() == 5);
}

TEST_CASE("power-law source: the stats sidecar recovers eta") {
  TempDir t;
  for (double eta : {1.0, 2.0}) {
    const std::string name = "pl" + std::to_string(static_cast<int>(eta));
    REQUIRE(run({"gen-data", "--out", t.path.string(), "--name", name, "--source", "power-law", "--eta",
                 io::format_double(eta), "--seed", "3"}) == 0);
    const double est = read_json(t / (name + ".stats.json"))["eta_hat"].get<double>();
    CHECK(std::abs(est - eta) <= 0.1 * eta);
  }
}

TEST_CASE("mixing hits the random ratio within one episode") {
  TempDir t;
  REQUIRE(run({"gen-data", "--out", t.path.string(), "--name", "expert", "--p-min", "1", "--episodes", "300"}) == 0);
  REQUIRE(run({"gen-data", "--out", t.path.string(), "--name", "random", "--p-min", "0.25", "--p-max", "0.25",
               "--episodes", "100", "--seed", "1"}) == 0);
  REQUIRE(run({"gen-data", "--out", t.path.string(), "--name", "mix", "--mix", t / "expert.bin", t / "random.bin",
               "--ratio", "0.95", "--size", "5000", "--seed", "2"}) == 0);
  const Dataset random = load_dataset(t / "random.bin");
  std::size_t longest = 0;
  for (std::size_t e = 0; e < random.num_episodes(); ++e) longest = std::max(longest, random.episode(e).size());
  const Dataset mix = load_dataset(t / "mix.bin");
  const double from_random = std::stod(mix.meta.at("random_transitions"));
  CHECK(std::abs(from_random - 0.95 * 5000) <= static_cast<double>(longest));
}

TEST_CASE("train, eval, analyze and render on one small run") {
  TempDir t;
  const std::string out = t.path.string();
  REQUIRE(run({"gen-data", "--out", out, "--episodes", "40", "--seed", "1"}) == 0);
  const std::vector<std::string> train = {"train", "--out", out, "--data", t / "data.bin", "--steps", "400",
                                          "--log-interval", "100", "--eval-interval", "200", "--eval-episodes", "2"};
  REQUIRE(run(train) == 0);
  const std::string first = slurp(t / "model.ckpt");
  const std::string log = slurp(t / "model.log.csv");
  REQUIRE(run(train) == 0);
  CHECK(slurp(t / "model.ckpt") == first);
  CHECK(slurp(t / "model.log.csv") == log);
  const auto rows = csv_rows(t / "model.log.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[1][4] != "");
  CHECK(rows[0][4] == "");
  const Checkpoint ck = load_checkpoint(t / "model.ckpt");
  CHECK(ck.get("alpha") == "5");
  CHECK(ck.get("algo") == "cql");

  REQUIRE(run({"eval", "--out", out, "--ckpt", t / "model.ckpt", "--episodes", "3"}) == 0);
  const json ev = read_json(t / "model.eval.json");
  CHECK(ev["episodes"] == 3);
  CHECK(csv_rows(t / "model.eval.csv").size() == 3);

  REQUIRE(run({"analyze", "--out", out, "--data", t / "data.bin"}) == 0);
  CHECK_FALSE(read_json(t / "analysis.analysis.json").contains("td"));
  REQUIRE(run({"analyze", "--out", out, "--data", t / "data.bin", "--ckpt", t / "model.ckpt", "--pairs", "500"}) ==
          0);
  const json an = read_json(t / "analysis.analysis.json");
  CHECK(an["td"].contains("head"));
  CHECK(an["cdiff"]["pairs"] == 500);
  CHECK(an["cdiff"]["mean"].get<double>() >= 0.0);
  CHECK(fs::exists(t / "analysis.td.csv"));

  REQUIRE(run({"analyze", "--out", out, "--name", "sane", "--data", t / "data.bin", "--sanity"}) == 0);
  CHECK(read_json(t / "sane.analysis.json")["cdiff"]["mean"].get<double>() < 1e-12);

  CHECK(run({"analyze", "--out", out, "--data", t / "data.bin", "--td"}) == 1);
  CHECK(run({"analyze", "--out", out, "--data", t / "data.bin", "--cdiff"}) == 1);

  REQUIRE(run({"train", "--out", out, "--name", "rb", "--data", t / "data.bin", "--algo", "rb-cql", "--steps", "50",
               "--hidden", "8"}) == 0);
  CHECK(fs::exists(t / "rb.index"));
  CHECK(load_checkpoint(t / "rb.ckpt").get("encoder") == "retrieval");
  REQUIRE(run({"eval", "--out", out, "--name", "rb", "--ckpt", t / "rb.ckpt", "--episodes", "1"}) == 0);
  REQUIRE(run({"render", "--out", out, "--name", "rb", "--ckpt", t / "rb.ckpt"}) == 0);

  for (const char* algo : {"cql-per", "fqi", "bc"}) {
    REQUIRE(run({"train", "--out", out, "--name", algo, "--data", t / "data.bin", "--algo", algo, "--steps", "50"}) ==
            0);
    CHECK(load_checkpoint(t / (std::string(algo) + ".ckpt")).get("algo") == algo);
  }
  CHECK(load_checkpoint(t / "fqi.ckpt").get("alpha") == "0");
}

TEST_CASE("eval of the optimal Q-function succeeds from every start") {
  TempDir t;
  const GridSpec g = four_room();
  save_tabular(t / "opt.ckpt", g, optimal_params(g, 0.99));
  REQUIRE(run({"eval", "--out", t.path.string(), "--name", "opt", "--ckpt", t / "opt.ckpt", "--starts", "all",
               "--episodes", "50", "--seed", "4"}) == 0);
  const json j = read_json(t / "opt.eval.json");
  CHECK(j["success_rate"] == 1.0);
  const std::string csv = slurp(t / "opt.eval.csv");
  REQUIRE(run({"eval", "--out", t.path.string(), "--name", "opt", "--ckpt", t / "opt.ckpt", "--starts", "all",
               "--episodes", "50", "--seed", "4"}) == 0);
  CHECK(slurp(t / "opt.eval.csv") == csv);

  REQUIRE(run({"eval", "--out", t.path.string(), "--name", "start", "--ckpt", t / "opt.ckpt"}) == 0);
  const json s = read_json(t / "start.eval.json");
  CHECK(s["episodes"] == 100);
  const int d0 = bfs_distances(g, g.goal())[static_cast<std::size_t>(g.index(g.start()))];
  CHECK(s["mean_steps"] == d0);
  CHECK(s["mean_return"].get<double>() == doctest::Approx(10.0 * std::pow(0.99, d0 - 1)).epsilon(1e-12));

  const GridSpec other = four_room(4);
  save_tabular(t / "other.ckpt", other, optimal_params(other, 0.99));
  CHECK(run({"eval", "--out", t.path.string(), "--ckpt", t / "other.ckpt"}) == 1);
}

TEST_CASE("render: ties draw no arrow, Q* arrows follow shortest paths, occupancy is capped") {
  TempDir t;
  const GridSpec g = four_room();
  const int cell = 6;
  save_tabular(t / "zero.ckpt", g, Eigen::VectorXd::Zero(4 * g.num_cells()));
  REQUIRE(run({"render", "--out", t.path.string(), "--name", "zero", "--ckpt", t / "zero.ckpt", "--cell",
               std::to_string(cell)}) == 0);
  for (const auto& r : csv_rows(t / "zero.policy.csv")) CHECK(r[2] == "");
  CHECK(slurp(t / "zero.policy.svg").find("<path") == std::string::npos);
  const std::string zppm = slurp(t / "zero.value.ppm");
  std::set<std::array<unsigned char, 3>> colours;
  for (State s : g.feasible_states()) colours.insert(pixel(zppm, g.width() * cell, cell, s));
  CHECK(colours.size() == 1);

  save_tabular(t / "opt.ckpt", g, optimal_params(g, 0.99));
  REQUIRE(run({"render", "--out", t.path.string(), "--name", "opt", "--ckpt", t / "opt.ckpt"}) == 0);
  std::map<State, Action> arrows;
  for (const auto& r : csv_rows(t / "opt.policy.csv")) {
    REQUIRE(r[2].size() == 1);
    const std::string glyphs = "^v<>";
    arrows[{std::stoi(r[0]), std::stoi(r[1])}] = action_from_index(static_cast<int>(glyphs.find(r[2][0])));
  }
  const auto dist = bfs_distances(g, g.goal());
  for (const auto& [s, a] : arrows) {
    const State n = step(g, s, a).next;
    CHECK(dist[static_cast<std::size_t>(g.index(n))] == dist[static_cast<std::size_t>(g.index(s))] - 1);
  }
  CHECK(arrows.size() == g.feasible_states().size() - 1);

  Dataset d;
  d.grid_hash = g.hash();
  const State a{1, 1}, b{2, 1}, c{3, 1};
  auto add = [&](State s, int n) {
    for (int i = 0; i < n; ++i) {
      const StepResult r = step(g, s, Action::Up);
      const Transition tr{s, Action::Up, r.reward, r.next, r.done};
      d.append_episode(std::span<const Transition>(&tr, 1));
    }
  };
  add(a, 30);
  add(b, 75);
  add(c, 10);
  save_dataset(t / "occ.bin", d);
  REQUIRE(run({"render", "--out", t.path.string(), "--name", "occ", "--data", t / "occ.bin", "--cap", "30", "--cell",
               std::to_string(cell)}) == 0);
  const std::string oppm = slurp(t / "occ.occupancy.ppm");
  const int w = g.width() * cell;
  CHECK(pixel(oppm, w, cell, a) == pixel(oppm, w, cell, b));
  CHECK(pixel(oppm, w, cell, a) != pixel(oppm, w, cell, c));
  const auto top = cli::colormap(1.0);
  CHECK(pixel(oppm, w, cell, b) == std::array<unsigned char, 3>{top.r, top.g, top.b});

  CHECK(run({"render", "--out", t.path.string()}) == 1);
}

TEST_CASE("config files, output precedence and exit codes") {
  TempDir t;
  const std::string out = t.path.string();
  REQUIRE(run({"gen-data", "--out", out, "--episodes", "10"}) == 0);
  {
    std::ofstream cfg(t / "exp.json");
    cfg << R"({"out": ")" << (t / "from_config") << R"(", "episodes": 999, "train": {"steps": 30, "alpha": 20}})";
  }
  REQUIRE(run({"train", "--config", t / "exp.json", "--data", t / "data.bin", "--alpha", "3"}) == 0);
  const Checkpoint ck = load_checkpoint(t / "from_config/model.ckpt");
  CHECK(ck.get("alpha") == "3");
  CHECK(ck.get("steps") == "30");

  ::setenv("IMB_RL_OUT", (t / "from_env").c_str(), 1);
  REQUIRE(run({"train", "--config", t / "exp.json", "--data", t / "data.bin"}) == 0);
  CHECK(load_checkpoint(t / "from_env/model.ckpt").get("alpha") == "20");
  REQUIRE(run({"train", "--out", t / "explicit", "--data", t / "data.bin", "--steps", "10"}) == 0);
  CHECK(fs::exists(t / "explicit/model.ckpt"));
  ::unsetenv("IMB_RL_OUT");

  {
    std::ofstream bad(t / "bad.json");
    bad << R"({"train": {"bogus": 1}})";
  }
  CHECK(run({"train", "--config", t / "bad.json", "--data", t / "data.bin"}) == 1);
  CHECK(run({"train", "--config", t / "missing.json", "--data", t / "data.bin"}) == 1);
  CHECK(run({"train", "--out", out, "--data", t / "nope.bin"}) == 1);
  CHECK(run({"train", "--out", out, "--data", t / "data.bin", "--algo", "ppo"}) == 1);
  CHECK(run({"train", "--out", out, "--data", t / "data.bin", "--alpha", "-1"}) == 1);
  CHECK(run({"frobnicate"}) == 1);
  CHECK(cli::run_cli({"--help"}) == 0);

  CHECK(run({"train", "--out", out, "--name", "blow", "--data", t / "data.bin", "--lr", "1e200", "--steps", "500",
             "--log-interval", "1"}) == 2);
  const auto rows = csv_rows(t / "blow.log.csv");
  CHECK_FALSE(rows.empty());
  CHECK_FALSE(fs::exists(t / "blow.ckpt"));
}

TEST_CASE("sweep runs every seed and alpha and writes a summary") {
  TempDir t;
  {
    std::ofstream cfg(t / "sweep.json");
    cfg << R"({"gen-data": {"episodes": 30}, "train": {"steps": 100}})";
  }
  REQUIRE(run({"sweep", "--out", t.path.string(), "--config", t / "sweep.json", "--seeds", "0", "1", "--alphas", "5",
               "20", "--jobs", "2", "--eval-episodes", "2"}) == 0);
  const auto rows = csv_rows(t / "sweep_summary.csv");
  REQUIRE(rows.size() == 4);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : rows) {
    CHECK(r[3] == "0");
    seen.insert({r[1], r[2]});
  }
  CHECK(seen.size() == 4);
  CHECK(load_dataset(t / "sweep_data_s1.bin").num_episodes() == 30);
  CHECK(load_checkpoint(t / "sweep_cql_a20_s1.ckpt").get("alpha") == "20");
}
