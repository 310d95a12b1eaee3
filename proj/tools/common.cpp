#include "common.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "imbrl/errors.hpp"
#include "imbrl/rbcql.hpp"

namespace imbrl::cli {

void add_common(CLI::App& sub, Common& c, const std::string& default_name) {
  c.name = default_name;
  sub.add_option("--config", c.config, "JSON experiment file; flags override its values");
  sub.add_option("--out", c.out, "output directory (default $IMB_RL_OUT or ./runs)");
  sub.add_option("--name", c.name, "stem for output files")->capture_default_str();
  sub.add_option("--env", c.env, "'four-room' or a layout text file")->capture_default_str();
  sub.add_option("--room-size", c.room_size, "four-room room side")->capture_default_str();
  sub.add_flag("--quiet", c.quiet, "no summary on stdout");
}

namespace {

std::string scalar(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw ConfigError("config key '" + key + "' must be a scalar or a list of scalars");
}

bool known_anywhere(CLI::App& root, const std::string& key) {
  for (CLI::App* s : root.get_subcommands({}))
    if (s->get_option_no_throw("--" + key)) return true;
  return false;
}

void apply_object(CLI::App& root, CLI::App& sub, const json& obj, bool strict) {
  for (const auto& [key, val] : obj.items()) {
    if (val.is_object()) continue;
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt) {
      if (strict || !known_anywhere(root, key))
        throw ConfigError("unknown config key '" + key + "' for " + sub.get_name());
      continue;
    }
    if (opt->count() > 0 || key == "config") continue;
    std::vector<std::string> vals;
    if (val.is_array()) {
      for (const json& v : val) vals.push_back(scalar(v, key));
    } else {
      vals.push_back(scalar(val, key));
    }
    if (opt->get_expected_min() == 0 && vals.size() == 1 && vals[0] == "false") continue;
    try {
      opt->add_result(vals);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

}  // namespace

void apply_config(CLI::App& root, CLI::App& sub, const std::string& path) {
  if (path.empty()) return;
  require_file(path, "config file");
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
  if (j.contains(sub.get_name())) {
    if (!j[sub.get_name()].is_object()) throw ConfigError(path + ": section '" + sub.get_name() + "' must be an object");
    apply_object(root, sub, j[sub.get_name()], true);
  }
  apply_object(root, sub, j, false);
}

fs::path output_dir(const Common& c) {
  fs::path dir = c.out.empty() ? fs::path("runs") : fs::path(c.out);
  if (!c.out_explicit) {
    if (const char* e = std::getenv("IMB_RL_OUT"); e && *e) {
      dir = e;
    } else if (const char* e2 = std::getenv("IMBRL_OUT"); e2 && *e2) {
      dir = e2;
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

GridSpec load_env(const Common& c) {
  if (c.env == "four-room") return four_room(c.room_size);
  require_file(c.env, "layout file");
  std::ifstream in(c.env);
  std::stringstream buf;
  buf << in.rdbuf();
  return GridSpec::from_text(buf.str());
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is required");
  if (!fs::is_regular_file(path)) throw ConfigError(what + " not found: " + path);
}

void check_grid(std::uint64_t stored, const GridSpec& grid, const std::string& what) {
  if (stored != 0 && stored != grid.hash())
    throw ConfigError(what + " was produced on a different grid than --env");
}

Policy load_policy(const std::string& ckpt_path, const GridSpec& grid) {
  require_file(ckpt_path, "checkpoint");
  Checkpoint ck = load_checkpoint(ckpt_path);
  const std::string stored = ck.get("grid_hash");
  if (!stored.empty() && stored != std::to_string(grid.hash()))
    throw ConfigError("checkpoint " + ckpt_path + " was trained on a different grid than --env");
  const std::string encoder = ck.get("encoder", "tabular");
  if (encoder == "tabular") return {ck, StateEncoder::tabular(grid), nullptr};
  if (encoder == "xy") return {ck, scaled_xy_encoder(grid), nullptr};
  if (encoder != "retrieval") throw ConfigError("unknown encoder '" + encoder + "' in checkpoint");

  const fs::path index_path = fs::path(ckpt_path).parent_path() / ck.get("index_file");
  require_file(index_path.string(), "retrieval index");
  std::ifstream in(index_path, std::ios::binary);
  auto index = std::make_shared<const RetrievalIndex>(RetrievalIndex::read(in));
  if (std::to_string(index->hash()) != ck.get("index_hash"))
    throw ConfigError("retrieval index " + index_path.string() + " does not match the checkpoint's index hash");
  const int k = std::stoi(ck.get("k", "10"));
  StateEncoder enc = retrieval_encoder(grid, index, k);
  return {ck, std::move(enc), std::move(index)};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<State> start_states(const GridSpec& grid, const std::string& which) {
  std::vector<State> out;
  if (which == "start") return out;
  int room = -2;
  if (which == "last-room") {
    room = grid.num_rooms() - 1;
  } else if (which.starts_with("room:")) {
    try {
      room = std::stoi(which.substr(5));
    } catch (const std::exception&) {
      throw ConfigError("bad --starts value " + which);
    }
    if (room < 0 || room >= grid.num_rooms()) throw ConfigError("no room " + which.substr(5) + " in this grid");
  } else if (which != "all") {
    throw ConfigError("--starts must be start, all, last-room or room:<i>");
  }
  for (State s : grid.feasible_states())
    if (s != grid.goal() && (room == -2 || grid.room_of(s) == room)) out.push_back(s);
  return out;
}

}  // namespace imbrl::cli
