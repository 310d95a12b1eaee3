#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "imbrl/grid.hpp"
#include "imbrl/learner.hpp"
#include "imbrl/qfunction.hpp"
#include "imbrl/retrieval.hpp"

namespace imbrl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Options every subcommand shares.
struct Common {
  std::string config;
  std::string out;
  std::string name;
  std::string env = "four-room";
  int room_size = 5;
  bool quiet = false;
  /// --out came from the command line rather than a config file.
  bool out_explicit = false;
};

void add_common(CLI::App& sub, Common& c, const std::string& default_name);

/// Fills options not given on the command line from a JSON file. Keys are
/// long option names without dashes; an object keyed by the subcommand name
/// takes precedence over top-level keys.
void apply_config(CLI::App& root, CLI::App& sub, const std::string& path);

/// Command-line --out, else $IMB_RL_OUT (or $IMBRL_OUT), else the config
/// file's out, else "runs". Created on demand.
fs::path output_dir(const Common& c);

GridSpec load_env(const Common& c);

void require_file(const std::string& path, const std::string& what);
void check_grid(std::uint64_t stored, const GridSpec& grid, const std::string& what);

/// Checkpoint plus the encoder it was trained with.
struct Policy {
  Checkpoint ck;
  StateEncoder enc;
  std::shared_ptr<const RetrievalIndex> index;
};

Policy load_policy(const std::string& ckpt_path, const GridSpec& grid);

void write_text(const fs::path& path, const std::string& text);
void write_json(const fs::path& path, const json& j);

std::vector<State> start_states(const GridSpec& grid, const std::string& which);

}  // namespace imbrl::cli
