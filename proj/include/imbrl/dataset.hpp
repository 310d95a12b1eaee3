#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "imbrl/grid.hpp"

namespace imbrl {

struct Transition {
  State s;
  Action a = Action::Up;
  double reward = 0.0;
  State next;
  bool done = false;
  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Ordered transitions split into episodes.
///
/// `episode_starts` holds the index of the first transition of every
/// episode, strictly increasing and starting at 0 (when nonempty), so that
/// episodes partition the transition list. `meta` records how the data was
/// produced (source tag, exponent, schedule, seed, ...); keys are sorted, so
/// serialisation is deterministic.
struct Dataset {
  std::vector<Transition> transitions;
  std::vector<std::size_t> episode_starts;
  std::map<std::string, std::string> meta;
  std::uint64_t grid_hash = 0;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }
  std::size_t num_episodes() const { return episode_starts.size(); }
  std::span<const Transition> episode(std::size_t i) const;

  /// Appends a whole episode; empty episodes are ignored.
  void append_episode(std::span<const Transition> steps);

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Throws FormatError when boundaries do not partition the transitions or an
/// episode is not chained (s_next of step i == s of step i+1).
void validate_structure(const Dataset& d);

/// Index of the first transition that disagrees with step(); -1 if none.
std::ptrdiff_t first_inconsistent_transition(const GridSpec& grid, const Dataset& d);

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void write_dataset_binary(std::ostream& out, const Dataset& d);
Dataset read_dataset_binary(std::istream& in);
void write_dataset_csv(std::ostream& out, const Dataset& d);
Dataset read_dataset_csv(std::istream& in);

/// Chooses the layout from the extension: ".csv" is text, anything else binary.
void save_dataset(const std::string& path, const Dataset& d);
Dataset load_dataset(const std::string& path);

}  // namespace imbrl
