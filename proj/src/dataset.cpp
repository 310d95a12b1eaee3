#include "imbrl/dataset.hpp"

#include <fstream>
#include <sstream>

#include "imbrl/errors.hpp"
#include "imbrl/io.hpp"

namespace imbrl {

namespace {

constexpr std::string_view kBinaryMagic = "IMBRLDS1";
constexpr std::string_view kCsvTag = "# imbrl-dataset v";
constexpr std::string_view kCsvColumns = "x,y,action,reward,next_x,next_y,done";

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  for (;;) {
    const std::size_t end = s.find(sep, begin);
    out.push_back(s.substr(begin, end == std::string_view::npos ? end : end - begin));
    if (end == std::string_view::npos) break;
    begin = end + 1;
  }
  return out;
}

Action parse_action(std::int64_t id) {
  if (id < 0 || id >= kNumActions) throw FormatError("action id out of range");
  return action_from_index(static_cast<int>(id));
}

}  // namespace

std::span<const Transition> Dataset::episode(std::size_t i) const {
  const std::size_t begin = episode_starts.at(i);
  const std::size_t end = i + 1 < episode_starts.size() ? episode_starts[i + 1] : transitions.size();
  return std::span<const Transition>(transitions).subspan(begin, end - begin);
}

void Dataset::append_episode(std::span<const Transition> steps) {
  if (steps.empty()) return;
  episode_starts.push_back(transitions.size());
  transitions.insert(transitions.end(), steps.begin(), steps.end());
}

void validate_structure(const Dataset& d) {
  if (d.transitions.empty()) {
    if (!d.episode_starts.empty()) throw FormatError("episode boundaries on an empty dataset");
    return;
  }
  if (d.episode_starts.empty() || d.episode_starts.front() != 0)
    throw FormatError("episode boundaries must start at 0");
  for (std::size_t i = 1; i < d.episode_starts.size(); ++i)
    if (d.episode_starts[i] <= d.episode_starts[i - 1])
      throw FormatError("episode boundaries must be strictly increasing");
  if (d.episode_starts.back() >= d.transitions.size())
    throw FormatError("episode boundary past the end of the transitions");
  for (std::size_t e = 0; e < d.num_episodes(); ++e) {
    auto ep = d.episode(e);
    for (std::size_t i = 1; i < ep.size(); ++i)
      if (ep[i].s != ep[i - 1].next)
        throw FormatError("episode " + std::to_string(e) + " is not chained at step " +
                          std::to_string(i));
  }
}

std::ptrdiff_t first_inconsistent_transition(const GridSpec& grid, const Dataset& d) {
  for (std::size_t i = 0; i < d.transitions.size(); ++i) {
    const Transition& t = d.transitions[i];
    if (!grid.feasible(t.s)) return static_cast<std::ptrdiff_t>(i);
    const StepResult r = step(grid, t.s, t.a);
    if (r.next != t.next || r.reward != t.reward || r.done != t.done)
      return static_cast<std::ptrdiff_t>(i);
  }
  return -1;
}

void write_dataset_binary(std::ostream& out, const Dataset& d) {
  io::write_magic(out, kBinaryMagic);
  io::write_le<std::uint32_t>(out, kDatasetFormatVersion);
  io::write_le<std::uint64_t>(out, d.grid_hash);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.meta.size()));
  for (const auto& [k, v] : d.meta) {
    io::write_string(out, k);
    io::write_string(out, v);
  }
  io::write_le<std::uint64_t>(out, d.transitions.size());
  for (const Transition& t : d.transitions) {
    io::write_le<std::int32_t>(out, t.s.x);
    io::write_le<std::int32_t>(out, t.s.y);
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(action_index(t.a)));
    io::write_le<double>(out, t.reward);
    io::write_le<std::int32_t>(out, t.next.x);
    io::write_le<std::int32_t>(out, t.next.y);
    io::write_le<std::uint8_t>(out, t.done ? 1 : 0);
  }
  io::write_le<std::uint64_t>(out, d.episode_starts.size());
  for (std::size_t b : d.episode_starts) io::write_le<std::uint64_t>(out, b);
}

Dataset read_dataset_binary(std::istream& in) {
  io::expect_magic(in, kBinaryMagic);
  const auto version = io::read_le<std::uint32_t>(in);
  if (version != kDatasetFormatVersion)
    throw FormatError("unsupported dataset version " + std::to_string(version));
  Dataset d;
  d.grid_hash = io::read_le<std::uint64_t>(in);
  const auto n_meta = io::read_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = io::read_string(in);
    d.meta[k] = io::read_string(in);
  }
  const auto n = io::read_le<std::uint64_t>(in);
  d.transitions.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Transition t;
    t.s.x = io::read_le<std::int32_t>(in);
    t.s.y = io::read_le<std::int32_t>(in);
    t.a = parse_action(io::read_le<std::uint8_t>(in));
    t.reward = io::read_le<double>(in);
    t.next.x = io::read_le<std::int32_t>(in);
    t.next.y = io::read_le<std::int32_t>(in);
    t.done = io::read_le<std::uint8_t>(in) != 0;
    d.transitions.push_back(t);
  }
  const auto n_episodes = io::read_le<std::uint64_t>(in);
  d.episode_starts.reserve(n_episodes);
  for (std::uint64_t i = 0; i < n_episodes; ++i)
    d.episode_starts.push_back(io::read_le<std::uint64_t>(in));
  validate_structure(d);
  return d;
}

void write_dataset_csv(std::ostream& out, const Dataset& d) {
  out << kCsvTag << kDatasetFormatVersion << '\n';
  out << "# grid_hash=" << d.grid_hash << '\n';
  for (const auto& [k, v] : d.meta) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos)
      throw FormatError("meta entry not representable in CSV: " + k);
    out << "# meta " << k << '=' << v << '\n';
  }
  out << "# episode_starts=";
  for (std::size_t i = 0; i < d.episode_starts.size(); ++i)
    out << (i ? ";" : "") << d.episode_starts[i];
  out << '\n' << kCsvColumns << '\n';
  for (const Transition& t : d.transitions) {
    out << t.s.x << ',' << t.s.y << ',' << action_index(t.a) << ',' << io::format_double(t.reward)
        << ',' << t.next.x << ',' << t.next.y << ',' << (t.done ? 1 : 0) << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in) {
  Dataset d;
  std::string line;
  if (!std::getline(in, line) || line.rfind(kCsvTag, 0) != 0)
    throw FormatError("missing dataset CSV version line");
  if (io::parse_uint(std::string_view(line).substr(kCsvTag.size())) != kDatasetFormatVersion)
    throw FormatError("unsupported dataset CSV version");
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::string_view v(line);
    if (v.starts_with("# grid_hash=")) {
      d.grid_hash = io::parse_uint(v.substr(12));
    } else if (v.starts_with("# meta ")) {
      auto body = v.substr(7);
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) throw FormatError("bad meta line");
      d.meta[std::string(body.substr(0, eq))] = std::string(body.substr(eq + 1));
    } else if (v.starts_with("# episode_starts=")) {
      auto body = v.substr(17);
      if (!body.empty())
        for (auto tok : split(body, ';')) d.episode_starts.push_back(io::parse_uint(tok));
    } else if (v.starts_with("#")) {
      continue;
    } else if (!header_seen) {
      if (v != kCsvColumns) throw FormatError("unexpected dataset CSV columns");
      header_seen = true;
    } else {
      auto f = split(v, ',');
      if (f.size() != 7) throw FormatError("dataset CSV row needs 7 fields");
      Transition t;
      t.s = {static_cast<int>(io::parse_int(f[0])), static_cast<int>(io::parse_int(f[1]))};
      t.a = parse_action(io::parse_int(f[2]));
      t.reward = io::parse_double(f[3]);
      t.next = {static_cast<int>(io::parse_int(f[4])), static_cast<int>(io::parse_int(f[5]))};
      t.done = io::parse_int(f[6]) != 0;
      d.transitions.push_back(t);
    }
  }
  validate_structure(d);
  return d;
}

void save_dataset(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  if (ends_with(path, ".csv")) write_dataset_csv(out, d);
  else write_dataset_binary(out, d);
  if (!out) throw FormatError("write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return ends_with(path, ".csv") ? read_dataset_csv(in) : read_dataset_binary(in);
}

}  // namespace imbrl
