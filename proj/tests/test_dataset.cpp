#include <cstdio>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "imbrl/datagen.hpp"
#include "imbrl/dataset.hpp"
#include "imbrl/errors.hpp"
#include "imbrl/io.hpp"

using namespace imbrl;

namespace {

Dataset sample_dataset() {
  Rng rng(21);
  Dataset d = generate_fourroom_dataset(four_room(), 30, CorrectActionSchedule{}, rng);
  d.meta["note"] = "hello world";
  return d;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("imbrl_test_" + name);
}

}  // namespace

TEST_CASE("binary round trip is exact") {
  const Dataset d = sample_dataset();
  std::stringstream buf;
  write_dataset_binary(buf, d);
  const std::string bytes = buf.str();
  const Dataset back = read_dataset_binary(buf);
  CHECK(back == d);

  std::stringstream again;
  write_dataset_binary(again, back);
  CHECK(again.str() == bytes);
}

TEST_CASE("csv round trip is exact") {
  Dataset d = sample_dataset();
  d.transitions[0].reward = 0.1;  // needs full precision in text
  std::stringstream buf;
  write_dataset_csv(buf, d);
  CHECK(buf.str().rfind("# imbrl-dataset v1\n", 0) == 0);
  CHECK(read_dataset_csv(buf) == d);
}

TEST_CASE("empty dataset round trips") {
  Dataset d;
  std::stringstream b, c;
  write_dataset_binary(b, d);
  write_dataset_csv(c, d);
  CHECK(read_dataset_binary(b) == d);
  CHECK(read_dataset_csv(c) == d);
}

TEST_CASE("save and load pick the layout from the extension") {
  const Dataset d = sample_dataset();
  for (const char* name : {"ds.bin", "ds.csv"}) {
    const auto path = temp_path(name);
    save_dataset(path.string(), d);
    CHECK(load_dataset(path.string()) == d);
    const std::string head = io::read_file(path.string()).substr(0, 8);
    CHECK((head == "IMBRLDS1") == (std::string(name) == "ds.bin"));
    std::filesystem::remove(path);
  }
  CHECK_THROWS_AS(load_dataset(temp_path("missing.bin").string()), FormatError);
}

TEST_CASE("corrupt inputs are rejected") {
  const Dataset d = sample_dataset();
  std::stringstream buf;
  write_dataset_binary(buf, d);
  const std::string bytes = buf.str();

  SUBCASE("bad magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    std::stringstream in(bad);
    CHECK_THROWS_AS(read_dataset_binary(in), FormatError);
  }
  SUBCASE("truncated") {
    std::stringstream in(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_dataset_binary(in), FormatError);
  }
  SUBCASE("future version") {
    std::string bad = bytes;
    bad[8] = 9;
    std::stringstream in(bad);
    CHECK_THROWS_AS(read_dataset_binary(in), FormatError);
  }
  SUBCASE("csv without version line") {
    std::stringstream in("x,y,action,reward,next_x,next_y,done\n");
    CHECK_THROWS_AS(read_dataset_csv(in), FormatError);
  }
  SUBCASE("csv bad action") {
    std::stringstream in(
        "# imbrl-dataset v1\n# episode_starts=0\nx,y,action,reward,next_x,next_y,done\n1,1,7,0,1,1,0\n");
    CHECK_THROWS_AS(read_dataset_csv(in), FormatError);
  }
  SUBCASE("csv short row") {
    std::stringstream in("# imbrl-dataset v1\n# episode_starts=0\nx,y,action,reward,next_x,next_y,done\n1,1,0\n");
    CHECK_THROWS_AS(read_dataset_csv(in), FormatError);
  }
}

TEST_CASE("structure validation") {
  Dataset d = sample_dataset();
  CHECK_NOTHROW(validate_structure(d));

  Dataset unchained = d;
  unchained.transitions[1].s = {3, 3};
  CHECK_THROWS_AS(validate_structure(unchained), FormatError);

  Dataset bad_bounds = d;
  bad_bounds.episode_starts[1] = bad_bounds.episode_starts[0];
  CHECK_THROWS_AS(validate_structure(bad_bounds), FormatError);

  Dataset past_end = d;
  past_end.episode_starts.push_back(d.size() + 5);
  CHECK_THROWS_AS(validate_structure(past_end), FormatError);
}

TEST_CASE("replay consistency check finds the first bad transition") {
  const GridSpec g = four_room();
  Dataset d = sample_dataset();
  CHECK(first_inconsistent_transition(g, d) == -1);
  d.transitions[17].reward = 10.0;
  CHECK(first_inconsistent_transition(g, d) == 17);
}

TEST_CASE("episodes partition the transitions") {
  const Dataset d = sample_dataset();
  std::size_t total = 0;
  for (std::size_t e = 0; e < d.num_episodes(); ++e) total += d.episode(e).size();
  CHECK(total == d.size());

  Dataset e;
  e.append_episode({});
  CHECK(e.num_episodes() == 0);
}
