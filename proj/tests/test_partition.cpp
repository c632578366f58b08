#include <algorithm>
#include <random>

#include "doctest.h"
#include "evalkit/partition.hpp"
#include "support.hpp"

using namespace evalkit;
using evalkit::testing::TempDir;
using evalkit::testing::write_text;

namespace {

std::vector<std::size_t> sizes(const std::vector<SampleRange>& ranges) {
  std::vector<std::size_t> out;
  for (const auto& r : ranges) out.push_back(r.size());
  return out;
}

PartitionerSpec size_spec(std::int64_t max) { return {PartitionStrategy::Size, max, 0}; }
PartitionerSpec worker_spec(std::int64_t w) { return {PartitionStrategy::NumWorker, 0, w}; }

// Every composition of n into k positive contiguous parts.
void compositions(std::size_t n, std::size_t k, std::vector<std::size_t>& prefix,
                  std::vector<std::vector<std::size_t>>& out) {
  if (k == 1) {
    prefix.push_back(n);
    out.push_back(prefix);
    prefix.pop_back();
    return;
  }
  for (std::size_t first = 1; first + (k - 1) <= n; ++first) {
    prefix.push_back(first);
    compositions(n - first, k - 1, prefix, out);
    prefix.pop_back();
  }
}

void check_tiles(const std::vector<SampleRange>& ranges, std::size_t n) {
  std::size_t cursor = 0;
  for (const auto& r : ranges) {
    CHECK(r.start == cursor);
    CHECK(r.end > r.start);
    cursor = r.end;
  }
  CHECK(cursor == n);
}

}  // namespace

TEST_CASE("pairs are the models-major Cartesian product") {
  std::vector<std::string> m = {"m1", "m2"}, d = {"d1", "d2"};
  std::vector<ModelDatasetPair> expected = {{"m1", "d1"}, {"m1", "d2"}, {"m2", "d1"}, {"m2", "d2"}};
  CHECK(build_pairs(m, d) == expected);
  std::vector<std::string> two = {"a", "b"}, three = {"x", "y", "z"}, one = {"x"};
  CHECK(build_pairs(two, three).size() == 6);
  CHECK(build_pairs(std::vector<std::string>{"a"}, one).size() == 1);
}

TEST_CASE("size strategy: n=100, max 40") {
  CHECK(sizes(shard_ranges(100, size_spec(40))) == std::vector<std::size_t>{40, 40, 20});
  CHECK(sizes(shard_ranges(80, size_spec(40))) == std::vector<std::size_t>{40, 40});
  CHECK(sizes(shard_ranges(3, size_spec(40))) == std::vector<std::size_t>{3});
}

TEST_CASE("num_worker strategy: n=10, w=4 matches the balanced enumeration") {
  auto got = sizes(shard_ranges(10, worker_spec(4)));
  CHECK(got == std::vector<std::size_t>{3, 3, 2, 2});

  std::vector<std::vector<std::size_t>> all;
  std::vector<std::size_t> prefix;
  compositions(10, 4, prefix, all);
  std::vector<std::vector<std::size_t>> balanced;
  for (const auto& c : all) {
    auto [lo, hi] = std::minmax_element(c.begin(), c.end());
    if (*hi - *lo <= 1) balanced.push_back(c);
  }
  CHECK(balanced.size() == 6);  // arrangements of {3,3,2,2}
  CHECK(std::find(balanced.begin(), balanced.end(), got) != balanced.end());
  // Larger shards first: the lexicographically greatest balanced split.
  CHECK(got == *std::max_element(balanced.begin(), balanced.end()));
}

TEST_CASE("num_worker strategy caps shard count at n") {
  CHECK(sizes(shard_ranges(3, worker_spec(8))) == std::vector<std::size_t>{1, 1, 1});
  CHECK(sizes(shard_ranges(9, worker_spec(6))) == std::vector<std::size_t>{2, 2, 2, 1, 1, 1});
}

TEST_CASE("naive strategy: one full-range task per pair") {
  std::vector<std::string> m = {"a", "b"}, d = {"x", "y", "z"};
  auto pairs = build_pairs(m, d);
  std::map<std::string, std::size_t> counts = {{"x", 5}, {"y", 7}, {"z", 1}};
  TaskList list = partition(pairs, counts, PartitionerSpec{}, "/run", TaskKind::Infer);
  REQUIRE(list.tasks.size() == 6);
  for (const auto& t : list.tasks) CHECK(t.range == SampleRange{0, counts.at(t.dataset_abbr)});
  CHECK(list.total_samples == 2 * (5 + 7 + 1));
}

TEST_CASE("paths follow the run layout") {
  std::vector<std::string> m = {"m"}, d = {"ds"};
  auto pairs = build_pairs(m, d);
  std::map<std::string, std::size_t> counts = {{"ds", 5}};
  TaskList infer = partition(pairs, counts, size_spec(2), "/run", TaskKind::Infer);
  TaskList eval = partition(pairs, counts, size_spec(2), "/run", TaskKind::Eval);
  REQUIRE(infer.tasks.size() == 3);
  CHECK(infer.tasks[1].output_path == fs::path("/run/predictions/m/ds_1.jsonl"));
  CHECK(eval.tasks[1].output_path == fs::path("/run/results/m/ds_1.json"));
  CHECK(eval.tasks[1].input_path == infer.tasks[1].output_path);
  CHECK(infer.tasks[2].log_path == fs::path("/run/logs/m/ds_2.log"));
  CHECK(marker_path(infer.tasks[0].output_path) == fs::path("/run/predictions/m/ds_0.jsonl.done"));
}

TEST_CASE("filter_reusable") {
  TempDir tmp;
  std::vector<std::string> m = {"m"}, d = {"ds"};
  auto pairs = build_pairs(m, d);
  TaskList list = partition(pairs, {{"ds", 3}}, size_spec(1), tmp.path(), TaskKind::Infer);
  REQUIRE(list.tasks.size() == 3);

  auto [run0, skip0] = filter_reusable(list, tmp.path());
  CHECK(run0.tasks.size() == 3);
  CHECK(skip0.tasks.empty());

  write_text(list.tasks[0].output_path, "x");
  write_text(marker_path(list.tasks[0].output_path), "");
  write_text(list.tasks[1].output_path, "partial");  // no marker
  auto [run1, skip1] = filter_reusable(list, tmp.path());
  REQUIRE(skip1.tasks.size() == 1);
  CHECK(skip1.tasks[0].shard_index == 0);
  CHECK(skip1.tasks[0].status.state == TaskState::Skipped);
  REQUIRE(run1.tasks.size() == 2);
  CHECK(run1.tasks[0].shard_index == 1);
  CHECK(run1.tasks[1].shard_index == 2);

  // A marker without its output does not count either.
  write_text(marker_path(list.tasks[2].output_path), "");
  CHECK(filter_reusable(list, tmp.path()).second.tasks.size() == 1);
}

TEST_CASE("property: shards tile [0, n) for every strategy") {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t n = 1 + rng() % 500;
    std::int64_t max = 1 + static_cast<std::int64_t>(rng() % 100);
    std::int64_t w = 1 + static_cast<std::int64_t>(rng() % 16);

    check_tiles(shard_ranges(n, PartitionerSpec{}), n);

    auto by_size = shard_ranges(n, size_spec(max));
    check_tiles(by_size, n);
    CHECK(by_size.size() == (n + max - 1) / max);
    for (std::size_t i = 0; i + 1 < by_size.size(); ++i)
      CHECK(by_size[i].size() == static_cast<std::size_t>(max));

    auto by_worker = shard_ranges(n, worker_spec(w));
    check_tiles(by_worker, n);
    CHECK(by_worker.size() == std::min<std::size_t>(n, w));
    auto s = sizes(by_worker);
    CHECK(*std::max_element(s.begin(), s.end()) - *std::min_element(s.begin(), s.end()) <= 1);
    CHECK(std::is_sorted(s.rbegin(), s.rend()));
  }
}
