#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <random>
#include <thread>

#include "doctest.h"
#include "evalkit/runner.hpp"
#include "support.hpp"

using namespace evalkit;
using evalkit::testing::TempDir;
using evalkit::testing::write_text;

namespace {

TaskList make_tasks(const fs::path& run_dir, std::size_t n) {
  std::vector<std::string> models = {"m"}, datasets = {"d"};
  auto pairs = build_pairs(models, datasets);
  return partition(pairs, {{"d", n}}, {PartitionStrategy::Size, 1, 0}, run_dir, TaskKind::Infer);
}

RunnerSpec spec(int max_concurrent, int max_retries, RunnerBackend backend = RunnerBackend::LocalParallel) {
  return {backend, max_concurrent, max_retries, 0};
}

void write_output(const TaskUnit& t) { write_text(t.output_path, t.name() + "\n"); }

// Tracks in-flight executors.
struct Gauge {
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};

  void enter() {
    int now = ++in_flight;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
  }
  void leave() { --in_flight; }
};

}  // namespace

TEST_CASE("run_one_with_retry: fails twice then succeeds") {
  TempDir tmp;
  TaskList list = make_tasks(tmp.path(), 1);
  int calls = 0;
  TaskExecutor exec = [&](const TaskUnit& t, TaskLog&) {
    if (++calls <= 2) throw TaskError("transient", true);
    write_output(t);
  };
  TaskLog log;
  TaskStatus st = run_one_with_retry(list.tasks[0], exec, 2, 0, log);
  CHECK(st.state == TaskState::Succeeded);
  CHECK(st.attempts == 3);
  CHECK_FALSE(st.last_error.has_value());
  CHECK(fs::exists(marker_path(list.tasks[0].output_path)));
}

TEST_CASE("run_one_with_retry: exhaustion records the last error") {
  TempDir tmp;
  TaskList list = make_tasks(tmp.path(), 1);
  int calls = 0;
  TaskExecutor exec = [&](const TaskUnit& t, TaskLog&) {
    write_output(t);  // partial output that must not survive
    throw std::runtime_error("boom " + std::to_string(++calls));
  };
  TaskLog log;
  TaskStatus st = run_one_with_retry(list.tasks[0], exec, 0, 0, log);
  CHECK(st.state == TaskState::Failed);
  CHECK(st.attempts == 1);
  CHECK(st.last_error == "boom 1");
  CHECK_FALSE(fs::exists(list.tasks[0].output_path));
  CHECK_FALSE(fs::exists(marker_path(list.tasks[0].output_path)));

  st = run_one_with_retry(list.tasks[0], exec, 3, 0, log);
  CHECK(st.attempts == 4);
  CHECK(st.last_error == "boom 5");
}

TEST_CASE("run_one_with_retry: first-try success writes the marker") {
  TempDir tmp;
  TaskList list = make_tasks(tmp.path(), 1);
  TaskLog log;
  TaskStatus st =
      run_one_with_retry(list.tasks[0], [](const TaskUnit& t, TaskLog&) { write_output(t); }, 2, 0, log);
  CHECK(st.state == TaskState::Succeeded);
  CHECK(st.attempts == 1);
  CHECK(fs::exists(marker_path(list.tasks[0].output_path)));
}

TEST_CASE("run_one_with_retry: an executor that writes nothing fails") {
  TempDir tmp;
  TaskList list = make_tasks(tmp.path(), 1);
  TaskLog log;
  TaskStatus st = run_one_with_retry(list.tasks[0], [](const TaskUnit&, TaskLog&) {}, 1, 0, log);
  CHECK(st.state == TaskState::Failed);
  CHECK(st.attempts == 2);
}

TEST_CASE("run_one_with_retry: stale output from an earlier attempt is discarded") {
  TempDir tmp;
  TaskList list = make_tasks(tmp.path(), 1);
  const TaskUnit& t = list.tasks[0];
  write_text(t.output_path, "stale");
  write_text(marker_path(t.output_path), "");
  bool saw_stale = false;
  TaskLog log;
  run_one_with_retry(
      t,
      [&](const TaskUnit& u, TaskLog&) {
        saw_stale = fs::exists(u.output_path) || fs::exists(marker_path(u.output_path));
        write_output(u);
      },
      0, 0, log);
  CHECK_FALSE(saw_stale);
}

TEST_CASE("run_one_with_retry: linear backoff") {
  TempDir tmp;
  TaskList list = make_tasks(tmp.path(), 1);
  TaskLog log;
  auto start = std::chrono::steady_clock::now();
  run_one_with_retry(list.tasks[0], [](const TaskUnit&, TaskLog&) { throw std::runtime_error("x"); },
                     2, 20, log);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                   start)
                .count();
  CHECK(ms >= 60);  // 20 * 1 + 20 * 2
}

TEST_CASE("execute: five tasks with max_concurrent 2") {
  TempDir tmp;
  TaskList list = make_tasks(tmp.path(), 5);
  Gauge gauge;
  TaskExecutor exec = [&](const TaskUnit& t, TaskLog&) {
    gauge.enter();
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    write_output(t);
    gauge.leave();
  };
  RunReport report = execute(list, exec, spec(2, 0));
  CHECK(report.count(TaskState::Succeeded) == 5);
  CHECK(report.statuses.size() == 5);
  CHECK(gauge.peak.load() <= 2);
  CHECK(gauge.peak.load() >= 1);
}

TEST_CASE("execute: one always-failing task among three") {
  TempDir tmp;
  TaskList list = make_tasks(tmp.path(), 3);
  TaskExecutor exec = [&](const TaskUnit& t, TaskLog&) {
    if (t.shard_index == 1) throw TaskError("permanent", false);
    write_output(t);
  };
  RunReport report = execute(list, exec, spec(4, 2));
  CHECK(report.count(TaskState::Succeeded) == 2);
  CHECK(report.count(TaskState::Failed) == 1);
  const auto& failed = report.statuses.at(list.tasks[1].output_path.string());
  CHECK(failed.state == TaskState::Failed);
  CHECK(failed.attempts == 3);
  CHECK(report.any_failed());
}

TEST_CASE("execute: empty task list") {
  RunReport report = execute(TaskList{}, [](const TaskUnit&, TaskLog&) {}, spec(4, 2));
  CHECK(report.statuses.empty());
  CHECK(report.count(TaskState::Succeeded) == 0);
  CHECK(report.count(TaskState::Failed) == 0);
  CHECK_FALSE(report.any_failed());
}

TEST_CASE("execute: skipped tasks are recorded with zero attempts") {
  TempDir tmp;
  TaskList list = make_tasks(tmp.path(), 3);
  list.tasks[0].status.state = TaskState::Skipped;
  int calls = 0;
  RunReport report = execute(list, [&](const TaskUnit& t, TaskLog&) { ++calls; write_output(t); },
                             spec(1, 0));
  CHECK(calls == 2);
  CHECK(report.count(TaskState::Skipped) == 1);
  CHECK(report.statuses.at(list.tasks[0].output_path.string()).attempts == 0);
}

TEST_CASE("execute: serial_debug runs in list order and writes logs") {
  TempDir tmp;
  TaskList list = make_tasks(tmp.path(), 4);
  std::reverse(list.tasks.begin(), list.tasks.end());
  std::vector<std::size_t> order;
  RunReport report = execute(
      list,
      [&](const TaskUnit& t, TaskLog& log) {
        order.push_back(t.shard_index);
        log.line("working on " + t.name());
        write_output(t);
      },
      spec(4, 0, RunnerBackend::SerialDebug));
  CHECK(order == std::vector<std::size_t>{3, 2, 1, 0});
  std::string log = read_file(list.tasks[0].log_path);
  CHECK(log.find("working on infer:m/d_3") != std::string::npos);
  CHECK(log.find("succeeded") != std::string::npos);
}

TEST_CASE("execute: rejects an invalid backend setup") {
  CHECK_THROWS(execute(TaskList{}, [](const TaskUnit&, TaskLog&) {}, spec(0, 0)));
}

TEST_CASE("property: final statuses are invariant under task permutation") {
  TempDir tmp;
  TaskList base = make_tasks(tmp.path(), 12);
  // Pure per-task behaviour: shard k fails (k % 3) times; shards divisible by 5 always fail.
  auto run = [&](TaskList list) {
    std::map<std::size_t, std::atomic<int>> failures;
    for (const auto& t : list.tasks) failures[t.shard_index] = 0;
    TaskExecutor exec = [&](const TaskUnit& t, TaskLog&) {
      if (t.shard_index % 5 == 0) throw std::runtime_error("always");
      if (failures.at(t.shard_index)++ < static_cast<int>(t.shard_index % 3))
        throw std::runtime_error("transient");
      write_output(t);
    };
    RunReport r = execute(list, exec, spec(3, 2));
    std::map<std::string, std::pair<TaskState, int>> out;
    for (const auto& [path, st] : r.statuses) out[path] = {st.state, st.attempts};
    return out;
  };
  auto reference = run(base);
  std::mt19937 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    TaskList shuffled = base;
    std::shuffle(shuffled.tasks.begin(), shuffled.tasks.end(), rng);
    CHECK(run(shuffled) == reference);
  }
  for (const auto& [path, s] : reference) {
    if (s.first == TaskState::Failed) CHECK(s.second == 3);
    if (s.first == TaskState::Succeeded) CHECK(s.second >= 1);
  }
}

TEST_CASE("crash between output and marker leaves the shard reusable-negative") {
  TempDir tmp;
  TaskList list = make_tasks(tmp.path(), 2);
  pid_t pid = ::fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    RunnerHooks hooks;
    hooks.before_marker = [](const TaskUnit& t) {
      if (t.shard_index == 1) ::_exit(42);
    };
    execute(list, [](const TaskUnit& t, TaskLog&) { write_output(t); }, spec(1, 0), hooks);
    ::_exit(0);
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 42);
  CHECK(fs::exists(list.tasks[1].output_path));
  CHECK_FALSE(fs::exists(marker_path(list.tasks[1].output_path)));

  auto [to_run, skipped] = filter_reusable(list, tmp.path());
  REQUIRE(to_run.tasks.size() == 1);
  CHECK(to_run.tasks[0].shard_index == 1);
  CHECK(skipped.tasks.size() == 1);
}
