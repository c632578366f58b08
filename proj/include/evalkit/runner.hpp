#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <string>

#include "evalkit/partition.hpp"
#include "evalkit/types.hpp"

namespace evalkit {

// Per-task log stream. Appends to the task's log file and optionally mirrors
// every line to stderr (serial debug mode).
class TaskLog {
 public:
  TaskLog() = default;
  TaskLog(const fs::path& path, bool mirror);

  void line(std::string_view text);

 private:
  std::ofstream out_;
  bool mirror_ = false;
  std::string prefix_;
};

// Runs one task attempt. Must write task.output_path completely (flushed and
// fsynced) before returning; signals failure by throwing.
using TaskExecutor = std::function<void(const TaskUnit&, TaskLog&)>;

struct RunnerHooks {
  // Invoked after a successful attempt, right before the `.done` marker is
  // written. Used by crash-injection tests.
  std::function<void(const TaskUnit&)> before_marker;
};

struct RunReport {
  std::map<std::string, TaskStatus> statuses;  // keyed by output path
  std::int64_t wall_time_ms = 0;
  std::map<TaskState, std::size_t> counts;

  std::size_t count(TaskState state) const;
  bool any_failed() const { return count(TaskState::Failed) > 0; }

  // Folds another report in (wall times add up).
  void merge(const RunReport& other);
};

TaskStatus run_one_with_retry(const TaskUnit& task, const TaskExecutor& executor, int max_retries,
                              int backoff_ms, TaskLog& log, const RunnerHooks& hooks = {});

// Executes every task; tasks already marked Skipped are recorded, not run.
// Never throws on task failure; throws std::runtime_error only if the
// backend cannot be set up.
RunReport execute(const TaskList& tasks, const TaskExecutor& executor, const RunnerSpec& spec,
                  const RunnerHooks& hooks = {});

}  // namespace evalkit
