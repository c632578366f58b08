#include "evalkit/runner.hpp"

#include <atomic>
#include <chrono>
#include <iostream>
#include <thread>
#include <vector>

namespace evalkit {

namespace {

using Clock = std::chrono::steady_clock;

std::mutex& stderr_mutex() {
  static std::mutex m;
  return m;
}

std::int64_t elapsed_ms(Clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - since).count();
}

std::string wall_clock_stamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void remove_partial(const TaskUnit& task) {
  std::error_code ec;
  fs::remove(marker_path(task.output_path), ec);
  fs::remove(task.output_path, ec);
}

}  // namespace

TaskLog::TaskLog(const fs::path& path, bool mirror) : mirror_(mirror) {
  if (!path.empty()) {
    fs::create_directories(path.parent_path());
    out_.open(path, std::ios::app);
    if (!out_) throw std::runtime_error("cannot open log file '" + path.string() + "'");
    prefix_ = path.stem().string();
  }
}

void TaskLog::line(std::string_view text) {
  if (out_.is_open()) {
    out_ << wall_clock_stamp() << ' ' << text << '\n';
    out_.flush();
  }
  if (mirror_) {
    std::lock_guard lock(stderr_mutex());
    std::cerr << '[' << prefix_ << "] " << text << '\n';
  }
}

std::size_t RunReport::count(TaskState state) const {
  auto it = counts.find(state);
  return it == counts.end() ? 0 : it->second;
}

void RunReport::merge(const RunReport& other) {
  for (const auto& [path, st] : other.statuses) statuses.insert_or_assign(path, st);
  counts.clear();
  for (const auto& [_, st] : statuses) ++counts[st.state];
  wall_time_ms += other.wall_time_ms;
}

TaskStatus run_one_with_retry(const TaskUnit& task, const TaskExecutor& executor, int max_retries,
                              int backoff_ms, TaskLog& log, const RunnerHooks& hooks) {
  TaskStatus status;
  auto start = Clock::now();
  for (int attempt = 1; attempt <= max_retries + 1; ++attempt) {
    status.attempts = attempt;
    status.state = TaskState::Running;
    remove_partial(task);
    log.line(task.name() + " attempt " + std::to_string(attempt) + " started");
    try {
      executor(task, log);
      if (!task.output_path.empty()) {
        if (!fs::is_regular_file(task.output_path))
          throw TaskError("executor produced no output at '" + task.output_path.string() + "'",
                          false);
        if (hooks.before_marker) hooks.before_marker(task);
        write_file_durably(marker_path(task.output_path), "");
      }
      status.state = TaskState::Succeeded;
      status.last_error.reset();
      log.line(task.name() + " attempt " + std::to_string(attempt) + " succeeded");
      break;
    } catch (const std::exception& e) {
      status.state = TaskState::Failed;
      status.last_error = e.what();
      bool retryable = true;
      if (auto* te = dynamic_cast<const TaskError*>(&e)) retryable = te->retryable();
      log.line(task.name() + " attempt " + std::to_string(attempt) + " failed (" +
               (retryable ? "retryable" : "permanent") + "): " + e.what());
    }
    if (attempt <= max_retries && backoff_ms > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(std::int64_t{backoff_ms} * attempt));
  }
  if (status.state == TaskState::Failed) remove_partial(task);
  status.duration_ms = elapsed_ms(start);
  return status;
}

RunReport execute(const TaskList& tasks, const TaskExecutor& executor, const RunnerSpec& spec,
                  const RunnerHooks& hooks) {
  if (spec.max_concurrent < 1)
    throw std::runtime_error("runner: max_concurrent must be >= 1");
  if (spec.max_retries < 0) throw std::runtime_error("runner: max_retries must be >= 0");

  RunReport report;
  auto start = Clock::now();
  bool serial = spec.backend == RunnerBackend::SerialDebug;

  std::vector<const TaskUnit*> pending;
  for (const auto& t : tasks.tasks) {
    if (t.status.state == TaskState::Skipped)
      report.statuses[t.output_path.string()] = t.status;
    else
      pending.push_back(&t);
  }

  std::mutex collector;
  auto run_task = [&](const TaskUnit& task) {
    TaskStatus status;
    try {
      TaskLog log(task.log_path, serial);
      status = run_one_with_retry(task, executor, spec.max_retries, spec.retry_backoff_ms, log,
                                  hooks);
    } catch (const std::exception& e) {
      // Log setup failed; the task never ran.
      status.state = TaskState::Failed;
      status.attempts = spec.max_retries + 1;
      status.last_error = e.what();
    }
    std::lock_guard lock(collector);
    report.statuses[task.output_path.string()] = std::move(status);
  };

  if (serial) {
    for (const auto* t : pending) run_task(*t);
  } else {
    std::atomic<std::size_t> next{0};
    std::size_t n_workers = std::min<std::size_t>(spec.max_concurrent, pending.size());
    std::vector<std::jthread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < pending.size(); i = next++) run_task(*pending[i]);
      });
    }
  }

  for (const auto& [_, st] : report.statuses) ++report.counts[st.state];
  report.wall_time_ms = elapsed_ms(start);
  return report;
}

}  // namespace evalkit
