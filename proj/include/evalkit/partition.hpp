#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evalkit/dataset.hpp"
#include "evalkit/types.hpp"

namespace evalkit {

enum class TaskKind { Infer, Eval };

enum class TaskState { Pending, Running, Succeeded, Failed, Skipped };

std::string_view to_string(TaskKind kind);
std::string_view to_string(TaskState state);

struct TaskStatus {
  TaskState state = TaskState::Pending;
  int attempts = 0;
  std::optional<std::string> last_error;
  std::int64_t duration_ms = 0;
};

// Half-open sample index interval [start, end).
struct SampleRange {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  bool operator==(const SampleRange&) const = default;
};

struct TaskUnit {
  TaskKind kind = TaskKind::Infer;
  std::string model_abbr;
  std::string dataset_abbr;
  std::size_t shard_index = 0;
  SampleRange range;
  fs::path output_path;
  // Eval tasks read the infer shard of the same (model, dataset, shard).
  fs::path input_path;
  fs::path log_path;
  TaskStatus status;

  std::string name() const;
};

struct TaskList {
  std::vector<TaskUnit> tasks;
  std::size_t total_samples = 0;
};

struct ModelDatasetPair {
  std::string model_abbr;
  std::string dataset_abbr;

  bool operator==(const ModelDatasetPair&) const = default;
};

// Models-major Cartesian product.
std::vector<ModelDatasetPair> build_pairs(std::span<const std::string> model_abbrs,
                                          std::span<const std::string> dataset_abbrs);
std::vector<ModelDatasetPair> build_pairs(std::span<const ModelSpec> models,
                                          std::span<const SampleSet> datasets);

// Contiguous shards covering [0, n) for one (model, dataset) pair.
std::vector<SampleRange> shard_ranges(std::size_t n, const PartitionerSpec& spec);

fs::path shard_output_path(const fs::path& run_dir, TaskKind kind, const std::string& model_abbr,
                           const std::string& dataset_abbr, std::size_t shard_index);
fs::path shard_log_path(const fs::path& run_dir, const std::string& model_abbr,
                        const std::string& dataset_abbr, std::size_t shard_index);
fs::path marker_path(const fs::path& output_path);

TaskList partition(std::span<const ModelDatasetPair> pairs,
                   const std::map<std::string, std::size_t>& sample_counts,
                   const PartitionerSpec& spec, const fs::path& run_dir, TaskKind kind);

// A task is reusable iff both its output and its `.done` marker exist.
std::pair<TaskList, TaskList> filter_reusable(const TaskList& tasks, const fs::path& run_dir);

}  // namespace evalkit
