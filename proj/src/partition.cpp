#include "evalkit/partition.hpp"

#include <algorithm>

namespace evalkit {

std::string_view to_string(TaskKind kind) { return kind == TaskKind::Infer ? "infer" : "eval"; }

std::string_view to_string(TaskState state) {
  switch (state) {
    case TaskState::Pending: return "pending";
    case TaskState::Running: return "running";
    case TaskState::Succeeded: return "succeeded";
    case TaskState::Failed: return "failed";
    case TaskState::Skipped: return "skipped";
  }
  return "pending";
}

std::string TaskUnit::name() const {
  return std::string(to_string(kind)) + ":" + model_abbr + "/" + dataset_abbr + "_" +
         std::to_string(shard_index);
}

std::vector<ModelDatasetPair> build_pairs(std::span<const std::string> model_abbrs,
                                          std::span<const std::string> dataset_abbrs) {
  if (model_abbrs.empty() || dataset_abbrs.empty())
    throw ConfigError(ConfigError::Kind::Invalid, "build_pairs: empty model or dataset list");
  std::vector<ModelDatasetPair> pairs;
  pairs.reserve(model_abbrs.size() * dataset_abbrs.size());
  for (const auto& m : model_abbrs)
    for (const auto& d : dataset_abbrs) pairs.push_back({m, d});
  return pairs;
}

std::vector<ModelDatasetPair> build_pairs(std::span<const ModelSpec> models,
                                          std::span<const SampleSet> datasets) {
  std::vector<std::string> m, d;
  for (const auto& x : models) m.push_back(x.abbr);
  for (const auto& x : datasets) d.push_back(x.dataset_abbr);
  return build_pairs(m, d);
}

std::vector<SampleRange> shard_ranges(std::size_t n, const PartitionerSpec& spec) {
  std::vector<SampleRange> out;
  if (n == 0) return out;
  switch (spec.strategy) {
    case PartitionStrategy::Naive:
      out.push_back({0, n});
      break;
    case PartitionStrategy::Size: {
      if (spec.max_task_size < 1)
        throw ConfigError(ConfigError::Kind::Invalid, "max_task_size must be >= 1");
      auto step = static_cast<std::size_t>(spec.max_task_size);
      for (std::size_t s = 0; s < n; s += step) out.push_back({s, std::min(n, s + step)});
      break;
    }
    case PartitionStrategy::NumWorker: {
      if (spec.num_workers < 1)
        throw ConfigError(ConfigError::Kind::Invalid, "num_workers must be >= 1");
      std::size_t w = std::min(static_cast<std::size_t>(spec.num_workers), n);
      std::size_t base = n / w, extra = n % w, start = 0;
      for (std::size_t i = 0; i < w; ++i) {
        std::size_t len = base + (i < extra ? 1 : 0);
        out.push_back({start, start + len});
        start += len;
      }
      break;
    }
  }
  return out;
}

fs::path shard_output_path(const fs::path& run_dir, TaskKind kind, const std::string& model_abbr,
                           const std::string& dataset_abbr, std::size_t shard_index) {
  std::string stem = dataset_abbr + "_" + std::to_string(shard_index);
  if (kind == TaskKind::Infer) return run_dir / "predictions" / model_abbr / (stem + ".jsonl");
  return run_dir / "results" / model_abbr / (stem + ".json");
}

fs::path shard_log_path(const fs::path& run_dir, const std::string& model_abbr,
                        const std::string& dataset_abbr, std::size_t shard_index) {
  return run_dir / "logs" / model_abbr / (dataset_abbr + "_" + std::to_string(shard_index) + ".log");
}

fs::path marker_path(const fs::path& output_path) {
  fs::path p = output_path;
  p += ".done";
  return p;
}

TaskList partition(std::span<const ModelDatasetPair> pairs,
                   const std::map<std::string, std::size_t>& sample_counts,
                   const PartitionerSpec& spec, const fs::path& run_dir, TaskKind kind) {
  TaskList list;
  for (const auto& pair : pairs) {
    auto it = sample_counts.find(pair.dataset_abbr);
    if (it == sample_counts.end() || it->second == 0)
      throw ConfigError(ConfigError::Kind::Invalid,
                        "no samples known for dataset '" + pair.dataset_abbr + "'");
    auto ranges = shard_ranges(it->second, spec);
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      TaskUnit t;
      t.kind = kind;
      t.model_abbr = pair.model_abbr;
      t.dataset_abbr = pair.dataset_abbr;
      t.shard_index = k;
      t.range = ranges[k];
      t.output_path = shard_output_path(run_dir, kind, pair.model_abbr, pair.dataset_abbr, k);
      if (kind == TaskKind::Eval)
        t.input_path =
            shard_output_path(run_dir, TaskKind::Infer, pair.model_abbr, pair.dataset_abbr, k);
      t.log_path = shard_log_path(run_dir, pair.model_abbr, pair.dataset_abbr, k);
      list.total_samples += t.range.size();
      list.tasks.push_back(std::move(t));
    }
  }
  return list;
}

std::pair<TaskList, TaskList> filter_reusable(const TaskList& tasks, const fs::path& run_dir) {
  (void)run_dir;  // output paths are already rooted in the run directory
  TaskList to_run, skipped;
  for (const auto& t : tasks.tasks) {
    std::error_code ec;
    bool done = fs::is_regular_file(t.output_path, ec) &&
                fs::is_regular_file(marker_path(t.output_path), ec);
    TaskUnit copy = t;
    if (done) {
      copy.status = TaskStatus{TaskState::Skipped, 0, std::nullopt, 0};
      skipped.total_samples += copy.range.size();
      skipped.tasks.push_back(std::move(copy));
    } else {
      to_run.total_samples += copy.range.size();
      to_run.tasks.push_back(std::move(copy));
    }
  }
  return {std::move(to_run), std::move(skipped)};
}

}  // namespace evalkit
