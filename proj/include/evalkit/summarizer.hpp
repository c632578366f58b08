#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evalkit/types.hpp"

namespace evalkit {

struct SummaryRow {
  std::string dataset_abbr;
  std::string metric_name;
  // Only models whose eval finished for this dataset have a value.
  std::map<std::string, double> values;
  std::size_t sample_count = 0;
  bool is_group = false;

  bool operator==(const SummaryRow&) const = default;
};

struct Summary {
  std::vector<std::string> models;
  std::vector<SummaryRow> rows;
  // Human-readable notes about absent cells, rendered as a report footer.
  std::vector<std::string> flags;
};

// One completed result shard as read back from disk.
struct ShardMetrics {
  std::size_t sample_count = 0;
  std::map<std::string, double> metrics;
};

// Counts (judged_count, judge_parse_failures) sum; llm_accuracy is weighted
// by judged_count; everything else is weighted by sample count. A metric
// missing from any shard is absent.
std::map<std::string, double> merge_shard_metrics(std::span<const ShardMetrics> shards,
                                                  std::span<const std::string> metric_names);

// Metrics rendered as raw numbers rather than percentages.
bool is_raw_metric(std::string_view metric_name);

// Records which eval shards and metrics a run expects, so aggregation can
// tell absent results from results that were never planned.
void write_plan(const fs::path& run_dir, const EvalConfig& cfg,
                const std::map<std::string, std::size_t>& sample_counts);

// Reads result shards under run_dir into one row per (dataset, metric).
Summary aggregate(const fs::path& run_dir);

// Appends one row per (group, metric common to all members).
// Throws ConfigError when a member abbr has no rows.
void apply_groups(Summary& summary, std::span<const SummaryGroup> groups);

// Display cell: percentage with 2 decimals for ratio metrics, 2 decimals for
// raw ones, "-" when absent.
std::string display_cell(std::string_view metric_name, std::optional<double> value);

std::string render_markdown(const Summary& summary);
std::string render_csv(const Summary& summary);
Json render_json(const Summary& summary);

// Keeps only the selected metric names (all when empty).
Summary select_metrics(const Summary& summary, std::span<const std::string> metrics);

// Writes summary.{md,csv,json} into out_dir; returns the files written.
std::vector<fs::path> render_report(const Summary& summary, std::span<const ReportFormat> formats,
                                    const fs::path& out_dir);

}  // namespace evalkit
