#include "evalkit/summarizer.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "evalkit/partition.hpp"
#include "evalkit/tasks.hpp"

namespace evalkit {

namespace {

bool is_count_metric(std::string_view name) {
  return name == "judged_count" || name == "judge_parse_failures";
}

std::optional<ShardMetrics> read_shard(const fs::path& path) {
  if (!fs::is_regular_file(path) || !fs::is_regular_file(marker_path(path))) return std::nullopt;
  Json doc = Json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("metrics")) return std::nullopt;
  ShardMetrics shard;
  shard.sample_count = doc.value("sample_count", std::size_t{0});
  for (const auto& [name, value] : doc["metrics"].items())
    if (value.is_number()) shard.metrics[name] = value.get<double>();
  return shard;
}

struct PlannedDataset {
  std::string abbr;
  std::vector<std::string> metrics;
  std::size_t shard_count = 0;
  std::size_t sample_count = 0;
};

struct Plan {
  std::vector<std::string> models;
  std::vector<PlannedDataset> datasets;
};

// Reconstructs a plan from whatever result shards exist.
Plan discover_plan(const fs::path& run_dir) {
  Plan plan;
  std::map<std::string, std::size_t> shard_counts;
  std::map<std::string, std::set<std::string>> metric_names;
  fs::path results = run_dir / "results";
  if (!fs::is_directory(results)) return plan;
  std::vector<fs::path> model_dirs;
  for (const auto& e : fs::directory_iterator(results))
    if (e.is_directory()) model_dirs.push_back(e.path());
  std::sort(model_dirs.begin(), model_dirs.end());
  for (const auto& dir : model_dirs) {
    plan.models.push_back(dir.filename().string());
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() != ".json") continue;
      std::string stem = e.path().stem().string();
      auto us = stem.rfind('_');
      if (us == std::string::npos) continue;
      std::string abbr = stem.substr(0, us);
      std::size_t idx = std::stoul(stem.substr(us + 1));
      shard_counts[abbr] = std::max(shard_counts[abbr], idx + 1);
      if (auto shard = read_shard(e.path()))
        for (const auto& [name, _] : shard->metrics) metric_names[abbr].insert(name);
    }
  }
  for (const auto& [abbr, count] : shard_counts)
    plan.datasets.push_back(
        {abbr, {metric_names[abbr].begin(), metric_names[abbr].end()}, count, 0});
  return plan;
}

Plan load_plan(const fs::path& run_dir) {
  fs::path path = run_dir / "plan.json";
  if (!fs::is_regular_file(path)) return discover_plan(run_dir);
  Json j = Json::parse(read_file(path));
  Plan plan;
  for (const auto& m : j.at("models")) plan.models.push_back(m.get<std::string>());
  for (const auto& d : j.at("datasets")) {
    PlannedDataset pd;
    pd.abbr = d.at("abbr").get<std::string>();
    for (const auto& m : d.at("metrics")) pd.metrics.push_back(m.get<std::string>());
    pd.shard_count = d.at("shard_count").get<std::size_t>();
    pd.sample_count = d.at("sample_count").get<std::size_t>();
    plan.datasets.push_back(std::move(pd));
  }
  return plan;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::optional<double> cell(const SummaryRow& row, const std::string& model) {
  auto it = row.values.find(model);
  if (it == row.values.end()) return std::nullopt;
  return it->second;
}

}  // namespace

bool is_raw_metric(std::string_view name) { return name == "judge_score" || is_count_metric(name); }

std::map<std::string, double> merge_shard_metrics(std::span<const ShardMetrics> shards,
                                                  std::span<const std::string> metric_names) {
  std::map<std::string, double> out;
  if (shards.empty()) return out;
  for (const auto& name : metric_names) {
    double num = 0.0, den = 0.0;
    bool complete = true;
    for (const auto& s : shards) {
      auto it = s.metrics.find(name);
      if (it == s.metrics.end()) {
        complete = false;
        break;
      }
      double w = static_cast<double>(s.sample_count);
      if (is_count_metric(name)) {
        w = 1.0;
      } else if (name == "llm_accuracy") {
        auto jc = s.metrics.find("judged_count");
        if (jc != s.metrics.end()) w = jc->second;
      }
      num += w * it->second;
      den += w;
    }
    if (!complete) continue;
    if (shards.size() == 1)
      out[name] = shards.front().metrics.at(name);
    else if (is_count_metric(name))
      out[name] = num;
    else
      out[name] = den > 0.0 ? num / den : 0.0;
  }
  return out;
}

void write_plan(const fs::path& run_dir, const EvalConfig& cfg,
                const std::map<std::string, std::size_t>& sample_counts) {
  Json j;
  j["models"] = Json::array();
  for (const auto& m : cfg.models) j["models"].push_back(m.abbr);
  j["datasets"] = Json::array();
  for (const auto& d : cfg.datasets) {
    std::size_t n = sample_counts.at(d.abbr);
    j["datasets"].push_back({{"abbr", d.abbr},
                             {"metrics", expected_metrics(d.evaluator)},
                             {"shard_count", shard_ranges(n, cfg.partitioner).size()},
                             {"sample_count", n}});
  }
  write_file_durably(run_dir / "plan.json", j.dump(2) + "\n");
}

Summary aggregate(const fs::path& run_dir) {
  Plan plan = load_plan(run_dir);
  Summary summary;
  summary.models = plan.models;
  for (const auto& d : plan.datasets) {
    std::map<std::string, std::map<std::string, double>> per_model;
    std::size_t sample_count = d.sample_count;
    for (const auto& model : plan.models) {
      std::vector<ShardMetrics> shards;
      for (std::size_t k = 0; k < d.shard_count; ++k) {
        auto shard = read_shard(shard_output_path(run_dir, TaskKind::Eval, model, d.abbr, k));
        if (!shard) break;
        shards.push_back(std::move(*shard));
      }
      if (shards.size() != d.shard_count || shards.empty()) {
        summary.flags.push_back("model '" + model + "' has no complete results for dataset '" +
                                d.abbr + "' (" + std::to_string(shards.size()) + "/" +
                                std::to_string(d.shard_count) + " shards)");
        continue;
      }
      if (sample_count == 0)
        for (const auto& s : shards) sample_count += s.sample_count;
      per_model[model] = merge_shard_metrics(shards, d.metrics);
    }
    for (const auto& metric : d.metrics) {
      SummaryRow row;
      row.dataset_abbr = d.abbr;
      row.metric_name = metric;
      row.sample_count = sample_count;
      for (const auto& [model, metrics] : per_model) {
        auto it = metrics.find(metric);
        if (it != metrics.end()) {
          row.values[model] = it->second;
        } else {
          summary.flags.push_back("model '" + model + "' has no '" + metric + "' value for dataset '" +
                                  d.abbr + "'");
        }
      }
      summary.rows.push_back(std::move(row));
    }
  }
  return summary;
}

void apply_groups(Summary& summary, std::span<const SummaryGroup> groups) {
  for (const auto& g : groups) {
    std::vector<std::string> common;
    for (std::size_t i = 0; i < g.member_abbrs.size(); ++i) {
      std::vector<std::string> names;
      for (const auto& row : summary.rows)
        if (row.dataset_abbr == g.member_abbrs[i]) names.push_back(row.metric_name);
      if (names.empty())
        throw ConfigError(ConfigError::Kind::Invalid, "summary group '" + g.group_abbr +
                                                          "': member '" + g.member_abbrs[i] +
                                                          "' has no results");
      if (i == 0) {
        common = names;
      } else {
        std::erase_if(common, [&](const std::string& n) {
          return std::find(names.begin(), names.end(), n) == names.end();
        });
      }
    }
    if (common.empty())
      throw ConfigError(ConfigError::Kind::Invalid,
                        "summary group '" + g.group_abbr + "': members share no metric");

    for (const auto& metric : common) {
      std::vector<const SummaryRow*> members;
      for (const auto& abbr : g.member_abbrs)
        for (const auto& row : summary.rows)
          if (row.dataset_abbr == abbr && row.metric_name == metric) members.push_back(&row);

      SummaryRow grow;
      grow.dataset_abbr = g.group_abbr;
      grow.metric_name = metric;
      grow.is_group = true;
      for (const auto* m : members) grow.sample_count += m->sample_count;
      for (const auto& model : summary.models) {
        double num = 0.0, den = 0.0;
        bool complete = true;
        for (std::size_t i = 0; i < members.size(); ++i) {
          auto v = cell(*members[i], model);
          if (!v) {
            complete = false;
            break;
          }
          double w = g.aggregation == GroupAggregation::WeightedMean
                         ? g.weights.at(g.member_abbrs[i])
                         : 1.0;
          num += w * *v;
          den += w;
        }
        if (complete)
          grow.values[model] = num / den;
        else
          summary.flags.push_back("group '" + g.group_abbr + "' (" + metric + ") is absent for '" +
                                  model + "': a member value is missing");
      }
      summary.rows.push_back(std::move(grow));
    }
  }
}

std::string display_cell(std::string_view metric_name, std::optional<double> value) {
  if (!value) return "-";
  return is_raw_metric(metric_name) ? fixed2(*value) : fixed2(*value * 100.0);
}

Summary select_metrics(const Summary& summary, std::span<const std::string> metrics) {
  if (metrics.empty()) return summary;
  Summary out = summary;
  std::erase_if(out.rows, [&](const SummaryRow& r) {
    return std::find(metrics.begin(), metrics.end(), r.metric_name) == metrics.end();
  });
  return out;
}

std::string render_markdown(const Summary& s) {
  std::string out = "| dataset | metric |";
  for (const auto& m : s.models) out += " " + m + " |";
  out += "\n|---|---|";
  for (std::size_t i = 0; i < s.models.size(); ++i) out += "---|";
  out += '\n';
  for (const auto& row : s.rows) {
    out += "| " + row.dataset_abbr + " | " + row.metric_name + " |";
    for (const auto& m : s.models) out += " " + display_cell(row.metric_name, cell(row, m)) + " |";
    out += '\n';
  }
  if (!s.flags.empty()) {
    out += "\nNotes:\n";
    for (const auto& f : s.flags) out += "- " + f + "\n";
  }
  return out;
}

std::string render_csv(const Summary& s) {
  std::string out = "dataset,metric";
  for (const auto& m : s.models) out += "," + csv_field(m);
  out += '\n';
  for (const auto& row : s.rows) {
    out += csv_field(row.dataset_abbr) + "," + csv_field(row.metric_name);
    for (const auto& m : s.models) {
      out += ',';
      if (auto v = cell(row, m)) out += format_double(*v);
    }
    out += '\n';
  }
  return out;
}

Json render_json(const Summary& s) {
  Json j;
  j["models"] = s.models;
  j["rows"] = Json::array();
  for (const auto& row : s.rows) {
    Json r;
    r["dataset"] = row.dataset_abbr;
    r["metric"] = row.metric_name;
    r["sample_count"] = row.sample_count;
    r["group"] = row.is_group;
    r["values"] = Json::object();
    for (const auto& m : s.models) {
      auto v = cell(row, m);
      r["values"][m] = v ? Json(*v) : Json(nullptr);
    }
    j["rows"].push_back(std::move(r));
  }
  j["flags"] = s.flags;
  return j;
}

std::vector<fs::path> render_report(const Summary& summary, std::span<const ReportFormat> formats,
                                    const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (auto f : formats) {
    fs::path path;
    std::string body;
    switch (f) {
      case ReportFormat::Markdown:
        path = out_dir / "summary.md";
        body = render_markdown(summary);
        break;
      case ReportFormat::Csv:
        path = out_dir / "summary.csv";
        body = render_csv(summary);
        break;
      case ReportFormat::Json:
        path = out_dir / "summary.json";
        body = render_json(summary).dump(2) + "\n";
        break;
    }
    write_file_durably(path, body);
    written.push_back(path);
  }
  return written;
}

}  // namespace evalkit
