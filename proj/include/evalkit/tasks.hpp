#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evalkit/backends.hpp"
#include "evalkit/dataset.hpp"
#include "evalkit/evaluators.hpp"
#include "evalkit/partition.hpp"
#include "evalkit/runner.hpp"
#include "evalkit/types.hpp"

namespace evalkit {

struct PredictionRecord {
  std::string sample_id;
  std::string model_abbr;
  std::string dataset_abbr;
  std::vector<Message> messages;
  std::string output;
  FinishReason finish_reason = FinishReason::Stop;
  // Per-choice mean NLL; +infinity is stored as null.
  std::optional<std::vector<double>> ppl_detail;
  std::string gen_params_digest;
};

Json to_json(const PredictionRecord& record);
PredictionRecord prediction_from_json(const Json& j);

std::string gen_params_digest(const GenerationParams& params);

struct PplSelection {
  std::string label;
  std::vector<double> mean_nll;
};

// Label of the smallest value; ties go to the lowest index.
std::string argmin_label(std::span<const double> mean_nll);

// Scores each choice as a continuation of the prompt and picks the one with
// the lowest mean negative log-likelihood per token. Empty choices score
// +infinity.
PplSelection select_by_ppl(std::span<const Message> messages,
                           std::span<const std::string> choices, const ModelBackend& model);

// Metric names an evaluator writes into result shards.
std::vector<std::string> expected_metrics(const EvaluatorSpec& spec);

// Immutable state shared by all task executors of one run: loaded datasets,
// example pools and model backends.
class EvalContext {
 public:
  explicit EvalContext(ValidatedConfig cfg);

  const ValidatedConfig& validated() const { return cfg_; }
  const EvalConfig& config() const { return cfg_.config; }

  const SampleSet& samples(const std::string& dataset_abbr) const;
  const SampleSet& example_pool(const std::string& dataset_abbr) const;
  const ModelBackend& model(const std::string& model_abbr) const;
  const ModelBackend& judge(const std::string& dataset_abbr) const;

  std::map<std::string, std::size_t> sample_counts() const;

  // Replaces a model backend; intended for tests. Not thread-safe.
  void set_model_backend(const std::string& model_abbr, std::unique_ptr<ModelBackend> backend);

 private:
  ValidatedConfig cfg_;
  std::map<std::string, SampleSet> samples_;
  std::map<std::string, SampleSet> pools_;
  std::map<std::string, std::unique_ptr<ModelBackend>> models_;
  std::map<std::string, std::unique_ptr<ModelBackend>> judges_;
};

// Renders, queries and persists one prediction shard. Throws TaskError.
void run_infer_task(const TaskUnit& task, const EvalContext& ctx, TaskLog& log);

// Scores one prediction shard and writes {records, metrics, sample_count}.
void run_eval_task(const TaskUnit& task, const EvalContext& ctx, TaskLog& log);

TaskExecutor make_executor(const EvalContext& ctx);

}  // namespace evalkit
