#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evalkit/common.hpp"

// Declarative configuration types shared by every stage.

namespace evalkit {

enum class Role { System, User, Assistant };

struct Message {
  Role role = Role::User;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct MessageTemplate {
  Role role = Role::User;
  std::string content;

  bool operator==(const MessageTemplate&) const = default;
};

struct PromptTemplate {
  std::vector<MessageTemplate> messages;
  // Rendered once per in-context example.
  std::vector<MessageTemplate> example_template;

  bool operator==(const PromptTemplate&) const = default;
};

enum class RetrieverStrategy { ZeroShot, FixedK };
enum class ExampleSource { DatasetHead, ExternalFile };

struct RetrieverSpec {
  RetrieverStrategy strategy = RetrieverStrategy::ZeroShot;
  int k = 0;
  ExampleSource example_source = ExampleSource::DatasetHead;
  std::optional<fs::path> external_path;

  bool operator==(const RetrieverSpec&) const = default;
};

struct GenerationParams {
  double temperature = 0.0;
  double top_p = 1.0;
  int max_out_len = 512;
  std::optional<std::vector<std::string>> stop;
  std::optional<std::int64_t> seed;

  bool operator==(const GenerationParams&) const = default;
};

enum class MockDefaultRule { EchoLastUser, FixedText };

struct MockScript {
  std::map<std::string, std::string> answers;
  MockDefaultRule default_rule = MockDefaultRule::EchoLastUser;
  std::string fixed_text;
  std::uint64_t logprob_seed = 0;

  bool operator==(const MockScript&) const = default;
};

enum class BackendKind { Mock, OpenAICompatible };

struct Capabilities {
  bool generate = true;
  bool logprob = false;

  bool operator==(const Capabilities&) const = default;
};

struct ModelSpec {
  std::string abbr;
  BackendKind backend = BackendKind::Mock;
  std::string endpoint;
  std::string model_name;
  Capabilities capabilities;
  // gen_params.max_out_len mirrors the model-level max_out_len.
  GenerationParams gen_params;
  std::string api_key_env;
  int timeout_ms = 60000;
  MockScript mock;

  bool operator==(const ModelSpec&) const = default;
};

enum class Paradigm { Generation, Perplexity };

enum class EvaluatorFamily { Rule, LlmJudge, Cascade };

enum class RuleKind { Option, Pattern, Math, ExactMatch, F1, Bleu, RougeL, AucRoc, Accuracy };

enum class CascadeMode { Cascaded, Parallel };

enum class JudgeProtocol { Binary, Score };

struct EvaluatorSpec {
  EvaluatorFamily family = EvaluatorFamily::Rule;
  RuleKind rule_kind = RuleKind::Accuracy;
  std::optional<std::string> pattern;
  std::optional<ModelSpec> judge_model;
  PromptTemplate judge_template;
  JudgeProtocol judge_protocol = JudgeProtocol::Binary;
  CascadeMode cascade_mode = CascadeMode::Cascaded;

  bool operator==(const EvaluatorSpec&) const = default;
};

struct DatasetSpec {
  std::string abbr;
  fs::path path;
  Paradigm paradigm = Paradigm::Generation;
  PromptTemplate prompt;
  RetrieverSpec retriever;
  EvaluatorSpec evaluator;
  std::string postprocessor = "none";

  bool operator==(const DatasetSpec&) const = default;
};

enum class PartitionStrategy { Naive, Size, NumWorker };

struct PartitionerSpec {
  PartitionStrategy strategy = PartitionStrategy::Naive;
  std::int64_t max_task_size = 0;
  std::int64_t num_workers = 0;

  bool operator==(const PartitionerSpec&) const = default;
};

enum class RunnerBackend { LocalParallel, SerialDebug };

struct RunnerSpec {
  RunnerBackend backend = RunnerBackend::LocalParallel;
  int max_concurrent = 4;
  int max_retries = 2;
  int retry_backoff_ms = 200;

  bool operator==(const RunnerSpec&) const = default;
};

enum class GroupAggregation { Mean, WeightedMean };

struct SummaryGroup {
  std::string group_abbr;
  std::vector<std::string> member_abbrs;
  GroupAggregation aggregation = GroupAggregation::Mean;
  std::map<std::string, double> weights;

  bool operator==(const SummaryGroup&) const = default;
};

enum class ReportFormat { Markdown, Csv, Json };

struct SummarizerSpec {
  // Empty selects every metric.
  std::vector<std::string> metrics;
  std::vector<SummaryGroup> groups;
  std::vector<ReportFormat> formats = {ReportFormat::Markdown, ReportFormat::Csv,
                                       ReportFormat::Json};

  bool operator==(const SummarizerSpec&) const = default;
};

struct EvalConfig {
  std::vector<ModelSpec> models;
  std::vector<DatasetSpec> datasets;
  PartitionerSpec partitioner;
  RunnerSpec runner;
  SummarizerSpec summarizer;
  fs::path work_dir = "outputs";
  std::string run_id;

  bool operator==(const EvalConfig&) const = default;

  const ModelSpec* find_model(std::string_view abbr) const;
  const DatasetSpec* find_dataset(std::string_view abbr) const;
};

// A configuration that passed validation: the run directory exists and
// referenced secrets have been resolved.
struct ValidatedConfig {
  EvalConfig config;
  fs::path run_dir;
  // api_key_env name -> value, resolved at validation time.
  std::map<std::string, std::string> api_keys;

  bool operator==(const ValidatedConfig&) const = default;
};

std::string_view to_string(Role role);
std::string_view to_string(Paradigm paradigm);
std::string_view to_string(RuleKind kind);

}  // namespace evalkit
