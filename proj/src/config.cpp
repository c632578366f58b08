#include "evalkit/config.hpp"

#include <unistd.h>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <regex>
#include <set>

#include "evalkit/dataset.hpp"
#include "evalkit/evaluators.hpp"

namespace evalkit {

const ModelSpec* EvalConfig::find_model(std::string_view abbr) const {
  for (const auto& m : models)
    if (m.abbr == abbr) return &m;
  return nullptr;
}

const DatasetSpec* EvalConfig::find_dataset(std::string_view abbr) const {
  for (const auto& d : datasets)
    if (d.abbr == abbr) return &d;
  return nullptr;
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::string_view to_string(Paradigm paradigm) {
  return paradigm == Paradigm::Generation ? "generation" : "perplexity";
}

std::string_view to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::Option: return "option";
    case RuleKind::Pattern: return "pattern";
    case RuleKind::Math: return "math";
    case RuleKind::ExactMatch: return "exact_match";
    case RuleKind::F1: return "f1";
    case RuleKind::Bleu: return "bleu";
    case RuleKind::RougeL: return "rouge_l";
    case RuleKind::AucRoc: return "auc_roc";
    case RuleKind::Accuracy: return "accuracy";
  }
  return "accuracy";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  throw ConfigError(ConfigError::Kind::Invalid, "unknown role '" + std::string(name) + "'");
}

namespace {

using Kind = ConfigError::Kind;

[[noreturn]] void fail(Kind kind, const std::string& msg) { throw ConfigError(kind, msg); }

std::string type_name(const Json& v) { return v.type_name(); }

// Reads one JSON object, tracking consumed keys so leftovers are rejected.
class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object())
      fail(Kind::TypeMismatch, path_ + ": expected object, got " + type_name(obj_));
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  const Json& raw(const std::string& key) {
    if (!has(key)) fail(Kind::MissingField, where(key) + ": required field missing");
    return obj_.at(key);
  }

  std::string where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  std::string string(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_string()) mismatch(key, "string", v);
    return v.get<std::string>();
  }
  std::string string(const std::string& key, std::string def) {
    return has(key) ? string(key) : def;
  }

  std::int64_t integer(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number_integer()) mismatch(key, "integer", v);
    return v.get<std::int64_t>();
  }
  std::int64_t integer(const std::string& key, std::int64_t def) {
    return has(key) ? integer(key) : def;
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_number()) mismatch(key, "number", v);
    return v.get<double>();
  }

  std::vector<std::string> strings(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_array()) mismatch(key, "array of strings", v);
    std::vector<std::string> out;
    for (const auto& item : v) {
      if (!item.is_string()) mismatch(key, "array of strings", v);
      out.push_back(item.get<std::string>());
    }
    return out;
  }

  template <typename E>
  E choice(const std::string& key, std::initializer_list<std::pair<const char*, E>> options,
           E def) {
    if (!has(key)) return def;
    return choice(key, options);
  }

  template <typename E>
  E choice(const std::string& key, std::initializer_list<std::pair<const char*, E>> options) {
    std::string s = string(key);
    std::string allowed;
    for (const auto& [name, value] : options) {
      if (s == name) return value;
      allowed += allowed.empty() ? name : std::string(", ") + name;
    }
    fail(Kind::Invalid, where(key) + ": '" + s + "' is not one of {" + allowed + "}");
  }

  void finish() const {
    for (const auto& [key, _] : obj_.items()) {
      if (!seen_.count(key)) fail(Kind::UnknownKey, "unknown key '" + where(key) + "'");
    }
  }

  [[noreturn]] void mismatch(const std::string& key, const char* expected, const Json& v) const {
    fail(Kind::TypeMismatch,
         where(key) + ": expected " + expected + ", got " + type_name(v));
  }

 private:
  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.is_absolute() || base.empty()) return p;
  return base / p;
}

void check_abbr(const std::string& abbr, const std::string& where) {
  if (abbr.empty()) fail(Kind::Invalid, where + ": abbr must be non-empty");
  if (abbr.find('/') != std::string::npos || abbr == "." || abbr == "..")
    fail(Kind::Invalid, where + ": abbr '" + abbr + "' is not usable as a path component");
}

std::vector<MessageTemplate> parse_messages(const Json& arr, const std::string& where) {
  if (!arr.is_array()) fail(Kind::TypeMismatch, where + ": expected array of messages");
  std::vector<MessageTemplate> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    ObjectReader r(arr[i], where + "[" + std::to_string(i) + "]");
    MessageTemplate m;
    m.role = r.choice<Role>(
        "role", {{"system", Role::System}, {"user", Role::User}, {"assistant", Role::Assistant}});
    m.content = r.string("content");
    r.finish();
    out.push_back(std::move(m));
  }
  return out;
}

PromptTemplate parse_prompt(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  PromptTemplate t;
  t.messages = parse_messages(r.raw("messages"), r.where("messages"));
  if (t.messages.empty()) fail(Kind::Invalid, where + ".messages: must be non-empty");
  if (r.has("example_template"))
    t.example_template = parse_messages(r.raw("example_template"), r.where("example_template"));
  r.finish();
  return t;
}

GenerationParams parse_gen_params(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  GenerationParams p;
  p.temperature = r.number("temperature", 0.0);
  p.top_p = r.number("top_p", 1.0);
  if (r.has("stop")) p.stop = r.strings("stop");
  if (r.has("seed")) p.seed = r.integer("seed");
  r.finish();
  if (p.temperature < 0.0) fail(Kind::Invalid, where + ".temperature: must be >= 0");
  if (!(p.top_p > 0.0 && p.top_p <= 1.0)) fail(Kind::Invalid, where + ".top_p: must be in (0, 1]");
  return p;
}

MockScript parse_mock(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  MockScript s;
  if (r.has("answers")) {
    const Json& a = r.raw("answers");
    if (!a.is_object()) r.mismatch("answers", "object", a);
    for (const auto& [id, text] : a.items()) {
      if (!text.is_string())
        fail(Kind::TypeMismatch, where + ".answers." + id + ": expected string");
      s.answers[id] = text.get<std::string>();
    }
  }
  s.default_rule = r.choice<MockDefaultRule>(
      "default_rule",
      {{"echo_last_user", MockDefaultRule::EchoLastUser},
       {"fixed_text", MockDefaultRule::FixedText}},
      MockDefaultRule::EchoLastUser);
  s.fixed_text = r.string("fixed_text", "");
  std::int64_t seed = r.integer("logprob_seed", 0);
  if (seed < 0) fail(Kind::Invalid, where + ".logprob_seed: must be >= 0");
  s.logprob_seed = static_cast<std::uint64_t>(seed);
  r.finish();
  return s;
}

ModelSpec parse_model(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  ModelSpec m;
  m.abbr = r.string("abbr");
  check_abbr(m.abbr, where);
  m.backend = r.choice<BackendKind>(
      "backend",
      {{"mock", BackendKind::Mock}, {"openai_compatible", BackendKind::OpenAICompatible}});
  m.endpoint = r.string("endpoint", "");
  m.model_name = r.string("model_name", m.abbr);
  if (r.has("capabilities")) {
    m.capabilities = {false, false};
    for (const auto& c : r.strings("capabilities")) {
      if (c == "generate")
        m.capabilities.generate = true;
      else if (c == "logprob")
        m.capabilities.logprob = true;
      else
        fail(Kind::Invalid, where + ".capabilities: unknown capability '" + c + "'");
    }
  } else if (m.backend == BackendKind::Mock) {
    m.capabilities = {true, true};
  }
  if (r.has("gen_params")) m.gen_params = parse_gen_params(r.raw("gen_params"), r.where("gen_params"));
  std::int64_t max_out = r.integer("max_out_len", 512);
  if (max_out < 1) fail(Kind::Invalid, where + ".max_out_len: must be >= 1");
  m.gen_params.max_out_len = static_cast<int>(max_out);
  m.api_key_env = r.string("api_key_env", "");
  std::int64_t timeout = r.integer("timeout_ms", 60000);
  if (timeout < 1) fail(Kind::Invalid, where + ".timeout_ms: must be >= 1");
  m.timeout_ms = static_cast<int>(timeout);
  if (r.has("mock")) m.mock = parse_mock(r.raw("mock"), r.where("mock"));
  r.finish();
  if (m.backend == BackendKind::OpenAICompatible && m.endpoint.empty())
    fail(Kind::MissingField, where + ".endpoint: required for openai_compatible backend");
  return m;
}

RetrieverSpec parse_retriever(const Json& j, const std::string& where, const fs::path& base) {
  ObjectReader r(j, where);
  RetrieverSpec s;
  s.strategy = r.choice<RetrieverStrategy>(
      "strategy",
      {{"zero_shot", RetrieverStrategy::ZeroShot}, {"fixed_k", RetrieverStrategy::FixedK}},
      RetrieverStrategy::ZeroShot);
  s.k = static_cast<int>(r.integer("k", s.strategy == RetrieverStrategy::FixedK ? 1 : 0));
  s.example_source = r.choice<ExampleSource>(
      "example_source",
      {{"dataset_head", ExampleSource::DatasetHead},
       {"external_file", ExampleSource::ExternalFile}},
      ExampleSource::DatasetHead);
  if (r.has("external_path")) s.external_path = resolve(r.string("external_path"), base);
  r.finish();
  if (s.strategy == RetrieverStrategy::ZeroShot && s.k != 0)
    fail(Kind::Invalid, where + ": zero_shot requires k = 0");
  if (s.strategy == RetrieverStrategy::FixedK && s.k < 1)
    fail(Kind::Invalid, where + ": fixed_k requires k >= 1");
  if (s.example_source == ExampleSource::ExternalFile && !s.external_path)
    fail(Kind::MissingField, where + ".external_path: required for external_file source");
  return s;
}

bool has_correctness(RuleKind k) {
  switch (k) {
    case RuleKind::Option:
    case RuleKind::Pattern:
    case RuleKind::Math:
    case RuleKind::ExactMatch:
    case RuleKind::Accuracy:
      return true;
    default:
      return false;
  }
}

EvaluatorSpec parse_evaluator(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  EvaluatorSpec e;
  e.family = r.choice<EvaluatorFamily>("family",
                                       {{"rule", EvaluatorFamily::Rule},
                                        {"llm_judge", EvaluatorFamily::LlmJudge},
                                        {"cascade", EvaluatorFamily::Cascade}},
                                       EvaluatorFamily::Rule);
  bool has_rule = r.has("rule_kind");
  e.rule_kind = r.choice<RuleKind>("rule_kind",
                                   {{"option", RuleKind::Option},
                                    {"pattern", RuleKind::Pattern},
                                    {"math", RuleKind::Math},
                                    {"exact_match", RuleKind::ExactMatch},
                                    {"f1", RuleKind::F1},
                                    {"bleu", RuleKind::Bleu},
                                    {"rouge_l", RuleKind::RougeL},
                                    {"auc_roc", RuleKind::AucRoc},
                                    {"accuracy", RuleKind::Accuracy}},
                                   RuleKind::Accuracy);
  if (r.has("pattern")) e.pattern = r.string("pattern");
  if (r.has("judge_model")) e.judge_model = parse_model(r.raw("judge_model"), r.where("judge_model"));
  if (r.has("judge_template"))
    e.judge_template = parse_prompt(r.raw("judge_template"), r.where("judge_template"));
  e.judge_protocol = r.choice<JudgeProtocol>(
      "judge_protocol", {{"binary", JudgeProtocol::Binary}, {"score", JudgeProtocol::Score}},
      JudgeProtocol::Binary);
  e.cascade_mode = r.choice<CascadeMode>(
      "cascade_mode", {{"cascaded", CascadeMode::Cascaded}, {"parallel", CascadeMode::Parallel}},
      CascadeMode::Cascaded);
  r.finish();

  if (e.rule_kind == RuleKind::Pattern) {
    if (!e.pattern) fail(Kind::MissingField, where + ".pattern: required for rule_kind pattern");
    try {
      std::regex re(*e.pattern);
    } catch (const std::regex_error& ex) {
      fail(Kind::Invalid, where + ".pattern: invalid regular expression: " + ex.what());
    }
  }
  if (e.family != EvaluatorFamily::Rule) {
    if (!e.judge_model) fail(Kind::MissingField, where + ".judge_model: required for judge families");
    if (e.judge_template.messages.empty())
      fail(Kind::MissingField, where + ".judge_template: required for judge families");
  }
  if (e.family == EvaluatorFamily::Cascade) {
    if (!has_rule) fail(Kind::MissingField, where + ".rule_kind: required for cascade");
    if (!has_correctness(e.rule_kind))
      fail(Kind::Invalid, where + ": cascade requires a rule with per-sample correctness, not '" +
                              std::string(to_string(e.rule_kind)) + "'");
    if (e.judge_protocol != JudgeProtocol::Binary)
      fail(Kind::Invalid, where + ": cascade requires the binary judge protocol");
  }
  return e;
}

DatasetSpec parse_dataset(const Json& j, const std::string& where, const fs::path& base) {
  ObjectReader r(j, where);
  DatasetSpec d;
  d.abbr = r.string("abbr");
  check_abbr(d.abbr, where);
  d.path = resolve(r.string("path"), base);
  d.paradigm = r.choice<Paradigm>(
      "paradigm", {{"generation", Paradigm::Generation}, {"perplexity", Paradigm::Perplexity}},
      Paradigm::Generation);
  d.prompt = parse_prompt(r.raw("prompt"), r.where("prompt"));
  if (r.has("retriever")) d.retriever = parse_retriever(r.raw("retriever"), r.where("retriever"), base);
  d.evaluator = parse_evaluator(r.raw("evaluator"), r.where("evaluator"));
  d.postprocessor = r.string("postprocessor", "none");
  r.finish();
  if (!is_registered_postprocessor(d.postprocessor))
    fail(Kind::Invalid, where + ".postprocessor: unknown postprocessor '" + d.postprocessor + "'");
  if (d.retriever.strategy == RetrieverStrategy::FixedK && d.prompt.example_template.empty())
    fail(Kind::Invalid, where + ": fixed_k retriever requires prompt.example_template");
  return d;
}

PartitionerSpec parse_partitioner(const Json& j) {
  ObjectReader r(j, "partitioner");
  PartitionerSpec p;
  p.strategy = r.choice<PartitionStrategy>("strategy",
                                           {{"naive", PartitionStrategy::Naive},
                                            {"size", PartitionStrategy::Size},
                                            {"num_worker", PartitionStrategy::NumWorker}},
                                           PartitionStrategy::Naive);
  p.max_task_size = r.integer("max_task_size", 0);
  p.num_workers = r.integer("num_workers", 0);
  r.finish();
  if (p.strategy == PartitionStrategy::Size && p.max_task_size < 1)
    fail(Kind::Invalid, "partitioner.max_task_size: must be >= 1 for size strategy");
  if (p.strategy == PartitionStrategy::NumWorker && p.num_workers < 1)
    fail(Kind::Invalid, "partitioner.num_workers: must be >= 1 for num_worker strategy");
  return p;
}

RunnerSpec parse_runner(const Json& j) {
  ObjectReader r(j, "runner");
  RunnerSpec s;
  s.backend = r.choice<RunnerBackend>(
      "backend",
      {{"local_parallel", RunnerBackend::LocalParallel}, {"serial_debug", RunnerBackend::SerialDebug}},
      RunnerBackend::LocalParallel);
  s.max_concurrent = static_cast<int>(r.integer("max_concurrent", 4));
  s.max_retries = static_cast<int>(r.integer("max_retries", 2));
  s.retry_backoff_ms = static_cast<int>(r.integer("retry_backoff_ms", 200));
  r.finish();
  if (s.max_concurrent < 1) fail(Kind::Invalid, "runner.max_concurrent: must be >= 1");
  if (s.max_retries < 0) fail(Kind::Invalid, "runner.max_retries: must be >= 0");
  if (s.retry_backoff_ms < 0) fail(Kind::Invalid, "runner.retry_backoff_ms: must be >= 0");
  return s;
}

std::vector<ReportFormat> parse_formats(const std::vector<std::string>& names) {
  std::vector<ReportFormat> out;
  for (const auto& n : names) {
    if (n == "md" || n == "markdown")
      out.push_back(ReportFormat::Markdown);
    else if (n == "csv")
      out.push_back(ReportFormat::Csv);
    else if (n == "json")
      out.push_back(ReportFormat::Json);
    else
      fail(Kind::Invalid, "summarizer.formats: unknown format '" + n + "'");
  }
  return out;
}

SummarizerSpec parse_summarizer(const Json& j) {
  ObjectReader r(j, "summarizer");
  SummarizerSpec s;
  if (r.has("metrics")) s.metrics = r.strings("metrics");
  if (r.has("formats")) s.formats = parse_formats(r.strings("formats"));
  if (r.has("groups")) {
    const Json& arr = r.raw("groups");
    if (!arr.is_array()) r.mismatch("groups", "array", arr);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      std::string where = "summarizer.groups[" + std::to_string(i) + "]";
      ObjectReader g(arr[i], where);
      SummaryGroup group;
      group.group_abbr = g.string("abbr");
      check_abbr(group.group_abbr, where);
      group.member_abbrs = g.strings("members");
      group.aggregation = g.choice<GroupAggregation>(
          "aggregation",
          {{"mean", GroupAggregation::Mean}, {"weighted_mean", GroupAggregation::WeightedMean}},
          GroupAggregation::Mean);
      if (g.has("weights")) {
        const Json& w = g.raw("weights");
        if (!w.is_object()) g.mismatch("weights", "object", w);
        for (const auto& [member, value] : w.items()) {
          if (!value.is_number()) fail(Kind::TypeMismatch, where + ".weights." + member + ": expected number");
          group.weights[member] = value.get<double>();
        }
      }
      g.finish();
      if (group.member_abbrs.empty()) fail(Kind::Invalid, where + ".members: must be non-empty");
      if (group.aggregation == GroupAggregation::WeightedMean) {
        for (const auto& m : group.member_abbrs) {
          auto it = group.weights.find(m);
          if (it == group.weights.end() || !(it->second > 0.0))
            fail(Kind::Invalid, where + ".weights: missing or non-positive weight for '" + m + "'");
        }
      }
      s.groups.push_back(std::move(group));
    }
  }
  r.finish();
  return s;
}

std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

void apply_override(Json& doc, std::string_view assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    fail(Kind::Syntax, "override '" + std::string(assignment) + "' is not of the form key=value");
  std::string key(assignment.substr(0, eq));
  std::string value(assignment.substr(eq + 1));

  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  Json* node = &doc;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string& part = parts[i];
    if (part.empty()) fail(Kind::Syntax, "override key '" + key + "' has an empty segment");
    Json* next = nullptr;
    if (node->is_array()) {
      std::size_t idx = 0;
      auto res = std::from_chars(part.data(), part.data() + part.size(), idx);
      if (res.ec != std::errc{} || res.ptr != part.data() + part.size() || idx >= node->size())
        fail(Kind::UnknownKey, "override key '" + key + "': no array element '" + part + "'");
      next = &(*node)[idx];
    } else {
      if (node->is_null()) *node = Json::object();
      if (!node->is_object())
        fail(Kind::TypeMismatch, "override key '" + key + "': '" + part + "' is not inside an object");
      next = &(*node)[part];
    }
    node = next;
  }

  if (node->is_string()) {
    *node = value;
    return;
  }
  Json parsed = Json::parse(value, nullptr, false);
  if (parsed.is_discarded())
    *node = value;
  else
    *node = std::move(parsed);
}

EvalConfig parse_config(std::string_view source_text, const std::vector<std::string>& overrides,
                        const fs::path& base_dir) {
  Json doc;
  try {
    doc = Json::parse(source_text);
  } catch (const Json::parse_error& e) {
    auto [line, col] = line_col(source_text, e.byte == 0 ? 0 : e.byte - 1);
    fail(Kind::Syntax, "config syntax error at line " + std::to_string(line) + ", column " +
                           std::to_string(col) + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);

  ObjectReader r(doc, "");
  EvalConfig cfg;

  const Json& models = r.raw("models");
  if (!models.is_array()) r.mismatch("models", "array", models);
  if (models.empty()) fail(Kind::Invalid, "models: at least one model is required");
  std::set<std::string> model_abbrs;
  for (std::size_t i = 0; i < models.size(); ++i) {
    cfg.models.push_back(parse_model(models[i], "models[" + std::to_string(i) + "]"));
    if (!model_abbrs.insert(cfg.models.back().abbr).second)
      fail(Kind::DuplicateAbbr, "duplicate model abbr '" + cfg.models.back().abbr + "'");
  }

  const Json& datasets = r.raw("datasets");
  if (!datasets.is_array()) r.mismatch("datasets", "array", datasets);
  if (datasets.empty()) fail(Kind::Invalid, "datasets: at least one dataset is required");
  std::set<std::string> dataset_abbrs;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    cfg.datasets.push_back(
        parse_dataset(datasets[i], "datasets[" + std::to_string(i) + "]", base_dir));
    if (!dataset_abbrs.insert(cfg.datasets.back().abbr).second)
      fail(Kind::DuplicateAbbr, "duplicate dataset abbr '" + cfg.datasets.back().abbr + "'");
  }

  if (r.has("partitioner")) cfg.partitioner = parse_partitioner(r.raw("partitioner"));
  if (r.has("runner")) cfg.runner = parse_runner(r.raw("runner"));
  if (r.has("summarizer")) cfg.summarizer = parse_summarizer(r.raw("summarizer"));
  cfg.work_dir = r.string("work_dir", "outputs");
  if (cfg.work_dir.empty()) fail(Kind::Invalid, "work_dir: must be non-empty");
  cfg.run_id = r.string("run_id", "");
  if (!cfg.run_id.empty()) check_abbr(cfg.run_id, "run_id");
  r.finish();

  for (const auto& g : cfg.summarizer.groups) {
    if (dataset_abbrs.count(g.group_abbr))
      fail(Kind::DuplicateAbbr, "summary group '" + g.group_abbr + "' collides with a dataset abbr");
  }
  return cfg;
}

std::string make_run_id() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d_%H%M%S", &tm);
  return buf;
}

ValidatedConfig validate_config(const EvalConfig& cfg) {
  ValidatedConfig out;
  out.config = cfg;

  std::error_code ec;
  fs::create_directories(cfg.work_dir, ec);
  if (ec || !fs::is_directory(cfg.work_dir))
    fail(Kind::Io, "work_dir '" + cfg.work_dir.string() + "' cannot be created: " + ec.message());
  if (::access(cfg.work_dir.c_str(), W_OK) != 0)
    fail(Kind::Io, "work_dir '" + cfg.work_dir.string() + "' is not writable");

  if (out.config.run_id.empty()) {
    // Fresh runs never share a directory, even within the same second.
    std::string stamp = make_run_id();
    out.config.run_id = stamp;
    for (int i = 1; fs::exists(cfg.work_dir / out.config.run_id); ++i)
      out.config.run_id = stamp + "_" + std::to_string(i);
  }

  for (const auto& d : cfg.datasets) {
    if (!fs::is_regular_file(d.path))
      fail(Kind::MissingDataset,
           "dataset '" + d.abbr + "': file '" + d.path.string() + "' does not exist");
    check_dataset_header(d);
    if (d.retriever.example_source == ExampleSource::ExternalFile &&
        !fs::is_regular_file(*d.retriever.external_path))
      fail(Kind::MissingDataset, "dataset '" + d.abbr + "': example file '" +
                                     d.retriever.external_path->string() + "' does not exist");
    if (d.paradigm == Paradigm::Perplexity) {
      for (const auto& m : cfg.models)
        if (!m.capabilities.logprob)
          fail(Kind::CapabilityMismatch, "dataset '" + d.abbr +
                                             "' uses the perplexity paradigm but model '" + m.abbr +
                                             "' lacks the logprob capability");
    }
  }

  auto resolve_key = [&](const ModelSpec& m) {
    if (m.api_key_env.empty()) return;
    const char* v = std::getenv(m.api_key_env.c_str());
    if (!v)
      fail(Kind::MissingField, "model '" + m.abbr + "': environment variable '" + m.api_key_env +
                                   "' is not set");
    out.api_keys[m.api_key_env] = v;
  };
  for (const auto& m : cfg.models) resolve_key(m);
  for (const auto& d : cfg.datasets)
    if (d.evaluator.judge_model) resolve_key(*d.evaluator.judge_model);

  out.run_dir = cfg.work_dir / out.config.run_id;
  for (const char* sub : {"predictions", "results", "logs", "summary"}) {
    fs::create_directories(out.run_dir / sub, ec);
    if (ec)
      fail(Kind::Io, "cannot create '" + (out.run_dir / sub).string() + "': " + ec.message());
  }
  return out;
}

Json to_json(const GenerationParams& p) {
  Json j;
  j["temperature"] = p.temperature;
  j["top_p"] = p.top_p;
  j["max_out_len"] = p.max_out_len;
  if (p.stop) j["stop"] = *p.stop;
  if (p.seed) j["seed"] = *p.seed;
  return j;
}

namespace {
Json messages_json(const std::vector<MessageTemplate>& msgs) {
  Json arr = Json::array();
  for (const auto& m : msgs) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}
}  // namespace

Json to_json(const PromptTemplate& t) {
  Json j;
  j["messages"] = messages_json(t.messages);
  if (!t.example_template.empty()) j["example_template"] = messages_json(t.example_template);
  return j;
}

Json to_json(const ModelSpec& m) {
  Json j;
  j["abbr"] = m.abbr;
  j["backend"] = m.backend == BackendKind::Mock ? "mock" : "openai_compatible";
  if (!m.endpoint.empty()) j["endpoint"] = m.endpoint;
  j["model_name"] = m.model_name;
  Json caps = Json::array();
  if (m.capabilities.generate) caps.push_back("generate");
  if (m.capabilities.logprob) caps.push_back("logprob");
  j["capabilities"] = caps;
  Json gp = to_json(m.gen_params);
  gp.erase("max_out_len");
  j["gen_params"] = gp;
  j["max_out_len"] = m.gen_params.max_out_len;
  if (!m.api_key_env.empty()) j["api_key_env"] = m.api_key_env;
  j["timeout_ms"] = m.timeout_ms;
  if (m.backend == BackendKind::Mock) {
    Json mock;
    mock["answers"] = Json::object();
    for (const auto& [k, v] : m.mock.answers) mock["answers"][k] = v;
    mock["default_rule"] =
        m.mock.default_rule == MockDefaultRule::EchoLastUser ? "echo_last_user" : "fixed_text";
    mock["fixed_text"] = m.mock.fixed_text;
    mock["logprob_seed"] = m.mock.logprob_seed;
    j["mock"] = mock;
  }
  return j;
}

Json to_json(const EvalConfig& cfg) {
  Json j;
  j["models"] = Json::array();
  for (const auto& m : cfg.models) j["models"].push_back(to_json(m));
  j["datasets"] = Json::array();
  for (const auto& d : cfg.datasets) {
    Json dj;
    dj["abbr"] = d.abbr;
    dj["path"] = d.path.string();
    dj["paradigm"] = to_string(d.paradigm);
    dj["prompt"] = to_json(d.prompt);
    Json rj;
    rj["strategy"] = d.retriever.strategy == RetrieverStrategy::ZeroShot ? "zero_shot" : "fixed_k";
    rj["k"] = d.retriever.k;
    rj["example_source"] = d.retriever.example_source == ExampleSource::DatasetHead
                               ? "dataset_head"
                               : "external_file";
    if (d.retriever.external_path) rj["external_path"] = d.retriever.external_path->string();
    dj["retriever"] = rj;
    Json ej;
    const auto& e = d.evaluator;
    ej["family"] = e.family == EvaluatorFamily::Rule       ? "rule"
                   : e.family == EvaluatorFamily::LlmJudge ? "llm_judge"
                                                            : "cascade";
    ej["rule_kind"] = to_string(e.rule_kind);
    if (e.pattern) ej["pattern"] = *e.pattern;
    if (e.judge_model) ej["judge_model"] = to_json(*e.judge_model);
    if (!e.judge_template.messages.empty()) ej["judge_template"] = to_json(e.judge_template);
    ej["judge_protocol"] = e.judge_protocol == JudgeProtocol::Binary ? "binary" : "score";
    ej["cascade_mode"] = e.cascade_mode == CascadeMode::Cascaded ? "cascaded" : "parallel";
    dj["evaluator"] = ej;
    dj["postprocessor"] = d.postprocessor;
    j["datasets"].push_back(dj);
  }
  const char* strategies[] = {"naive", "size", "num_worker"};
  j["partitioner"] = {{"strategy", strategies[static_cast<int>(cfg.partitioner.strategy)]},
                      {"max_task_size", cfg.partitioner.max_task_size},
                      {"num_workers", cfg.partitioner.num_workers}};
  j["runner"] = {{"backend", cfg.runner.backend == RunnerBackend::LocalParallel ? "local_parallel"
                                                                                 : "serial_debug"},
                 {"max_concurrent", cfg.runner.max_concurrent},
                 {"max_retries", cfg.runner.max_retries},
                 {"retry_backoff_ms", cfg.runner.retry_backoff_ms}};
  Json sj;
  sj["metrics"] = cfg.summarizer.metrics;
  Json fmts = Json::array();
  for (auto f : cfg.summarizer.formats)
    fmts.push_back(f == ReportFormat::Markdown ? "md" : f == ReportFormat::Csv ? "csv" : "json");
  sj["formats"] = fmts;
  sj["groups"] = Json::array();
  for (const auto& g : cfg.summarizer.groups) {
    Json gj;
    gj["abbr"] = g.group_abbr;
    gj["members"] = g.member_abbrs;
    gj["aggregation"] = g.aggregation == GroupAggregation::Mean ? "mean" : "weighted_mean";
    if (!g.weights.empty()) {
      gj["weights"] = Json::object();
      for (const auto& [k, v] : g.weights) gj["weights"][k] = v;
    }
    sj["groups"].push_back(gj);
  }
  j["summarizer"] = sj;
  j["work_dir"] = cfg.work_dir.string();
  if (!cfg.run_id.empty()) j["run_id"] = cfg.run_id;
  return j;
}

}  // namespace evalkit
