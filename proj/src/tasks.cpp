#include "evalkit/tasks.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <regex>

#include "evalkit/config.hpp"
#include "evalkit/prompt.hpp"

namespace evalkit {

Json to_json(const PredictionRecord& r) {
  Json j;
  j["sample_id"] = r.sample_id;
  j["model_abbr"] = r.model_abbr;
  j["dataset_abbr"] = r.dataset_abbr;
  j["messages"] = to_json(std::span<const Message>(r.messages));
  j["output"] = r.output;
  j["finish_reason"] = to_string(r.finish_reason);
  if (r.ppl_detail) {
    Json arr = Json::array();
    for (double v : *r.ppl_detail) arr.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
    j["ppl_detail"] = arr;
  }
  j["gen_params_digest"] = r.gen_params_digest;
  return j;
}

PredictionRecord prediction_from_json(const Json& j) {
  PredictionRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.model_abbr = j.at("model_abbr").get<std::string>();
  r.dataset_abbr = j.at("dataset_abbr").get<std::string>();
  r.messages = messages_from_json(j.at("messages"));
  r.output = j.at("output").get<std::string>();
  std::string fr = j.value("finish_reason", "stop");
  r.finish_reason = fr == "length" ? FinishReason::Length
                    : fr == "error" ? FinishReason::Error
                                    : FinishReason::Stop;
  if (j.contains("ppl_detail")) {
    std::vector<double> detail;
    for (const auto& v : j["ppl_detail"])
      detail.push_back(v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>());
    r.ppl_detail = std::move(detail);
  }
  r.gen_params_digest = j.value("gen_params_digest", "");
  return r;
}

std::string gen_params_digest(const GenerationParams& params) {
  return to_hex(fnv1a64(to_json(params).dump()));
}

std::string argmin_label(std::span<const double> mean_nll) {
  if (mean_nll.empty()) throw std::invalid_argument("argmin_label: no choices");
  std::size_t best = 0;
  for (std::size_t i = 1; i < mean_nll.size(); ++i)
    if (mean_nll[i] < mean_nll[best]) best = i;
  return choice_label(best);
}

PplSelection select_by_ppl(std::span<const Message> messages,
                           std::span<const std::string> choices, const ModelBackend& model) {
  if (choices.size() < 2)
    throw TaskError("perplexity selection needs at least two choices", false);
  PplSelection sel;
  for (const auto& choice : choices) {
    auto lps = model.score_logprob(messages, choice);
    if (lps.empty()) {
      sel.mean_nll.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    double nll = 0.0;
    for (const auto& t : lps) nll -= t.logprob;
    sel.mean_nll.push_back(nll / static_cast<double>(lps.size()));
  }
  sel.label = argmin_label(sel.mean_nll);
  return sel;
}

std::vector<std::string> expected_metrics(const EvaluatorSpec& spec) {
  switch (spec.family) {
    case EvaluatorFamily::Cascade:
      return {"accuracy", "rule_accuracy", "llm_accuracy", "judged_count", "judge_parse_failures"};
    case EvaluatorFamily::LlmJudge:
      if (spec.judge_protocol == JudgeProtocol::Score) return {"judge_score", "judge_parse_failures"};
      return {"accuracy", "judge_parse_failures"};
    case EvaluatorFamily::Rule:
      break;
  }
  switch (spec.rule_kind) {
    case RuleKind::ExactMatch: return {"exact_match"};
    case RuleKind::F1: return {"f1"};
    case RuleKind::Bleu: return {"bleu"};
    case RuleKind::RougeL: return {"rouge_l"};
    case RuleKind::AucRoc: return {"auc_roc"};
    default: return {"accuracy"};
  }
}

// ---- EvalContext ----------------------------------------------------------

namespace {

std::string api_key_for(const ValidatedConfig& cfg, const ModelSpec& m) {
  if (m.api_key_env.empty()) return {};
  auto it = cfg.api_keys.find(m.api_key_env);
  return it == cfg.api_keys.end() ? std::string{} : it->second;
}

template <typename Map>
const auto& lookup(const Map& map, const std::string& key, const char* what) {
  auto it = map.find(key);
  if (it == map.end()) throw TaskError(std::string("unknown ") + what + " '" + key + "'", false);
  return it->second;
}

}  // namespace

EvalContext::EvalContext(ValidatedConfig cfg) : cfg_(std::move(cfg)) {
  for (const auto& d : cfg_.config.datasets) {
    samples_.emplace(d.abbr, load_dataset(d));
    if (d.retriever.example_source == ExampleSource::ExternalFile)
      pools_.emplace(d.abbr, load_jsonl_samples(*d.retriever.external_path, d.abbr + "_examples"));
    if (d.evaluator.judge_model)
      judges_.emplace(d.abbr, make_backend(*d.evaluator.judge_model,
                                           api_key_for(cfg_, *d.evaluator.judge_model)));
  }
  for (const auto& m : cfg_.config.models) models_.emplace(m.abbr, make_backend(m, api_key_for(cfg_, m)));
}

const SampleSet& EvalContext::samples(const std::string& abbr) const {
  return lookup(samples_, abbr, "dataset");
}

const SampleSet& EvalContext::example_pool(const std::string& abbr) const {
  auto it = pools_.find(abbr);
  return it != pools_.end() ? it->second : samples(abbr);
}

const ModelBackend& EvalContext::model(const std::string& abbr) const {
  return *lookup(models_, abbr, "model");
}

const ModelBackend& EvalContext::judge(const std::string& abbr) const {
  return *lookup(judges_, abbr, "judge for dataset");
}

std::map<std::string, std::size_t> EvalContext::sample_counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& [abbr, set] : samples_) out[abbr] = set.size();
  return out;
}

void EvalContext::set_model_backend(const std::string& abbr, std::unique_ptr<ModelBackend> backend) {
  models_[abbr] = std::move(backend);
}

// ---- infer ----------------------------------------------------------------

namespace {

const DatasetSpec& dataset_spec(const EvalContext& ctx, const std::string& abbr) {
  const auto* d = ctx.config().find_dataset(abbr);
  if (!d) throw TaskError("unknown dataset '" + abbr + "'", false);
  return *d;
}

void check_range(const TaskUnit& task, const SampleSet& set) {
  if (task.range.start >= task.range.end || task.range.end > set.size())
    throw TaskError(task.name() + ": sample range [" + std::to_string(task.range.start) + ", " +
                        std::to_string(task.range.end) + ") is outside dataset of size " +
                        std::to_string(set.size()),
                    false);
}

}  // namespace

void run_infer_task(const TaskUnit& task, const EvalContext& ctx, TaskLog& log) {
  const DatasetSpec& dspec = dataset_spec(ctx, task.dataset_abbr);
  const SampleSet& set = ctx.samples(task.dataset_abbr);
  const SampleSet& pool = ctx.example_pool(task.dataset_abbr);
  const ModelBackend& model = ctx.model(task.model_abbr);
  check_range(task, set);
  const GenerationParams& params = model.spec().gen_params;
  std::string digest = gen_params_digest(params);

  std::string body;
  for (std::size_t i = task.range.start; i < task.range.end; ++i) {
    const Sample& sample = set.samples[i];
    PredictionRecord rec;
    rec.sample_id = sample.id;
    rec.model_abbr = task.model_abbr;
    rec.dataset_abbr = task.dataset_abbr;
    rec.gen_params_digest = digest;
    try {
      auto examples = retrieve_examples(pool, dspec.retriever, sample.id);
      rec.messages = render_prompt(dspec.prompt, examples, sample);
      if (dspec.paradigm == Paradigm::Generation) {
        ModelOutput out = model.generate(rec.messages, params, sample.id);
        rec.output = std::move(out.text);
        rec.finish_reason = out.finish_reason;
      } else {
        auto sel = select_by_ppl(rec.messages, *sample.choices, model);
        rec.output = sel.label;
        rec.ppl_detail = std::move(sel.mean_nll);
      }
    } catch (const TaskError& e) {
      throw TaskError("sample '" + sample.id + "': " + e.what(), e.retryable());
    } catch (const std::exception& e) {
      throw TaskError("sample '" + sample.id + "': " + e.what(), false);
    }
    body += to_json(rec).dump();
    body += '\n';
  }

  fs::create_directories(task.output_path.parent_path());
  write_file_durably(task.output_path, body);
  log.line("wrote " + std::to_string(task.range.size()) + " predictions to " +
           task.output_path.string());
}

// ---- eval -----------------------------------------------------------------

namespace {

std::vector<PredictionRecord> load_predictions(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TaskError("cannot open predictions '" + path.string() + "'", false);
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(prediction_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw TaskError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what(), false);
    }
  }
  return out;
}

struct RuleOutcome {
  std::optional<std::string> extracted;
  std::optional<bool> correct;
  std::optional<double> score;
};

std::vector<std::string> option_labels(const Sample& s) {
  std::size_t n = s.choices ? s.choices->size() : 4;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back(choice_label(i));
  return labels;
}

class RuleScorer {
 public:
  explicit RuleScorer(const DatasetSpec& spec) : spec_(spec) {
    if (spec.evaluator.pattern) pattern_ = std::regex(*spec.evaluator.pattern);
  }

  std::string gold(const Sample& s) const {
    if (spec_.evaluator.rule_kind == RuleKind::Option && s.choices) return reference_label(s);
    return postprocess(spec_.postprocessor, s.reference);
  }

  RuleOutcome score(const Sample& s, const std::string& pred, const std::string& gold) const {
    RuleOutcome r;
    switch (spec_.evaluator.rule_kind) {
      case RuleKind::Option: {
        auto labels = option_labels(s);
        r.extracted = extract_option(pred, labels);
        r.correct = r.extracted && *r.extracted == gold;
        break;
      }
      case RuleKind::Pattern:
        r.extracted = extract_pattern(pred, pattern_);
        r.correct = r.extracted && trim(*r.extracted) == trim(gold);
        break;
      case RuleKind::Math:
        r.extracted = pred;
        r.correct = math_equal(pred, gold);
        break;
      case RuleKind::ExactMatch:
        r.extracted = pred;
        r.correct = exact_match(pred, gold);
        break;
      case RuleKind::Accuracy:
        r.extracted = pred;
        r.correct = pred == gold;
        break;
      case RuleKind::F1:
        r.extracted = pred;
        r.score = f1_token(pred, gold);
        break;
      case RuleKind::Bleu:
        r.extracted = pred;
        r.score = bleu(pred, gold);
        break;
      case RuleKind::RougeL:
        r.extracted = pred;
        r.score = rouge_l(pred, gold);
        break;
      case RuleKind::AucRoc: {
        r.extracted = pred;
        char* end = nullptr;
        std::string t = trim(pred);
        double v = std::strtod(t.c_str(), &end);
        if (!t.empty() && end == t.c_str() + t.size() && std::isfinite(v)) r.score = v;
        break;
      }
    }
    return r;
  }

 private:
  const DatasetSpec& spec_;
  std::regex pattern_;
};

std::string judge_question(const Sample& s, const PredictionRecord& p) {
  auto it = s.fields.find("question");
  if (it != s.fields.end()) return it->second;
  std::string last_user;
  for (const auto& m : p.messages)
    if (m.role == Role::User) last_user = m.content;
  return last_user;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double ratio(std::size_t hits, std::size_t n) {
  return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace

void run_eval_task(const TaskUnit& task, const EvalContext& ctx, TaskLog& log) {
  const DatasetSpec& dspec = dataset_spec(ctx, task.dataset_abbr);
  const SampleSet& set = ctx.samples(task.dataset_abbr);
  check_range(task, set);

  if (!fs::is_regular_file(task.input_path) || !fs::is_regular_file(marker_path(task.input_path)))
    throw TaskError("infer shard '" + task.input_path.string() + "' is missing or incomplete (no " +
                        marker_path(task.input_path).filename().string() + " marker)",
                    false);

  auto preds = load_predictions(task.input_path);
  if (preds.size() != task.range.size())
    throw TaskError("prediction/sample id mismatch: " + task.input_path.string() + " holds " +
                        std::to_string(preds.size()) + " records, expected " +
                        std::to_string(task.range.size()),
                    false);
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const Sample& s = set.samples[task.range.start + k];
    if (preds[k].sample_id != s.id)
      throw TaskError("prediction/sample id mismatch at position " + std::to_string(k) +
                          ": prediction '" + preds[k].sample_id + "' vs sample '" + s.id + "'",
                      false);
  }

  const auto& ev = dspec.evaluator;
  RuleScorer scorer(dspec);
  std::vector<EvalRecord> records;
  Json metrics = Json::object();
  std::size_t n = preds.size();

  auto base_record = [&](std::size_t k, const std::string& gold) {
    EvalRecord rec;
    rec.sample_id = preds[k].sample_id;
    rec.prediction_raw = preds[k].output;
    rec.gold_processed = gold;
    return rec;
  };

  if (ev.family == EvaluatorFamily::Rule) {
    std::size_t hits = 0;
    std::vector<double> scores, auc_scores;
    std::vector<int> auc_labels;
    std::size_t auc_unparsed = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const Sample& s = set.samples[task.range.start + k];
      std::string pred = postprocess(dspec.postprocessor, preds[k].output);
      std::string gold = scorer.gold(s);
      RuleOutcome out = scorer.score(s, pred, gold);
      EvalRecord rec = base_record(k, gold);
      rec.prediction_extracted = out.extracted;
      rec.correct = out.correct;
      rec.score = out.score;
      rec.judged_by = JudgedBy::Rule;
      if (out.correct && *out.correct) ++hits;
      if (ev.rule_kind == RuleKind::AucRoc) {
        if (!out.score) ++auc_unparsed;
        std::string g = normalize_answer(gold);
        auc_scores.push_back(out.score.value_or(0.0));
        auc_labels.push_back(g == "1" || g == "true" || g == "yes" ? 1 : 0);
      } else if (out.score) {
        scores.push_back(*out.score);
      }
      records.push_back(std::move(rec));
    }
    std::string name = expected_metrics(ev).front();
    if (ev.rule_kind == RuleKind::AucRoc) {
      try {
        metrics[name] = auc_roc(auc_scores, auc_labels);
      } catch (const std::domain_error& e) {
        log.line(std::string("warning: ") + e.what() + "; metric omitted for this shard");
      }
      if (auc_unparsed) log.line("warning: " + std::to_string(auc_unparsed) +
                                 " predictions did not parse as scores (scored 0)");
    } else if (ev.rule_kind == RuleKind::F1 || ev.rule_kind == RuleKind::Bleu ||
               ev.rule_kind == RuleKind::RougeL) {
      metrics[name] = mean(scores);
    } else {
      metrics[name] = ratio(hits, n);
    }
  } else if (ev.family == EvaluatorFamily::LlmJudge) {
    const ModelBackend& judge = ctx.judge(dspec.abbr);
    std::size_t hits = 0, failures = 0;
    std::vector<double> scores;
    for (std::size_t k = 0; k < n; ++k) {
      const Sample& s = set.samples[task.range.start + k];
      std::string pred = postprocess(dspec.postprocessor, preds[k].output);
      std::string gold = s.reference.empty() ? std::string{} : postprocess(dspec.postprocessor, s.reference);
      JudgeVerdict v = judge_evaluate({s.id, judge_question(s, preds[k]), pred, gold}, judge,
                                      ev.judge_template);
      EvalRecord rec = base_record(k, gold);
      rec.prediction_extracted = pred;
      rec.score = v.score;
      rec.judged_by = v.parsed(ev.judge_protocol) ? JudgedBy::Llm : JudgedBy::None;
      if (!v.parsed(ev.judge_protocol)) ++failures;
      if (ev.judge_protocol == JudgeProtocol::Binary) {
        rec.correct = v.correct.value_or(false);
        if (*rec.correct) ++hits;
      } else if (v.score) {
        scores.push_back(*v.score);
      }
      records.push_back(std::move(rec));
    }
    if (ev.judge_protocol == JudgeProtocol::Binary)
      metrics["accuracy"] = ratio(hits, n);
    else if (!scores.empty())
      metrics["judge_score"] = mean(scores);
    metrics["judge_parse_failures"] = failures;
  } else {
    const ModelBackend& judge = ctx.judge(dspec.abbr);
    std::vector<CascadeItem> items;
    std::vector<const Sample*> item_samples;
    for (std::size_t k = 0; k < n; ++k) {
      const Sample& s = set.samples[task.range.start + k];
      CascadeItem item;
      item.input = {s.id, judge_question(s, preds[k]),
                    postprocess(dspec.postprocessor, preds[k].output), scorer.gold(s)};
      items.push_back(std::move(item));
      item_samples.push_back(&s);
    }
    std::map<std::string, RuleOutcome> outcomes;
    auto rule = [&](const CascadeItem& item) {
      std::size_t idx = static_cast<std::size_t>(&item - items.data());
      RuleOutcome out = scorer.score(*item_samples[idx], item.input.prediction, item.input.reference);
      outcomes[item.input.sample_id] = out;
      return out.correct.value_or(false);
    };
    auto judge_fn = [&](const CascadeItem& item) {
      return judge_evaluate(item.input, judge, ev.judge_template);
    };
    auto [recs, report] = cascade_evaluate(items, rule, judge_fn, ev.cascade_mode);
    for (std::size_t k = 0; k < recs.size(); ++k) {
      recs[k].prediction_raw = preds[k].output;
      recs[k].prediction_extracted = outcomes[recs[k].sample_id].extracted;
    }
    records = std::move(recs);
    metrics["accuracy"] = report.combined_accuracy;
    metrics["rule_accuracy"] = report.rule_accuracy;
    metrics["llm_accuracy"] = report.llm_accuracy;
    metrics["judged_count"] = report.judged_count;
    metrics["judge_parse_failures"] = report.judge_parse_failures;
  }

  Json doc;
  doc["records"] = Json::array();
  for (const auto& r : records) doc["records"].push_back(to_json(r));
  doc["metrics"] = metrics;
  doc["sample_count"] = n;
  fs::create_directories(task.output_path.parent_path());
  write_file_durably(task.output_path, doc.dump(2) + "\n");
  log.line("scored " + std::to_string(n) + " predictions into " + task.output_path.string());
}

TaskExecutor make_executor(const EvalContext& ctx) {
  return [&ctx](const TaskUnit& task, TaskLog& log) {
    if (task.kind == TaskKind::Infer)
      run_infer_task(task, ctx, log);
    else
      run_eval_task(task, ctx, log);
  };
}

}  // namespace evalkit
