#pragma once

#include <functional>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evalkit/types.hpp"

namespace evalkit {

class ModelBackend;

enum class JudgedBy { Rule, Llm, Both, None };

std::string_view to_string(JudgedBy judged_by);

struct EvalRecord {
  std::string sample_id;
  std::string prediction_raw;
  std::optional<std::string> prediction_extracted;
  std::string gold_processed;
  // Unset for pure-score metrics.
  std::optional<bool> correct;
  std::optional<double> score;
  JudgedBy judged_by = JudgedBy::Rule;
};

Json to_json(const EvalRecord& record);

// ---- postprocessors -------------------------------------------------------

bool is_registered_postprocessor(std::string_view name);
std::vector<std::string> registered_postprocessors();
std::string postprocess(std::string_view name, std::string_view text);

// ---- answer extraction ----------------------------------------------------

// Ordered rule cascade:
//   1. the trimmed text is exactly a valid label;
//   2. last "answer is X" / "answer: (X)" with a valid label;
//   3. last parenthesized valid label "(X)";
//   4. first standalone valid capital letter.
std::optional<std::string> extract_option(std::string_view text,
                                          std::span<const std::string> valid_labels);

// First capture group of the last match, or the whole last match when the
// pattern has no group.
std::optional<std::string> extract_pattern(std::string_view text, const std::regex& pattern);
// Throws ConfigError when the pattern does not compile.
std::optional<std::string> extract_pattern(std::string_view text, std::string_view pattern);

// ---- rule metrics ---------------------------------------------------------

// Canonical form for comparing LaTeX-ish numeric answers.
std::string normalize_math(std::string_view text);

// Numeric comparison at relative tolerance 1e-4 when both sides evaluate as
// rational arithmetic; normalized string equality otherwise.
bool math_equal(std::string_view pred, std::string_view gold);

struct AccuracyResult {
  double value = 0.0;
  bool empty_input = false;
};

AccuracyResult accuracy(
    std::span<const std::pair<std::optional<std::string>, std::string>> records);

// Lowercase, collapse whitespace, strip leading/trailing punctuation.
std::string normalize_answer(std::string_view text);
bool exact_match(std::string_view pred, std::string_view gold);

double f1_token(std::string_view pred, std::string_view gold);

// Sentence BLEU-4 over whitespace tokens.
double bleu(std::string_view pred, std::string_view gold);

// Token-level ROUGE-L F-measure (beta = 1).
double rouge_l(std::string_view pred, std::string_view gold);

// Throws std::domain_error unless both classes are present.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

// ---- LLM judge ------------------------------------------------------------

struct JudgeVerdict {
  std::optional<bool> correct;
  std::optional<double> score;
  std::string raw;

  bool parsed(JudgeProtocol protocol) const {
    return protocol == JudgeProtocol::Binary ? correct.has_value() : score.has_value();
  }
};

JudgeVerdict parse_judge_output(std::string_view text);

struct JudgeInput {
  std::string sample_id;
  std::string question;
  std::string prediction;
  std::string reference;
};

// Renders the template with {question}, {prediction}, {reference}, calls the
// judge and parses its verdict.
JudgeVerdict judge_evaluate(const JudgeInput& input, const ModelBackend& judge,
                            const PromptTemplate& judge_template);

// ---- cascade --------------------------------------------------------------

struct CascadeItem {
  JudgeInput input;
  std::optional<std::string> prediction_extracted;
};

struct CascadeReport {
  double rule_accuracy = 0.0;
  double llm_accuracy = 0.0;
  double combined_accuracy = 0.0;
  std::size_t judged_count = 0;
  std::size_t judge_parse_failures = 0;
};

using RuleFn = std::function<bool(const CascadeItem&)>;
using JudgeFn = std::function<JudgeVerdict(const CascadeItem&)>;

// Cascaded mode judges only rule-incorrect samples; parallel mode judges
// all. A sample is correct iff either evaluator says so.
std::pair<std::vector<EvalRecord>, CascadeReport> cascade_evaluate(
    std::span<const CascadeItem> items, const RuleFn& rule, const JudgeFn& judge, CascadeMode mode);

}  // namespace evalkit
