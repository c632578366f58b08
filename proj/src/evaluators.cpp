#include "evalkit/evaluators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <boost/multiprecision/cpp_int.hpp>

#include "evalkit/backends.hpp"
#include "evalkit/prompt.hpp"

namespace evalkit {

std::string_view to_string(JudgedBy judged_by) {
  switch (judged_by) {
    case JudgedBy::Rule: return "rule";
    case JudgedBy::Llm: return "llm";
    case JudgedBy::Both: return "both";
    case JudgedBy::None: return "none";
  }
  return "none";
}

Json to_json(const EvalRecord& r) {
  Json j;
  j["sample_id"] = r.sample_id;
  j["prediction_raw"] = r.prediction_raw;
  j["prediction_extracted"] = r.prediction_extracted ? Json(*r.prediction_extracted) : Json(nullptr);
  j["gold_processed"] = r.gold_processed;
  j["correct"] = r.correct ? Json(*r.correct) : Json(nullptr);
  j["score"] = r.score ? Json(*r.score) : Json(nullptr);
  j["judged_by"] = to_string(r.judged_by);
  return j;
}

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  if (from.empty()) return;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

// Last "\boxed{...}" body, brace-matched.
std::optional<std::string> last_boxed(std::string_view text) {
  auto pos = text.rfind("\\boxed{");
  if (pos == std::string_view::npos) return std::nullopt;
  std::size_t i = pos + 7, depth = 1;
  std::size_t start = i;
  for (; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) return std::string(text.substr(start, i - start));
  }
  return std::nullopt;
}

bool is_valid_label(std::string_view s, std::span<const std::string> labels) {
  return std::find(labels.begin(), labels.end(), s) != labels.end();
}

}  // namespace

// ---- postprocessors -------------------------------------------------------

std::vector<std::string> registered_postprocessors() {
  return {"none", "strip", "lower", "first_line", "last_line", "boxed"};
}

bool is_registered_postprocessor(std::string_view name) {
  auto all = registered_postprocessors();
  return std::find(all.begin(), all.end(), name) != all.end();
}

std::string postprocess(std::string_view name, std::string_view text) {
  if (name == "none") return std::string(text);
  if (name == "strip") return trim(text);
  if (name == "lower") {
    std::string s = trim(text);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }
  if (name == "first_line" || name == "last_line") {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
      auto nl = text.find('\n', start);
      auto line = trim(text.substr(start, nl == std::string_view::npos ? nl : nl - start));
      if (!line.empty()) lines.push_back(std::move(line));
      if (nl == std::string_view::npos) break;
      start = nl + 1;
    }
    if (lines.empty()) return {};
    return name == "first_line" ? lines.front() : lines.back();
  }
  if (name == "boxed") {
    auto b = last_boxed(text);
    return trim(b ? *b : text);
  }
  throw ConfigError(ConfigError::Kind::Invalid, "unknown postprocessor '" + std::string(name) + "'");
}

// ---- answer extraction ----------------------------------------------------

std::optional<std::string> extract_option(std::string_view text,
                                          std::span<const std::string> valid_labels) {
  std::string trimmed = trim(text);
  if (is_valid_label(trimmed, valid_labels)) return trimmed;

  std::string s(text);
  static const std::regex answer_re(R"(answer\s*(is|:)\s*\(?([A-Z])\)?)", std::regex::icase);
  std::optional<std::string> found;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), answer_re); it != std::sregex_iterator();
       ++it) {
    std::string label = (*it)[2].str();
    if (is_valid_label(label, valid_labels)) found = label;
  }
  if (found) return found;

  static const std::regex paren_re(R"(\(([A-Z])\))");
  for (auto it = std::sregex_iterator(s.begin(), s.end(), paren_re); it != std::sregex_iterator();
       ++it) {
    std::string label = (*it)[1].str();
    if (is_valid_label(label, valid_labels)) found = label;
  }
  if (found) return found;

  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c < 'A' || c > 'Z') continue;
    bool left_ok = i == 0 || !is_alnum(s[i - 1]);
    bool right_ok = i + 1 == s.size() || !is_alnum(s[i + 1]);
    if (left_ok && right_ok && is_valid_label(std::string(1, c), valid_labels))
      return std::string(1, c);
  }
  return std::nullopt;
}

std::optional<std::string> extract_pattern(std::string_view text, const std::regex& pattern) {
  std::string s(text);
  std::optional<std::string> last;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator();
       ++it) {
    const auto& m = *it;
    last = m.size() > 1 && m[1].matched ? m[1].str() : m[0].str();
  }
  return last;
}

std::optional<std::string> extract_pattern(std::string_view text, std::string_view pattern) {
  std::regex re;
  try {
    re = std::regex(std::string(pattern));
  } catch (const std::regex_error& e) {
    throw ConfigError(ConfigError::Kind::Invalid,
                      "invalid pattern '" + std::string(pattern) + "': " + e.what());
  }
  return extract_pattern(text, re);
}

// ---- math -----------------------------------------------------------------

namespace {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

// Rewrites \frac{a}{b} as (a)/(b), innermost arguments first.
std::string rewrite_fracs(const std::string& s) {
  std::string out;
  std::size_t i = 0;
  auto read_group = [&](std::size_t& pos, std::string& body) {
    if (pos >= s.size() || s[pos] != '{') return false;
    std::size_t depth = 0, start = pos;
    for (; pos < s.size(); ++pos) {
      if (s[pos] == '{') ++depth;
      if (s[pos] == '}' && --depth == 0) {
        body = s.substr(start + 1, pos - start - 1);
        ++pos;
        return true;
      }
    }
    return false;
  };
  while (i < s.size()) {
    if (s.compare(i, 5, "\\frac") == 0) {
      std::size_t pos = i + 5;
      std::string num, den;
      if (read_group(pos, num) && read_group(pos, den)) {
        out += "(" + rewrite_fracs(num) + ")/(" + rewrite_fracs(den) + ")";
        i = pos;
        continue;
      }
    }
    out += s[i++];
  }
  return out;
}

class ArithmeticParser {
 public:
  explicit ArithmeticParser(std::string_view text) : s_(text) {}

  std::optional<Rational> parse() {
    try {
      Rational v = expr();
      if (pos_ != s_.size()) return std::nullopt;
      return v;
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  }

 private:
  [[noreturn]] void bad() { throw std::invalid_argument("not arithmetic"); }

  bool eat(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Rational expr() {
    Rational v = term();
    while (true) {
      if (eat('+'))
        v += term();
      else if (eat('-'))
        v -= term();
      else
        return v;
    }
  }

  Rational term() {
    Rational v = factor();
    while (true) {
      if (eat('*')) {
        v *= factor();
      } else if (eat('/')) {
        Rational d = factor();
        if (d == 0) bad();
        v /= d;
      } else {
        return v;
      }
    }
  }

  Rational factor() {
    if (eat('-')) return -factor();
    if (eat('+')) return factor();
    if (eat('(')) {
      Rational v = expr();
      if (!eat(')')) bad();
      return v;
    }
    if (eat('{')) {
      Rational v = expr();
      if (!eat('}')) bad();
      return v;
    }
    return number();
  }

  Rational number() {
    std::size_t start = pos_;
    BigInt digits = 0;
    BigInt scale = 1;
    bool any = false, dot = false;
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (c >= '0' && c <= '9') {
        digits = digits * 10 + (c - '0');
        if (dot) scale *= 10;
        any = true;
      } else if (c == '.' && !dot) {
        dot = true;
      } else {
        break;
      }
      ++pos_;
    }
    if (!any) {
      pos_ = start;
      bad();
    }
    return Rational(digits, scale);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string normalize_math(std::string_view text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  for (std::string_view tok : {"\\left", "\\right", "\\!", "$"}) replace_all(s, tok, "");
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  for (std::string_view deg : {"^{\\circ}", "^\\circ", "\\circ", "\xc2\xb0"}) replace_all(s, deg, "");
  replace_all(s, "\\%", "%");
  replace_all(s, "\\cdot", "*");
  replace_all(s, "\\times", "*");
  s = rewrite_fracs(s);
  while (!s.empty() && s.back() == '.') s.pop_back();

  static const std::regex thousands(R"((\d),(\d{3})(?!\d))");
  std::string prev;
  do {
    prev = s;
    s = std::regex_replace(s, thousands, "$1$2");
  } while (s != prev);
  return s;
}

namespace {

std::optional<Rational> math_value(std::string s) {
  bool percent = false;
  if (!s.empty() && s.back() == '%') {
    percent = true;
    s.pop_back();
  }
  if (s.empty()) return std::nullopt;
  auto v = ArithmeticParser(s).parse();
  if (v && percent) *v /= 100;
  return v;
}

}  // namespace

bool math_equal(std::string_view pred, std::string_view gold) {
  std::string p = normalize_math(pred);
  std::string g = normalize_math(gold);
  auto pv = math_value(p);
  auto gv = math_value(g);
  if (pv && gv) {
    Rational diff = abs(*pv - *gv);
    Rational scale = std::max(abs(*pv), abs(*gv));
    if (scale == 0) return diff == 0;
    return diff <= scale * Rational(1, 10000);
  }
  return p == g;
}

// ---- text metrics ---------------------------------------------------------

AccuracyResult accuracy(
    std::span<const std::pair<std::optional<std::string>, std::string>> records) {
  if (records.empty()) return {0.0, true};
  std::size_t hits = 0;
  for (const auto& [extracted, gold] : records)
    if (extracted && *extracted == gold) ++hits;
  return {static_cast<double>(hits) / static_cast<double>(records.size()), false};
}

std::string normalize_answer(std::string_view text) {
  std::string collapsed;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !collapsed.empty();
      continue;
    }
    if (pending_space) collapsed += ' ';
    pending_space = false;
    collapsed += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  std::size_t b = 0, e = collapsed.size();
  while (b < e && (is_punct(collapsed[b]) || collapsed[b] == ' ')) ++b;
  while (e > b && (is_punct(collapsed[e - 1]) || collapsed[e - 1] == ' ')) --e;
  return collapsed.substr(b, e - b);
}

bool exact_match(std::string_view pred, std::string_view gold) {
  return normalize_answer(pred) == normalize_answer(gold);
}

double f1_token(std::string_view pred, std::string_view gold) {
  auto p = split_whitespace(normalize_answer(pred));
  auto g = split_whitespace(normalize_answer(gold));
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, long> gold_counts;
  for (const auto& t : g) ++gold_counts[t];
  long overlap = 0;
  for (const auto& t : p) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double bleu(std::string_view pred, std::string_view gold) {
  auto p = split_whitespace(pred);
  auto g = split_whitespace(gold);
  if (p.empty()) return 0.0;

  double log_sum = 0.0;
  int orders = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    if (p.size() < n) continue;
    std::map<std::vector<std::string>, long> ref_counts, hyp_counts;
    for (std::size_t i = 0; i + n <= g.size(); ++i)
      ++ref_counts[std::vector<std::string>(g.begin() + i, g.begin() + i + n)];
    for (std::size_t i = 0; i + n <= p.size(); ++i)
      ++hyp_counts[std::vector<std::string>(p.begin() + i, p.begin() + i + n)];
    long matches = 0;
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matches += std::min(count, it->second);
    }
    double denom = static_cast<double>(p.size() - n + 1);
    double precision = matches > 0 ? static_cast<double>(matches) / denom : 1.0 / (2.0 * denom);
    log_sum += std::log(precision);
    ++orders;
  }
  double bp = std::min(1.0, std::exp(1.0 - static_cast<double>(g.size()) /
                                               static_cast<double>(p.size())));
  return bp * std::exp(log_sum / orders);
}

double rouge_l(std::string_view pred, std::string_view gold) {
  auto p = split_whitespace(pred);
  auto g = split_whitespace(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::vector<std::size_t> prev(g.size() + 1, 0), cur(g.size() + 1, 0);
  for (std::size_t i = 1; i <= p.size(); ++i) {
    for (std::size_t j = 1; j <= g.size(); ++j)
      cur[j] = p[i - 1] == g[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  double lcs = static_cast<double>(prev[g.size()]);
  if (lcs == 0) return 0.0;
  double precision = lcs / static_cast<double>(p.size());
  double recall = lcs / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc_roc: scores and labels differ in length");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1)
      pos.push_back(scores[i]);
    else if (labels[i] == 0)
      neg.push_back(scores[i]);
    else
      throw std::invalid_argument("auc_roc: labels must be 0 or 1");
  }
  if (pos.empty() || neg.empty())
    throw std::domain_error("auc_roc is undefined unless both classes are present");
  double wins = 0.0;
  for (double sp : pos)
    for (double sn : neg) wins += sp > sn ? 1.0 : sp == sn ? 0.5 : 0.0;
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// ---- LLM judge ------------------------------------------------------------

JudgeVerdict parse_judge_output(std::string_view text) {
  JudgeVerdict v;
  v.raw = std::string(text);

  std::optional<bool> keyword;
  std::optional<bool> letter;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_alnum(text[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < text.size() && is_alnum(text[i])) ++i;
    std::string_view word = text.substr(start, i - start);
    std::string upper;
    for (char c : word) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper == "CORRECT")
      keyword = true;
    else if (upper == "INCORRECT")
      keyword = false;
    else if (word == "A")
      letter = true;
    else if (word == "B")
      letter = false;
  }
  v.correct = keyword ? keyword : letter;

  static const std::regex score_re(R"(\[\[\s*(\d+(?:\.\d+)?)\s*\]\])");
  std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), score_re); it != std::sregex_iterator();
       ++it) {
    double k = std::stod((*it)[1].str());
    if (k >= 1.0 && k <= 10.0) v.score = k;
  }
  return v;
}

JudgeVerdict judge_evaluate(const JudgeInput& input, const ModelBackend& judge,
                            const PromptTemplate& judge_template) {
  auto lookup = [&](std::string_view name) -> std::optional<std::string> {
    if (name == "question") return input.question;
    if (name == "prediction") return input.prediction;
    if (name == "reference") return input.reference;
    return std::nullopt;
  };
  std::vector<Message> messages;
  for (const auto& mt : judge_template.messages)
    messages.push_back({mt.role, substitute(mt.content, lookup)});
  ModelOutput out = judge.generate(messages, judge.spec().gen_params, input.sample_id);
  return parse_judge_output(out.text);
}

// ---- cascade --------------------------------------------------------------

std::pair<std::vector<EvalRecord>, CascadeReport> cascade_evaluate(
    std::span<const CascadeItem> items, const RuleFn& rule, const JudgeFn& judge, CascadeMode mode) {
  std::vector<EvalRecord> records;
  CascadeReport report;
  std::size_t rule_hits = 0, judge_hits = 0, final_hits = 0;

  for (const auto& item : items) {
    EvalRecord rec;
    rec.sample_id = item.input.sample_id;
    rec.prediction_raw = item.input.prediction;
    rec.prediction_extracted = item.prediction_extracted;
    rec.gold_processed = item.input.reference;

    bool rule_ok = rule(item);
    if (rule_ok) ++rule_hits;
    bool run_judge = mode == CascadeMode::Parallel || !rule_ok;
    bool judge_ok = false;
    if (run_judge) {
      JudgeVerdict v = judge(item);
      ++report.judged_count;
      if (!v.correct) ++report.judge_parse_failures;
      judge_ok = v.correct.value_or(false);
      if (judge_ok) ++judge_hits;
      rec.score = v.score;
      rec.judged_by = JudgedBy::Both;
    } else {
      rec.judged_by = JudgedBy::Rule;
    }
    rec.correct = rule_ok || judge_ok;
    if (*rec.correct) ++final_hits;
    records.push_back(std::move(rec));
  }

  if (!items.empty()) {
    double n = static_cast<double>(items.size());
    report.rule_accuracy = static_cast<double>(rule_hits) / n;
    report.combined_accuracy = static_cast<double>(final_hits) / n;
  }
  if (report.judged_count > 0)
    report.llm_accuracy =
        static_cast<double>(judge_hits) / static_cast<double>(report.judged_count);
  return {std::move(records), report};
}

}  // namespace evalkit
