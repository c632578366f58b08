#include <boost/multiprecision/cpp_int.hpp>
#include <random>

#include "doctest.h"
#include "evalkit/backends.hpp"
#include "evalkit/evaluators.hpp"
#include "oracles.hpp"

using namespace evalkit;

namespace {

const std::vector<std::string> kABCD = {"A", "B", "C", "D"};

std::optional<std::string> opt(std::string_view text) { return extract_option(text, kABCD); }

CascadeItem item(std::string id) {
  CascadeItem c;
  c.input.sample_id = std::move(id);
  return c;
}

}  // namespace

TEST_CASE("extract_option rule cascade") {
  CHECK(opt("B") == "B");
  CHECK(opt("  D \n") == "D");
  CHECK(opt("The answer is (C).") == "C");
  CHECK(opt("answer: a") == std::nullopt);  // lowercase is not a label; no capitals anywhere
  CHECK(opt("My first guess was A. Final answer: B") == "B");
  CHECK(opt("ANSWER IS C, or maybe the answer is (D)") == "D");
  CHECK(opt("Between (A) and (C) I pick (C)") == "C");
  CHECK(opt("I would say C is right, not A") == "C");
  CHECK(opt("no letters here") == std::nullopt);
  CHECK(opt("The answer is (E)") == std::nullopt);  // E is not a valid label
  CHECK(opt("Answer is E, so (B)") == "B");
  CHECK(extract_option("E", std::vector<std::string>{"A", "B", "C", "D", "E"}) == "E");
}

TEST_CASE("extract_option only returns valid labels") {
  std::mt19937 rng(1);
  const std::string alphabet = "ABCDEFGXYZ ()answerisAnswer:.,";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text;
    for (std::size_t i = rng() % 30; i > 0; --i) text += alphabet[rng() % alphabet.size()];
    auto got = opt(text);
    if (got) CHECK(std::find(kABCD.begin(), kABCD.end(), *got) != kABCD.end());
  }
}

TEST_CASE("extract_pattern") {
  CHECK(extract_pattern("x=3, x=5", R"(x=(\d+))") == "5");
  CHECK(extract_pattern("nothing", R"(x=(\d+))") == std::nullopt);
  CHECK(extract_pattern("abc 42", R"(\d+)") == "42");
  CHECK_THROWS_AS(extract_pattern("abc", "(unclosed"), ConfigError);
}

TEST_CASE("postprocessors") {
  CHECK(postprocess("none", " X ") == " X ");
  CHECK(postprocess("strip", " X \n") == "X");
  CHECK(postprocess("lower", " AbC ") == "abc");
  CHECK(postprocess("first_line", "\n first \nsecond\n") == "first");
  CHECK(postprocess("last_line", "first\n second \n\n") == "second");
  CHECK(postprocess("boxed", "so \\boxed{\\frac{1}{2}} done") == "\\frac{1}{2}");
  CHECK(postprocess("boxed", "plain 7") == "plain 7");
  CHECK(is_registered_postprocessor("strip"));
  CHECK_FALSE(is_registered_postprocessor("reverse"));
  CHECK_THROWS_AS(postprocess("reverse", "x"), ConfigError);
}

TEST_CASE("math_equal") {
  CHECK(math_equal("\\frac{1}{2}", "0.5"));
  CHECK(math_equal("\\dfrac{3}{4}", "0.75"));
  CHECK(math_equal("$1,000$", "1000"));
  CHECK(math_equal("50\\%", "0.5"));
  CHECK(math_equal("90^\\circ", "90"));
  CHECK(math_equal("2 \\cdot 3", "6"));
  CHECK(math_equal("\\left(1+2\\right)", "3."));
  CHECK(math_equal("-\\frac{1}{3}", "-0.33333"));
  CHECK_FALSE(math_equal("x+1", "1+x"));
  CHECK(math_equal("x+1", "x + 1"));
  CHECK_FALSE(math_equal("0.5", "0.6"));
  CHECK(math_equal("0", "0.0"));
  CHECK_FALSE(math_equal("0", "0.00001"));
  CHECK_FALSE(math_equal("1/0", "1"));
}

TEST_CASE("math_equal boundary against an exact rational oracle") {
  using boost::multiprecision::cpp_rational;
  cpp_rational pred(3333, 10000), gold(1, 3);
  cpp_rational diff = abs(pred - gold);
  cpp_rational tol = cpp_rational(1, 10000) * std::max(abs(pred), abs(gold));
  REQUIRE(diff == tol);  // 0.3333 sits exactly on the relative-tolerance boundary
  CHECK(math_equal("0.3333", "1/3") == (diff <= tol));
  CHECK(math_equal("0.3333", "\\frac{1}{3}"));

  cpp_rational below(3332, 10000);
  CHECK(math_equal("0.3332", "1/3") == (abs(below - gold) <= tol));
  CHECK_FALSE(math_equal("0.3332", "1/3"));
}

TEST_CASE("accuracy") {
  using Rec = std::pair<std::optional<std::string>, std::string>;
  std::vector<Rec> r = {{"A", "A"}, {"B", "B"}, {"C", "C"}, {"A", "D"}};
  CHECK(accuracy(r).value == 0.75);
  CHECK_FALSE(accuracy(r).empty_input);
  std::vector<Rec> none = {{std::nullopt, "A"}, {std::nullopt, "B"}};
  CHECK(accuracy(none).value == 0.0);
  AccuracyResult empty = accuracy(std::span<const Rec>{});
  CHECK(empty.value == 0.0);
  CHECK(empty.empty_input);
}

TEST_CASE("exact_match") {
  CHECK(exact_match("Paris ", "paris"));
  CHECK_FALSE(exact_match("New York", "York"));
  CHECK(exact_match("", ""));
  CHECK(exact_match("  The  Answer. ", "the answer"));
}

TEST_CASE("f1_token") {
  CHECK(f1_token("a b c", "b c d") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(f1_token("x y z", "x y z") == 1.0);
  CHECK(f1_token("x y", "p q") == 0.0);
  CHECK(f1_token("", "") == 1.0);
  CHECK(f1_token("", "a") == 0.0);
  CHECK(f1_token("a a b", "a b b") == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("bleu") {
  CHECK(bleu("the quick brown fox jumps", "the quick brown fox jumps") == 1.0);
  CHECK(bleu("", "anything") == 0.0);
  // Unigram 1/4, bigram 0 of 3 -> 1/6, trigram 0 of 2 -> 1/4, 4-gram 0 of 1 -> 1/2; BP = 1.
  double expected = std::pow(1.0 / 192.0, 0.25);
  CHECK(oracle::bleu("the the the the", "the cat") == doctest::Approx(expected).epsilon(1e-12));
  CHECK(bleu("the the the the", "the cat") == doctest::Approx(expected).epsilon(1e-12));
  // Short candidate: only unigram and bigram orders exist.
  CHECK(bleu("a b", "a b c d") == doctest::Approx(std::exp(1.0 - 2.0)).epsilon(1e-12));
}

TEST_CASE("rouge_l") {
  CHECK(rouge_l("the cat sat on the mat", "the cat was on the mat") ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(oracle::lcs_length(oracle::tokens("the cat sat on the mat"),
                           oracle::tokens("the cat was on the mat")) == 5);
  CHECK(rouge_l("a b", "a b") == 1.0);
  CHECK(rouge_l("a b", "c d") == 0.0);
  CHECK(rouge_l("", "") == 1.0);
}

TEST_CASE("property: text metrics match brute-force oracles") {
  std::mt19937 rng(17);
  const std::vector<std::string> vocab = {"a", "b", "c", "d", "e"};
  auto sentence = [&] {
    std::string s;
    for (std::size_t n = rng() % 11; n > 0; --n) s += vocab[rng() % vocab.size()] + " ";
    return s;
  };
  for (int trial = 0; trial < 500; ++trial) {
    std::string p = sentence(), g = sentence();
    CHECK(std::abs(bleu(p, g) - oracle::bleu(p, g)) <= 1e-9);
    CHECK(std::abs(rouge_l(p, g) - oracle::rouge_l(p, g)) <= 1e-9);
    CHECK(std::abs(f1_token(p, g) - oracle::f1(p, g)) <= 1e-9);
    for (double v : {bleu(p, g), rouge_l(p, g), f1_token(p, g)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(f1_token(p, g) == doctest::Approx(f1_token(g, p)));
    CHECK(rouge_l(p, g) == doctest::Approx(rouge_l(g, p)));
  }
}

TEST_CASE("auc_roc") {
  std::vector<double> s1 = {.9, .8, .3, .2};
  std::vector<int> l1 = {1, 1, 0, 0};
  CHECK(auc_roc(s1, l1) == 1.0);
  std::vector<double> tied = {.5, .5, .5, .5};
  CHECK(auc_roc(tied, l1) == 0.5);
  std::vector<double> s2 = {.9, .4, .8, .3};
  std::vector<int> l2 = {1, 0, 0, 1};
  CHECK(auc_roc(s2, l2) == 0.5);
  std::vector<int> one_class = {1, 1, 1, 1};
  CHECK_THROWS_AS(auc_roc(s1, one_class), std::domain_error);
}

TEST_CASE("judge output parsing") {
  CHECK(parse_judge_output("Analysis... Verdict: CORRECT").correct == true);
  CHECK(parse_judge_output("correct at first, but INCORRECT").correct == false);
  CHECK(parse_judge_output("Rating: [[7]]").score == 7.0);
  CHECK(parse_judge_output("[[3]] then [[11]]").score == 3.0);
  JudgeVerdict maybe = parse_judge_output("maybe?");
  CHECK_FALSE(maybe.correct.has_value());
  CHECK_FALSE(maybe.parsed(JudgeProtocol::Binary));
  CHECK(parse_judge_output("Output (A) wins. Final: A").correct == true);
  CHECK(parse_judge_output("I prefer B").correct == false);
  CHECK(parse_judge_output("INCORRECTLY phrased").correct == std::nullopt);
  CHECK(parse_judge_output("Correct, though B is close").correct == true);  // keyword wins
}

TEST_CASE("judge_evaluate renders the template and keys the mock by sample id") {
  ModelSpec spec;
  spec.abbr = "judge";
  spec.mock.answers["s1"] = "Verdict: CORRECT";
  spec.mock.default_rule = MockDefaultRule::EchoLastUser;
  MockBackend judge(spec);
  PromptTemplate t;
  t.messages = {{Role::User, "Q={question} P={prediction} R={reference}"}};
  JudgeInput in{"s1", "2+2?", "4", "four"};
  CHECK(judge_evaluate(in, judge, t).correct == true);
  in.sample_id = "other";
  CHECK(judge_evaluate(in, judge, t).raw == "Q=2+2? P=4 R=four");
}

TEST_CASE("cascade: cascaded mode example") {
  std::vector<CascadeItem> items = {item("s1"), item("s2"), item("s3"), item("s4")};
  std::vector<std::string> judged;
  RuleFn rule = [](const CascadeItem& c) { return c.input.sample_id == "s1"; };
  JudgeFn judge = [&](const CascadeItem& c) {
    judged.push_back(c.input.sample_id);
    return parse_judge_output(c.input.sample_id == "s3" ? "CORRECT" : "INCORRECT");
  };
  auto [records, report] = cascade_evaluate(items, rule, judge, CascadeMode::Cascaded);
  CHECK(report.combined_accuracy == 0.5);
  CHECK(report.rule_accuracy == 0.25);
  CHECK(report.llm_accuracy == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(report.judged_count == 3);
  CHECK(judged == std::vector<std::string>{"s2", "s3", "s4"});
  CHECK(records[0].judged_by == JudgedBy::Rule);
  CHECK(records[1].judged_by == JudgedBy::Both);
  CHECK(records[2].correct == true);
}

TEST_CASE("cascade: parallel mode example") {
  std::vector<CascadeItem> items = {item("s1"), item("s2"), item("s3")};
  RuleFn rule = [](const CascadeItem& c) { return c.input.sample_id == "s1"; };
  JudgeFn judge = [](const CascadeItem& c) {
    return parse_judge_output(c.input.sample_id == "s2" ? "CORRECT" : "INCORRECT");
  };
  auto [records, report] = cascade_evaluate(items, rule, judge, CascadeMode::Parallel);
  CHECK(report.combined_accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(report.judged_count == 3);
  CHECK(records[0].correct == true);
  CHECK(records[1].correct == true);
  CHECK(records[2].correct == false);
}

TEST_CASE("cascade: a judge that never agrees leaves rule accuracy") {
  std::vector<CascadeItem> items = {item("a"), item("b"), item("c"), item("d")};
  RuleFn rule = [](const CascadeItem& c) { return c.input.sample_id < "c"; };
  JudgeFn never = [](const CascadeItem&) { return parse_judge_output("INCORRECT"); };
  for (CascadeMode mode : {CascadeMode::Cascaded, CascadeMode::Parallel}) {
    auto [records, report] = cascade_evaluate(items, rule, never, mode);
    CHECK(report.combined_accuracy == report.rule_accuracy);
    CHECK(report.llm_accuracy == 0.0);
  }
}

TEST_CASE("cascade: unparseable judge output counts as incorrect and is flagged") {
  std::vector<CascadeItem> items = {item("a"), item("b")};
  RuleFn rule = [](const CascadeItem&) { return false; };
  JudgeFn judge = [](const CascadeItem& c) {
    return parse_judge_output(c.input.sample_id == "a" ? "maybe?" : "CORRECT");
  };
  auto [records, report] = cascade_evaluate(items, rule, judge, CascadeMode::Cascaded);
  CHECK(report.judge_parse_failures == 1);
  CHECK(records[0].correct == false);
  CHECK(report.combined_accuracy == 0.5);
}

TEST_CASE("property: cascade monotonicity and cost bound") {
  std::mt19937 rng(29);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t n = 1 + rng() % 12;
    std::vector<CascadeItem> items;
    std::vector<bool> rule_marks, judge_marks;
    for (std::size_t i = 0; i < n; ++i) {
      items.push_back(item(std::to_string(i)));
      rule_marks.push_back(rng() % 2);
      judge_marks.push_back(rng() % 2);
    }
    auto idx = [](const CascadeItem& c) { return std::stoul(c.input.sample_id); };
    RuleFn rule = [&](const CascadeItem& c) { return rule_marks[idx(c)]; };
    std::size_t calls = 0;
    JudgeFn judge = [&](const CascadeItem& c) {
      ++calls;
      return parse_judge_output(judge_marks[idx(c)] ? "CORRECT" : "INCORRECT");
    };
    std::size_t rule_correct = std::count(rule_marks.begin(), rule_marks.end(), true);

    auto [rc, cascaded] = cascade_evaluate(items, rule, judge, CascadeMode::Cascaded);
    CHECK(calls == n - rule_correct);
    CHECK(cascaded.judged_count == n - rule_correct);
    CHECK(cascaded.combined_accuracy >= cascaded.rule_accuracy);

    auto [rp, parallel] = cascade_evaluate(items, rule, judge, CascadeMode::Parallel);
    CHECK(parallel.combined_accuracy >= parallel.rule_accuracy);
    CHECK(parallel.combined_accuracy >= parallel.llm_accuracy * parallel.judged_count / n - 1e-12);
    CHECK(parallel.combined_accuracy == doctest::Approx(cascaded.combined_accuracy));
  }
}

TEST_CASE("eval record json") {
  EvalRecord r;
  r.sample_id = "q1";
  r.prediction_raw = "The answer is B";
  r.prediction_extracted = "B";
  r.gold_processed = "B";
  r.correct = true;
  Json j = to_json(r);
  CHECK(j["sample_id"] == "q1");
  CHECK(j["correct"] == true);
  CHECK(j["score"].is_null());
  CHECK(j["judged_by"] == "rule");
}
