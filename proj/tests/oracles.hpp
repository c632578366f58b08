#pragma once

// Brute-force reference implementations of the text metrics, written
// independently of the library code.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace evalkit::oracle {

inline std::vector<std::string> tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

// All n-grams as space-joined strings, in order, with repeats.
inline std::vector<std::string> ngram_table(const std::vector<std::string>& toks, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string g = toks[i];
    for (std::size_t j = 1; j < n; ++j) g += " " + toks[i + j];
    out.push_back(g);
  }
  return out;
}

inline double bleu(const std::string& pred, const std::string& gold) {
  auto p = tokens(pred), g = tokens(gold);
  if (p.empty()) return 0.0;
  std::vector<double> logs;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto hyp = ngram_table(p, n);
    if (hyp.empty()) continue;
    auto ref = ngram_table(g, n);
    // Clipped matches: consume reference n-grams one at a time.
    double matches = 0;
    for (const auto& h : hyp) {
      auto it = std::find(ref.begin(), ref.end(), h);
      if (it != ref.end()) {
        ref.erase(it);
        matches += 1;
      }
    }
    double denom = static_cast<double>(hyp.size());
    logs.push_back(std::log(matches > 0 ? matches / denom : 1.0 / (2.0 * denom)));
  }
  double mean = 0;
  for (double l : logs) mean += l / static_cast<double>(logs.size());
  double ratio = static_cast<double>(g.size()) / static_cast<double>(p.size());
  return std::min(1.0, std::exp(1.0 - ratio)) * std::exp(mean);
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = a.size(); i-- > 0;)
    for (std::size_t j = b.size(); j-- > 0;)
      t[i][j] = a[i] == b[j] ? 1 + t[i + 1][j + 1] : std::max(t[i + 1][j], t[i][j + 1]);
  return t[0][0];
}

inline double rouge_l(const std::string& pred, const std::string& gold) {
  auto p = tokens(pred), g = tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  double l = static_cast<double>(lcs_length(p, g));
  if (l == 0) return 0.0;
  double prec = l / static_cast<double>(p.size()), rec = l / static_cast<double>(g.size());
  return 2 * prec * rec / (prec + rec);
}

// Token F1 over lowercase inputs that need no further normalization.
inline double f1(const std::string& pred, const std::string& gold) {
  auto p = tokens(pred), g = tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  std::sort(p.begin(), p.end());
  std::sort(g.begin(), g.end());
  std::vector<std::string> common;
  std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(common));
  if (common.empty()) return 0.0;
  double prec = static_cast<double>(common.size()) / static_cast<double>(p.size());
  double rec = static_cast<double>(common.size()) / static_cast<double>(g.size());
  return 2 * prec * rec / (prec + rec);
}

}  // namespace evalkit::oracle
