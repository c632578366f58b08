#include "evalkit/dataset.hpp"

#include <fstream>
#include <set>

namespace evalkit {

namespace {

using Kind = ConfigError::Kind;

std::string at_line(std::size_t line_no) { return "line " + std::to_string(line_no); }

std::string coerce_text(const Json& v, const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned() || v.is_boolean()) return v.dump();
  if (v.is_number_float()) return format_double(v.get<double>());
  throw ConfigError(Kind::TypeMismatch, where + ": expected a scalar value, got " +
                                            std::string(v.type_name()));
}

bool is_blank(std::string_view line) {
  for (char c : line)
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(Kind::Io, "cannot open dataset '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    if (!fn(line, line_no)) break;
  }
}

}  // namespace

std::string choice_label(std::size_t index) {
  std::string label;
  ++index;
  while (index > 0) {
    --index;
    label.insert(label.begin(), static_cast<char>('A' + index % 26));
    index /= 26;
  }
  return label;
}

std::string reference_label(const Sample& sample) {
  if (!sample.choices) return {};
  const auto& choices = *sample.choices;
  std::string ref = trim(sample.reference);
  for (std::size_t i = 0; i < choices.size(); ++i)
    if (ref == choice_label(i)) return ref;
  for (std::size_t i = 0; i < choices.size(); ++i)
    if (ref == trim(choices[i])) return choice_label(i);
  return {};
}

bool requires_reference(const DatasetSpec& spec) {
  return spec.evaluator.family != EvaluatorFamily::LlmJudge;
}

Sample parse_sample_line(std::string_view line, std::size_t line_no) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw ConfigError(Kind::Syntax, at_line(line_no) + ": malformed JSON: " + e.what());
  }
  if (!j.is_object())
    throw ConfigError(Kind::TypeMismatch, at_line(line_no) + ": expected a JSON object");

  Sample s;
  for (const auto& [key, value] : j.items()) {
    std::string where = at_line(line_no) + ", field '" + key + "'";
    if (key == "id") {
      s.id = coerce_text(value, where);
    } else if (key == "fields") {
      if (!value.is_object())
        throw ConfigError(Kind::TypeMismatch, where + ": expected an object");
      for (const auto& [name, text] : value.items())
        s.fields[name] = coerce_text(text, where + "." + name);
    } else if (key == "reference") {
      if (!value.is_null()) s.reference = coerce_text(value, where);
    } else if (key == "choices") {
      if (value.is_null()) continue;
      if (!value.is_array()) throw ConfigError(Kind::TypeMismatch, where + ": expected an array");
      std::vector<std::string> choices;
      for (const auto& c : value) choices.push_back(coerce_text(c, where));
      s.choices = std::move(choices);
    } else {
      throw ConfigError(Kind::UnknownKey, at_line(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (s.id.empty()) throw ConfigError(Kind::MissingField, at_line(line_no) + ": missing \"id\"");
  return s;
}

Json to_json(const Sample& s) {
  Json j;
  j["id"] = s.id;
  j["fields"] = Json::object();
  for (const auto& [k, v] : s.fields) j["fields"][k] = v;
  j["reference"] = s.reference;
  if (s.choices) j["choices"] = *s.choices;
  return j;
}

std::string to_jsonl(const SampleSet& set) {
  std::string out;
  for (const auto& s : set.samples) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

SampleSet load_jsonl_samples(const fs::path& path, const std::string& abbr) {
  SampleSet set;
  set.dataset_abbr = abbr;
  std::set<std::string> ids;
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    Sample s = parse_sample_line(line, line_no);
    if (!ids.insert(s.id).second)
      throw ConfigError(Kind::Invalid, path.string() + ": " + at_line(line_no) +
                                           ": duplicate id '" + s.id + "'");
    set.samples.push_back(std::move(s));
    return true;
  });
  if (set.samples.empty())
    throw ConfigError(Kind::Invalid, "dataset file '" + path.string() + "' is empty");
  return set;
}

SampleSet load_dataset(const DatasetSpec& spec) {
  SampleSet set;
  set.dataset_abbr = spec.abbr;
  std::set<std::string> ids;
  bool need_ref = requires_reference(spec);
  for_each_line(spec.path, [&](const std::string& line, std::size_t line_no) {
    Sample s;
    try {
      s = parse_sample_line(line, line_no);
    } catch (const ConfigError& e) {
      throw ConfigError(e.kind(), "dataset '" + spec.abbr + "': " + e.what());
    }
    auto schema_error = [&](const std::string& msg) {
      return ConfigError(Kind::Invalid,
                         "dataset '" + spec.abbr + "': " + at_line(line_no) + ": " + msg);
    };
    if (!ids.insert(s.id).second) throw schema_error("duplicate id '" + s.id + "'");
    if (need_ref && s.reference.empty()) throw schema_error("missing \"reference\"");
    if (spec.paradigm == Paradigm::Perplexity && (!s.choices || s.choices->size() < 2))
      throw schema_error("perplexity paradigm requires at least two choices");
    if (s.choices && !s.reference.empty() && reference_label(s).empty())
      throw schema_error("reference '" + s.reference + "' matches no choice label or text");
    set.samples.push_back(std::move(s));
    return true;
  });
  if (set.samples.empty())
    throw ConfigError(Kind::Invalid, "dataset '" + spec.abbr + "': file '" + spec.path.string() +
                                         "' is empty");
  return set;
}

void check_dataset_header(const DatasetSpec& spec) {
  bool found = false;
  for_each_line(spec.path, [&](const std::string& line, std::size_t line_no) {
    try {
      parse_sample_line(line, line_no);
    } catch (const ConfigError& e) {
      throw ConfigError(e.kind(), "dataset '" + spec.abbr + "': " + e.what());
    }
    found = true;
    return false;
  });
  if (!found)
    throw ConfigError(Kind::Invalid, "dataset '" + spec.abbr + "': file '" + spec.path.string() +
                                         "' is empty");
}

}  // namespace evalkit
