#include "evalkit/prompt.hpp"

#include "evalkit/config.hpp"

namespace evalkit {

namespace {

using Kind = ConfigError::Kind;

// Calls on_text for literal runs and on_name for each placeholder.
template <typename OnText, typename OnName>
void scan(std::string_view text, OnText&& on_text, OnName&& on_name) {
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
      on_text("{");
      i += 2;
    } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
      on_text("}");
      i += 2;
    } else if (c == '{') {
      auto close = text.find('}', i + 1);
      if (close == std::string_view::npos)
        throw ConfigError(Kind::Syntax, "unterminated placeholder in template: '" +
                                            std::string(text.substr(i)) + "'");
      on_name(text.substr(i + 1, close - i - 1));
      i = close + 1;
    } else {
      std::size_t j = i;
      while (j < text.size() && text[j] != '{' && text[j] != '}') ++j;
      if (j == i) ++j;  // lone '}'
      on_text(text.substr(i, j - i));
      i = j;
    }
  }
}

std::optional<std::string> sample_field(const Sample& s, std::string_view name) {
  if (name == "choices") {
    if (!s.choices) return std::nullopt;
    return format_choices(*s.choices);
  }
  auto it = s.fields.find(std::string(name));
  if (it == s.fields.end()) return std::nullopt;
  return it->second;
}

}  // namespace

std::string substitute(std::string_view text, const PlaceholderLookup& lookup) {
  std::string out;
  scan(
      text, [&](std::string_view lit) { out += lit; },
      [&](std::string_view name) {
        auto value = lookup(name);
        if (!value)
          throw ConfigError(Kind::Invalid,
                            "unresolved placeholder '" + std::string(name) + "' in template");
        out += *value;
      });
  return out;
}

std::vector<std::string> placeholders(std::string_view text) {
  std::vector<std::string> names;
  scan(
      text, [](std::string_view) {}, [&](std::string_view name) { names.emplace_back(name); });
  return names;
}

std::string format_choices(const std::vector<std::string>& choices) {
  std::string out;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (i) out += '\n';
    out += choice_label(i) + ". " + choices[i];
  }
  return out;
}

std::vector<Sample> retrieve_examples(const SampleSet& pool, const RetrieverSpec& spec,
                                      std::string_view test_sample_id) {
  if (spec.strategy == RetrieverStrategy::ZeroShot || spec.k == 0) return {};
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(spec.k));
  for (const auto& s : pool.samples) {
    if (static_cast<int>(out.size()) == spec.k) break;
    if (s.id == test_sample_id) continue;
    out.push_back(s);
  }
  if (static_cast<int>(out.size()) < spec.k)
    throw ConfigError(Kind::Invalid, "retriever needs k=" + std::to_string(spec.k) +
                                         " examples but only " + std::to_string(out.size()) +
                                         " are available after excluding '" +
                                         std::string(test_sample_id) + "'");
  return out;
}

std::vector<Message> render_prompt(const PromptTemplate& tmpl, std::span<const Sample> examples,
                                   const Sample& test) {
  std::vector<Message> out;
  std::size_t main_begin = 0;
  while (main_begin < tmpl.messages.size() && tmpl.messages[main_begin].role == Role::System)
    ++main_begin;

  auto test_lookup = [&](std::string_view name) -> std::optional<std::string> {
    if (name == "reference")
      throw ConfigError(Kind::Invalid,
                        "placeholder '{reference}' is only allowed inside example_template");
    return sample_field(test, name);
  };

  for (std::size_t i = 0; i < main_begin; ++i)
    out.push_back({Role::System, substitute(tmpl.messages[i].content, test_lookup)});

  for (const auto& ex : examples) {
    auto ex_lookup = [&](std::string_view name) -> std::optional<std::string> {
      if (name == "reference") return ex.reference;
      return sample_field(ex, name);
    };
    for (const auto& mt : tmpl.example_template)
      out.push_back({mt.role, substitute(mt.content, ex_lookup)});
  }

  for (std::size_t i = main_begin; i < tmpl.messages.size(); ++i)
    out.push_back({tmpl.messages[i].role, substitute(tmpl.messages[i].content, test_lookup)});
  return out;
}

Json to_json(std::span<const Message> messages) {
  Json arr = Json::array();
  for (const auto& m : messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

std::vector<Message> messages_from_json(const Json& arr) {
  std::vector<Message> out;
  for (const auto& m : arr)
    out.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  return out;
}

}  // namespace evalkit
