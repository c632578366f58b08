#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evalkit/dataset.hpp"
#include "evalkit/types.hpp"

namespace evalkit {

// Returns the value of a placeholder, or nullopt when unresolved.
using PlaceholderLookup = std::function<std::optional<std::string>(std::string_view name)>;

// Expands `{name}` placeholders; `{{` and `}}` are literal braces.
// Throws ConfigError naming the first unresolved placeholder.
std::string substitute(std::string_view text, const PlaceholderLookup& lookup);

// Names of all placeholders in text, in order of appearance.
std::vector<std::string> placeholders(std::string_view text);

// "A. first\nB. second" for the sample's choices.
std::string format_choices(const std::vector<std::string>& choices);

// First k pool samples other than the test sample; empty for zero-shot.
std::vector<Sample> retrieve_examples(const SampleSet& pool, const RetrieverSpec& spec,
                                      std::string_view test_sample_id);

// Leading system messages, then example_template once per example (with the
// example's reference available), then the remaining messages rendered with
// the test sample. The test reference is never substituted.
std::vector<Message> render_prompt(const PromptTemplate& tmpl, std::span<const Sample> examples,
                                   const Sample& test);

Json to_json(std::span<const Message> messages);
std::vector<Message> messages_from_json(const Json& arr);

}  // namespace evalkit
