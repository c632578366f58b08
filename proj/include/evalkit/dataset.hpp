#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evalkit/types.hpp"

namespace evalkit {

struct Sample {
  std::string id;
  std::map<std::string, std::string> fields;
  std::string reference;
  std::optional<std::vector<std::string>> choices;

  bool operator==(const Sample&) const = default;
};

struct SampleSet {
  std::string dataset_abbr;
  std::vector<Sample> samples;

  bool operator==(const SampleSet&) const = default;

  std::size_t size() const { return samples.size(); }
};

// Positional option label: 0 -> "A", 1 -> "B", ...
std::string choice_label(std::size_t index);

// Label of the choice the reference designates, accepting either a label
// ("B") or the choice text itself. Empty when the reference matches neither.
std::string reference_label(const Sample& sample);

// Whether the dataset's evaluator needs a gold reference on every sample.
bool requires_reference(const DatasetSpec& spec);

// Parses one JSONL line. Throws ConfigError naming line_no on schema errors.
Sample parse_sample_line(std::string_view line, std::size_t line_no);
Json to_json(const Sample& sample);

// Loads every non-blank line of spec.path in file order.
SampleSet load_dataset(const DatasetSpec& spec);

// Loads a bare JSONL file with no dataset-specific schema checks.
SampleSet load_jsonl_samples(const fs::path& path, const std::string& abbr);

std::string to_jsonl(const SampleSet& set);

// Validates that the first non-blank line of the dataset parses as a sample.
void check_dataset_header(const DatasetSpec& spec);

}  // namespace evalkit
