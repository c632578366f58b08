#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "evalkit/types.hpp"

namespace evalkit {

// Parses a JSON configuration document and applies dotted-path overrides
// ("runner.max_retries=5", "models.0.max_out_len=64"). Override values are
// parsed as JSON when possible and taken as strings otherwise.
//
// Relative dataset, example and script paths resolve against base_dir.
// Throws ConfigError.
EvalConfig parse_config(std::string_view source_text, const std::vector<std::string>& overrides,
                        const fs::path& base_dir = {});

// Applies one "a.b.c=value" override to a raw document.
void apply_override(Json& doc, std::string_view assignment);

// Checks the working directory, dataset files and model/dataset pairing,
// stamps a run id if absent and creates the run directory layout.
ValidatedConfig validate_config(const EvalConfig& cfg);

// UTC timestamp of the form YYYYMMDD_HHMMSS.
std::string make_run_id();

// Serialization used to persist the resolved configuration of a run.
Json to_json(const EvalConfig& cfg);
Json to_json(const ModelSpec& model);
Json to_json(const GenerationParams& params);
Json to_json(const PromptTemplate& prompt);

Role parse_role(std::string_view name);

}  // namespace evalkit
