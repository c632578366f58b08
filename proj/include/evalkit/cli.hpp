#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "evalkit/runner.hpp"
#include "evalkit/types.hpp"

namespace evalkit {

enum class Command { Run, Infer, Eval, Summarize, ListDatasets };

struct CliInvocation {
  Command command = Command::Run;
  fs::path config_path;
  std::vector<std::string> overrides;
  // Run id to resume, or "latest".
  std::optional<std::string> reuse;
  bool debug = false;
  std::optional<std::vector<std::string>> formats;
  std::optional<fs::path> work_dir;
};

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitTaskFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

struct CliStreams {
  std::ostream& out;
  std::ostream& err;
};

// Executes an already parsed invocation.
int run_invocation(const CliInvocation& inv, CliStreams io, const RunnerHooks& hooks = {});

// Parses argv and runs it.
int cli_main(int argc, const char* const* argv);
int cli_main(int argc, const char* const* argv, CliStreams io);

// Most recent run id in work_dir, if any.
std::optional<std::string> latest_run_id(const fs::path& work_dir);

}  // namespace evalkit
