#include "evalkit/cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "evalkit/config.hpp"
#include "evalkit/partition.hpp"
#include "evalkit/summarizer.hpp"
#include "evalkit/tasks.hpp"

namespace evalkit {

namespace {

constexpr const char* kLatestFile = "latest";

// Exclusive advisory lock on {run_dir}/run.lock, released when the process
// exits even if it crashes.
class RunLock {
 public:
  explicit RunLock(const fs::path& run_dir) {
    fs::path path = run_dir / "run.lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw ConfigError(ConfigError::Kind::Io, "cannot open '" + path.string() + "'");
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw ConfigError(ConfigError::Kind::Io,
                        "run directory '" + run_dir.string() + "' is in use by another process");
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }

 private:
  int fd_ = -1;
};

std::vector<ReportFormat> formats_from(const std::vector<std::string>& names) {
  std::vector<ReportFormat> out;
  for (const auto& n : names) {
    if (n == "md" || n == "markdown")
      out.push_back(ReportFormat::Markdown);
    else if (n == "csv")
      out.push_back(ReportFormat::Csv);
    else if (n == "json")
      out.push_back(ReportFormat::Json);
    else
      throw CLI::ValidationError("--formats", "unknown format '" + n + "'");
  }
  return out;
}

void print_report(std::ostream& out, std::string_view stage, const RunReport& report) {
  out << stage << ": " << report.statuses.size() << " tasks, "
      << report.count(TaskState::Succeeded) << " succeeded, " << report.count(TaskState::Skipped)
      << " skipped, " << report.count(TaskState::Failed) << " failed (" << report.wall_time_ms
      << " ms)\n";
  for (const auto& [path, st] : report.statuses) {
    if (st.state != TaskState::Failed) continue;
    out << "  FAILED " << path << " after " << st.attempts
        << " attempt(s): " << st.last_error.value_or("") << '\n';
  }
}

bool needs_existing_run(Command c) { return c == Command::Eval || c == Command::Summarize; }

int list_datasets(const EvalConfig& cfg, CliStreams io) {
  for (const auto& d : cfg.datasets) {
    SampleSet set = load_dataset(d);
    io.out << d.abbr << '\t' << to_string(d.paradigm) << '\t' << set.size() << '\t'
           << d.path.string() << '\n';
  }
  return kExitOk;
}

int summarize(const ValidatedConfig& vc, CliStreams io) {
  const auto& cfg = vc.config;
  Summary summary = aggregate(vc.run_dir);
  apply_groups(summary, cfg.summarizer.groups);
  summary = select_metrics(summary, cfg.summarizer.metrics);
  auto files = render_report(summary, cfg.summarizer.formats, vc.run_dir / "summary");
  io.out << render_markdown(summary);
  for (const auto& f : files) io.out << "wrote " << f.string() << '\n';
  return kExitOk;
}

}  // namespace

std::optional<std::string> latest_run_id(const fs::path& work_dir) {
  fs::path marker = work_dir / kLatestFile;
  if (fs::is_regular_file(marker)) {
    std::string id = trim(read_file(marker));
    if (!id.empty() && fs::is_directory(work_dir / id)) return id;
  }
  std::optional<std::string> best;
  if (!fs::is_directory(work_dir)) return best;
  for (const auto& e : fs::directory_iterator(work_dir)) {
    if (!e.is_directory() || !fs::is_directory(e.path() / "predictions")) continue;
    std::string name = e.path().filename().string();
    if (!best || name > *best) best = name;
  }
  return best;
}

int run_invocation(const CliInvocation& inv, CliStreams io, const RunnerHooks& hooks) {
  EvalConfig cfg;
  try {
    if (!fs::is_regular_file(inv.config_path)) {
      io.err << "error: config file '" << inv.config_path.string() << "' does not exist\n";
      return kExitUsage;
    }
    cfg = parse_config(read_file(inv.config_path), inv.overrides,
                       fs::absolute(inv.config_path).parent_path());
    if (inv.work_dir) cfg.work_dir = *inv.work_dir;
    if (inv.debug) cfg.runner.backend = RunnerBackend::SerialDebug;
    if (inv.formats) cfg.summarizer.formats = formats_from(*inv.formats);
  } catch (const ConfigError& e) {
    io.err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CLI::ValidationError& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  if (inv.command == Command::ListDatasets) {
    try {
      return list_datasets(cfg, io);
    } catch (const ConfigError& e) {
      io.err << "config error: " << e.what() << '\n';
      return kExitConfig;
    }
  }

  std::optional<std::string> reuse = inv.reuse;
  if (!reuse && needs_existing_run(inv.command)) reuse = "latest";
  if (reuse) {
    std::optional<std::string> id = *reuse == "latest" ? latest_run_id(cfg.work_dir) : reuse;
    if (id && fs::is_directory(cfg.work_dir / *id)) {
      cfg.run_id = *id;
    } else if (needs_existing_run(inv.command)) {
      io.err << "error: no existing run '" << *reuse << "' under '" << cfg.work_dir.string()
             << "'\n";
      return kExitUsage;
    } else if (*reuse != "latest") {
      cfg.run_id = *reuse;  // start a fresh run under the requested id
    }
  }

  try {
    ValidatedConfig vc = validate_config(cfg);
    RunLock lock(vc.run_dir);
    write_file_durably(cfg.work_dir / kLatestFile, vc.config.run_id + "\n");
    io.out << "run directory: " << vc.run_dir.string() << '\n';

    if (inv.command == Command::Summarize) return summarize(vc, io);

    EvalContext ctx(vc);
    auto counts = ctx.sample_counts();
    write_plan(vc.run_dir, vc.config, counts);
    write_file_durably(vc.run_dir / "config.json", to_json(vc.config).dump(2) + "\n");

    std::vector<std::string> model_abbrs, dataset_abbrs;
    for (const auto& m : vc.config.models) model_abbrs.push_back(m.abbr);
    for (const auto& d : vc.config.datasets) dataset_abbrs.push_back(d.abbr);
    auto pairs = build_pairs(model_abbrs, dataset_abbrs);
    TaskExecutor executor = make_executor(ctx);
    bool failed = false;
    // Infer shards re-executed in this invocation; their eval shards are stale.
    std::set<std::string> rerun_infer;

    auto stage = [&](TaskKind kind) {
      TaskList tasks = partition(pairs, counts, vc.config.partitioner, vc.run_dir, kind);
      if (inv.reuse) {
        auto [to_run, skipped] = filter_reusable(tasks, vc.run_dir);
        for (auto& t : skipped.tasks) {
          if (kind == TaskKind::Eval && rerun_infer.count(t.input_path.string()))
            t.status = TaskStatus{};
          to_run.tasks.push_back(std::move(t));
        }
        tasks = std::move(to_run);
      }
      RunReport report = execute(tasks, executor, vc.config.runner, hooks);
      print_report(io.out, to_string(kind), report);
      if (kind == TaskKind::Infer)
        for (const auto& [path, st] : report.statuses)
          if (st.state != TaskState::Skipped) rerun_infer.insert(path);
      failed = failed || report.any_failed();
    };

    if (inv.command == Command::Run || inv.command == Command::Infer) stage(TaskKind::Infer);
    if (inv.command == Command::Infer) return failed ? kExitTaskFailed : kExitOk;

    stage(TaskKind::Eval);
    summarize(vc, io);
    return failed ? kExitTaskFailed : kExitOk;
  } catch (const ConfigError& e) {
    io.err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int cli_main(int argc, const char* const* argv) { return cli_main(argc, argv, {std::cout, std::cerr}); }

int cli_main(int argc, const char* const* argv, CliStreams io) {
  CLI::App app{"evalkit: partitioned LLM evaluation runs", "evalkit"};
  app.require_subcommand(1, 1);

  CliInvocation inv;
  std::string formats;
  std::string work_dir;

  struct Sub {
    const char* name;
    const char* help;
    Command command;
  };
  const Sub subs[] = {
      {"run", "infer, evaluate and summarize", Command::Run},
      {"infer", "run the inference stage only", Command::Infer},
      {"eval", "evaluate and summarize an existing run", Command::Eval},
      {"summarize", "rebuild the summary of an existing run", Command::Summarize},
      {"list-datasets", "list configured datasets", Command::ListDatasets},
  };
  std::vector<std::pair<CLI::App*, Command>> commands;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("-c,--config", inv.config_path, "configuration JSON file")->required();
    sub->add_option("-o,--override", inv.overrides, "dotted key=value override (repeatable)")
        ->allow_extra_args(false);
    if (s.command != Command::ListDatasets) {
      sub->add_option("-w,--work-dir", work_dir, "working directory (overrides work_dir)");
      if (s.command != Command::Summarize) {
        sub->add_option_function<std::string>(
               "--reuse", [&](const std::string& v) { inv.reuse = v.empty() ? "latest" : v; },
               "resume run ID or 'latest', skipping completed shards")
            ->expected(0, 1)
            ->default_str("latest");
        sub->add_flag("--debug", inv.debug, "serial execution with logs on stderr");
      } else {
        sub->add_option_function<std::string>(
            "--reuse", [&](const std::string& v) { inv.reuse = v.empty() ? "latest" : v; },
            "run ID or 'latest'");
      }
      if (s.command != Command::Infer)
        sub->add_option("--formats", formats, "report formats, e.g. md,csv,json");
    }
    commands.emplace_back(sub, s.command);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    io.out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  for (const auto& [sub, command] : commands)
    if (sub->parsed()) inv.command = command;
  if (!work_dir.empty()) inv.work_dir = work_dir;
  if (!formats.empty()) {
    std::vector<std::string> names;
    std::size_t start = 0;
    while (start <= formats.size()) {
      auto comma = formats.find(',', start);
      std::string part = trim(formats.substr(start, comma == std::string::npos ? comma : comma - start));
      if (!part.empty()) names.push_back(part);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    inv.formats = names;
  }

  if (!fs::is_regular_file(inv.config_path)) {
    io.err << "error: config file '" << inv.config_path.string() << "' does not exist\n\n"
           << app.help();
    return kExitUsage;
  }
  return run_invocation(inv, io);
}

}  // namespace evalkit
