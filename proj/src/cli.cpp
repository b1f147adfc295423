#include "pdlopt/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>

#include "pdlopt/config.hpp"
#include "pdlopt/optimizer.hpp"
#include "pdlopt/sandbox.hpp"
#include "pdlopt/search.hpp"
#include "pdlopt/trajectory.hpp"
#include "pdlopt/yaml.hpp"

namespace pdlopt {

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BackendTransport:
    case ErrorCode::BackendAuth:
    case ErrorCode::BackendOverflow:
    case ErrorCode::BackendProtocol:
    case ErrorCode::NoRuleMatched:
    case ErrorCode::SandboxUnavailable:
      return kExitBackend;
    case ErrorCode::Io:
    case ErrorCode::DatasetSchema:
    case ErrorCode::InsufficientData:
    case ErrorCode::NoExpressions:
    case ErrorCode::NoEvidence:
    case ErrorCode::MissingTestCase:
      return kExitData;
    default:
      return kExitConfig;
  }
}

namespace {

void setup_logging(int verbosity) {
  static std::once_flag once;
  std::call_once(once, [] { spdlog::set_default_logger(spdlog::stderr_color_mt("pdlopt")); });
  spdlog::set_level(verbosity >= 2 ? spdlog::level::debug
                                   : verbosity == 1 ? spdlog::level::info
                                                    : spdlog::level::warn);
}

std::string read_file(const std::string& path, ErrorCode code) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(code, "cannot read file", path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write file", path.string());
  out << text;
}

std::string format_accuracy(double x) {
  char buf[32];
  if (x == static_cast<double>(static_cast<long long>(x))) std::snprintf(buf, sizeof buf, "%.1f", x);
  else std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

Program load_program(const std::string& path) { return parse_program(read_file(path, ErrorCode::Io)); }

std::shared_ptr<SandboxClient> make_sandbox(const std::optional<std::vector<std::string>>& configured) {
  if (configured) return std::make_shared<ProcessSandboxClient>(*configured);
  if (auto env = ProcessSandboxClient::command_from_env()) return std::make_shared<ProcessSandboxClient>(*env);
  return nullptr;
}

std::shared_ptr<Backend> make_backend(const BackendSettings& settings) {
  if (settings.kind == BackendSettings::Kind::Scripted) return ScriptedBackend::load(*settings.script);
  return std::make_shared<HttpBackend>(HttpBackend::config_from_env(settings.http));
}

std::shared_ptr<SearchClient> make_search(const SearchSettings& settings) {
  if (settings.kind == SearchSettings::Kind::Fixture) return FixtureSearchClient::load(*settings.fixture);
  WikipediaConfig cfg = settings.wikipedia;
  if (std::getenv("PDLOPT_WIKIPEDIA_URL")) cfg.base_url = WikipediaSearchClient::config_from_env().base_url;
  return std::make_shared<WikipediaSearchClient>(cfg);
}

// Everything a configured run needs, built in data-then-services order.
struct Session {
  RunConfig config;
  Splits splits;
  std::shared_ptr<Backend> backend;
  std::shared_ptr<SandboxClient> sandbox;
  std::shared_ptr<SearchClient> search;
  std::unique_ptr<ToolRegistry> tools;
  SystemPrompts prompts;
  ExecutionOptions options;

  explicit Session(RunConfig c) : config(std::move(c)) {
    const auto data = load_dataset(config.dataset, config.task);
    std::optional<std::vector<TaskInstance>> bank;
    if (config.train_bank) bank = load_dataset(*config.train_bank, config.task);
    splits = make_splits(data, config.splits, config.seed, bank);
    backend = make_backend(config.backend);
    sandbox = make_sandbox(config.sandbox_command);
    if (config.task == TaskKind::Fever) search = make_search(config.search);
    tools = std::make_unique<ToolRegistry>(make_task_registry(config.task, search, sandbox));
    prompts = config.system_prompts_dir ? SystemPrompts::load(*config.system_prompts_dir) : SystemPrompts::defaults();
    options.limits = config.limits;
    options.max_tokens = config.max_tokens;
    options.sandbox = sandbox;
  }

  AnswerEvaluator evaluator() const {
    return [task = config.task, sandbox = sandbox](std::string_view answer, const TaskInstance& inst) {
      return evaluate_answer(task, answer, inst, sandbox.get());
    };
  }

  TaskSetup setup() const {
    TaskSetup s;
    s.task = config.task;
    s.tools = tools->specs();
    s.limits = config.pattern_limits;
    s.model = config.backend.model;
    s.system_prompts = &prompts;
    return s;
  }
};

std::string verdict_lines(const std::vector<InstanceResult>& results) {
  std::string out;
  for (const auto& r : results) out += instance_result_to_json(r).dump() + "\n";
  return out;
}

int cmd_optimize(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::size_t> k,
                 std::optional<std::string> output, std::optional<std::size_t> parallelism, std::ostream& out) {
  RunConfig config = load_run_config(config_path);
  if (seed) config.seed = *seed;
  if (k) config.k = *k;
  if (output) config.output_dir = *output;
  if (parallelism) config.parallelism = *parallelism;
  Session session(std::move(config));
  const RunConfig& c = session.config;

  OptimizeSettings settings;
  settings.space = c.space;
  settings.k = c.k;
  settings.v_min = c.v_min;
  settings.v_max = c.v_max;
  settings.seed = c.seed;
  settings.parallelism = c.parallelism;
  const OptimizationResult result = optimize(settings, session.splits, session.setup(), *session.backend,
                                             *session.tools, session.evaluator(), session.options);

  const std::filesystem::path dir(c.output_dir);
  write_file(dir / "solution.pdl.yaml", serialize_program(result.emitted_program));
  write_file(dir / "experiment.jsonl", experiment_log(result));
  if (!result.test_results.empty()) write_file(dir / "verdicts-test.jsonl", verdict_lines(result.test_results));

  out << "solution: " << (dir / "solution.pdl.yaml").string() << "\n";
  out << "winner: " << candidate_to_json(result.winner).dump() << "\n";
  if (result.test_accuracy) out << "test_accuracy: " << format_accuracy(*result.test_accuracy) << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& program_path, const std::string& split, const std::string& config_path,
                 std::optional<std::string> verdicts_path, std::ostream& out) {
  const Program program = load_program(program_path);
  Session session(load_run_config(config_path));
  const std::vector<TaskInstance>* instances = nullptr;
  if (split == "test") instances = &session.splits.test;
  else if (split == "valid") instances = &session.splits.valid;
  else if (split == "train") instances = &session.splits.train;
  else throw Error(ErrorCode::Config, "split must be train, valid or test", "--split");
  const EvaluationReport report = evaluate_final(program, *instances, *session.backend, *session.tools,
                                                 session.evaluator(), session.options, session.config.parallelism);
  const std::filesystem::path path =
      verdicts_path ? std::filesystem::path(*verdicts_path)
                    : std::filesystem::path(session.config.output_dir) / ("verdicts-" + split + ".jsonl");
  write_file(path, verdict_lines(report.results));
  out << "accuracy: " << format_accuracy(report.accuracy) << "\n";
  return kExitOk;
}

int cmd_run(const std::string& program_path, const std::vector<std::string>& vars,
            const std::optional<std::string>& config_path, const std::optional<std::string>& script,
            const std::optional<std::string>& search_fixture, std::ostream& out) {
  const Program program = load_program(program_path);
  Json scope = Json::object();
  for (const auto& v : vars) {
    const auto eq = v.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::Config, "expected name=value", "--var " + v);
    scope[v.substr(0, eq)] = v.substr(eq + 1);
  }

  std::shared_ptr<Backend> backend;
  std::shared_ptr<SandboxClient> sandbox;
  std::unique_ptr<ToolRegistry> tools;
  ExecutionOptions options;
  if (config_path) {
    const RunConfig c = load_run_config(*config_path);
    backend = script ? ScriptedBackend::load(*script) : make_backend(c.backend);
    sandbox = make_sandbox(c.sandbox_command);
    std::shared_ptr<SearchClient> search;
    if (c.task == TaskKind::Fever) search = make_search(c.search);
    tools = std::make_unique<ToolRegistry>(make_task_registry(c.task, search, sandbox));
    options.limits = c.limits;
    options.max_tokens = c.max_tokens;
  } else {
    backend = script ? std::shared_ptr<Backend>(ScriptedBackend::load(*script))
                     : std::make_shared<HttpBackend>(HttpBackend::config_from_env());
    sandbox = make_sandbox(std::nullopt);
    tools = std::make_unique<ToolRegistry>(ActionFormat::Json);
    add_calc(*tools);
    if (search_fixture) add_search(*tools, FixtureSearchClient::load(*search_fixture));
    if (sandbox) add_execute(*tools, sandbox);
  }
  options.sandbox = sandbox;
  const ExecutionResult result = execute_program(program, scope, *backend, *tools, options);
  out << result.output;
  if (!result.output.empty() && result.output.back() != '\n') out << "\n";
  return kExitOk;
}

int cmd_trajectories(const std::string& task_name, const std::string& input, const std::string& output,
                     const std::string& kind_name, std::ostream& out) {
  const auto task = parse_task_kind(task_name);
  if (!task) throw Error(ErrorCode::Config, "unknown task '" + task_name + "'", "--task");
  const auto kind = parse_pattern_kind(kind_name);
  if (!kind || (*kind != PatternKind::ReAct && *kind != PatternKind::ReWOO))
    throw Error(ErrorCode::Config, "kind must be react or rewoo", "--kind");
  if (*kind == PatternKind::ReWOO && reactive_only(*task))
    throw Error(ErrorCode::ReWOOUnsupported, "rewoo trajectories cannot be built for " + task_name, "--kind");

  const auto instances = load_dataset(input, *task);
  std::string lines;
  std::size_t built = 0;
  std::size_t skipped = 0;
  for (const auto& inst : instances) {
    try {
      const Demonstration demo = build_demonstration(inst, *task, *kind);
      lines += trajectory_to_json(std::get<Trajectory>(demo.value)).dump() + "\n";
      ++built;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoExpressions && e.code() != ErrorCode::NoEvidence &&
          e.code() != ErrorCode::MissingTestCase)
        throw;
      spdlog::info("skipped {}: {}", inst.id, e.message());
      ++skipped;
    }
  }
  write_file(output, lines);
  out << "built: " << built << "\nskipped: " << skipped << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prompt-pattern and prompt-content optimizer for prompt programs", "pdlopt"};
  app.require_subcommand(1);
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "More log output on stderr (repeatable)");

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
  std::optional<std::string> output;
  std::optional<std::size_t> parallelism;
  auto* optimize_cmd = app.add_subcommand("optimize", "Search for the best prompt program");
  optimize_cmd->add_option("config", config_path, "Run configuration (YAML)")->required();
  optimize_cmd->add_option("--seed", seed, "Override the configured seed");
  optimize_cmd->add_option("--k", k, "Override the number of candidates");
  optimize_cmd->add_option("--output", output, "Override the output directory");
  optimize_cmd->add_option("--parallelism", parallelism, "Override the evaluation parallelism");

  std::string program_path;
  std::string split = "test";
  std::optional<std::string> verdicts;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a program on a data split");
  evaluate_cmd->add_option("program", program_path, "Program file (.pdl.yaml)")->required();
  evaluate_cmd->add_option("--config", config_path, "Run configuration (YAML)")->required();
  evaluate_cmd->add_option("--split", split, "train, valid or test")->capture_default_str();
  evaluate_cmd->add_option("--verdicts", verdicts, "Per-instance verdict JSONL (default: <output_dir>/verdicts-<split>.jsonl)");

  std::vector<std::string> vars;
  std::optional<std::string> run_config;
  std::optional<std::string> script;
  std::optional<std::string> search_fixture;
  auto* run_cmd = app.add_subcommand("run", "Execute a program and print its output");
  run_cmd->add_option("program", program_path, "Program file (.pdl.yaml)")->required();
  run_cmd->add_option("--var", vars, "Initial binding name=value (repeatable)");
  run_cmd->add_option("--config", run_config, "Take backend and tools from a run configuration");
  run_cmd->add_option("--script", script, "Use a scripted backend with these rules");
  run_cmd->add_option("--search-fixture", search_fixture, "Register Search backed by a fixture file");

  std::string task;
  std::string input;
  std::string traj_output;
  std::string kind = "react";
  auto* traj_cmd = app.add_subcommand("trajectories", "Build demonstration trajectories from a dataset");
  traj_cmd->add_option("--task", task, "gsm8k, gsm_hard, fever or mbpp")->required();
  traj_cmd->add_option("--input", input, "Dataset JSONL")->required();
  traj_cmd->add_option("--output", traj_output, "Trajectory JSONL")->required();
  traj_cmd->add_option("--kind", kind, "react or rewoo")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  setup_logging(verbosity);

  try {
    if (*optimize_cmd) return cmd_optimize(config_path, seed, k, output, parallelism, out);
    if (*evaluate_cmd) return cmd_evaluate(program_path, split, config_path, verdicts, out);
    if (*run_cmd) return cmd_run(program_path, vars, run_config, script, search_fixture, out);
    if (*traj_cmd) return cmd_trajectories(task, input, traj_output, kind, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace pdlopt
