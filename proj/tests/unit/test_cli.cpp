#include <catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "pdlopt/cli.hpp"
#include "pdlopt/config.hpp"
#include "pdlopt/optimizer.hpp"
#include "pdlopt/program.hpp"
#include "pdlopt/tasks.hpp"
#include "pdlopt/trajectory.hpp"
#include "pdlopt/yaml.hpp"
#include "test_support.hpp"

using namespace pdlopt;
using namespace pdlopt::testing;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pdlopt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() / ("pdlopt_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

const char* kZeroShotProgram =
    "text:\n"
    "- \"Q: ${ question }\\n\"\n"
    "- model: scripted-model\n";

}  // namespace

TEST_CASE("exit code mapping", "[cli]") {
  CHECK(exit_code_for(ErrorCode::Config) == kExitConfig);
  CHECK(exit_code_for(ErrorCode::UnboundPath) == kExitConfig);
  CHECK(exit_code_for(ErrorCode::BackendTransport) == kExitBackend);
  CHECK(exit_code_for(ErrorCode::SandboxUnavailable) == kExitBackend);
  CHECK(exit_code_for(ErrorCode::Io) == kExitData);
  CHECK(exit_code_for(ErrorCode::DatasetSchema) == kExitData);
}

TEST_CASE("usage errors", "[cli]") {
  CHECK(cli({}).code == kExitConfig);
  CHECK(cli({"frobnicate"}).code == kExitConfig);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"optimize"}).code == kExitConfig);
}

TEST_CASE("optimize writes a solution", "[cli][optimize]") {
  TempDir dir;
  const auto run = cli({"optimize", fixture("configs/e2e.yaml").string(), "--output", dir.path().string()});
  INFO(run.err);
  REQUIRE(run.code == kExitOk);
  CHECK(run.out.find("test_accuracy: 1.0\n") != std::string::npos);
  CHECK(run.out.find("\"pattern\":\"cot\"") != std::string::npos);
  const auto solution = read_file(dir / "solution.pdl.yaml");
  CHECK_NOTHROW(parse_program(solution));
  CHECK(fs::exists(dir / "experiment.jsonl"));
  CHECK(fs::exists(dir / "verdicts-test.jsonl"));

  TempDir again;
  REQUIRE(cli({"optimize", fixture("configs/e2e.yaml").string(), "--output", again.path().string(), "--parallelism",
               "3"})
              .code == kExitOk);
  CHECK(read_file(again / "experiment.jsonl") == read_file(dir / "experiment.jsonl"));
  CHECK(read_file(again / "solution.pdl.yaml") == solution);
}

TEST_CASE("optimize rejects bad configurations", "[cli][optimize]") {
  TempDir dir;
  auto text = read_file(fixture("configs/e2e.yaml"));
  const auto base = fixture("configs").string();
  auto absolute = [&](std::string t) {
    for (const char* key : {"dataset: ", "train_bank: ", "script: "}) {
      const auto at = t.find(key) + std::string(key).size();
      t.insert(at, base + "/");
    }
    return t;
  };
  auto replace = [](std::string t, const std::string& from, const std::string& to) {
    t.replace(t.find(from), from.size(), to);
    return t;
  };

  write(dir / "vmin.yaml", replace(absolute(text), "v_min: 2", "v_min: 9"));
  const auto vmin = cli({"optimize", (dir / "vmin.yaml").string()});
  CHECK(vmin.code == kExitConfig);
  CHECK(vmin.err.find("v_min") != std::string::npos);

  write(dir / "unknown.yaml", absolute(text) + "flavour: spicy\n");
  CHECK(cli({"optimize", (dir / "unknown.yaml").string()}).code == kExitConfig);

  auto http = absolute(text);
  http = replace(http, "kind: scripted", "kind: http\n  base_url: http://127.0.0.1:1/v1\n  retries: 0\n  timeout_seconds: 2");
  write(dir / "http.yaml", http);
  const auto unreachable = cli({"optimize", (dir / "http.yaml").string(), "--output", (dir / "out").string()});
  CHECK(unreachable.code == kExitBackend);

  write(dir / "missing.yaml", replace(absolute(text), "gsm8k_e2e.jsonl", "nope.jsonl"));
  CHECK(cli({"optimize", (dir / "missing.yaml").string()}).code == kExitData);
  CHECK(cli({"optimize", (dir / "absent.yaml").string()}).code == kExitData);
}

TEST_CASE("evaluate reports accuracy and verdicts", "[cli][evaluate]") {
  TempDir dir;
  const auto data = fixture("data/gsm8k_e2e.jsonl").string();
  const auto splits = make_splits(load_dataset(data, TaskKind::Gsm8k), {0, 1, 4}, 0);
  REQUIRE(splits.test.size() == 4);
  Json rules = Json::array();
  for (std::size_t i = 0; i < splits.test.size(); ++i) {
    const auto& x = splits.test[i];
    rules.push_back({{"contains", Json::array({x.question})}, {"response", "The answer is " + (i < 3 ? x.answer : "0")}});
  }
  write(dir / "rules.json", Json{{"rules", rules}}.dump());
  write(dir / "eval.yaml", "task: gsm8k\ndataset: " + data +
                               "\nsplits: {valid: 1, test: 4}\nv_min: 1\nseed: 0\n"
                               "backend: {kind: scripted, model: scripted-model, script: rules.json}\n"
                               "output_dir: out\n");
  write(dir / "zs.pdl.yaml", kZeroShotProgram);

  const auto run = cli({"evaluate", (dir / "zs.pdl.yaml").string(), "--config", (dir / "eval.yaml").string()});
  INFO(run.err);
  REQUIRE(run.code == kExitOk);
  CHECK(run.out == "accuracy: 0.75\n");
  std::istringstream verdicts(read_file(dir / "out/verdicts-test.jsonl"));
  std::vector<Json> lines;
  for (std::string line; std::getline(verdicts, line);) lines.push_back(Json::parse(line));
  REQUIRE(lines.size() == 4);
  CHECK(lines[3]["correct"] == false);
  CHECK(lines[3]["id"] == splits.test[3].id);

  TaskSetup setup;
  setup.task = TaskKind::Gsm8k;
  setup.model = "scripted-model";
  write(dir / "emitted.pdl.yaml", serialize_program(candidate_program(Candidate{}, setup)));
  const auto emitted = cli({"evaluate", (dir / "emitted.pdl.yaml").string(), "--config", (dir / "eval.yaml").string()});
  INFO(emitted.err);
  CHECK(emitted.out == "accuracy: 0.75\n");

  const auto custom = cli({"evaluate", (dir / "zs.pdl.yaml").string(), "--config", (dir / "eval.yaml").string(),
                           "--verdicts", (dir / "v.jsonl").string()});
  CHECK(custom.code == kExitOk);
  CHECK(fs::exists(dir / "v.jsonl"));
  CHECK(cli({"evaluate", (dir / "zs.pdl.yaml").string(), "--config", (dir / "eval.yaml").string(), "--split", "dev"})
            .code == kExitConfig);
  CHECK(cli({"evaluate", (dir / "none.pdl.yaml").string(), "--config", (dir / "eval.yaml").string()}).code == kExitData);
  write(dir / "bad.pdl.yaml", "text:\n- frobnicate: 1\n");
  CHECK(cli({"evaluate", (dir / "bad.pdl.yaml").string(), "--config", (dir / "eval.yaml").string()}).code ==
        kExitConfig);
}

TEST_CASE("run executes a program", "[cli][run]") {
  TempDir dir;
  write(dir / "rules.json",
        R"({"rules": [{"contains": ["What is 48/4?"], "response": "{\"action\": \"Calc\", \"arguments\": {\"expr\": \"48/4\"}}"},
                      {"contains": ["Hello Ada"], "response": "Hi!"}]})");
  const auto calc_run = cli({"run", fixture("programs/calc_action.pdl.yaml").string(), "--script", (dir / "rules.json").string(),
                         "--var", "tools=[Calc]"});
  INFO(calc_run.err);
  REQUIRE(calc_run.code == kExitOk);
  CHECK(calc_run.out.size() >= 3);
  CHECK(calc_run.out.substr(calc_run.out.size() - 3) == "12\n");

  write(dir / "greet.pdl.yaml", "text:\n- \"Hello ${ name }\\n\"\n- model: scripted-model\n");
  const auto greet = cli({"run", (dir / "greet.pdl.yaml").string(), "--script", (dir / "rules.json").string(), "--var",
                          "name=Ada"});
  CHECK(greet.code == kExitOk);
  CHECK(greet.out == "Hello Ada\nHi!\n");

  const auto unbound = cli({"run", (dir / "greet.pdl.yaml").string(), "--script", (dir / "rules.json").string()});
  CHECK(unbound.code == kExitConfig);
  CHECK(unbound.err.find("name") != std::string::npos);
  CHECK(cli({"run", (dir / "greet.pdl.yaml").string(), "--script", (dir / "rules.json").string(), "--var", "=x"}).code ==
        kExitConfig);
  CHECK(cli({"run", (dir / "greet.pdl.yaml").string(), "--script", (dir / "rules.json").string(), "--var", "name=Bob"})
            .code == kExitBackend);
}

TEST_CASE("trajectories are built from datasets", "[cli][trajectories]") {
  TempDir dir;
  const auto out = (dir / "t.jsonl").string();
  const auto gsm = cli({"trajectories", "--task", "gsm8k", "--input", fixture("data/gsm8k_small.jsonl").string(),
                        "--output", out});
  REQUIRE(gsm.code == kExitOk);
  CHECK(gsm.out == "built: 3\nskipped: 0\n");
  std::istringstream lines(read_file(out));
  std::string first;
  std::getline(lines, first);
  const auto dataset = load_dataset(fixture("data/gsm8k_small.jsonl").string(), TaskKind::Gsm8k);
  CHECK(trajectory_from_json(Json::parse(first)) == build_gsm8k_trajectory(dataset[0], PatternKind::ReAct));

  const auto gaps = cli({"trajectories", "--task", "gsm8k", "--input", fixture("data/gsm8k_noexpr.jsonl").string(),
                         "--output", out, "--kind", "rewoo"});
  CHECK(gaps.code == kExitOk);
  CHECK(gaps.out.find("skipped: 0") == std::string::npos);

  CHECK(cli({"trajectories", "--task", "mbpp", "--input", fixture("data/mbpp_small.jsonl").string(), "--output", out,
             "--kind", "rewoo"})
            .code == kExitConfig);
  CHECK(cli({"trajectories", "--task", "chess", "--input", fixture("data/mbpp_small.jsonl").string(), "--output", out})
            .code == kExitConfig);
  CHECK(cli({"trajectories", "--task", "fever", "--input", (dir / "none.jsonl").string(), "--output", out}).code ==
        kExitData);
}

TEST_CASE("run configurations", "[cli][config]") {
  const auto c = load_run_config(fixture("configs/e2e.yaml").string());
  CHECK(c.task == TaskKind::Gsm8k);
  CHECK(c.k == 6);
  CHECK(c.seed == 2);
  CHECK(c.splits.valid == 8);
  CHECK(fs::path(c.dataset).is_absolute() == fs::path(fixture("configs")).is_absolute());
  CHECK(c.space.patterns == std::vector<PatternKind>{PatternKind::ZeroShot, PatternKind::CoT});

  auto err = [](const std::string& yaml) {
    try {
      parse_run_config(yaml_to_json(yaml));
    } catch (const Error& e) {
      return std::string(e.path());
    }
    return std::string("<none>");
  };
  const std::string ok = "task: gsm8k\ndataset: d.jsonl\nsplits: {valid: 4}\nv_min: 1\nbackend: {kind: scripted, script: s.json}\n";
  CHECK(err(ok) == "<none>");
  CHECK(err("dataset: d.jsonl\nsplits: {valid: 4}\nbackend: {kind: http}\n") == "task");
  CHECK(err(ok + "search_space: {patterns: [tot]}\n") == "search_space.patterns");
  CHECK(err(ok + "v_max: 8\n") == "v_max");
  CHECK(err("task: mbpp\ndataset: d.jsonl\nsplits: {valid: 4}\nbackend: {kind: http}\nsearch_space: {patterns: [rewoo]}\n")
            .rfind("search_space", 0) == 0);
  CHECK(err("task: gsm8k\ndataset: d.jsonl\nsplits: {valid: 4}\nv_min: 1\nbackend: {kind: carrier_pigeon}\n") == "backend.kind");
  CHECK(default_search_space(TaskKind::Mbpp).patterns ==
        std::vector<PatternKind>{PatternKind::ZeroShot, PatternKind::CoT, PatternKind::ReAct});
}
