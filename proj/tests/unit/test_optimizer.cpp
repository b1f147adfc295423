#include <catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <random>

#include "pdlopt/optimizer.hpp"
#include "pdlopt/search.hpp"
#include "pdlopt/trajectory.hpp"
#include "test_support.hpp"

using namespace pdlopt;
using namespace pdlopt::testing;

namespace {

std::vector<TaskInstance> valid_set(std::size_t n) {
  std::vector<TaskInstance> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({"v" + std::to_string(i), "Question " + std::to_string(i) + "?", std::to_string(i), Json::object()});
  return out;
}

std::vector<Candidate> indexed(std::size_t k) {
  std::vector<Candidate> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i].index = i;
  return out;
}

SearchSpace gsm_space() {
  SearchSpace s;
  s.patterns = {PatternKind::ZeroShot, PatternKind::CoT, PatternKind::ReWOO, PatternKind::ReAct};
  s.num_demonstrations = {0, 3, 5};
  s.system_prompts = {SystemPromptStyle::GraniteTools, SystemPromptStyle::Llama3, SystemPromptStyle::GraniteLlama};
  s.instructions = {"Solve."};
  return s;
}

AnswerEvaluator gsm_evaluator() {
  return [](std::string_view answer, const TaskInstance& x) { return eval_gsm8k(answer, x.answer); };
}

std::vector<TaskInstance> gsm_bank() { return load_dataset(fixture("data/gsm8k_small.jsonl").string(), TaskKind::Gsm8k); }

TaskSetup gsm_setup() {
  TaskSetup s;
  s.task = TaskKind::Gsm8k;
  s.bank = gsm_bank();
  ToolRegistry r;
  add_calc(r);
  s.tools = r.specs();
  return s;
}

ToolRegistry calc_tools() {
  ToolRegistry r;
  add_calc(r);
  return r;
}

// Scripted rules answering the first `correct` instances of `xs` correctly.
std::vector<ScriptedRule> answer_rules(const std::vector<TaskInstance>& xs, std::size_t correct) {
  std::vector<ScriptedRule> rules;
  for (std::size_t i = 0; i < xs.size(); ++i)
    rules.push_back({{"Q: " + xs[i].question + "\n"}, std::nullopt, "The answer is " + (i < correct ? xs[i].answer : "-1")});
  return rules;
}

class FailingBackend final : public Backend {
 public:
  explicit FailingBackend(ErrorCode code) : code_(code) {}
  ChatResponse complete(const ChatRequest&) override { throw Error(code_, "down"); }

 private:
  ErrorCode code_;
};

}  // namespace

TEST_CASE("sampling examples", "[optimizer][sampling]") {
  SearchSpace s;
  s.patterns = {PatternKind::ZeroShot, PatternKind::CoT};
  s.num_demonstrations = {0, 3};
  s.system_prompts = {SystemPromptStyle::GraniteTools};
  s.instructions = {"Solve."};
  const auto cs = sample_candidates(s, 4, 10, 7);
  REQUIRE(cs.size() == 4);
  CHECK(std::any_of(cs.begin(), cs.end(), [](const Candidate& c) { return c.pattern == PatternKind::ZeroShot && c.n == 0; }));
  const auto one = sample_candidates(s, 1, 10, 99);
  REQUIRE(one.size() == 1);
  CHECK(one[0].pattern == PatternKind::ZeroShot);
  CHECK(one[0].n == 0);
  CHECK(sample_candidates(s, 4, 10, 7) == cs);
  CHECK(sample_candidates(gsm_space(), 50, 10, 1) != sample_candidates(gsm_space(), 50, 10, 2));
}

TEST_CASE("sampled candidates satisfy their invariants", "[optimizer][sampling][property]") {
  for (bool json_tools : {true, false}) {
    auto space = gsm_space();
    space.json_tools = json_tools;
    space.instructions = {"A", "B"};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto cs = sample_candidates(space, 100, 7, seed);
      REQUIRE(cs.size() == 100);
      for (std::size_t i = 0; i < cs.size(); ++i) {
        const auto& c = cs[i];
        CHECK(c.index == i);
        CHECK(std::count(space.num_demonstrations.begin(), space.num_demonstrations.end(), c.n) == 1);
        CHECK(c.demo_ids.size() == static_cast<std::size_t>(c.n));
        for (auto id : c.demo_ids) CHECK(id < 7);
        if (c.pattern == PatternKind::ZeroShot) CHECK(c.n == 0);
        CHECK(c.system_prompt.has_value() == (c.pattern == PatternKind::ReAct && json_tools));
      }
    }
  }
}

TEST_CASE("candidate streams are independent of k", "[optimizer][sampling][property]") {
  const auto few = sample_candidates(gsm_space(), 10, 9, 5);
  const auto many = sample_candidates(gsm_space(), 40, 9, 5);
  for (std::size_t i = 0; i < few.size(); ++i) CHECK(few[i] == many[i]);
  CHECK(candidate_seed(5, 3) == candidate_seed(5, 3));
  CHECK(candidate_seed(5, 3) != candidate_seed(5, 4));
}

TEST_CASE("zero-shot bias", "[optimizer][sampling][property]") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto cs = sample_candidates(gsm_space(), 8, 5, seed);
    REQUIRE(std::any_of(cs.begin(), cs.end(), [](const Candidate& c) { return c.pattern == PatternKind::ZeroShot && c.n == 0; }));
  }
}

TEST_CASE("search space validation", "[optimizer]") {
  auto s = gsm_space();
  s.patterns.clear();
  CHECK(error_code([&] { validate(s); }) == ErrorCode::EmptySpace);
  s = gsm_space();
  s.instructions.clear();
  CHECK(error_code([&] { sample_candidates(s, 3, 5, 0); }) == ErrorCode::EmptySpace);
  s = gsm_space();
  s.reactive_only = true;
  CHECK(error_code([&] { validate(s); }) == ErrorCode::ReWOOUnsupported);
  s = gsm_space();
  s.num_demonstrations = {-1};
  CHECK(error_code([&] { validate(s); }) == ErrorCode::InvalidArgument);
  CHECK(error_code([] { sample_candidates(gsm_space(), 3, 4, 0); }) == ErrorCode::InsufficientData);
}

TEST_CASE("halving schedule for 100 candidates", "[optimizer][halving]") {
  const auto start = std::chrono::steady_clock::now();
  const auto valid = valid_set(1024);
  std::atomic<std::size_t> calls{0};
  LossFn oracle = [&](const Candidate& c, std::span<const TaskInstance>) {
    ++calls;
    return -static_cast<double>((c.index * 37) % 100) / 100.0;
  };
  const auto result = successive_halving(indexed(100), valid, 16, 1024, oracle);
  std::vector<std::size_t> survivors, sizes;
  for (const auto& r : result.rounds) {
    survivors.push_back(r.survivors.size());
    sizes.push_back(r.subset_size);
  }
  CHECK(result.rounds.size() == 6);
  CHECK(survivors == std::vector<std::size_t>{50, 25, 12, 6, 3, 1});
  CHECK(sizes == std::vector<std::size_t>{16, 32, 64, 128, 256, 512});
  CHECK(calls == 100 + 50 + 25 + 12 + 6 + 3);
  CHECK(result.rounds.back().survivors.front() == result.winner.index);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(60));
}

TEST_CASE("halving edge cases", "[optimizer][halving]") {
  const auto valid = valid_set(32);
  LossFn none = [](const Candidate&, std::span<const TaskInstance>) -> double { FAIL("no evaluation expected"); return 0; };
  const auto single = successive_halving(indexed(1), valid, 4, 32, none);
  CHECK(single.rounds.empty());
  CHECK(single.winner.index == 0);

  LossFn two = [](const Candidate& c, std::span<const TaskInstance> subset) {
    CHECK(subset.size() == 4);
    return c.index == 0 ? -0.1 : -0.9;
  };
  const auto pair = successive_halving(indexed(2), valid, 4, 32, two);
  CHECK(pair.winner.index == 1);
  REQUIRE(pair.rounds.size() == 1);
  CHECK(pair.rounds[0].losses == std::vector<std::pair<std::size_t, double>>{{0, -0.1}, {1, -0.9}});

  CHECK(error_code([&] { successive_halving({}, valid, 4, 32, two); }) == ErrorCode::InvalidArgument);
  CHECK(error_code([&] { successive_halving(indexed(2), valid, 0, 32, two); }) == ErrorCode::InvalidArgument);
  CHECK(error_code([&] { successive_halving(indexed(2), valid, 8, 4, two); }) == ErrorCode::InvalidArgument);
  CHECK(error_code([&] { successive_halving(indexed(2), valid, 4, 33, two); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("round count and subset nesting", "[optimizer][halving][property]") {
  const auto valid = valid_set(64);
  for (std::size_t k = 2; k <= 128; ++k) {
    std::mutex m;
    std::vector<std::size_t> seen;
    LossFn oracle = [&](const Candidate& c, std::span<const TaskInstance> subset) {
      std::lock_guard lock(m);
      REQUIRE(subset.data() == valid.data());
      seen.push_back(subset.size());
      return -static_cast<double>(c.index % 7) / 7.0;
    };
    const auto result = successive_halving(indexed(k), valid, 3, 40, oracle);
    REQUIRE(result.rounds.size() == static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(k)))));
    CHECK(std::is_sorted(seen.begin(), seen.end()));
    for (std::size_t r = 1; r < result.rounds.size(); ++r) {
      CHECK(result.rounds[r].survivors.size() == result.rounds[r - 1].survivors.size() / 2);
      CHECK(result.rounds[r].subset_size == std::min<std::size_t>(40, 2 * result.rounds[r - 1].subset_size));
    }
  }
}

TEST_CASE("oracle equivalence", "[optimizer][halving][property]") {
  const auto start = std::chrono::steady_clock::now();
  const auto valid = valid_set(32);
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    std::vector<double> score(k);
    for (auto& s : score) s = -static_cast<double>(std::uniform_int_distribution<int>(0, 5)(rng)) / 5.0;
    LossFn oracle = [&](const Candidate& c, std::span<const TaskInstance>) { return score[c.index]; };
    const auto v_min = std::uniform_int_distribution<std::size_t>(1, 32)(rng);
    const auto result = successive_halving(indexed(k), valid, v_min, 32, oracle);
    const auto best = static_cast<std::size_t>(std::min_element(score.begin(), score.end()) - score.begin());
    REQUIRE(result.winner.index == best);
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(30));
}

TEST_CASE("ties go to the lower candidate index", "[optimizer][halving][property]") {
  const auto valid = valid_set(16);
  LossFn flat = [](const Candidate&, std::span<const TaskInstance>) { return -0.5; };
  const auto result = successive_halving(indexed(10), valid, 2, 16, flat);
  CHECK(result.winner.index == 0);
  CHECK(result.rounds[0].survivors == std::vector<std::size_t>{0, 1, 2, 3, 4});

  auto shuffled = indexed(10);
  std::mt19937 rng(3);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto again = successive_halving(shuffled, valid, 2, 16, flat);
  CHECK(again.winner.index == 0);
  CHECK(again.rounds[0].survivors == result.rounds[0].survivors);
}

TEST_CASE("rounds do not depend on parallelism", "[optimizer][halving][property]") {
  const auto valid = valid_set(64);
  LossFn oracle = [](const Candidate& c, std::span<const TaskInstance> subset) {
    return -static_cast<double>((c.index * 13 + subset.size()) % 11) / 11.0;
  };
  const auto serial = successive_halving(indexed(37), valid, 4, 64, oracle, 1);
  for (std::size_t p : {2, 4, 16}) {
    const auto parallel = successive_halving(indexed(37), valid, 4, 64, oracle, p);
    CHECK(parallel.rounds == serial.rounds);
    CHECK(parallel.winner == serial.winner);
  }
}

TEST_CASE("candidate loss", "[optimizer][loss]") {
  const auto xs = valid_set(16);
  const auto setup = gsm_setup();
  const auto tools = calc_tools();
  Candidate zero_shot;
  for (auto [correct, expected] : std::vector<std::pair<std::size_t, double>>{{16, -1.0}, {8, -0.5}, {0, 0.0}}) {
    RecordingBackend backend(answer_rules(xs, correct));
    const double loss = candidate_loss(zero_shot, xs, setup, backend, tools, gsm_evaluator());
    CHECK(loss == expected);
    CHECK_FALSE((std::signbit(loss) && loss == 0.0));
  }
  RecordingBackend silent({});
  CHECK(candidate_loss(zero_shot, xs, setup, silent, tools, gsm_evaluator()) == 0.0);
  FailingBackend down(ErrorCode::BackendTransport);
  CHECK(error_code([&] { candidate_loss(zero_shot, xs, setup, down, tools, gsm_evaluator()); }) ==
        ErrorCode::BackendTransport);
  FailingBackend denied(ErrorCode::BackendAuth);
  CHECK(error_code([&] { candidate_loss(zero_shot, xs, setup, denied, tools, gsm_evaluator()); }) == ErrorCode::BackendAuth);
  CHECK(error_code([&] { candidate_loss(zero_shot, {}, setup, silent, tools, gsm_evaluator()); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("loss stays in bounds", "[optimizer][loss][property]") {
  const auto xs = valid_set(12);
  const auto setup = gsm_setup();
  const auto tools = calc_tools();
  std::mt19937 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<ScriptedRule> rules;
    for (const auto& x : xs) {
      const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
      if (kind == 0) rules.push_back({{"Q: " + x.question + "\n"}, std::nullopt, "The answer is " + x.answer});
      if (kind == 1) rules.push_back({{"Q: " + x.question + "\n"}, std::nullopt, "garbage"});
    }
    RecordingBackend backend(rules);
    const double loss = candidate_loss(Candidate{}, xs, setup, backend, tools, gsm_evaluator());
    CHECK(loss >= -1.0);
    CHECK(loss <= 0.0);
  }
}

TEST_CASE("cached loss reuses verdicts on growing prefixes", "[optimizer][loss]") {
  const auto xs = valid_set(16);
  RecordingBackend backend(answer_rules(xs, 12));
  const auto tools = calc_tools();
  CachedLoss cached(gsm_setup(), backend, tools, gsm_evaluator());
  Candidate c;
  const std::span<const TaskInstance> all(xs);
  CHECK(cached(c, all.first(4)) == -1.0);
  CHECK(cached.executions() == 4);
  CHECK(cached(c, all.first(8)) == -1.0);
  CHECK(cached.executions() == 8);
  CHECK(cached(c, all) == -0.75);
  CHECK(cached.executions() == 16);
  CHECK(backend.calls() == 16);
  Candidate other;
  other.index = 1;
  CHECK(cached.as_fn()(other, all.first(2)) == -1.0);
  CHECK(cached.executions() == 18);

  RecordingBackend fresh(answer_rules(xs, 12));
  CHECK(candidate_loss(c, all, gsm_setup(), fresh, tools, gsm_evaluator()) == -0.75);
}

TEST_CASE("usable bank and demonstrations", "[optimizer]") {
  const auto with_gap = load_dataset(fixture("data/gsm8k_noexpr.jsonl").string(), TaskKind::Gsm8k);
  std::size_t skipped = 0;
  const auto usable = usable_bank(with_gap, TaskKind::Gsm8k, {PatternKind::CoT, PatternKind::ReAct}, &skipped);
  CHECK(skipped >= 1);
  CHECK(usable.size() + skipped == with_gap.size());
  CHECK(usable_bank(with_gap, TaskKind::Gsm8k, {PatternKind::ZeroShot, PatternKind::CoT}, &skipped).size() == with_gap.size());
  CHECK(skipped == 0);

  TaskSetup mbpp;
  mbpp.task = TaskKind::Mbpp;
  mbpp.bank = usable_bank(load_dataset(fixture("data/mbpp_small.jsonl").string(), TaskKind::Mbpp), TaskKind::Mbpp,
                          {PatternKind::ReAct});
  Candidate react;
  react.pattern = PatternKind::ReAct;
  react.n = 2;
  react.demo_ids = {1, 0};
  const auto demos = materialize_demos(react, mbpp);
  REQUIRE(demos.size() == 4);
  CHECK(std::get<Trajectory>(demos[0].value) == refinement_examples()[0]);
  CHECK(std::get<Trajectory>(demos[1].value) == refinement_examples()[1]);
  CHECK(std::get<Trajectory>(demos[2].value).question == mbpp.bank[1].question);
  Candidate cot = react;
  cot.pattern = PatternKind::CoT;
  CHECK(materialize_demos(cot, mbpp).size() == 2);
}

TEST_CASE("emitted programs", "[optimizer][emit]") {
  const auto setup = gsm_setup();
  Candidate cot;
  cot.pattern = PatternKind::CoT;
  cot.n = 2;
  cot.demo_ids = {0, 2};
  cot.instruction = "Solve.";
  const auto cot_program = emit_optimized_program(cot, materialize_demos(cot, setup), setup);
  const auto yaml = serialize_program(cot_program);
  CHECK(yaml.find("What is fifteen more than a quarter of 48?") != std::string::npos);
  CHECK(yaml.find("A shop has 1,200 pens and sells 200.") != std::string::npos);
  CHECK(parse_program(yaml) == cot_program);

  Candidate zs;
  zs.instruction = "Solve.";
  const auto zs_yaml = serialize_program(emit_optimized_program(zs, {}, setup));
  CHECK(zs_yaml.find("demonstrations") == std::string::npos);

  Candidate react;
  react.pattern = PatternKind::ReAct;
  react.n = 1;
  react.demo_ids = {1};
  react.instruction = "Solve.";
  react.system_prompt = SystemPromptStyle::Llama3;
  const auto react_program = candidate_program(react, setup);
  bool calls_library = false;
  for_each_block(react_program.root, [&](const Block& b) {
    if (const auto* c = b.as<CallBlock>()) calls_library = calls_library || c->function == "react";
  });
  CHECK(calls_library);
  CHECK(parse_program(serialize_program(react_program)) == react_program);
}

TEST_CASE("emitted programs reproduce the candidate", "[optimizer][emit][property]") {
  const auto setup = gsm_setup();
  const auto tools = calc_tools();
  auto space = gsm_space();
  space.num_demonstrations = {0, 1, 2};
  const auto cs = sample_candidates(space, 24, setup.bank.size(), 4);
  const auto xs = gsm_bank();
  const std::string reply =
      "Tho: go\nAct: {\"action\": \"Calc\", \"arguments\": {\"expr\": \"48/4\"}}\n"
      "Act: {\"action\": \"Finish\", \"arguments\": {\"answer\": \"12\"}}";
  for (const auto& c : cs) {
    const auto direct = candidate_program(c, setup);
    const auto reparsed = parse_program(serialize_program(direct));
    for (const auto& x : xs) {
      SequenceBackend a({reply});
      SequenceBackend b({reply});
      const auto ra = execute_program(direct, Json{{"question", x.question}}, a, tools);
      const auto rb = execute_program(reparsed, Json{{"question", x.question}}, b, tools);
      CHECK(ra.output == rb.output);
      CHECK(program_answer(ra) == program_answer(rb));
    }
  }
}

TEST_CASE("final evaluation", "[optimizer][evaluate]") {
  const auto xs = valid_set(4);
  const auto tools = calc_tools();
  const auto program = candidate_program(Candidate{}, gsm_setup());
  RecordingBackend all(answer_rules(xs, 4));
  CHECK(evaluate_final(program, xs, all, tools, gsm_evaluator()).accuracy == 1.0);
  RecordingBackend three(answer_rules(xs, 3));
  const auto report = evaluate_final(program, xs, three, tools, gsm_evaluator(), {}, 2);
  CHECK(report.accuracy == 0.75);
  REQUIRE(report.results.size() == 4);
  CHECK(report.results[3].id == "v3");
  CHECK_FALSE(report.results[3].correct);
  CHECK(report.results[3].extracted == "-1");
  CHECK(instance_result_to_json(report.results[0])["correct"] == true);
  CHECK(error_code([&] { evaluate_final(program, {}, all, tools, gsm_evaluator()); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("optimize end to end with greedy requests", "[optimizer]") {
  const auto xs = valid_set(16);
  Splits splits;
  splits.valid.assign(xs.begin(), xs.begin() + 12);
  splits.test.assign(xs.begin() + 12, xs.end());
  splits.train = gsm_bank();
  OptimizeSettings settings;
  settings.space = gsm_space();
  settings.space.num_demonstrations = {0, 1};
  settings.k = 12;
  settings.v_min = 3;
  settings.seed = 9;
  settings.parallelism = 3;
  RecordingBackend backend(answer_rules(xs, 16), "I am not sure.");
  const auto tools = calc_tools();
  const auto result = optimize(settings, splits, gsm_setup(), backend, tools, gsm_evaluator());
  CHECK(result.rounds.size() == 3);
  CHECK(result.test_accuracy.has_value());
  CHECK(result.test_results.size() == 4);
  for (const auto& r : backend.requests()) REQUIRE(r.temperature == 0.0);
  CHECK(parse_program(serialize_program(result.emitted_program)) == result.emitted_program);

  RecordingBackend again(answer_rules(xs, 16), "I am not sure.");
  settings.parallelism = 1;
  const auto second = optimize(settings, splits, gsm_setup(), again, tools, gsm_evaluator());
  CHECK(experiment_log(second) == experiment_log(result));
  const auto log = experiment_log(result);
  CHECK(log.find("{\"type\":\"round\",\"round\":1") == 0);
  CHECK(log.find("{\"type\":\"result\"") != std::string::npos);
}
