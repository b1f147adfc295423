#include "pdlopt/optimizer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "pdlopt/detail/rng.hpp"
#include "pdlopt/error.hpp"
#include "pdlopt/trajectory.hpp"

namespace pdlopt {

namespace {

// Runs job(i) for i in [0, n) on up to `parallelism` threads. The first
// exception is rethrown after all workers stop.
template <typename Job>
void parallel_for(std::size_t n, std::size_t parallelism, Job&& job) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(parallelism, 1), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

double loss_from(std::size_t correct, std::size_t total) {
  if (correct == 0) return 0.0;
  return -static_cast<double>(correct) / static_cast<double>(total);
}

bool fatal(ErrorCode code) { return is_backend_unavailable(code) || code == ErrorCode::SandboxUnavailable; }

}  // namespace

void validate(const SearchSpace& space) {
  if (space.patterns.empty()) throw Error(ErrorCode::EmptySpace, "no patterns", "patterns");
  if (space.num_demonstrations.empty())
    throw Error(ErrorCode::EmptySpace, "no demonstration counts", "num_demonstrations");
  if (space.instructions.empty()) throw Error(ErrorCode::EmptySpace, "no instructions", "instructions");
  const bool has_react = std::count(space.patterns.begin(), space.patterns.end(), PatternKind::ReAct) > 0;
  if (has_react && space.json_tools && space.system_prompts.empty())
    throw Error(ErrorCode::EmptySpace, "no system prompt styles", "system_prompts");
  if (space.reactive_only && std::count(space.patterns.begin(), space.patterns.end(), PatternKind::ReWOO) > 0)
    throw Error(ErrorCode::ReWOOUnsupported, "rewoo cannot be searched for a reactive-only task", "patterns");
  for (int n : space.num_demonstrations)
    if (n < 0) throw Error(ErrorCode::InvalidArgument, "demonstration counts must be non-negative", "num_demonstrations");
}

Json candidate_to_json(const Candidate& c) {
  Json out = Json::object();
  out["index"] = c.index;
  out["pattern"] = to_string(c.pattern);
  out["n"] = c.n;
  out["demo_ids"] = c.demo_ids;
  out["system_prompt"] = c.system_prompt ? Json(to_string(*c.system_prompt)) : Json(nullptr);
  out["instruction"] = c.instruction;
  return out;
}

std::uint64_t candidate_seed(std::uint64_t master_seed, std::size_t index) noexcept {
  return detail::splitmix64(detail::splitmix64(master_seed) ^ static_cast<std::uint64_t>(index));
}

std::vector<Candidate> sample_candidates(const SearchSpace& space, std::size_t k, std::size_t train_bank_size,
                                         std::uint64_t seed) {
  validate(space);
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1", "k");
  const int max_n = *std::max_element(space.num_demonstrations.begin(), space.num_demonstrations.end());
  if (static_cast<std::size_t>(max_n) > train_bank_size)
    throw Error(ErrorCode::InsufficientData, "the demonstration bank has " + std::to_string(train_bank_size) +
                                                 " instances but up to " + std::to_string(max_n) + " are requested");
  const bool bias = std::count(space.num_demonstrations.begin(), space.num_demonstrations.end(), 0) > 0;

  std::vector<Candidate> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::mt19937_64 rng(candidate_seed(seed, i));
    auto pick = [&rng](std::size_t n) { return static_cast<std::size_t>(detail::bounded(rng, n)); };
    Candidate c;
    c.index = i;
    c.pattern = space.patterns[pick(space.patterns.size())];
    c.n = space.num_demonstrations[pick(space.num_demonstrations.size())];
    c.instruction = space.instructions[pick(space.instructions.size())];
    if (c.pattern == PatternKind::ReAct && space.json_tools)
      c.system_prompt = space.system_prompts[pick(space.system_prompts.size())];
    if (c.pattern == PatternKind::ZeroShot) c.n = 0;
    for (int d = 0; d < c.n; ++d) c.demo_ids.push_back(pick(train_bank_size));
    if (i == 0 && bias) {
      c.pattern = PatternKind::ZeroShot;
      c.n = 0;
      c.demo_ids.clear();
      c.system_prompt.reset();
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<TaskInstance> usable_bank(const std::vector<TaskInstance>& train, TaskKind task,
                                      const std::vector<PatternKind>& patterns, std::size_t* skipped) {
  std::vector<TaskInstance> out;
  std::size_t dropped = 0;
  for (const auto& inst : train) {
    bool ok = true;
    for (PatternKind kind : patterns) {
      if (kind == PatternKind::ZeroShot) continue;
      try {
        build_demonstration(inst, task, kind);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoExpressions && e.code() != ErrorCode::NoEvidence &&
            e.code() != ErrorCode::MissingTestCase)
          throw;
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(inst);
    else ++dropped;
  }
  if (skipped) *skipped = dropped;
  return out;
}

std::vector<Demonstration> materialize_demos(const Candidate& candidate, const TaskSetup& setup) {
  std::vector<Demonstration> demos;
  if (candidate.pattern == PatternKind::ZeroShot) return demos;
  if (candidate.pattern == PatternKind::ReAct && setup.task == TaskKind::Mbpp)
    for (const auto& t : refinement_examples()) demos.push_back({t});
  for (std::size_t id : candidate.demo_ids) {
    if (id >= setup.bank.size())
      throw Error(ErrorCode::InvalidArgument, "demonstration id " + std::to_string(id) + " is outside the bank");
    demos.push_back(build_demonstration(setup.bank[id], setup.task, candidate.pattern));
  }
  return demos;
}

Program emit_optimized_program(const Candidate& winner, const std::vector<Demonstration>& demos,
                               const TaskSetup& setup) {
  PatternOptions options;
  options.kind = winner.pattern;
  options.instruction = winner.instruction;
  options.demos = demos;
  options.tools = setup.tools;
  options.style = winner.system_prompt;
  options.limits = setup.limits;
  options.model = setup.model;
  options.format = action_format(setup.task);
  options.reactive_only = reactive_only(setup.task);
  options.system_prompts = setup.system_prompts;
  return pattern_program(options, false);
}

Program candidate_program(const Candidate& candidate, const TaskSetup& setup) {
  return emit_optimized_program(candidate, materialize_demos(candidate, setup), setup);
}

Json instance_result_to_json(const InstanceResult& r) {
  Json out = Json::object();
  out["id"] = r.id;
  out["correct"] = r.correct;
  out["extracted"] = r.extracted ? Json(*r.extracted) : Json(nullptr);
  out["answer"] = r.answer;
  out["error"] = r.error ? Json(*r.error) : Json(nullptr);
  out["model_calls"] = r.model_calls;
  return out;
}

InstanceResult run_instance(const Program& program, const TaskInstance& instance, Backend& backend,
                            const ToolRegistry& tools, const AnswerEvaluator& evaluate,
                            const ExecutionOptions& options) {
  InstanceResult r;
  r.id = instance.id;
  try {
    const ExecutionResult exec = execute_program(program, Json{{"question", instance.question}}, backend, tools, options);
    r.model_calls = exec.model_calls;
    r.answer = program_answer(exec);
    const Verdict v = evaluate(r.answer, instance);
    r.correct = v.correct;
    r.extracted = v.extracted;
  } catch (const Error& e) {
    if (fatal(e.code())) throw;
    r.error = e.what();
    spdlog::debug("instance {} failed: {}", instance.id, e.what());
  }
  return r;
}

double candidate_loss(const Candidate& candidate, std::span<const TaskInstance> subset, const TaskSetup& setup,
                      Backend& backend, const ToolRegistry& tools, const AnswerEvaluator& evaluate,
                      const ExecutionOptions& options) {
  if (subset.empty()) throw Error(ErrorCode::InvalidArgument, "candidate_loss needs a nonempty subset");
  const Program program = candidate_program(candidate, setup);
  std::size_t correct = 0;
  for (const auto& inst : subset)
    if (run_instance(program, inst, backend, tools, evaluate, options).correct) ++correct;
  return loss_from(correct, subset.size());
}

struct CachedLoss::State {
  TaskSetup setup;
  Backend& backend;
  const ToolRegistry& tools;
  AnswerEvaluator evaluate;
  ExecutionOptions options;
  std::mutex mutex;
  std::map<std::pair<std::size_t, std::string>, bool> verdicts;
  std::map<std::size_t, std::shared_ptr<const Program>> programs;
  std::atomic<std::size_t> executions{0};
};

CachedLoss::CachedLoss(TaskSetup setup, Backend& backend, const ToolRegistry& tools, AnswerEvaluator evaluate,
                       ExecutionOptions options)
    : state_(new State{std::move(setup), backend, tools, std::move(evaluate), std::move(options), {}, {}, {}, {}}) {}

CachedLoss::~CachedLoss() = default;

double CachedLoss::operator()(const Candidate& candidate, std::span<const TaskInstance> subset) {
  if (subset.empty()) throw Error(ErrorCode::InvalidArgument, "candidate_loss needs a nonempty subset");
  State& s = *state_;
  std::shared_ptr<const Program> program;
  {
    std::lock_guard lock(s.mutex);
    auto it = s.programs.find(candidate.index);
    if (it != s.programs.end()) program = it->second;
  }
  if (!program) {
    auto built = std::make_shared<const Program>(candidate_program(candidate, s.setup));
    std::lock_guard lock(s.mutex);
    program = s.programs.emplace(candidate.index, std::move(built)).first->second;
  }
  std::size_t correct = 0;
  for (const auto& inst : subset) {
    const auto key = std::make_pair(candidate.index, inst.id);
    std::optional<bool> cached;
    {
      std::lock_guard lock(s.mutex);
      if (auto it = s.verdicts.find(key); it != s.verdicts.end()) cached = it->second;
    }
    if (!cached) {
      cached = run_instance(*program, inst, s.backend, s.tools, s.evaluate, s.options).correct;
      ++s.executions;
      std::lock_guard lock(s.mutex);
      s.verdicts[key] = *cached;
    }
    if (*cached) ++correct;
  }
  return loss_from(correct, subset.size());
}

std::size_t CachedLoss::executions() const { return state_->executions.load(); }

LossFn CachedLoss::as_fn() {
  return [this](const Candidate& c, std::span<const TaskInstance> subset) { return (*this)(c, subset); };
}

Json round_to_json(const RoundRecord& r) {
  Json losses = Json::object();
  for (const auto& [idx, loss] : r.losses) losses[std::to_string(idx)] = loss;
  Json out = Json::object();
  out["type"] = "round";
  out["round"] = r.round;
  out["subset_size"] = r.subset_size;
  out["losses"] = std::move(losses);
  out["survivors"] = r.survivors;
  return out;
}

HalvingResult successive_halving(const std::vector<Candidate>& candidates,
                                 const std::vector<TaskInstance>& d_valid_ordered, std::size_t v_min,
                                 std::size_t v_max, const LossFn& loss, std::size_t parallelism) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "no candidates");
  if (v_min < 1) throw Error(ErrorCode::InvalidArgument, "v_min must be at least 1", "v_min");
  if (v_max < v_min) throw Error(ErrorCode::InvalidArgument, "v_max must be at least v_min", "v_max");
  if (v_max > d_valid_ordered.size())
    throw Error(ErrorCode::InvalidArgument,
                "v_max exceeds the " + std::to_string(d_valid_ordered.size()) + " validation instances", "v_max");

  std::vector<std::size_t> alive(candidates.size());
  std::iota(alive.begin(), alive.end(), 0);
  HalvingResult result;
  std::size_t v = v_min;
  int round = 0;
  while (alive.size() > 1) {
    const std::span<const TaskInstance> prefix(d_valid_ordered.data(), v);
    std::vector<double> losses(alive.size());
    parallel_for(alive.size(), parallelism, [&](std::size_t i) { losses[i] = loss(candidates[alive[i]], prefix); });

    std::vector<std::size_t> order(alive.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (losses[a] != losses[b]) return losses[a] < losses[b];
      return candidates[alive[a]].index < candidates[alive[b]].index;
    });

    RoundRecord record;
    record.round = ++round;
    record.subset_size = v;
    for (std::size_t i = 0; i < alive.size(); ++i) record.losses.emplace_back(candidates[alive[i]].index, losses[i]);
    std::sort(record.losses.begin(), record.losses.end());
    std::vector<std::size_t> next;
    for (std::size_t i = 0; i < alive.size() / 2; ++i) {
      next.push_back(alive[order[i]]);
      record.survivors.push_back(candidates[alive[order[i]]].index);
    }
    spdlog::info("round {}: v={} candidates={} survivors={}", record.round, v, alive.size(), next.size());
    result.rounds.push_back(std::move(record));
    alive = std::move(next);
    v = std::min(v_max, 2 * v);
  }
  result.winner = candidates[alive.front()];
  return result;
}

EvaluationReport evaluate_final(const Program& program, const std::vector<TaskInstance>& test_split,
                                Backend& backend, const ToolRegistry& tools, const AnswerEvaluator& evaluate,
                                const ExecutionOptions& options, std::size_t parallelism) {
  if (test_split.empty()) throw Error(ErrorCode::InvalidArgument, "cannot evaluate on an empty split");
  EvaluationReport report;
  report.results.resize(test_split.size());
  parallel_for(test_split.size(), parallelism, [&](std::size_t i) {
    report.results[i] = run_instance(program, test_split[i], backend, tools, evaluate, options);
  });
  const auto correct = std::count_if(report.results.begin(), report.results.end(), [](const auto& r) { return r.correct; });
  report.accuracy = static_cast<double>(correct) / static_cast<double>(test_split.size());
  return report;
}

OptimizationResult optimize(const OptimizeSettings& settings, const Splits& splits, TaskSetup setup,
                            Backend& backend, const ToolRegistry& tools, const AnswerEvaluator& evaluate,
                            const ExecutionOptions& options) {
  validate(settings.space);
  std::size_t skipped = 0;
  setup.bank = usable_bank(splits.train, setup.task, settings.space.patterns, &skipped);
  if (skipped > 0) spdlog::info("{} training instances cannot build demonstrations and were left out", skipped);
  const std::size_t v_max = settings.v_max.value_or(splits.valid.size());

  const auto candidates = sample_candidates(settings.space, settings.k, setup.bank.size(), settings.seed);
  CachedLoss loss(setup, backend, tools, evaluate, options);
  HalvingResult race = successive_halving(candidates, splits.valid, settings.v_min, v_max, loss.as_fn(),
                                          settings.parallelism);
  spdlog::info("{} program executions during the race", loss.executions());

  OptimizationResult result;
  result.winner = race.winner;
  result.rounds = std::move(race.rounds);
  result.emitted_program = candidate_program(result.winner, setup);
  if (!splits.test.empty()) {
    EvaluationReport report =
        evaluate_final(result.emitted_program, splits.test, backend, tools, evaluate, options, settings.parallelism);
    result.test_accuracy = report.accuracy;
    result.test_results = std::move(report.results);
  }
  return result;
}

std::string experiment_log(const OptimizationResult& result) {
  std::string out;
  for (const auto& r : result.rounds) out += round_to_json(r).dump() + "\n";
  Json last = Json::object();
  last["type"] = "result";
  last["winner"] = candidate_to_json(result.winner);
  last["test_accuracy"] = result.test_accuracy ? Json(*result.test_accuracy) : Json(nullptr);
  out += last.dump() + "\n";
  return out;
}

}  // namespace pdlopt
