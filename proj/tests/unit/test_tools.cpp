#include <catch_amalgamated.hpp>

#include <chrono>
#include <cstdlib>
#include <random>

#include "pdlopt/calc.hpp"
#include "pdlopt/error.hpp"
#include "pdlopt/repair.hpp"
#include "pdlopt/sandbox.hpp"
#include "pdlopt/search.hpp"
#include "pdlopt/tools.hpp"

using namespace pdlopt;

namespace {

ToolRegistry json_registry() {
  ToolRegistry r;
  add_calc(r);
  auto search = std::make_shared<FixtureSearchClient>(Json{{"Eiffel Tower", {{"summary", "S"}}}});
  add_search(r, search);
  return r;
}

std::shared_ptr<SandboxClient> fake_sandbox() {
  return std::make_shared<ProcessSandboxClient>(std::vector<std::string>{PDLOPT_FAKE_RUNNER});
}

}  // namespace

TEST_CASE("parse_model_output repairs", "[repair]") {
  CHECK(parse_model_output(R"({"action":"Finish","arguments":{"answer":"27"}})") ==
        Json::parse(R"({"action":"Finish","arguments":{"answer":"27"}})"));
  CHECK(parse_model_output("```json\n{\"action\":\"Calc\",\"arguments\":{\"expr\":\"48/4\"}}\n```") ==
        Json::parse(R"({"action":"Calc","arguments":{"expr":"48/4"}})"));
  CHECK(parse_model_output("Thought: use calc.\n{\"a\": {\"b\": \"}\"}} trailing") ==
        Json::parse(R"({"a":{"b":"}"}})"));
  CHECK(parse_model_output("{\"a\": [1, 2,], }") == Json::parse(R"({"a":[1,2]})"));
  CHECK(parse_model_output("{ unclosed {\"x\": 1}") == Json::parse(R"({"x":1})"));
  try {
    parse_model_output("no json here");
    FAIL("expected Unparseable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Unparseable);
  }
  try {
    parse_model_output(R"({"action":1})", tool_call_spec());
    FAIL("expected SchemaViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaViolation);
    CHECK(e.path() == ".action");
  }
}

TEST_CASE("calc cleaning and evaluation", "[calc]") {
  CHECK(tool_calc("48/4") == Observation{"12", false});
  CHECK(tool_calc("2^3").text == "8");
  CHECK(tool_calc("$1,234.50 + 0.5").text == "1235");
  CHECK(tool_calc("50%").text == "50");
  CHECK(tool_calc("7 % 4").text == "3");
  CHECK(tool_calc("1/3").text == "0.3333333333");
  CHECK(tool_calc("-2**2").text == "-4");
  CHECK(tool_calc("2**-1").text == "0.5");
  CHECK(tool_calc("7//2").text == "3");
  CHECK(tool_calc("-7//2").text == "-4");
  CHECK(tool_calc("1.5e3").text == "1500");
  CHECK(tool_calc("(12+15)*2").text == "54");
  CHECK(tool_calc("4**0.5").text == "2");
  CHECK(tool_calc("100000000000000000000*3").text == "300000000000000000000");
  for (const char* bad : {"fifteen more", "1/0", "", "2**999999999", "(1+2", "1 2", "abc()"}) {
    INFO(bad);
    const auto obs = tool_calc(bad);
    CHECK(obs.is_error_hint);
    CHECK(obs.text == kInvalidExpressionWarning);
  }
}

TEST_CASE("calc cleaning is idempotent", "[calc][property]") {
  std::mt19937_64 rng(5);
  const std::string alphabet = "0123456789,.$%^*/+-() \t";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const int n = static_cast<int>(rng() % 20);
    for (int j = 0; j < n; ++j) s += alphabet[rng() % alphabet.size()];
    const std::string once = calc::clean(s);
    INFO("input: [" << s << "]");
    CHECK(calc::clean(once) == once);
    CHECK(tool_calc(s) == tool_calc(s));
  }
}

TEST_CASE("parse_action", "[tools]") {
  const ToolRegistry registry = json_registry();
  auto calc = parse_action(R"({"action": "Calc", "arguments": {"expr": "48/4"}})", registry);
  REQUIRE(std::holds_alternative<ToolCall>(calc));
  CHECK(std::get<ToolCall>(calc) == ToolCall{"Calc", Json{{"expr", "48/4"}}});

  auto finish = parse_action(R"({"action":"Finish","arguments":{"answer":"true"}})", registry);
  REQUIRE(std::holds_alternative<FinishValue>(finish));
  CHECK(std::get<FinishValue>(finish).answer == "true");

  auto numeric = parse_action(R"({"action":"Finish","arguments":{"answer":27}})", registry);
  REQUIRE(std::holds_alternative<FinishValue>(numeric));
  CHECK(std::get<FinishValue>(numeric).answer == "27");

  auto unknown = parse_action(R"({"action":"Teleport","arguments":{}})", registry);
  REQUIRE(std::holds_alternative<Observation>(unknown));
  CHECK(std::get<Observation>(unknown).is_error_hint);
  CHECK(std::get<Observation>(unknown).text.find("Teleport") != std::string::npos);

  auto near_miss = parse_action(R"({"action":"calc","arguments":{"expr":"1"}})", registry);
  REQUIRE(std::holds_alternative<Observation>(near_miss));
  CHECK(std::get<Observation>(near_miss).text.find("Unknown action") != std::string::npos);

  auto bad_args = parse_action(R"({"action":"Calc","arguments":{"expression":"1"}})", registry);
  REQUIRE(std::holds_alternative<Observation>(bad_args));
  CHECK(std::get<Observation>(bad_args).is_error_hint);

  auto garbage = parse_action("I think I should calculate", registry);
  REQUIRE(std::holds_alternative<Observation>(garbage));
  CHECK(std::get<Observation>(garbage).is_error_hint);

  auto fenced = parse_action("Tho: calc\n```json\n{\"action\":\"Calc\",\"arguments\":{\"expr\":\"2^3\"}}\n```",
                             registry);
  CHECK(std::holds_alternative<ToolCall>(fenced));
}

TEST_CASE("parse_action never throws", "[tools][property]") {
  const ToolRegistry json = json_registry();
  const ToolRegistry xml(ActionFormat::Xml);
  std::mt19937_64 rng(11);
  const std::vector<std::string> pieces = {
      "{", "}", "[", "]", "\"action\"", ":", ",", "\"Calc\"", "\"arguments\"", "\"expr\"", "\"48/4\"", "```",
      "json", "\n", "<execute>", "</execute>", "<solution>", "</solution>", "\\", "\"", "null", "1e999", "Finish"};
  for (int i = 0; i < 3000; ++i) {
    std::string s;
    const int n = static_cast<int>(rng() % 40);
    for (int j = 0; j < n; ++j) s += pieces[rng() % pieces.size()];
    if (i % 100 == 0) s = std::string(64 * 1024 - 2, '[') + "{}";
    CHECK_NOTHROW(parse_action(s, json));
    CHECK_NOTHROW(parse_action(s, xml));
  }
}

TEST_CASE("xml actions for the coding agent", "[tools]") {
  const ToolRegistry registry(ActionFormat::Xml);
  auto exec = parse_action("Let me test.\n<execute>\nprint(1)\n</execute>", registry);
  REQUIRE(std::holds_alternative<ToolCall>(exec));
  CHECK(std::get<ToolCall>(exec).arguments["code"] == "print(1)");
  auto sol = parse_action("<solution>\ndef f(): pass\n</solution>", registry);
  REQUIRE(std::holds_alternative<FinishValue>(sol));
  CHECK(std::get<FinishValue>(sol).answer == "def f(): pass");
  CHECK(std::holds_alternative<Observation>(parse_action("nothing here", registry)));
  CHECK(render_action(ToolCall{"Execute", Json{{"code", "x"}}}, ActionFormat::Xml) == "<execute>\nx\n</execute>");
  CHECK(render_finish("y", ActionFormat::Xml) == "<solution>\ny\n</solution>");
}

TEST_CASE("rendered actions re-parse", "[tools]") {
  const ToolRegistry registry = json_registry();
  const ToolCall call{"Calc", Json{{"expr", "48/4"}}};
  CHECK(render_action(call, ActionFormat::Json) == R"({"action":"Calc","arguments":{"expr":"48/4"}})");
  CHECK(std::get<ToolCall>(parse_action(render_action(call, ActionFormat::Json), registry)) == call);
  CHECK(std::get<FinishValue>(parse_action(render_finish("27", ActionFormat::Json), registry)).answer == "27");
}

TEST_CASE("tool registry", "[tools]") {
  ToolRegistry r = json_registry();
  CHECK_THROWS_AS(add_calc(r), Error);
  const auto specs = r.specs();
  REQUIRE(specs.size() == 3);
  CHECK(specs.back().name == "Finish");
  CHECK(r.invoke(ToolCall{"Calc", Json{{"expr", "48/4"}}}).text == "12");
  CHECK(r.invoke(ToolCall{"Nope", Json::object()}).is_error_hint);
}

TEST_CASE("search tool over a fixture", "[tools][search]") {
  FixtureSearchClient client(Json::parse(R"json({
    "Eiffel Tower": {"summary": "The Eiffel Tower is a wrought-iron lattice tower in Paris."},
    "Nothing": {"results": []},
    "Mercury": {"disambiguation": ["Mercury (planet)", "Mercury (element)", "Mercury (mythology)"]}
  })json"));
  CHECK(tool_search("Eiffel Tower", client) ==
        Observation{"The Eiffel Tower is a wrought-iron lattice tower in Paris.", false});
  const auto none = tool_search("Nothing", client);
  CHECK(none.is_error_hint);
  CHECK(none.text.find("Try again") != std::string::npos);
  CHECK(tool_search("Unknown query", client).is_error_hint);
  const auto ambiguous = tool_search("Mercury", client);
  CHECK(ambiguous.is_error_hint);
  CHECK(ambiguous.text.ends_with("\nMercury (planet)\nMercury (element)\nMercury (mythology)"));
  CHECK_THROWS_AS(FixtureSearchClient(Json::parse(R"({"x": {"weird": 1}})")), Error);
}

TEST_CASE("live search client fails over to a transport error", "[search]") {
  WikipediaConfig config;
  config.base_url = "http://127.0.0.1:9";
  config.retries = 1;
  config.backoff = std::chrono::milliseconds(1);
  config.timeout = std::chrono::milliseconds(200);
  WikipediaSearchClient client(config);
  try {
    client.lookup("anything");
    FAIL("expected a transport error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendTransport);
  }
  CHECK(tool_search("anything", client).is_error_hint);
}

TEST_CASE("sandbox wire format", "[sandbox]") {
  SandboxRequest req{"print(1)", 2.5, SandboxRequest::Mode::TestSuite, std::vector<std::string>{"assert f(1) == 2"}};
  CHECK(to_json(req) ==
        Json::parse(R"json({"code":"print(1)","timeout_s":2.5,"mode":"test_suite","tests":["assert f(1) == 2"]})json"));
  CHECK_NOTHROW(validate(req));
  req.tests.reset();
  CHECK_THROWS_AS(validate(req), Error);
  CHECK_THROWS_AS(validate(SandboxRequest{"x", 0.0}), Error);
  CHECK_THROWS_AS(validate(SandboxRequest{"x", 121.0}), Error);

  auto ok = response_from_json(Json::parse(R"({"status":"ok","output":"2"})"));
  CHECK(ok.status == SandboxResponse::Status::Ok);
  CHECK(ok.output == "2");
  auto suite = response_from_json(Json::parse(R"({"status":"ok","output":"","per_test":[true,false]})"));
  CHECK(suite.per_test == std::vector<bool>{true, false});
  for (const char* bad : {R"([])", R"({"output":"x"})", R"({"status":"maybe"})", R"({"status":"ok","per_test":[1]})"}) {
    auto r = response_from_json(Json::parse(bad));
    CHECK(r.status == SandboxResponse::Status::Exception);
    REQUIRE(r.traceback);
    CHECK_FALSE(r.traceback->empty());
  }
  auto round = response_from_json(to_json(suite));
  CHECK(round.per_test == suite.per_test);
}

TEST_CASE("process sandbox client against a protocol fake", "[sandbox]") {
  auto sandbox = fake_sandbox();
  CHECK(tool_execute("def f(x):\n    return x\nassert f(1) == 1", *sandbox, 5) ==
        Observation{std::string(kExecutedNoOutput), false});
  CHECK(tool_execute("x = 1\n1+1", *sandbox, 5).text == "2");

  const auto failing = tool_execute("assert False", *sandbox, 5);
  CHECK(failing.is_error_hint);
  CHECK(failing.text.find("AssertionError") != std::string::npos);

  const auto start = std::chrono::steady_clock::now();
  const auto hung = tool_execute("while True: pass", *sandbox, 1.0);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(hung.text == kExecutionTimedOut);
  CHECK(elapsed >= 1.0);
  CHECK(elapsed < 2.0);

  SandboxRequest crash{"CRASH", 5};
  auto crashed = sandbox->run(crash);
  CHECK(crashed.status == SandboxResponse::Status::Exception);
  CHECK(crashed.traceback->find("signal") != std::string::npos);

  auto garbage = sandbox->run(SandboxRequest{"GARBAGE", 5});
  CHECK(garbage.status == SandboxResponse::Status::Exception);

  SandboxRequest suite{"def f(): pass", 5, SandboxRequest::Mode::TestSuite,
                       std::vector<std::string>{"assert True", "assert False == True", "assert 1"}};
  auto result = sandbox->run(suite);
  CHECK(result.per_test == std::vector<bool>{true, false, true});
}

TEST_CASE("missing runner is reported as unavailable", "[sandbox]") {
  ProcessSandboxClient missing({"/nonexistent/runner-binary"});
  try {
    missing.run(SandboxRequest{"1", 1});
    FAIL("expected SandboxUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SandboxUnavailable);
  }
}

TEST_CASE("real runner contract", "[sandbox][runner]") {
  auto command = ProcessSandboxClient::command_from_env();
  if (!command) SKIP("PDLOPT_SANDBOX_RUNNER is not set");
  ProcessSandboxClient sandbox(*command);
  CHECK(tool_execute("def add(a, b):\n    return a + b\nassert add(1, 2) == 3", sandbox, 10).text ==
        kExecutedNoOutput);
  CHECK(tool_execute("1+1", sandbox, 10).text == "2");
  CHECK(tool_execute("def f():\n    return 1\nres = f()\nassert res == 2, \"Expected 2 but got {}\".format(res)",
                     sandbox, 10)
            .text.find("AssertionError") != std::string::npos);
  const auto start = std::chrono::steady_clock::now();
  CHECK(tool_execute("while True: pass", sandbox, 2).text == kExecutionTimedOut);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 3.0);
  sandbox.run(SandboxRequest{"x = 41", 10});
  CHECK(tool_execute("x", sandbox, 10).text.find("NameError") != std::string::npos);
}
