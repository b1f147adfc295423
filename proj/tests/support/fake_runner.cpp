// Stand-in for the code-execution runner. Speaks the stdio JSON protocol and
// reacts to markers in the submitted code:
//   "while True"   never returns
//   "CRASH"        aborts without answering
//   "GARBAGE"      answers with a non-JSON line
//   "assert False" or "raise"  reports an AssertionError traceback
// Otherwise the last line is evaluated as arithmetic when possible, else the
// success sentinel is returned. In test_suite mode a test passes unless it
// contains "False".

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include "pdlopt/calc.hpp"
#include "pdlopt/json.hpp"
#include "pdlopt/sandbox.hpp"

int main() {
  std::string line;
  std::getline(std::cin, line);
  const auto request = pdlopt::Json::parse(line, nullptr, false);
  if (request.is_discarded()) {
    std::cout << R"({"status":"exception","output":"","traceback":"ProtocolError: bad request"})" << "\n";
    return 0;
  }
  const std::string code = request.value("code", std::string());

  if (code.find("while True") != std::string::npos) {
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(1));
  }
  if (code.find("CRASH") != std::string::npos) std::abort();
  if (code.find("GARBAGE") != std::string::npos) {
    std::cout << "this is not json\n";
    return 0;
  }

  pdlopt::Json response;
  if (code.find("assert False") != std::string::npos || code.find("raise") != std::string::npos) {
    response["status"] = "exception";
    response["output"] = "";
    response["traceback"] =
        "Traceback (most recent call last):\n  File \"<sandbox>\", line 1, in <module>\nAssertionError";
  } else if (request.value("mode", std::string()) == "test_suite") {
    pdlopt::Json per_test = pdlopt::Json::array();
    for (const auto& test : request.value("tests", pdlopt::Json::array()))
      per_test.push_back(test.get<std::string>().find("False") == std::string::npos);
    response["status"] = "ok";
    response["output"] = "";
    response["per_test"] = per_test;
  } else {
    const auto last_newline = code.find_last_of('\n');
    const std::string last = last_newline == std::string::npos ? code : code.substr(last_newline + 1);
    const auto value = pdlopt::calc::evaluate(last);
    response["status"] = "ok";
    response["output"] = value ? *value : std::string(pdlopt::kExecutedNoOutput);
  }
  std::cout << response.dump() << "\n";
  return 0;
}
