#include "pdlopt/backend.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "pdlopt/error.hpp"
#include "pdlopt/yaml.hpp"

namespace pdlopt {

namespace {

void require_messages(const ChatRequest& request) {
  if (request.messages.empty()) throw Error(ErrorCode::InvalidArgument, "chat request has no messages");
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// The wire format has no tool role for free-text observations; they travel
// as user turns.
std::string_view wire_role(Role role) { return role == Role::Tool ? "user" : to_string(role); }

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

}  // namespace

std::string request_fingerprint(const ChatRequest& request) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  auto feed = [&mix](std::string_view s) {
    for (unsigned char c : s) mix(c);
    mix('\0');
  };
  feed(request.model_id);
  for (const auto& m : request.messages) feed(m.content);
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptedRule> rules, std::optional<std::string> fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)) {}

ScriptedBackend ScriptedBackend::from_json(const Json& document) {
  if (!document.is_object()) throw Error(ErrorCode::Config, "scripted rules must be a mapping");
  for (const auto& [key, _] : document.items())
    if (key != "rules" && key != "default") throw Error(ErrorCode::Config, "unknown key", key);
  std::vector<ScriptedRule> rules;
  if (auto it = document.find("rules"); it != document.end()) {
    if (!it->is_array()) throw Error(ErrorCode::Config, "rules must be a list", "rules");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const Json& r = (*it)[i];
      const std::string path = "rules[" + std::to_string(i) + "]";
      if (!r.is_object() || !r.contains("response") || !r["response"].is_string())
        throw Error(ErrorCode::Config, "rule needs a string response", path);
      ScriptedRule rule;
      rule.response = r["response"].get<std::string>();
      for (const auto& [key, value] : r.items()) {
        if (key == "response") continue;
        if (key == "contains") {
          if (value.is_string()) {
            rule.contains.push_back(value.get<std::string>());
          } else if (value.is_array() && std::all_of(value.begin(), value.end(), [](const Json& v) { return v.is_string(); })) {
            for (const auto& v : value) rule.contains.push_back(v.get<std::string>());
          } else {
            throw Error(ErrorCode::Config, "contains must be a string or a list of strings", path + ".contains");
          }
        } else if (key == "fingerprint" && value.is_string()) {
          rule.fingerprint = value.get<std::string>();
        } else {
          throw Error(ErrorCode::Config, "unknown or ill-typed key", path + "." + key);
        }
      }
      if (rule.contains.empty() && !rule.fingerprint)
        throw Error(ErrorCode::Config, "rule needs contains or fingerprint", path);
      rules.push_back(std::move(rule));
    }
  }
  std::optional<std::string> fallback;
  if (auto it = document.find("default"); it != document.end()) {
    if (!it->is_string()) throw Error(ErrorCode::Config, "default must be a string", "default");
    fallback = it->get<std::string>();
  }
  return ScriptedBackend(std::move(rules), std::move(fallback));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open scripted rules file", path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return std::make_shared<ScriptedBackend>(from_json(yaml_to_json(ss.str())));
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.message(), path + (e.path().empty() ? "" : ": " + e.path()));
  }
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
  require_messages(request);
  std::string_view last_user;
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == Role::User) {
      last_user = it->content;
      break;
    }
  }
  std::optional<std::string> fingerprint;
  for (const auto& rule : rules_) {
    bool match;
    if (rule.fingerprint) {
      if (!fingerprint) fingerprint = request_fingerprint(request);
      match = *rule.fingerprint == *fingerprint;
    } else {
      match = std::all_of(rule.contains.begin(), rule.contains.end(),
                          [&](const std::string& s) { return last_user.find(s) != std::string_view::npos; });
    }
    if (match) return {rule.response, FinishReason::Stop};
  }
  if (fallback_) return {*fallback_, FinishReason::Stop};
  std::string excerpt(last_user.substr(0, 120));
  throw Error(ErrorCode::NoRuleMatched, "no scripted rule matches the last user message: \"" + excerpt + "\"");
}

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)), in_flight_(std::max(1, config_.max_in_flight)) {
  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::Config, "API base URL needs a scheme: " + config_.base_url, "backend.base_url");
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  host_ = config_.base_url.substr(0, path_start);
  prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

HttpBackendConfig HttpBackend::config_from_env(HttpBackendConfig base) {
  if (const char* v = std::getenv("PDLOPT_API_BASE"); v != nullptr && *v != '\0') base.base_url = v;
  if (const char* v = std::getenv("PDLOPT_API_KEY"); v != nullptr && *v != '\0') base.api_key = v;
  return base;
}

Json HttpBackend::request_body(const ChatRequest& request) {
  Json messages = Json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", wire_role(m.role)}, {"content", m.content}});
  return {{"model", request.model_id},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
  require_messages(request);
  const std::string body = request_body(request).dump();
  const std::string path = prefix_ + "/chat/completions";
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  SemaphoreGuard guard(in_flight_);
  auto backoff = config_.backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(host_);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    spdlog::debug("POST {}{} {}", host_, path, body);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      spdlog::warn("chat request failed (attempt {}): {}", attempt + 1, last_error);
      continue;
    }
    spdlog::debug("HTTP {} {}", res->status, res->body);
    if (res->status == 401 || res->status == 403)
      throw Error(ErrorCode::BackendAuth, "endpoint rejected the credentials (HTTP " + std::to_string(res->status) + ")");
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      spdlog::warn("chat request failed (attempt {}): {}", attempt + 1, last_error);
      continue;
    }
    if (res->status == 400 || res->status == 413) {
      const std::string text = lower(res->body);
      if (text.find("context") != std::string::npos || text.find("too long") != std::string::npos ||
          text.find("maximum") != std::string::npos)
        throw Error(ErrorCode::BackendOverflow, "request exceeds the model context window");
    }
    if (res->status != 200)
      throw Error(ErrorCode::BackendProtocol, "endpoint returned HTTP " + std::to_string(res->status) + ": " +
                                                  res->body.substr(0, 200));
    const Json reply = Json::parse(res->body, nullptr, false);
    const Json* choice = nullptr;
    if (reply.is_object() && reply.contains("choices") && reply["choices"].is_array() && !reply["choices"].empty())
      choice = &reply["choices"][0];
    if (choice == nullptr || !choice->is_object() || !choice->contains("message") ||
        !(*choice)["message"].is_object())
      throw Error(ErrorCode::BackendProtocol, "response has no choices[0].message");
    ChatResponse out;
    const Json& content = (*choice)["message"].value("content", Json());
    out.text = content.is_string() ? content.get<std::string>() : std::string();
    const Json reason = choice->value("finish_reason", Json());
    if (reason == "length") {
      out.finish_reason = FinishReason::Length;
      spdlog::warn("model output truncated at max_tokens={}", request.max_tokens);
    } else if (reason.is_string() && reason != "stop") {
      out.finish_reason = reason == "error" ? FinishReason::Error : FinishReason::Stop;
    }
    return out;
  }
  throw Error(ErrorCode::BackendTransport, "chat endpoint unreachable after retries: " + last_error, host_ + path);
}

}  // namespace pdlopt
