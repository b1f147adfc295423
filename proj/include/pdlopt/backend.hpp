#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "pdlopt/json.hpp"
#include "pdlopt/program.hpp"

namespace pdlopt {

struct ChatMessage {
  Role role = Role::User;
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
};

enum class FinishReason { Stop, Length, Error };

struct ChatResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::Stop;
};

/// LLM completion. Implementations are safe for concurrent use. Requests
/// with no messages are rejected with Error(InvalidArgument).
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// FNV-1a (64-bit, lowercase hex) over the model id and every message
/// content, each terminated by a NUL byte.
std::string request_fingerprint(const ChatRequest& request);

struct ScriptedRule {
  // Every entry must occur in the last user message.
  std::vector<std::string> contains;
  std::optional<std::string> fingerprint;
  std::string response;
};

/// Deterministic test backend: the first matching rule wins, then the
/// default; otherwise Error(NoRuleMatched).
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptedRule> rules, std::optional<std::string> fallback = std::nullopt);

  /// Rules document (YAML or JSON):
  ///   rules: [{contains: str | [str], response: str} | {fingerprint: hex, response: str}]
  ///   default: str   (optional)
  static ScriptedBackend from_json(const Json& document);
  static std::shared_ptr<ScriptedBackend> load(const std::string& path);

  ChatResponse complete(const ChatRequest& request) override;

 private:
  std::vector<ScriptedRule> rules_;
  std::optional<std::string> fallback_;
};

struct HttpBackendConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";  // the endpoint is <base_url>/chat/completions
  std::string api_key;
  int retries = 3;
  std::chrono::milliseconds timeout{120'000};
  std::chrono::milliseconds backoff{1'000};  // doubled per retry
  int max_in_flight = 8;
};

/// Chat-completions client. Connection failures, 429 and 5xx are retried with
/// exponential backoff and then raise BackendTransport; 401/403 raise
/// BackendAuth without retrying; a 400 mentioning the context length raises
/// BackendOverflow; other failures raise BackendProtocol.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  /// Applies PDLOPT_API_BASE and PDLOPT_API_KEY over `base`.
  static HttpBackendConfig config_from_env(HttpBackendConfig base = {});

  ChatResponse complete(const ChatRequest& request) override;

  /// The JSON body sent for a request.
  static Json request_body(const ChatRequest& request);

 private:
  HttpBackendConfig config_;
  std::string host_;    // scheme://host[:port]
  std::string prefix_;  // path part of base_url, without trailing '/'
  std::counting_semaphore<1024> in_flight_;
};

}  // namespace pdlopt
