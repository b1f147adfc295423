#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pdlopt/backend.hpp"
#include "pdlopt/error.hpp"

namespace pdlopt::testing {

inline std::filesystem::path fixture(const std::string& relative) {
  return std::filesystem::path(PDLOPT_FIXTURES) / relative;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// The code of the Error thrown by `f`, or nullopt when nothing is thrown.
inline std::optional<ErrorCode> error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Records every request before delegating to a scripted backend.
class RecordingBackend final : public Backend {
 public:
  RecordingBackend(std::vector<ScriptedRule> rules, std::optional<std::string> fallback = std::nullopt)
      : inner_(std::move(rules), std::move(fallback)) {}

  ChatResponse complete(const ChatRequest& request) override {
    {
      std::lock_guard lock(mutex_);
      requests_.push_back(request);
    }
    return inner_.complete(request);
  }

  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }
  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return requests_.size();
  }

 private:
  ScriptedBackend inner_;
  mutable std::mutex mutex_;
  std::vector<ChatRequest> requests_;
};

/// Replies from a fixed list in order, repeating the last entry.
class SequenceBackend final : public Backend {
 public:
  explicit SequenceBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}

  ChatResponse complete(const ChatRequest& request) override {
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
    const std::size_t i = std::min(next_++, replies_.size() - 1);
    return {replies_[i], FinishReason::Stop};
  }

  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return requests_.size();
  }
  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

 private:
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
  mutable std::mutex mutex_;
  std::vector<ChatRequest> requests_;
};

}  // namespace pdlopt::testing
