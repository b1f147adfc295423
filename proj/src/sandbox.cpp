#include "pdlopt/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <sstream>

#include "pdlopt/error.hpp"

extern char** environ;

namespace pdlopt {

namespace {

std::string_view mode_name(SandboxRequest::Mode mode) {
  return mode == SandboxRequest::Mode::TestSuite ? "test_suite" : "final_expression";
}

SandboxResponse synthetic_exception(std::string message) {
  SandboxResponse out;
  out.status = SandboxResponse::Status::Exception;
  out.traceback = "RunnerProtocolError: " + std::move(message);
  return out;
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Fd& operator=(Fd&& other) noexcept {
    reset();
    fd_ = std::exchange(other.fd_, -1);
    return *this;
  }
  ~Fd() { reset(); }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

struct Pipe {
  Fd read;
  Fd write;
};

Pipe make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0)
    throw Error(ErrorCode::SandboxUnavailable, std::string("pipe failed: ") + std::strerror(errno));
  return {Fd(fds[0]), Fd(fds[1])};
}

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace

void validate(const SandboxRequest& request) {
  if (!(request.timeout_s > 0.0 && request.timeout_s <= 120.0))
    throw Error(ErrorCode::InvalidArgument, "timeout_s must be in (0, 120]", "timeout_s");
  const bool suite = request.mode == SandboxRequest::Mode::TestSuite;
  if (suite != request.tests.has_value())
    throw Error(ErrorCode::InvalidArgument, "tests must be present exactly in test_suite mode", "tests");
}

Json to_json(const SandboxRequest& request) {
  Json out;
  out["code"] = request.code;
  out["timeout_s"] = request.timeout_s;
  out["mode"] = mode_name(request.mode);
  if (request.tests) out["tests"] = *request.tests;
  return out;
}

Json to_json(const SandboxResponse& response) {
  Json out;
  switch (response.status) {
    case SandboxResponse::Status::Ok: out["status"] = "ok"; break;
    case SandboxResponse::Status::Exception: out["status"] = "exception"; break;
    case SandboxResponse::Status::Timeout: out["status"] = "timeout"; break;
  }
  out["output"] = response.output;
  if (response.traceback) out["traceback"] = *response.traceback;
  if (response.per_test) out["per_test"] = *response.per_test;
  return out;
}

SandboxResponse response_from_json(const Json& json) {
  if (!json.is_object()) return synthetic_exception("response is not a JSON object");
  SandboxResponse out;
  const auto status = json.find("status");
  if (status == json.end() || !status->is_string()) return synthetic_exception("response lacks a status");
  const auto& s = status->get_ref<const std::string&>();
  if (s == "ok") {
    out.status = SandboxResponse::Status::Ok;
  } else if (s == "exception") {
    out.status = SandboxResponse::Status::Exception;
  } else if (s == "timeout") {
    out.status = SandboxResponse::Status::Timeout;
  } else {
    return synthetic_exception("unknown status \"" + s + "\"");
  }
  if (auto it = json.find("output"); it != json.end()) {
    if (!it->is_string()) return synthetic_exception("output must be a string");
    out.output = it->get<std::string>();
  }
  if (auto it = json.find("traceback"); it != json.end() && !it->is_null()) {
    if (!it->is_string()) return synthetic_exception("traceback must be a string");
    out.traceback = it->get<std::string>();
  }
  if (auto it = json.find("per_test"); it != json.end() && !it->is_null()) {
    if (!it->is_array()) return synthetic_exception("per_test must be an array");
    std::vector<bool> per_test;
    for (const auto& v : *it) {
      if (!v.is_boolean()) return synthetic_exception("per_test entries must be booleans");
      per_test.push_back(v.get<bool>());
    }
    out.per_test = std::move(per_test);
  }
  if (out.status == SandboxResponse::Status::Exception && (!out.traceback || out.traceback->empty()))
    out.traceback = out.output.empty() ? std::string("Exception (no traceback provided)") : out.output;
  return out;
}

ProcessSandboxClient::ProcessSandboxClient(std::vector<std::string> command, double grace_s)
    : command_(std::move(command)), grace_s_(grace_s) {
  if (command_.empty()) throw Error(ErrorCode::InvalidArgument, "sandbox command is empty");
}

std::optional<std::vector<std::string>> ProcessSandboxClient::command_from_env() {
  const char* value = std::getenv("PDLOPT_SANDBOX_RUNNER");
  if (value == nullptr) return std::nullopt;
  std::istringstream in(value);
  std::vector<std::string> parts;
  for (std::string part; in >> part;) parts.push_back(part);
  if (parts.empty()) return std::nullopt;
  return parts;
}

SandboxResponse ProcessSandboxClient::run(const SandboxRequest& request) {
  validate(request);
  ignore_sigpipe();

  Pipe in = make_pipe();
  Pipe out = make_pipe();
  Pipe err = make_pipe();

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in.read.get(), STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out.write.get(), STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err.write.get(), STDERR_FILENO);

  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  std::vector<char*> argv;
  for (auto& part : command_) argv.push_back(part.data());
  argv.push_back(nullptr);

  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, argv[0], &actions, &attr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  if (rc != 0)
    throw Error(ErrorCode::SandboxUnavailable,
                "cannot start sandbox runner '" + command_.front() + "': " + std::strerror(rc));

  in.read.reset();
  out.write.reset();
  err.write.reset();
  ::fcntl(in.write.get(), F_SETFL, O_NONBLOCK);

  const std::string payload = to_json(request).dump() + "\n";
  std::size_t written = 0;
  std::string stdout_text;
  std::string stderr_text;
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double>(request.timeout_s + grace_s_));
  bool timed_out = false;

  while (out.read.get() >= 0 || err.read.get() >= 0) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      timed_out = true;
      break;
    }
    std::vector<pollfd> fds;
    if (in.write.get() >= 0) fds.push_back({in.write.get(), POLLOUT, 0});
    if (out.read.get() >= 0) fds.push_back({out.read.get(), POLLIN, 0});
    if (err.read.get() >= 0) fds.push_back({err.read.get(), POLLIN, 0});
    const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
    const int ready = ::poll(fds.data(), fds.size(), static_cast<int>(wait_ms));
    if (ready < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (const auto& p : fds) {
      if (p.revents == 0) continue;
      if (p.fd == in.write.get()) {
        const ssize_t n = ::write(p.fd, payload.data() + written, payload.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if (n < 0 && errno != EAGAIN && errno != EINTR) {
          in.write.reset();
        } else if (written == payload.size()) {
          in.write.reset();
        }
        continue;
      }
      char buffer[65536];
      const ssize_t n = ::read(p.fd, buffer, sizeof buffer);
      if (n > 0) {
        (p.fd == out.read.get() ? stdout_text : stderr_text).append(buffer, static_cast<std::size_t>(n));
      } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
        (p.fd == out.read.get() ? out.read : err.read).reset();
      }
    }
  }

  if (timed_out) ::kill(-pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }

  if (timed_out) {
    SandboxResponse response;
    response.status = SandboxResponse::Status::Timeout;
    response.output = std::string(kExecutionTimedOut);
    return response;
  }

  const auto newline = stdout_text.find('\n');
  const std::string line = stdout_text.substr(0, newline);
  Json parsed = Json::parse(line, nullptr, false);
  if (parsed.is_discarded()) {
    std::string detail = "runner produced no valid response";
    if (WIFSIGNALED(status)) detail += " (killed by signal " + std::to_string(WTERMSIG(status)) + ")";
    if (WIFEXITED(status)) detail += " (exit code " + std::to_string(WEXITSTATUS(status)) + ")";
    if (!stderr_text.empty()) detail += "\n" + stderr_text;
    return synthetic_exception(detail);
  }
  return response_from_json(parsed);
}

}  // namespace pdlopt
