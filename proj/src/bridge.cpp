/*
 * Copyright 2026 The BMX Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "bmx/bridge.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "bmx/common.hpp"
#include "json.hpp"

namespace bmx {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string ErrnoText(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

// A connected stream socket read and written line by line.
class LineChannel {
 public:
  explicit LineChannel(int fd) : fd_(fd) {}
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;
  ~LineChannel() {
    if (fd_ >= 0) ::close(fd_);
  }

  void ShutdownWrite() { ::shutdown(fd_, SHUT_WR); }

  void WriteLine(const std::string& line) {
    std::string data = line;
    data += '\n';
    std::size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw MetricError(ErrnoText("bridge write failed"));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string ReadLine(Clock::time_point deadline) {
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (remaining.count() <= 0) throw MetricError("bridge timeout waiting for response");
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw MetricError(ErrnoText("bridge poll failed"));
      }
      if (ready == 0) throw MetricError("bridge timeout waiting for response");
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw MetricError(ErrnoText("bridge read failed"));
      }
      if (n == 0) throw MetricError("bridge connection closed by peer");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buffer_;
};

// Child process whose stdin/stdout are one end of a socketpair.
struct ChildProcess {
  pid_t pid = -1;

  ~ChildProcess() {
    if (pid <= 0) return;
    for (int i = 0; i < 100; ++i) {
      int status;
      if (::waitpid(pid, &status, WNOHANG) != 0) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(-pid, SIGKILL);
    int status;
    ::waitpid(pid, &status, 0);
  }
};

int SpawnShell(const std::string& command, ChildProcess& child) {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw MetricError(ErrnoText("socketpair"));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw MetricError(ErrnoText("fork"));
  }
  if (pid == 0) {
    // Own process group, so the whole adapter tree can be killed.
    ::setpgid(0, 0);
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);  // also set here; the child may not have run yet
  ::close(fds[1]);
  child.pid = pid;
  return fds[0];
}

int ConnectTcp(const std::string& address, Clock::time_point deadline) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) {
    throw UsageError("tcp endpoint must be tcp:<host>:<port>");
  }
  const std::string host = address.substr(0, colon);
  const std::string port = address.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0) {
    throw MetricError("cannot resolve '" + address + "': " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(found, ::freeaddrinfo);
  std::string last_error = "no addresses";
  for (addrinfo* ai = found; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      pollfd pfd{fd, POLLOUT, 0};
      if (::poll(&pfd, 1, static_cast<int>(std::max<long>(0, remaining.count()))) == 1) {
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      } else {
        errno = ETIMEDOUT;
      }
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, flags);
      return fd;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  throw MetricError("cannot connect to '" + address + "': " + last_error);
}

class ExternalMetric final : public Metric {
 public:
  explicit ExternalMetric(const ExternalConfig& config)
      : config_(config), name_(config.endpoint) {
    const auto deadline = Clock::now() + config_.timeout;
    if (config.endpoint.rfind("exec:", 0) == 0) {
      channel_ = std::make_unique<LineChannel>(SpawnShell(config.endpoint.substr(5), child_));
    } else if (config.endpoint.rfind("tcp:", 0) == 0) {
      channel_ = std::make_unique<LineChannel>(ConnectTcp(config.endpoint.substr(4), deadline));
    } else {
      throw UsageError("endpoint must start with exec: or tcp: ('" + config.endpoint + "')");
    }
    Handshake(deadline);
  }

  ~ExternalMetric() override {
    if (channel_) channel_->ShutdownWrite();
  }

  std::string name() const override { return name_; }
  MetricKind kind() const override { return MetricKind::kExternal; }
  std::size_t batch_capacity() const override { return config_.batch_capacity; }
  bool single_flight() const override { return true; }

 protected:
  std::vector<double> ScoreChunk(std::span<const MetricRequest> chunk) override {
    const long id = ++last_id_;
    json batch = json::array();
    for (const MetricRequest& r : chunk) {
      batch.push_back({{"gts", r.ground_truths}, {"hyp", r.hypothesis}});
    }
    json request = {{"op", "score"}, {"id", id}, {"batch", std::move(batch)}};
    channel_->WriteLine(request.dump());
    const json response = ReadJson(Clock::now() + config_.timeout);

    const std::string op = response.value("op", "");
    if (op == "error") {
      throw MetricError("adapter error for request " + std::to_string(id) + ": " +
                        response.value("message", std::string("(no message)")));
    }
    if (op != "score") throw MetricError("unexpected response op '" + op + "'");
    if (!response.contains("id") || response["id"] != id) {
      throw MetricError("response id mismatch (expected " + std::to_string(id) + ")");
    }
    const json& scores = response.contains("scores") ? response["scores"] : json();
    if (!scores.is_array() || scores.size() != chunk.size()) {
      throw MetricError("response for request " + std::to_string(id) + " must carry " +
                        std::to_string(chunk.size()) + " scores");
    }
    std::vector<double> out;
    out.reserve(chunk.size());
    for (const json& s : scores) {
      if (s.is_null()) throw MetricError("non-finite score in response");
      if (!s.is_number()) throw MetricError("score is not a number");
      out.push_back(s.get<double>());
    }
    return out;
  }

 private:
  json ReadJson(Clock::time_point deadline) {
    const std::string line = channel_->ReadLine(deadline);
    try {
      return json::parse(SanitizeNonFiniteLiterals(line));
    } catch (const json::parse_error&) {
      throw MetricError("malformed bridge response: " + line.substr(0, 200));
    }
  }

  void Handshake(Clock::time_point deadline) {
    try {
      channel_->WriteLine(json({{"op", "hello"}, {"version", kBridgeProtocolVersion}}).dump());
      const json reply = ReadJson(deadline);
      if (reply.value("op", "") != "hello") {
        throw MetricError("expected hello, got: " + reply.dump());
      }
      if (!reply.contains("version") || reply["version"] != kBridgeProtocolVersion) {
        throw MetricError("protocol version mismatch: adapter speaks " +
                          (reply.contains("version") ? reply["version"].dump() : "?") +
                          ", client speaks " + std::to_string(kBridgeProtocolVersion));
      }
      if (reply.contains("name") && reply["name"].is_string()) {
        name_ = reply["name"].get<std::string>();
      }
    } catch (const MetricError& e) {
      throw MetricError(std::string("bridge handshake with '") + config_.endpoint +
                        "' failed: " + e.what());
    }
  }

  ExternalConfig config_;
  std::string name_;
  ChildProcess child_;  // declared before channel_: closes after it
  std::unique_ptr<LineChannel> channel_;
  long last_id_ = 0;
};

}  // namespace

std::string SanitizeNonFiniteLiterals(const std::string& line) {
  std::string out;
  out.reserve(line.size());
  bool in_string = false;
  for (std::size_t i = 0; i < line.size();) {
    const char c = line[i];
    if (in_string) {
      out += c;
      if (c == '\\' && i + 1 < line.size()) {
        out += line[i + 1];
        i += 2;
        continue;
      }
      if (c == '"') in_string = false;
      ++i;
      continue;
    }
    if (c == '"') {
      in_string = true;
      out += c;
      ++i;
      continue;
    }
    bool replaced = false;
    for (const char* lit : {"-Infinity", "Infinity", "NaN"}) {
      const std::size_t len = std::strlen(lit);
      if (line.compare(i, len, lit) == 0) {
        out += "null";
        i += len;
        replaced = true;
        break;
      }
    }
    if (!replaced) {
      out += c;
      ++i;
    }
  }
  return out;
}

MetricHandle ConnectExternalMetric(const ExternalConfig& config) {
  if (config.batch_capacity == 0) throw UsageError("batch capacity must be positive");
  return std::make_shared<ExternalMetric>(config);
}

}  // namespace bmx
