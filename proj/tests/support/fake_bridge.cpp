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

// Minimal bridge adapter for client tests. Serves the protocol with the mock
// scorer over stdin/stdout, or over one TCP connection with --tcp (the
// listening port is printed on stdout first).
//
// Fault injection:
//   --version N        answer hello with version N
//   --nan              answer every score request with a NaN literal
//   --error-on ID      answer request ID with an error response
//   --hang             never answer score requests
//   --exit-after-hello exit right after the handshake

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>
#include <thread>

#include "bmx/metrics.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

struct Options {
  int version = 1;
  bool nan = false;
  long error_on = -1;
  bool hang = false;
  bool exit_after_hello = false;
  bool tcp = false;
};

// Returns false when the connection should close.
bool Handle(const Options& opt, const std::string& line, std::string& reply) {
  json req;
  try {
    req = json::parse(line);
  } catch (const json::exception&) {
    reply = json({{"op", "error"}, {"id", nullptr}, {"message", "bad json"}}).dump();
    return true;
  }
  const std::string op = req.value("op", "");
  if (op == "hello") {
    reply = json({{"op", "hello"}, {"version", opt.version}, {"name", "fake-mock"}}).dump();
    return !opt.exit_after_hello;
  }
  const json id = req.contains("id") ? req["id"] : json(nullptr);
  if (op != "score") {
    reply = json({{"op", "error"}, {"id", id}, {"message", "unknown op: " + op}}).dump();
    return true;
  }
  if (opt.hang) {
    std::this_thread::sleep_for(std::chrono::seconds(30));
    return false;
  }
  if (id.is_number() && id.get<long>() == opt.error_on) {
    reply = json({{"op", "error"}, {"id", id}, {"message", "injected failure"}}).dump();
    return true;
  }
  if (opt.nan) {
    reply = "{\"op\":\"score\",\"id\":" + id.dump() + ",\"scores\":[NaN]}";
    return true;
  }
  json scores = json::array();
  for (const json& item : req.at("batch")) {
    const auto gts = item.at("gts").get<std::vector<bmx::Tokens>>();
    const auto hyp = item.at("hyp").get<bmx::Tokens>();
    scores.push_back(bmx::MockScore(gts, hyp));
  }
  reply = json({{"op", "score"}, {"id", id}, {"scores", scores}}).dump();
  return true;
}

void Serve(const Options& opt, std::FILE* in, std::FILE* out) {
  std::string line;
  int c;
  while ((c = std::fgetc(in)) != EOF) {
    if (c != '\n') {
      line += static_cast<char>(c);
      continue;
    }
    std::string reply;
    const bool keep = Handle(opt, line, reply);
    line.clear();
    if (!reply.empty()) {
      std::fputs(reply.c_str(), out);
      std::fputc('\n', out);
      std::fflush(out);
    }
    if (!keep) return;
  }
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--version" && i + 1 < argc) {
      opt.version = std::atoi(argv[++i]);
    } else if (arg == "--nan") {
      opt.nan = true;
    } else if (arg == "--error-on" && i + 1 < argc) {
      opt.error_on = std::atol(argv[++i]);
    } else if (arg == "--hang") {
      opt.hang = true;
    } else if (arg == "--exit-after-hello") {
      opt.exit_after_hello = true;
    } else if (arg == "--tcp") {
      opt.tcp = true;
    }
  }
  if (!opt.tcp) {
    Serve(opt, stdin, stdout);
    return 0;
  }
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listener, 1) != 0) {
    std::perror("listen");
    return 1;
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  std::printf("%d\n", ntohs(addr.sin_port));
  std::fflush(stdout);
  const int conn = ::accept(listener, nullptr, nullptr);
  ::close(listener);
  if (conn < 0) return 1;
  std::FILE* in = ::fdopen(conn, "r");
  std::FILE* out = ::fdopen(::dup(conn), "w");
  Serve(opt, in, out);
  std::fclose(in);
  std::fclose(out);
  return 0;
}
