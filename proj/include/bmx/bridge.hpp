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

#ifndef BMX_BRIDGE_HPP_
#define BMX_BRIDGE_HPP_

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>

#include "bmx/metrics.hpp"

namespace bmx {

// Where an external metric lives:
//   exec:<shell command>   spawn the command; speak over its stdin/stdout
//   tcp:<host>:<port>      connect to a listening adapter
struct ExternalConfig {
  std::string endpoint;
  std::chrono::milliseconds timeout{30000};  // per request/response exchange
  std::size_t batch_capacity = 64;
};

inline constexpr int kBridgeProtocolVersion = 1;

// Connects and performs the hello handshake. Throws MetricError on
// connection failure, timeout, or version mismatch.
//
// Wire protocol, newline-delimited JSON, one object per line:
//   -> {"op":"hello","version":1}
//   <- {"op":"hello","version":1,"name":"..."}
//   -> {"op":"score","id":N,"batch":[{"gts":[[tok,...],...],"hyp":[tok,...]},...]}
//   <- {"op":"score","id":N,"scores":[x,...]} | {"op":"error","id":N,"message":"..."}
// Ids start at 1 and increase strictly per connection. The returned handle
// is single-flight: one connection, serial exchanges.
MetricHandle ConnectExternalMetric(const ExternalConfig& config);

// Replaces bare NaN / Infinity / -Infinity literals outside of strings with
// null, so that responses from lenient JSON encoders still parse.
std::string SanitizeNonFiniteLiterals(const std::string& line);

}  // namespace bmx

#endif  // BMX_BRIDGE_HPP_
