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

#ifndef BMX_COMMON_HPP_
#define BMX_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bmx {

// Error hierarchy. The CLI maps each family to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or parameters supplied by the caller (exit code 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

// Failure inside a metric or the external bridge (exit code 3).
class MetricError : public Error {
 public:
  explicit MetricError(const std::string& what,
                       std::optional<std::size_t> chunk = std::nullopt)
      : Error(what), chunk_(chunk) {}

  // Index of the batch chunk that failed, when known.
  std::optional<std::size_t> chunk() const { return chunk_; }

 private:
  std::optional<std::size_t> chunk_;
};

// A correlation coefficient is undefined for the given vectors (e.g. constant).
class UndefinedCorrelation : public DataError {
 public:
  using DataError::DataError;
};

// 64-bit FNV-1a. Stable across platforms and runs, unlike std::hash.
std::uint64_t Fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t Mix64(std::uint64_t x);

// Derives a seed from a base seed, a string key and an index.
std::uint64_t DeriveSeed(std::uint64_t seed, std::string_view key,
                         std::uint64_t index = 0);

// Seeded generator with portable draws. std::uniform_*_distribution is
// implementation defined, so the draws are done by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(Mix64(seed)) {}

  std::uint64_t Next() { return engine_(); }

  // Uniform in [0, n). n must be > 0.
  std::size_t UniformIndex(std::size_t n);

  // Uniform double in [0, 1).
  double UniformReal() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  bool Coin() { return (engine_() >> 63) != 0; }

  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[UniformIndex(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// `count` equally spaced values from lo to hi inclusive.
std::vector<double> Linspace(double lo, double hi, std::size_t count);

// Runs body(i) for i in [0, n) on up to `jobs` threads. Exceptions are
// rethrown on the calling thread (the one from the lowest index wins).
void ParallelFor(std::size_t n, std::size_t jobs,
                 const std::function<void(std::size_t)>& body);

// Lower-midpoint-average median; values must be nonempty.
double Median(std::vector<double> values);

}  // namespace bmx

#endif  // BMX_COMMON_HPP_
