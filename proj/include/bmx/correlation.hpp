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

#ifndef BMX_CORRELATION_HPP_
#define BMX_CORRELATION_HPP_

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bmx {

enum class Coefficient { kPearson, kSpearman, kKendall };

std::string ToString(Coefficient c);
Coefficient ParseCoefficient(std::string_view name);

// All coefficients require |x| == |y| >= 2 and throw UndefinedCorrelation
// when the value does not exist (a constant input, all pairs tied).
double Pearson(std::span<const double> x, std::span<const double> y);

// Pearson on fractional ranks.
double Spearman(std::span<const double> x, std::span<const double> y);

// Kendall tau-b in O(n log n).
double Kendall(std::span<const double> x, std::span<const double> y);

double Correlate(Coefficient c, std::span<const double> x, std::span<const double> y);

// 1-based ranks; tied values share the average of their positions.
std::vector<double> FractionalRanks(std::span<const double> values);

}  // namespace bmx

#endif  // BMX_CORRELATION_HPP_
