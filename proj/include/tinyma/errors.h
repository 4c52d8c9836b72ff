// Copyright 2026 The tinyma Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TINYMA_ERRORS_H_
#define TINYMA_ERRORS_H_

#include <stdexcept>
#include <string>
#include <vector>

namespace tinyma {

// Argument outside the mathematical domain of a formula (log of a
// non-positive number, zero distance, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// M/M/1 queue with service rate not exceeding the arrival rate.
class QueueInstabilityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid configuration or game definition.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Fixed-point iteration that ran out of iterations.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> residuals)
      : std::runtime_error(what), residuals_(std::move(residuals)) {}

  const std::vector<double>& residuals() const { return residuals_; }
  double last_residual() const {
    return residuals_.empty() ? 0.0 : residuals_.back();
  }

 private:
  std::vector<double> residuals_;
};

// Loss or parameter became NaN/inf during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tinyma

#endif  // TINYMA_ERRORS_H_
