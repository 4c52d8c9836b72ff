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

#ifndef TINYMA_TESTS_TEST_UTIL_H_
#define TINYMA_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "tinyma/game_model.h"

namespace tinyma::testing {

// Identical AVs / RSUs with E = e - alpha T = e when alpha = 0.
inline GameInstance plain_game(std::size_t v, std::size_t r,
                               double satisfaction = 1.0,
                               double alpha = 0.0) {
  GameInstance g;
  for (std::size_t j = 0; j < r; ++j) {
    RsuProfile rsu;
    rsu.id = static_cast<int>(j);
    rsu.position = {100.0 * static_cast<double>(j), 0.0};
    g.rsus.push_back(rsu);
  }
  for (std::size_t i = 0; i < v; ++i) {
    AvProfile av;
    av.id = static_cast<int>(i);
    av.satisfaction = satisfaction;
    av.delay_sensitivity = alpha;
    av.position = {20.0 + 10.0 * static_cast<double>(i), 30.0};
    g.avs.push_back(av);
  }
  refresh_qoe(g);
  g.social = Matrix(v, v);
  g.service = Matrix(r, r);
  return g;
}

// Sets alpha so that e - alpha * T_max equals `offset`.
inline void set_offset(AvProfile& av, double offset) {
  av.delay_sensitivity = (std::numbers::e - offset) / av.max_delay;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

// Central difference of f at params[k].
inline double central_difference(const std::function<double()>& f,
                                 std::vector<double>& params, std::size_t k,
                                 double h) {
  const double saved = params[k];
  params[k] = saved + h;
  const double up = f();
  params[k] = saved - h;
  const double down = f();
  params[k] = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace tinyma::testing

#endif  // TINYMA_TESTS_TEST_UTIL_H_
