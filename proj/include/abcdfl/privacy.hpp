/*
 * Copyright 2026 The ABC-DFL Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <optional>

#include "abcdfl/core.hpp"

namespace abcdfl {

struct DpConfig {
  double clip = 4.0;
  double sigma = 0.005;
  std::optional<double> epsilon;
  std::optional<double> delta;

  void validate() const;
};

// Scales the whole update (all layers jointly) down to norm `clip` if needed.
UpdateDelta clip_update(const UpdateDelta& delta, double clip);
// Adds i.i.d. N(0, sigma^2) to every coordinate.
UpdateDelta add_gaussian_noise(const UpdateDelta& delta, double sigma, SeededRng& rng);
UpdateDelta privatize(const UpdateDelta& delta, const DpConfig& cfg, SeededRng& rng);
// Single-release Gaussian mechanism bound C * sqrt(2 ln(1.25 / delta)) / epsilon.
double required_sigma(double epsilon, double delta, double clip);

}  // namespace abcdfl
