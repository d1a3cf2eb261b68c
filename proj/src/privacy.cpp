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
#include "abcdfl/privacy.hpp"

#include <cmath>

namespace abcdfl {

void DpConfig::validate() const {
  if (!(clip > 0.0)) throw ConfigError("dp: clip must be positive");
  if (!(sigma >= 0.0)) throw ConfigError("dp: sigma must be nonnegative");
  if (epsilon && !(*epsilon > 0.0)) throw ConfigError("dp: epsilon must be positive");
  if (delta && !(*delta > 0.0 && *delta < 1.0)) throw ConfigError("dp: delta must be in (0,1)");
}

UpdateDelta clip_update(const UpdateDelta& delta, double clip) {
  if (!(clip > 0.0)) throw ConfigError("clip_update: clip must be positive");
  const double norm = l2_norm(flatten(delta));
  if (norm <= clip) return delta;
  return scaled(delta, clip / norm);
}

UpdateDelta add_gaussian_noise(const UpdateDelta& delta, double sigma, SeededRng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("add_gaussian_noise: sigma must be nonnegative");
  if (sigma == 0.0) return delta;
  UpdateDelta out = delta;
  for (auto& [name, v] : out.layers) {
    for (double& x : v) x += rng.normal(0.0, sigma);
  }
  return out;
}

UpdateDelta privatize(const UpdateDelta& delta, const DpConfig& cfg, SeededRng& rng) {
  return add_gaussian_noise(clip_update(delta, cfg.clip), cfg.sigma, rng);
}

double required_sigma(double epsilon, double delta, double clip) {
  if (!(epsilon > 0.0)) throw ConfigError("required_sigma: epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("required_sigma: delta must be in (0,1)");
  if (!(clip > 0.0)) throw ConfigError("required_sigma: clip must be positive");
  return clip * std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

}  // namespace abcdfl
