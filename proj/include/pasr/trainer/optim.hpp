// Copyright 2026 The pasr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "pasr/core/parameters.hpp"

namespace pasr {

struct OptimizerConfig {
  double weight_decay = 1e-4;
  double epsilon = 1e-8;
  // 0.99, not the usual 0.9.
  double beta1 = 0.99;
  double beta2 = 0.999;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(OptimizerConfig, weight_decay, epsilon, beta1, beta2)

/// Linear warmup from 0 to `peak` over `warmup` steps, then linear decay to 0
/// at `total_steps`.
inline double lr_at(long step, double peak, long warmup, long total_steps) {
  if (total_steps <= warmup) throw std::invalid_argument("lr_at: total_steps must exceed warmup_steps");
  if (step < 0 || step > total_steps) throw std::out_of_range("lr_at: step outside [0, total_steps]");
  if (warmup > 0 && step <= warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  return peak * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

/// AdamW with bias correction and decoupled weight decay. Only trainable
/// parameters holding a gradient are touched.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  void step(ParameterStore& params, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& p : params) {
      if (!p.trainable || p.grad.size() != p.value.size()) continue;
      auto& st = state_[p.name];
      if (st.m.size() == 0) {
        st.m = Matrix::Zero(p.value.rows(), p.value.cols());
        st.v = Matrix::Zero(p.value.rows(), p.value.cols());
      }
      st.m = cfg_.beta1 * st.m + (1.0 - cfg_.beta1) * p.grad;
      st.v = cfg_.beta2 * st.v + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
      const auto m_hat = (st.m / c1).array();
      const auto v_hat = (st.v / c2).array();
      p.value.array() -= lr * (m_hat / (v_hat.sqrt() + cfg_.epsilon) + cfg_.weight_decay * p.value.array());
    }
  }

  long steps() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  OptimizerConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace pasr
