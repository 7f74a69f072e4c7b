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

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace pasr {

using Matrix = Eigen::MatrixXd;

/// A named dense tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
  Eigen::Index numel() const { return value.size(); }
};

/// Ordered collection of parameters with stable addresses.
class ParameterStore {
 public:
  Parameter& add(std::string name, Matrix value, bool trainable = true) {
    if (index_.count(name) != 0) throw std::invalid_argument("duplicate parameter: " + name);
    index_.emplace(name, params_.size());
    Parameter p;
    p.name = std::move(name);
    p.grad = Matrix::Zero(value.rows(), value.cols());
    p.value = std::move(value);
    p.trainable = trainable;
    params_.push_back(std::move(p));
    return params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Parameter& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return params_[it->second];
  }
  const Parameter& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return params_[it->second];
  }

  /// Removes every parameter whose name satisfies `pred`; order is kept.
  void remove_if(const std::function<bool(const Parameter&)>& pred) {
    std::deque<Parameter> kept;
    for (auto& p : params_) {
      if (!pred(p)) kept.push_back(std::move(p));
    }
    params_ = std::move(kept);
    index_.clear();
    for (std::size_t i = 0; i < params_.size(); ++i) index_.emplace(params_[i].name, i);
  }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  Eigen::Index total_numel() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
  }

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace pasr
