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

// Minimal reverse-mode differentiation over dense row-major-semantics
// matrices. Sequences are stored as rows (one time step per row); a linear
// layer with weight W (d_out x d_in) maps x (n x d_in) to x W^T.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "pasr/core/parameters.hpp"

namespace pasr {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Append-only computation record. Each forward op pushes a node holding its
/// value and a closure that scatters the node's gradient into its inputs.
class Tape {
 public:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    const Parameter* param = nullptr;
    std::function<void(Tape&, const Node&)> backward;
  };

  /// With `record_grad` false, parameter leaves never require gradients and
  /// no backward closures run (inference).
  explicit Tape(bool record_grad = true) : record_grad_(record_grad) { nodes_.reserve(512); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, {}); }

  /// Records `p` as a leaf, once per tape. The leaf requires a gradient when
  /// `p.trainable` or `force_grad` is set; gradients are handed back with
  /// accumulate_into().
  Var param(const Parameter& p, bool force_grad = false) {
    auto it = leaves_.find(&p);
    if (it != leaves_.end()) {
      if (force_grad && record_grad_) nodes_[static_cast<std::size_t>(it->second)].requires_grad = true;
      return Var{this, it->second};
    }
    Var v = push(p.value, record_grad_ && (p.trainable || force_grad), {});
    nodes_[static_cast<std::size_t>(v.id)].param = &p;
    leaves_.emplace(&p, v.id);
    return v;
  }

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  Node& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }

  Var push(Matrix value, bool requires_grad, std::function<void(Tape&, const Node&)> backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and runs the reverse sweep.
  void backward(Var root) {
    if (root.value().size() != 1) throw std::invalid_argument("backward: root must be scalar");
    Node& r = nodes_[static_cast<std::size_t>(root.id)];
    if (!r.requires_grad) return;
    r.grad = Matrix::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, n);
    }
  }

  /// Gradient reaching `v` after backward(); zeros when none did.
  Matrix grad_of(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Adds every leaf gradient to the same-named parameter of `store`.
  void accumulate_into(ParameterStore& store) const {
    for (const auto& [p, id] : leaves_) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.size() == 0) continue;
      Parameter& dst = store.at(p->name);
      if (dst.grad.rows() != n.grad.rows() || dst.grad.cols() != n.grad.cols()) dst.zero_grad();
      dst.grad += n.grad;
    }
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> leaves_;
  bool record_grad_ = true;
};

inline const Matrix& Var::value() const { return tape->node(id).value; }

namespace ops {

namespace detail {
inline void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("vars from different tapes");
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::check_same_tape(a, b);
  Tape& t = *a.tape;
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  const bool rg = t.needs(a) || t.needs(b);
  return t.push(a.value() * b.value(), rg, [a, b](Tape& tp, const Tape::Node& n) {
    if (tp.needs(a)) tp.accumulate(a, n.grad * b.value().transpose());
    if (tp.needs(b)) tp.accumulate(b, a.value().transpose() * n.grad);
  });
}

/// a * b^T
inline Var matmul_nt(Var a, Var b) {
  detail::check_same_tape(a, b);
  Tape& t = *a.tape;
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  const bool rg = t.needs(a) || t.needs(b);
  return t.push(a.value() * b.value().transpose(), rg, [a, b](Tape& tp, const Tape::Node& n) {
    if (tp.needs(a)) tp.accumulate(a, n.grad * b.value());
    if (tp.needs(b)) tp.accumulate(b, n.grad.transpose() * a.value());
  });
}

inline Var add(Var a, Var b) {
  detail::check_same_tape(a, b);
  Tape& t = *a.tape;
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("add: shape mismatch");
  const bool rg = t.needs(a) || t.needs(b);
  return t.push(a.value() + b.value(), rg, [a, b](Tape& tp, const Tape::Node& n) {
    tp.accumulate(a, n.grad);
    tp.accumulate(b, n.grad);
  });
}

/// Adds the 1 x n row `bias` to every row of `a`.
inline Var add_row(Var a, Var bias) {
  detail::check_same_tape(a, bias);
  Tape& t = *a.tape;
  if (bias.rows() != 1 || bias.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Matrix out = a.value().rowwise() + bias.value().row(0);
  const bool rg = t.needs(a) || t.needs(bias);
  return t.push(std::move(out), rg, [a, bias](Tape& tp, const Tape::Node& n) {
    tp.accumulate(a, n.grad);
    if (tp.needs(bias)) tp.accumulate(bias, n.grad.colwise().sum());
  });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.push(a.value() * s, t.needs(a), [a, s](Tape& tp, const Tape::Node& n) {
    tp.accumulate(a, n.grad * s);
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::check_same_tape(a, b);
  Tape& t = *a.tape;
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("mul: shape mismatch");
  const bool rg = t.needs(a) || t.needs(b);
  return t.push(a.value().cwiseProduct(b.value()), rg, [a, b](Tape& tp, const Tape::Node& n) {
    if (tp.needs(a)) tp.accumulate(a, n.grad.cwiseProduct(b.value()));
    if (tp.needs(b)) tp.accumulate(b, n.grad.cwiseProduct(a.value()));
  });
}

/// Multiplies every row of `a` elementwise by the 1 x n row `r`.
inline Var mul_row(Var a, Var r) {
  detail::check_same_tape(a, r);
  Tape& t = *a.tape;
  if (r.rows() != 1 || r.cols() != a.cols()) throw std::invalid_argument("mul_row: shape mismatch");
  Matrix out = a.value().array().rowwise() * r.value().row(0).array();
  const bool rg = t.needs(a) || t.needs(r);
  return t.push(std::move(out), rg, [a, r](Tape& tp, const Tape::Node& n) {
    if (tp.needs(a)) {
      Matrix g = n.grad.array().rowwise() * r.value().row(0).array();
      tp.accumulate(a, g);
    }
    if (tp.needs(r)) tp.accumulate(r, (n.grad.cwiseProduct(a.value())).colwise().sum());
  });
}

inline Var tanh(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().array().tanh();
  return t.push(y, t.needs(a), [a](Tape& tp, const Tape::Node& n) {
    Matrix d = (1.0 - n.value.array().square()).matrix();
    tp.accumulate(a, n.grad.cwiseProduct(d));
  });
}

/// GELU, tanh approximation.
inline Var gelu(Var a) {
  Tape& t = *a.tape;
  static constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double c = 0.044715;
  const Matrix& x = a.value();
  Matrix inner = (k * (x.array() + c * x.array().cube())).matrix();
  Matrix th = inner.array().tanh();
  Matrix y = (0.5 * x.array() * (1.0 + th.array())).matrix();
  return t.push(std::move(y), t.needs(a), [a, th](Tape& tp, const Tape::Node& n) {
    const Matrix& xv = a.value();
    Matrix d = (0.5 * (1.0 + th.array()) +
                0.5 * xv.array() * (1.0 - th.array().square()) * k * (1.0 + 3.0 * c * xv.array().square()))
                   .matrix();
    tp.accumulate(a, n.grad.cwiseProduct(d));
  });
}

/// Row-wise layer normalization with gain/bias rows.
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  Tape& t = *x.tape;
  const Matrix& xv = x.value();
  const Eigen::Index d = xv.cols();
  Eigen::VectorXd mean = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mean;
  Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(d)) + eps).sqrt().inverse();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  const bool rg = t.needs(x) || t.needs(gain) || t.needs(bias);
  return t.push(std::move(y), rg, [x, gain, bias, xhat, inv_std, d](Tape& tp, const Tape::Node& n) {
    if (tp.needs(gain)) tp.accumulate(gain, n.grad.cwiseProduct(xhat).colwise().sum());
    if (tp.needs(bias)) tp.accumulate(bias, n.grad.colwise().sum());
    if (tp.needs(x)) {
      Matrix gx = n.grad.array().rowwise() * gain.value().row(0).array();
      Eigen::VectorXd m1 = gx.rowwise().mean();
      Eigen::VectorXd m2 = gx.cwiseProduct(xhat).rowwise().mean();
      Matrix dx = gx;
      dx.colwise() -= m1;
      dx -= (xhat.array().colwise() * m2.array()).matrix();
      dx = dx.array().colwise() * inv_std.array();
      tp.accumulate(x, dx);
    }
    (void)d;
  });
}

/// Row-wise softmax restricted to cells where `allowed` is true. Rows with no
/// allowed cell produce all zeros.
inline Var masked_softmax(Var x, const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& allowed) {
  Tape& t = *x.tape;
  const Matrix& xv = x.value();
  if (allowed.rows() != xv.rows() || allowed.cols() != xv.cols()) {
    throw std::invalid_argument("masked_softmax: mask shape mismatch");
  }
  Matrix p = Matrix::Zero(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < xv.cols(); ++j) {
      if (allowed(i, j)) mx = std::max(mx, xv(i, j));
    }
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (Eigen::Index j = 0; j < xv.cols(); ++j) {
      if (allowed(i, j)) {
        p(i, j) = std::exp(xv(i, j) - mx);
        z += p(i, j);
      }
    }
    p.row(i) /= z;
  }
  return t.push(p, t.needs(x), [x](Tape& tp, const Tape::Node& n) {
    const Matrix& pv = n.value;
    Eigen::VectorXd dot = n.grad.cwiseProduct(pv).rowwise().sum();
    Matrix dx = (n.grad.colwise() - dot).cwiseProduct(pv);
    tp.accumulate(x, dx);
  });
}

inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = *parts[0].tape;
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: width mismatch");
    rows += p.rows();
    rg = rg || t.needs(p);
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return t.push(std::move(out), rg, [keep](Tape& tp, const Tape::Node& n) {
    Eigen::Index off = 0;
    for (const Var& p : keep) {
      if (tp.needs(p)) tp.accumulate(p, n.grad.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = *parts[0].tape;
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: height mismatch");
    cols += p.cols();
    rg = rg || t.needs(p);
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return t.push(std::move(out), rg, [keep](Tape& tp, const Tape::Node& n) {
    Eigen::Index off = 0;
    for (const Var& p : keep) {
      if (tp.needs(p)) tp.accumulate(p, n.grad.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

inline Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = *a.tape;
  if (start < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
  return t.push(a.value().middleCols(start, count), t.needs(a), [a, start, count](Tape& tp, const Tape::Node& n) {
    Matrix g = Matrix::Zero(a.rows(), a.cols());
    g.middleCols(start, count) = n.grad;
    tp.accumulate(a, g);
  });
}

inline Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = *a.tape;
  if (start < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows");
  return t.push(a.value().middleRows(start, count), t.needs(a), [a, start, count](Tape& tp, const Tape::Node& n) {
    Matrix g = Matrix::Zero(a.rows(), a.cols());
    g.middleRows(start, count) = n.grad;
    tp.accumulate(a, g);
  });
}

/// Rows `ids` of `table` (embedding lookup).
inline Var gather_rows(Var table, std::span<const int> ids) {
  Tape& t = *table.tape;
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) throw std::out_of_range("gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> keep(ids.begin(), ids.end());
  return t.push(std::move(out), t.needs(table), [table, keep](Tape& tp, const Tape::Node& n) {
    Matrix g = Matrix::Zero(table.rows(), table.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) g.row(keep[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    tp.accumulate(table, g);
  });
}

/// Sum of all entries, as a 1x1 node.
inline Var sum(Var a) {
  Tape& t = *a.tape;
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), t.needs(a), [a](Tape& tp, const Tape::Node& n) {
    tp.accumulate(a, Matrix::Constant(a.rows(), a.cols(), n.grad(0, 0)));
  });
}

/// Sum of squared entries, as a 1x1 node.
inline Var sum_squares(Var a) {
  Tape& t = *a.tape;
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return t.push(std::move(out), t.needs(a), [a](Tape& tp, const Tape::Node& n) {
    tp.accumulate(a, a.value() * (2.0 * n.grad(0, 0)));
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  return t.push(a.value().transpose(), t.needs(a), [a](Tape& tp, const Tape::Node& n) {
    tp.accumulate(a, n.grad.transpose());
  });
}

/// Sum over rows of the negative log-softmax at `targets`, skipping positions
/// whose target equals `ignore_id`. Returns a 1x1 node; the count of scored
/// positions is written to `counted`.
inline Var cross_entropy_sum(Var logits, std::span<const int> targets, int ignore_id, int* counted = nullptr) {
  Tape& t = *logits.tape;
  const Matrix& z = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) {
    throw std::invalid_argument("cross_entropy_sum: target count mismatch");
  }
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  int n_scored = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    Eigen::RowVectorXd e = (z.row(i).array() - mx).exp();
    const double s = e.sum();
    probs.row(i) = e / s;
    const int y = targets[static_cast<std::size_t>(i)];
    if (y == ignore_id) continue;
    if (y < 0 || y >= z.cols()) throw std::out_of_range("cross_entropy_sum: target out of range");
    total += -(z(i, y) - mx - std::log(s));
    ++n_scored;
  }
  if (counted != nullptr) *counted = n_scored;
  Matrix out(1, 1);
  out(0, 0) = total;
  std::vector<int> keep(targets.begin(), targets.end());
  return t.push(std::move(out), t.needs(logits), [logits, keep, probs, ignore_id](Tape& tp, const Tape::Node& n) {
    Matrix g = probs;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const int y = keep[static_cast<std::size_t>(i)];
      if (y == ignore_id) {
        g.row(i).setZero();
      } else {
        g(i, y) -= 1.0;
      }
    }
    tp.accumulate(logits, g * n.grad(0, 0));
  });
}

}  // namespace ops
}  // namespace pasr
