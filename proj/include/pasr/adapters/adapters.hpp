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

// Parameter-efficient adaptation of projection sites.
//
// LoRA:    delta(x) = (alpha / r) * B A x,          A: r x d_in, B: d_out x r
// AdaLoRA: delta(x) = (alpha / r_initial) * P diag(lambda) Q x,
//                                                     P: d_out x r, Q: r x d_in
//
// LoRA starts with B = 0; AdaLoRA starts with lambda = 0, so both begin as the
// base model. AdaLoRA keeps a 0/1 mask and an importance score per singular
// triplet (as non-trainable parameters). Importance is an exponential moving
// average of |lambda * dL/dlambda|. Pruned triplets have lambda exactly 0.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "pasr/backbone/model.hpp"
#include "pasr/conditioning/conditioning.hpp"
#include "pasr/core/autodiff.hpp"
#include "pasr/core/rng.hpp"

namespace pasr {

enum class AdapterMethod { none, lora, adalora, fft };

inline std::string_view to_string(AdapterMethod m) {
  switch (m) {
    case AdapterMethod::none: return "none";
    case AdapterMethod::lora: return "lora";
    case AdapterMethod::adalora: return "adalora";
    case AdapterMethod::fft: return "fft";
  }
  return "none";
}

inline AdapterMethod parse_adapter_method(std::string_view s) {
  if (s == "none") return AdapterMethod::none;
  if (s == "lora") return AdapterMethod::lora;
  if (s == "adalora") return AdapterMethod::adalora;
  if (s == "fft") return AdapterMethod::fft;
  throw std::invalid_argument("unknown adapter method '" + std::string(s) + "'");
}

struct AdapterSpec {
  AdapterMethod method = AdapterMethod::lora;
  /// Short site names (query, value, cross_query, ...) or full site names.
  std::vector<std::string> targets{"query", "value"};
  int rank = 8;
  double alpha = 32.0;
  double dropout_p = 0.1;
  int r_initial = 12;
  int r_target = 8;
  int warmup_steps = 0;
  int end_step = 1000;
  double importance_decay = 0.85;
  int reallocate_every = 100;
  double orthogonality_weight = 1e-4;

  double scale() const {
    return method == AdapterMethod::adalora ? alpha / r_initial : alpha / rank;
  }

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (!(alpha > 0.0)) v.emplace_back("adapter.alpha must be > 0");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) v.emplace_back("adapter.dropout_p must be in [0, 1)");
    if (method == AdapterMethod::lora && rank < 1) v.emplace_back("adapter.rank must be >= 1 for lora");
    if (method == AdapterMethod::adalora) {
      if (r_target < 1) v.emplace_back("adapter.r_target must be >= 1");
      if (r_initial < r_target) v.emplace_back("adapter.r_target must not exceed adapter.r_initial");
      if (end_step <= warmup_steps) v.emplace_back("adapter.end_step must be greater than adapter.warmup_steps");
      if (reallocate_every < 1) v.emplace_back("adapter.reallocate_every must be >= 1");
      if (!(importance_decay >= 0.0 && importance_decay < 1.0)) v.emplace_back("adapter.importance_decay must be in [0, 1)");
    }
    if ((method == AdapterMethod::lora || method == AdapterMethod::adalora) && targets.empty()) {
      v.emplace_back("adapter.targets must not be empty");
    }
    return v;
  }

  void validate() const {
    auto v = violations();
    if (!v.empty()) throw std::invalid_argument(v.front());
  }
};

inline void to_json(nlohmann::json& j, const AdapterSpec& s) {
  j = nlohmann::json{{"method", std::string(to_string(s.method))},
                     {"targets", s.targets},
                     {"rank", s.rank},
                     {"alpha", s.alpha},
                     {"dropout_p", s.dropout_p},
                     {"r_initial", s.r_initial},
                     {"r_target", s.r_target},
                     {"warmup_steps", s.warmup_steps},
                     {"end_step", s.end_step},
                     {"importance_decay", s.importance_decay},
                     {"reallocate_every", s.reallocate_every},
                     {"orthogonality_weight", s.orthogonality_weight}};
}

inline void from_json(const nlohmann::json& j, AdapterSpec& s) {
  AdapterSpec d;
  s.method = parse_adapter_method(j.value("method", std::string(to_string(d.method))));
  s.targets = j.value("targets", d.targets);
  s.rank = j.value("rank", d.rank);
  s.alpha = j.value("alpha", d.alpha);
  s.dropout_p = j.value("dropout_p", d.dropout_p);
  s.r_initial = j.value("r_initial", d.r_initial);
  s.r_target = j.value("r_target", d.r_target);
  s.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  s.end_step = j.value("end_step", d.end_step);
  s.importance_decay = j.value("importance_decay", d.importance_decay);
  s.reallocate_every = j.value("reallocate_every", d.reallocate_every);
  s.orthogonality_weight = j.value("orthogonality_weight", d.orthogonality_weight);
}

inline std::string adapter_param(const std::string& site, const char* part) { return "adapter." + site + "." + part; }

inline bool is_adapter_param(const std::string& name) { return name.rfind("adapter.", 0) == 0; }
inline bool is_mapping_param(const std::string& name) { return name.rfind("mapping.", 0) == 0; }

inline std::optional<AdapterSpec> adapter_spec_of(const Model& m) {
  if (m.adapter_spec.is_null()) return std::nullopt;
  return m.adapter_spec.get<AdapterSpec>();
}

/// Sites selected by `spec.targets`, in backbone order.
inline std::vector<ProjectionSite> resolve_sites(const BackboneConfig& cfg, const std::vector<std::string>& targets) {
  const auto all = projection_sites(cfg);
  std::vector<ProjectionSite> out;
  for (const auto& t : targets) {
    bool hit = false;
    for (const auto& s : all) hit = hit || s.short_name == t || s.name == t;
    if (!hit) throw std::invalid_argument("unknown adapter site '" + t + "'");
  }
  for (const auto& s : all) {
    for (const auto& t : targets) {
      if (s.short_name == t || s.name == t) {
        out.push_back(s);
        break;
      }
    }
  }
  return out;
}

/// Sites that currently carry adapter factors.
inline std::vector<std::string> adapter_sites(const Model& m) {
  std::vector<std::string> out;
  for (const auto& s : projection_sites(m.config)) {
    if (m.params.contains(adapter_param(s.name, "lora_A")) || m.params.contains(adapter_param(s.name, "Q"))) {
      out.push_back(s.name);
    }
  }
  return out;
}

namespace detail {

inline Var input_dropout(Var x, double p, const ForwardContext& ctx) {
  if (!ctx.training || p <= 0.0) return x;
  if (ctx.rng == nullptr) throw std::invalid_argument("adapter dropout needs an rng when training");
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = ctx.rng->bernoulli(p) ? 0.0 : 1.0 / (1.0 - p);
  return ops::mul(x, x.tape->constant(std::move(mask)));
}

}  // namespace detail

/// Graph form of the LoRA delta on rows of x.
inline Var lora_delta_graph(Var x, Var a, Var b, double scale, double dropout_p, const ForwardContext& ctx) {
  Var xd = detail::input_dropout(x, dropout_p, ctx);
  return ops::scale(ops::matmul_nt(ops::matmul_nt(xd, a), b), scale);
}

/// Graph form of the AdaLoRA delta on rows of x; `lambda` and `mask` are 1 x r.
inline Var adalora_delta_graph(Var x, Var p, Var lambda, Var mask, Var q, double scale, double dropout_p,
                               const ForwardContext& ctx) {
  Var xd = detail::input_dropout(x, dropout_p, ctx);
  Var coeff = ops::mul(lambda, mask);
  return ops::scale(ops::matmul_nt(ops::mul_row(ops::matmul_nt(xd, q), coeff), p), scale);
}

/// (alpha / r) * B (A x), with dropout on x when training.
inline Eigen::VectorXd lora_delta(const Eigen::VectorXd& x, const Matrix& a, const Matrix& b, const AdapterSpec& spec,
                                  bool training = false, Rng* rng = nullptr) {
  if (a.cols() != x.size() || b.cols() != a.rows()) throw std::invalid_argument("lora_delta: dimension mismatch");
  Tape t(false);
  Var out = lora_delta_graph(t.constant(x.transpose()), t.constant(a), t.constant(b), spec.alpha / spec.rank,
                             spec.dropout_p, ForwardContext{training, rng});
  return out.value().row(0).transpose();
}

/// Installs the site hooks described by m.adapter_spec.
inline void attach_adapter_hooks(Model& m) {
  m.hooks.clear();
  auto spec = adapter_spec_of(m);
  if (!spec || m.merged) return;
  if (spec->method != AdapterMethod::lora && spec->method != AdapterMethod::adalora) return;
  const double scale = spec->scale();
  const double p = spec->dropout_p;
  for (const auto& site : resolve_sites(m.config, spec->targets)) {
    const std::string name = site.name;
    if (spec->method == AdapterMethod::lora) {
      m.hooks[name] = [name, scale, p](Tape& t, const ParameterStore& ps, Var x, const ForwardContext& ctx) {
        return lora_delta_graph(x, t.param(ps.at(adapter_param(name, "lora_A"))),
                                t.param(ps.at(adapter_param(name, "lora_B"))), scale, p, ctx);
      };
    } else {
      m.hooks[name] = [name, scale, p](Tape& t, const ParameterStore& ps, Var x, const ForwardContext& ctx) {
        return adalora_delta_graph(x, t.param(ps.at(adapter_param(name, "P"))),
                                   t.param(ps.at(adapter_param(name, "lambda"))),
                                   t.param(ps.at(adapter_param(name, "mask"))),
                                   t.param(ps.at(adapter_param(name, "Q"))), scale, p, ctx);
      };
    }
  }
}

/// Returns a copy of `base` with adapters attached per `spec`. Base weights are
/// frozen for none/lora/adalora and trainable for fft; mapping networks are
/// always trainable.
inline Model inject(const Model& base, const AdapterSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (base.merged) throw std::invalid_argument("inject: model already carries merged adapters");
  if (!base.adapter_spec.is_null()) throw std::invalid_argument("inject: model already has adapters");
  Model m = base;
  Rng rng(derive_seed(seed, "adapters"));
  const bool peft = spec.method == AdapterMethod::lora || spec.method == AdapterMethod::adalora;
  std::vector<ProjectionSite> sites;
  if (peft) sites = resolve_sites(m.config, spec.targets);
  for (auto& p : m.params) p.trainable = is_mapping_param(p.name) || spec.method == AdapterMethod::fft;
  for (const auto& s : sites) {
    if (spec.method == AdapterMethod::lora) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.d_in));
      Matrix a(spec.rank, s.d_in);
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-bound, bound);
      m.params.add(adapter_param(s.name, "lora_A"), a, true);
      m.params.add(adapter_param(s.name, "lora_B"), Matrix::Zero(s.d_out, spec.rank), true);
    } else {
      const int r = spec.r_initial;
      Matrix p(s.d_out, r);
      Matrix q(r, s.d_in);
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.normal(0.0, 1.0 / std::sqrt(s.d_out));
      for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.normal(0.0, 1.0 / std::sqrt(s.d_in));
      m.params.add(adapter_param(s.name, "P"), p, true);
      m.params.add(adapter_param(s.name, "lambda"), Matrix::Zero(1, r), true);
      m.params.add(adapter_param(s.name, "Q"), q, true);
      m.params.add(adapter_param(s.name, "mask"), Matrix::Ones(1, r), false);
      m.params.add(adapter_param(s.name, "importance"), Matrix::Zero(1, r), false);
    }
  }
  m.adapter_spec = spec;
  attach_adapter_hooks(m);
  return m;
}

/// Names of parameters the optimizer updates, in store order.
inline std::vector<std::string> trainable_parameters(const Model& m) {
  std::vector<std::string> out;
  for (const auto& p : m.params) {
    if (p.trainable) out.push_back(p.name);
  }
  return out;
}

/// Number of adapter factor values at LoRA rank r on a d_out x d_in site.
inline long lora_parameter_count(int rank, int d_in, int d_out) {
  return static_cast<long>(rank) * (d_in + d_out);
}

// ---------------------------------------------------------------------------
// AdaLoRA budget and reallocation

/// Total retained rank at `step`: sites * r_initial up to warmup, sites *
/// r_target from end_step on, and in between
///   floor(sites*r_target + sites*(r_initial - r_target) * (1 - progress)^3)
/// with progress = (step - warmup) / (end_step - warmup).
inline long adalora_budget(long step, const AdapterSpec& spec, long total_sites) {
  if (step < 0) throw std::invalid_argument("adalora_budget: negative step");
  if (spec.end_step <= spec.warmup_steps) throw std::invalid_argument("adalora_budget: end_step must exceed warmup_steps");
  const long initial = total_sites * spec.r_initial;
  const long target = total_sites * spec.r_target;
  if (step <= spec.warmup_steps) return initial;
  if (step >= spec.end_step) return target;
  const double progress =
      static_cast<double>(step - spec.warmup_steps) / static_cast<double>(spec.end_step - spec.warmup_steps);
  const double remaining = 1.0 - progress;
  const double value = static_cast<double>(target) + static_cast<double>(initial - target) * remaining * remaining * remaining;
  return std::clamp(static_cast<long>(std::floor(value)), target, initial);
}

/// Chooses which triplets stay: the `budget` highest scores among currently
/// retained triplets (ties: earlier site, then lower index). Triplets already
/// pruned stay pruned.
inline std::vector<std::vector<bool>> select_triplets(const std::vector<std::vector<double>>& scores,
                                                      const std::vector<std::vector<bool>>& retained, long budget) {
  struct Cand {
    double score;
    std::size_t site;
    std::size_t idx;
  };
  std::vector<Cand> cands;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    for (std::size_t i = 0; i < scores[s].size(); ++i) {
      if (retained[s][i]) cands.push_back({scores[s][i], s, i});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.site, a.idx) < std::tie(b.site, b.idx);
  });
  std::vector<std::vector<bool>> keep(scores.size());
  for (std::size_t s = 0; s < scores.size(); ++s) keep[s].assign(scores[s].size(), false);
  const auto n = static_cast<std::size_t>(std::clamp<long>(budget, 0, static_cast<long>(cands.size())));
  for (std::size_t k = 0; k < n; ++k) keep[cands[k].site][cands[k].idx] = true;
  return keep;
}

inline long retained_rank(const Model& m, const std::string& site) {
  const auto& mask = m.params.at(adapter_param(site, "mask")).value;
  return static_cast<long>(mask.sum());
}

inline long total_retained_rank(const Model& m) {
  long n = 0;
  for (const auto& s : adapter_sites(m)) n += retained_rank(m, s);
  return n;
}

/// Keeps the top-`budget` triplets globally by importance; pruned triplets get
/// mask 0 and lambda exactly 0.
inline void adalora_reallocate(Model& m, long budget) {
  const auto sites = adapter_sites(m);
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<bool>> retained;
  for (const auto& s : sites) {
    const auto& imp = m.params.at(adapter_param(s, "importance")).value;
    const auto& mask = m.params.at(adapter_param(s, "mask")).value;
    scores.emplace_back(imp.data(), imp.data() + imp.size());
    std::vector<bool> r;
    for (Eigen::Index i = 0; i < mask.size(); ++i) r.push_back(mask(0, i) != 0.0);
    retained.push_back(std::move(r));
  }
  const auto keep = select_triplets(scores, retained, budget);
  for (std::size_t s = 0; s < sites.size(); ++s) {
    auto& mask = m.params.at(adapter_param(sites[s], "mask")).value;
    auto& lambda = m.params.at(adapter_param(sites[s], "lambda")).value;
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      if (!keep[s][static_cast<std::size_t>(i)]) {
        mask(0, i) = 0.0;
        lambda(0, i) = 0.0;
      }
    }
  }
}

/// Re-zeroes lambda entries of pruned triplets (after an optimizer step).
inline void enforce_adalora_masks(Model& m) {
  for (const auto& s : adapter_sites(m)) {
    if (!m.params.contains(adapter_param(s, "mask"))) continue;
    auto& lambda = m.params.at(adapter_param(s, "lambda")).value;
    lambda = lambda.cwiseProduct(m.params.at(adapter_param(s, "mask")).value);
  }
}

/// importance <- decay * importance + (1 - decay) * |lambda * dL/dlambda|,
/// using the gradients currently held in the parameter store.
inline void update_adalora_importance(Model& m, double decay) {
  for (const auto& s : adapter_sites(m)) {
    if (!m.params.contains(adapter_param(s, "importance"))) continue;
    const auto& lambda = m.params.at(adapter_param(s, "lambda"));
    auto& imp = m.params.at(adapter_param(s, "importance")).value;
    Matrix g = lambda.grad.size() == lambda.value.size() ? lambda.grad : Matrix::Zero(1, lambda.value.cols());
    Matrix sens = lambda.value.cwiseProduct(g).cwiseAbs();
    imp = decay * imp + (1.0 - decay) * sens;
    imp = imp.cwiseProduct(m.params.at(adapter_param(s, "mask")).value);
  }
}

/// sum over AdaLoRA sites of ||P^T P - I||_F^2 + ||Q Q^T - I||_F^2.
inline std::optional<Var> orthogonality_penalty_graph(Tape& t, const Model& m) {
  std::vector<Var> terms;
  for (const auto& s : adapter_sites(m)) {
    if (!m.params.contains(adapter_param(s, "P"))) continue;
    Var p = t.param(m.params.at(adapter_param(s, "P")));
    Var q = t.param(m.params.at(adapter_param(s, "Q")));
    const Eigen::Index r = p.cols();
    Var neg_eye = t.constant(-Matrix::Identity(r, r));
    terms.push_back(ops::sum_squares(ops::add(ops::matmul(ops::transpose(p), p), neg_eye)));
    terms.push_back(ops::sum_squares(ops::add(ops::matmul_nt(q, q), neg_eye)));
  }
  if (terms.empty()) return std::nullopt;
  Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = ops::add(total, terms[i]);
  return total;
}

/// Dense delta matrix of one site (d_out x d_in).
inline Matrix site_delta_matrix(const Model& m, const std::string& site) {
  auto spec = adapter_spec_of(m);
  if (!spec) throw std::invalid_argument("site_delta_matrix: model has no adapters");
  if (spec->method == AdapterMethod::lora) {
    return spec->scale() * m.params.at(adapter_param(site, "lora_B")).value * m.params.at(adapter_param(site, "lora_A")).value;
  }
  const Matrix coeff = m.params.at(adapter_param(site, "lambda")).value.cwiseProduct(m.params.at(adapter_param(site, "mask")).value);
  return spec->scale() * m.params.at(adapter_param(site, "P")).value * coeff.row(0).asDiagonal() *
         m.params.at(adapter_param(site, "Q")).value;
}

/// Folds every adapter delta into its base weight and removes the adapters.
inline Model merge(const Model& adapted) {
  if (adapted.merged) throw std::invalid_argument("merge: model is already merged");
  auto spec = adapter_spec_of(adapted);
  if (!spec || (spec->method != AdapterMethod::lora && spec->method != AdapterMethod::adalora)) {
    throw std::invalid_argument("merge: only lora or adalora models can be merged");
  }
  Model m = adapted;
  for (const auto& site : adapter_sites(adapted)) {
    m.params.at(site + ".weight").value += site_delta_matrix(adapted, site);
  }
  m.params.remove_if([](const Parameter& p) { return is_adapter_param(p.name); });
  m.hooks.clear();
  m.merged = true;
  return m;
}

}  // namespace pasr
