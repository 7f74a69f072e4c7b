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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pasr/adapters/adapters.hpp"
#include "pasr/backbone/checkpoint.hpp"
#include "pasr/backbone/model.hpp"
#include "pasr/conditioning/conditioning.hpp"
#include "pasr/frontend/features.hpp"
#include "pasr/manifests/manifest.hpp"
#include "pasr/metrics/report.hpp"
#include "pasr/trainer/optim.hpp"

namespace pasr {

struct TrainConfig {
  AdapterSpec adapter;
  double learning_rate = 1e-3;
  int epochs = 15;
  int warmup_steps = 500;
  int eval_every_steps = 2000;
  /// Caps the step count below epochs * ceil(N / batch_size) when > 0.
  long max_steps = 0;
  OptimizerConfig optimizer;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double dev_subsample_fraction = 0.1;
  DevStratification dev_stratification = DevStratification::by_utterance;
  bool use_specaugment = true;
  bool use_personalization = true;
  double synthetic_ratio = 0.0;

  std::vector<std::string> violations() const {
    std::vector<std::string> v = adapter.violations();
    if (!(learning_rate > 0.0)) v.emplace_back("train.learning_rate must be > 0");
    if (epochs < 1) v.emplace_back("train.epochs must be >= 1");
    if (warmup_steps < 0) v.emplace_back("train.warmup_steps must be >= 0");
    if (eval_every_steps < 1) v.emplace_back("train.eval_every_steps must be >= 1");
    if (batch_size < 1) v.emplace_back("train.batch_size must be >= 1");
    if (max_steps < 0) v.emplace_back("train.max_steps must be >= 0");
    if (!(dev_subsample_fraction > 0.0 && dev_subsample_fraction <= 1.0)) {
      v.emplace_back("train.dev_subsample_fraction must be in (0, 1]");
    }
    if (!(synthetic_ratio >= 0.0 && synthetic_ratio <= 1.0)) v.emplace_back("train.synthetic_ratio must be in [0, 1]");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) v.emplace_back("train.optimizer.beta1 must be in [0, 1)");
    if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) v.emplace_back("train.optimizer.beta2 must be in [0, 1)");
    if (!(optimizer.epsilon > 0.0)) v.emplace_back("train.optimizer.epsilon must be > 0");
    if (optimizer.weight_decay < 0.0) v.emplace_back("train.optimizer.weight_decay must be >= 0");
    return v;
  }

  long total_steps(std::size_t num_train) const {
    const long per_epoch = static_cast<long>((num_train + static_cast<std::size_t>(batch_size) - 1) /
                                             static_cast<std::size_t>(batch_size));
    const long total = per_epoch * epochs;
    return max_steps > 0 ? std::min(total, max_steps) : total;
  }
};

inline double lr_at(long step, const TrainConfig& cfg, long total_steps) {
  return lr_at(step, cfg.learning_rate, cfg.warmup_steps, total_steps);
}

struct CheckpointRecord {
  long step = 0;
  double wer = 0.0;
  double semscore = 0.0;
  double lr = 0.0;
  std::string file;
  bool is_best = false;
};

inline void to_json(nlohmann::json& j, const CheckpointRecord& r) {
  j = nlohmann::json{{"step", r.step}, {"wer", r.wer}, {"semscore", r.semscore},
                     {"lr", r.lr},     {"file", r.file}, {"is_best", r.is_best}};
}

/// Index of the minimal-WER record, earliest step on ties.
inline std::size_t select_best(const std::vector<CheckpointRecord>& records) {
  if (records.empty()) throw std::invalid_argument("select_best: no records");
  std::size_t best = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& a = records[i];
    const auto& b = records[best];
    if (a.wer < b.wer || (a.wer == b.wer && a.step < b.step)) best = i;
  }
  return best;
}

inline void mark_best(std::vector<CheckpointRecord>& records) {
  const std::size_t b = select_best(records);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].is_best = i == b;
}

/// Steps at which evaluation happens: every `every` steps and the last one.
inline std::vector<long> evaluation_steps(long total_steps, long every) {
  std::vector<long> out;
  for (long s = every; s <= total_steps; s += every) out.push_back(s);
  if (total_steps > 0 && (out.empty() || out.back() != total_steps)) out.push_back(total_steps);
  return out;
}

/// One utterance ready for the model.
struct Example {
  std::string id;
  FeatureMatrix features;
  /// BOS w_1 .. w_n EOS
  std::vector<int> tokens;
  /// Pooled embeddings, one per conditioning source.
  std::vector<Eigen::VectorXd> embeddings;
  std::string transcript;
};

inline FeatureMatrix compute_features(const Waveform& wav, const FrontendConfig& cfg) {
  FeatureMatrix f = log_mel(wav, cfg);
  return cfg.normalize ? normalize_features(std::move(f)) : f;
}

/// Features, token targets, and (when the model is conditioned) pooled
/// embeddings for every record.
inline std::vector<Example> prepare_examples(const Model& model, const Manifest& m, const FrontendConfig& frontend,
                                             const EmbeddingProviderRegistry* registry) {
  std::vector<Example> out;
  out.reserve(m.records.size());
  const bool conditioned = !model.conditioning_sources.empty();
  if (conditioned && (registry == nullptr || registry->size() != model.conditioning_sources.size())) {
    throw std::invalid_argument("model is conditioned but the embedding registry does not match");
  }
  for (const auto& u : m.records) {
    Example ex;
    ex.id = u.id;
    ex.transcript = u.transcript;
    const Waveform wav = load_audio(u, m);
    ex.features = compute_features(wav, frontend);
    ex.tokens = model.tokenizer.encode(u.transcript);
    if (static_cast<int>(ex.tokens.size()) - 1 > model.config.max_decode_len) {
      throw std::invalid_argument("utterance '" + u.id + "' has more tokens than backbone.max_decode_len allows");
    }
    if (conditioned) ex.embeddings = extract_all(*registry, wav);
    out.push_back(std::move(ex));
  }
  return out;
}

/// Conditioned (or plain) memory for one example.
inline Var memory_graph(Tape& t, const Model& m, const Matrix& features, std::span<const Eigen::VectorXd> embeddings,
                        const ForwardContext& ctx) {
  Var memory = encode_graph(t, m, features, ctx);
  if (m.conditioning_sources.empty()) return memory;
  return conditioned_memory_graph(t, m, memory, embeddings, ctx);
}

struct LossParts {
  Var nll_sum;
  int positions = 0;
};

/// Summed teacher-forced NLL for one example; PAD targets are skipped.
inline LossParts example_nll_graph(Tape& t, const Model& m, const Matrix& features, const Example& ex,
                                   const ForwardContext& ctx) {
  if (ex.tokens.size() < 2) throw std::invalid_argument("example '" + ex.id + "' has no target tokens");
  Var memory = memory_graph(t, m, features, ex.embeddings, ctx);
  std::span<const int> all(ex.tokens);
  Var logits = decode_graph(t, m, all.first(all.size() - 1), memory, ctx);
  LossParts p;
  p.nll_sum = ops::cross_entropy_sum(logits, all.subspan(1), m.config.pad_id, &p.positions);
  return p;
}

/// Mean next-token NLL over the non-PAD positions of the batch, plus the
/// weighted orthogonality penalty when AdaLoRA is active. `features` (one per
/// example) overrides the stored features, e.g. with SpecAugment applied.
inline Var batch_loss_graph(Tape& t, const Model& m, std::span<const Example* const> batch, const ForwardContext& ctx,
                            const std::vector<Matrix>* features = nullptr) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  std::vector<Var> sums;
  int positions = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Matrix& f = features != nullptr ? (*features)[i] : batch[i]->features.frames;
    LossParts p = example_nll_graph(t, m, f, *batch[i], ctx);
    sums.push_back(p.nll_sum);
    positions += p.positions;
  }
  if (positions == 0) throw std::invalid_argument("loss: batch has no non-PAD targets");
  Var total = sums[0];
  for (std::size_t i = 1; i < sums.size(); ++i) total = ops::add(total, sums[i]);
  Var loss = ops::scale(total, 1.0 / positions);
  if (auto spec = adapter_spec_of(m); spec && spec->method == AdapterMethod::adalora && !m.merged &&
                                      spec->orthogonality_weight > 0.0) {
    if (auto pen = orthogonality_penalty_graph(t, m)) loss = ops::add(loss, ops::scale(*pen, spec->orthogonality_weight));
  }
  return loss;
}

inline double batch_loss(const Model& m, std::span<const Example* const> batch) {
  Tape t(false);
  return batch_loss_graph(t, m, batch, ForwardContext{}).value()(0, 0);
}

/// Batches bucketed by feature length: a seeded shuffle, a stable sort by
/// frame count, consecutive chunks, then a seeded shuffle of chunk order.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& examples, int batch_size,
                                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> idx(examples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return examples[a].features.num_frames() < examples[b].features.num_frames();
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < idx.size(); i += static_cast<std::size_t>(batch_size)) {
    batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                         idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), i + static_cast<std::size_t>(batch_size))));
  }
  rng.shuffle(batches);
  return batches;
}

/// Greedy transcription of precomputed features and embeddings.
inline std::string transcribe_example(const Model& m, const Matrix& features, std::span<const Eigen::VectorXd> embeddings) {
  Tape t(false);
  LatentSequence memory{memory_graph(t, m, features, embeddings, ForwardContext{}).value()};
  return m.tokenizer.decode(greedy_decode(m, memory, m.config.max_decode_len));
}

/// log_mel -> encode -> extract, pool, map per source -> condition -> greedy
/// decode -> detokenize.
inline std::string transcribe(const Model& m, const Waveform& wav, const EmbeddingProviderRegistry& registry,
                              const FrontendConfig& frontend) {
  const FeatureMatrix f = compute_features(wav, frontend);
  std::vector<Eigen::VectorXd> emb;
  if (!m.conditioning_sources.empty()) {
    if (registry.size() != m.conditioning_sources.size()) {
      throw std::invalid_argument("transcribe: registry does not match the model's conditioning sources");
    }
    emb = extract_all(registry, wav);
  }
  return transcribe_example(m, f.frames, emb);
}

inline std::string transcribe(const Model& m, const Utterance& u, const Manifest& owner,
                              const EmbeddingProviderRegistry& registry, const FrontendConfig& frontend) {
  return transcribe(m, load_audio(u, owner), registry, frontend);
}

struct EvalResult {
  double wer = 0.0;
  double semscore = 0.0;
  std::vector<Hypothesis> hypotheses;
};

inline EvalResult evaluate_examples(const Model& m, const std::vector<Example>& examples, const Manifest& manifest,
                                    SemScoreClients& clients, const SemScoreWeights& weights) {
  std::vector<HypothesisResult> results;
  EvalResult r;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const std::string hyp = transcribe_example(m, examples[i].features.frames, examples[i].embeddings);
    r.hypotheses.push_back({examples[i].id, hyp});
    results.push_back({manifest.records[i], hyp});
  }
  const ScoreReport rep = report(results, weights, clients);
  r.wer = rep.overall.wer_percent();
  r.semscore = rep.overall.mean_semscore();
  return r;
}

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  FrontendConfig frontend;
  const EmbeddingProviderRegistry* registry = nullptr;
  std::optional<SemScoreClients> clients;
  SemScoreWeights weights;
  /// Run directory; nothing is written when empty.
  std::filesystem::path out_dir;
  /// Copied verbatim to <out_dir>/config.snapshot.
  std::string config_snapshot;
  /// Called after every optimizer step with (step, loss).
  std::function<void(long, double, const Model&)> on_step;
};

struct TrainResult {
  std::vector<CheckpointRecord> records;
  std::vector<double> losses;
  long total_steps = 0;
  /// Parameters at the best evaluation.
  Model best_model;
};

/// Teacher-forced training of `model` in place. The dev manifest is
/// subsampled once with a seed derived from config.seed; evaluation runs every
/// eval_every_steps and after the last step.
inline TrainResult train(Model& model, const TrainConfig& cfg, const Manifest& train_manifest,
                         const Manifest& dev_manifest, TrainOptions opts = {}) {
  if (auto v = cfg.violations(); !v.empty()) throw std::invalid_argument(v.front());
  const Manifest train_set = filter_split(train_manifest, Split::train);
  if (train_set.records.empty()) throw std::invalid_argument("train: no train records");
  Manifest dev_pool = filter_split(dev_manifest, Split::dev);
  if (dev_pool.records.empty()) throw std::invalid_argument("train: no dev records");
  const Manifest dev_set = subsample_dev(dev_pool, cfg.dev_subsample_fraction, derive_seed(cfg.seed, "dev_subsample"),
                                        cfg.dev_stratification);
  SemScoreClients clients = opts.clients ? *opts.clients : SemScoreClients::stubs();

  const auto examples = prepare_examples(model, train_set, opts.frontend, opts.registry);
  const auto dev_examples = prepare_examples(model, dev_set, opts.frontend, opts.registry);
  const long total = cfg.total_steps(examples.size());
  if (total <= cfg.warmup_steps) {
    throw std::invalid_argument("train: " + std::to_string(total) + " total steps do not exceed warmup_steps " +
                                std::to_string(cfg.warmup_steps));
  }

  const bool write = !opts.out_dir.empty();
  std::ofstream log;
  if (write) {
    std::filesystem::create_directories(opts.out_dir / "checkpoints");
    std::ofstream(opts.out_dir / "config.snapshot", std::ios::binary) << opts.config_snapshot;
    log.open(opts.out_dir / "records.log", std::ios::binary);
    if (!log) throw std::runtime_error("cannot write records.log in " + opts.out_dir.string());
  }

  const auto spec = adapter_spec_of(model);
  const bool adalora = spec && spec->method == AdapterMethod::adalora;
  const long sites = adalora ? static_cast<long>(adapter_sites(model).size()) : 0;

  AdamW opt(cfg.optimizer);
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  TrainResult result;
  result.total_steps = total;
  const auto eval_steps = evaluation_steps(total, cfg.eval_every_steps);
  std::size_t next_eval = 0;
  long step = 0;
  for (int epoch = 0; step < total; ++epoch) {
    const auto batches = make_batches(examples, cfg.batch_size, derive_seed(cfg.seed, "batches:" + std::to_string(epoch)));
    for (const auto& b : batches) {
      if (step >= total) break;
      ++step;
      std::vector<const Example*> batch;
      std::vector<Matrix> feats;
      for (std::size_t i : b) {
        batch.push_back(&examples[i]);
        if (cfg.use_specaugment) {
          const auto seed = derive_seed(cfg.seed, "specaugment:" + std::to_string(step) + ":" + examples[i].id);
          feats.push_back(spec_augment(examples[i].features, opts.frontend.specaugment, seed).frames);
        } else {
          feats.push_back(examples[i].features.frames);
        }
      }
      Tape t;
      ForwardContext ctx{true, &dropout_rng};
      Var loss = batch_loss_graph(t, model, batch, ctx, &feats);
      const double lv = loss.value()(0, 0);
      if (!std::isfinite(lv)) {
        throw TrainingDiverged("non-finite loss at step " + std::to_string(step));
      }
      t.backward(loss);
      model.params.zero_grad();
      t.accumulate_into(model.params);
      if (adalora) update_adalora_importance(model, spec->importance_decay);
      const double lr = lr_at(step, cfg, total);
      opt.step(model.params, lr);
      if (adalora) {
        if (step % spec->reallocate_every == 0) adalora_reallocate(model, adalora_budget(step, *spec, sites));
        enforce_adalora_masks(model);
      }
      result.losses.push_back(lv);
      if (opts.on_step) opts.on_step(step, lv, model);

      if (next_eval < eval_steps.size() && step == eval_steps[next_eval]) {
        ++next_eval;
        const EvalResult ev = evaluate_examples(model, dev_examples, dev_set, clients, opts.weights);
        CheckpointRecord rec;
        rec.step = step;
        rec.wer = ev.wer;
        rec.semscore = ev.semscore;
        rec.lr = lr;
        if (write) {
          char name[32];
          std::snprintf(name, sizeof(name), "step-%07ld.ckpt", step);
          rec.file = (std::filesystem::path("checkpoints") / name).string();
          save_checkpoint(opts.out_dir / rec.file, model);
          log << nlohmann::json{{"step", rec.step}, {"wer", rec.wer}, {"semscore", rec.semscore}, {"lr", rec.lr}}.dump()
              << "\n"
              << std::flush;
        }
        result.records.push_back(rec);
        if (select_best(result.records) == result.records.size() - 1) result.best_model = model;
      }
    }
  }
  mark_best(result.records);
  if (write) {
    std::ofstream(opts.out_dir / "records.json", std::ios::binary) << nlohmann::json(result.records).dump(2) << "\n";
  }
  return result;
}

/// Reference backbone with its vocabulary taken from `tokenizer`, one mapping
/// network per registry entry (none when `registry` is null or empty), and
/// adapters injected per `spec`.
inline Model build_model(BackboneConfig cfg, const WordTokenizer& tokenizer, const AdapterSpec& spec,
                         const EmbeddingProviderRegistry* registry, std::uint64_t seed, double mapping_dropout = 0.1) {
  cfg.vocab_size = tokenizer.size();
  Model base = make_reference_backbone(cfg, derive_seed(seed, "backbone"));
  base.tokenizer = tokenizer;
  if (registry != nullptr && !registry->empty()) attach_mapping_networks(base, *registry, seed, mapping_dropout);
  return inject(base, spec, seed);
}

}  // namespace pasr
