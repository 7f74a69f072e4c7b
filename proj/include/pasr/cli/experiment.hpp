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

// Single training runs and the method x personalization x SpecAugment matrix.

#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "pasr/backbone/checkpoint.hpp"
#include "pasr/cli/config.hpp"
#include "pasr/manifests/manifest.hpp"
#include "pasr/synth/pipeline.hpp"
#include "pasr/trainer/trainer.hpp"

namespace pasr {

/// Drops adapters, hooks, and the merged flag, leaving a plain backbone whose
/// weights are those of `m` (for a merged model, the merged weights).
inline Model as_base_model(Model m) {
  m.params.remove_if([](const Parameter& p) { return is_adapter_param(p.name); });
  m.hooks.clear();
  m.adapter_spec = nullptr;
  m.merged = false;
  for (auto& p : m.params) p.trainable = true;
  return m;
}

inline Model strip_conditioning(Model m) {
  m.params.remove_if([](const Parameter& p) { return is_mapping_param(p.name); });
  m.conditioning_sources.clear();
  return m;
}

/// Model ready for training under `cfg`. A base checkpoint supplies the
/// backbone and vocabulary; otherwise the vocabulary comes from `train`.
inline Model prepare_model(const ExperimentConfig& cfg, const Manifest& train,
                           const EmbeddingProviderRegistry* registry) {
  const bool personalize = cfg.train.use_personalization && registry != nullptr && !registry->empty();
  const std::uint64_t seed = cfg.sub_seed("model");
  if (!cfg.base_checkpoint.empty()) {
    Model base = as_base_model(load_checkpoint(cfg.base_checkpoint));
    if (!personalize) {
      base = strip_conditioning(std::move(base));
    } else {
      attach_mapping_networks(base, *registry, seed, cfg.mapping_dropout);
    }
    return inject(base, cfg.train.adapter, seed);
  }
  std::vector<std::string> texts;
  for (const auto& u : train.records) {
    if (u.split == Split::train) texts.push_back(u.transcript);
  }
  return build_model(cfg.backbone, WordTokenizer::build(texts), cfg.train.adapter, personalize ? registry : nullptr,
                     seed, cfg.mapping_dropout);
}

struct RunInputs {
  Manifest train;
  Manifest dev;
  /// Mixed into the train split at train.synthetic_ratio when present.
  std::optional<Manifest> synthetic;
};

struct RunOutcome {
  TrainResult result;
  std::filesystem::path run_dir;
  std::optional<CheckpointRecord> best;
};

/// One training run written to `run_dir`: config.snapshot, records.log,
/// records.json, checkpoints/, best.ckpt and (for adapters) best.adapter.
inline RunOutcome run_training(const ExperimentConfig& cfg, const RunInputs& in, const std::filesystem::path& run_dir,
                               std::function<void(long, double, const Model&)> on_step = {}) {
  if (std::filesystem::exists(run_dir) && !std::filesystem::is_empty(run_dir)) {
    throw std::runtime_error("run directory exists and is not empty: " + run_dir.string());
  }
  Manifest train_set = in.train;
  if (in.synthetic && cfg.train.synthetic_ratio > 0.0) {
    train_set = mix_synthetic(filter_split(in.train, Split::train), *in.synthetic, cfg.train.synthetic_ratio,
                          cfg.sub_seed("mix"));
  }
  std::optional<EmbeddingProviderRegistry> registry;
  if (cfg.train.use_personalization && !cfg.registry.empty()) registry = make_registry(cfg);
  const EmbeddingProviderRegistry* reg = registry ? &*registry : nullptr;

  Model model = prepare_model(cfg, train_set, reg);
  TrainOptions opts;
  opts.frontend = cfg.frontend;
  opts.registry = reg;
  opts.clients = make_semscore_clients(cfg.metrics);
  opts.weights = cfg.metrics.weights;
  opts.out_dir = run_dir;
  opts.config_snapshot = config_snapshot(cfg);
  opts.on_step = std::move(on_step);

  RunOutcome out;
  out.run_dir = run_dir;
  out.result = train(model, cfg.train, train_set, in.dev, std::move(opts));
  for (const auto& r : out.result.records) {
    if (r.is_best) out.best = r;
  }
  if (out.best) {
    save_checkpoint(run_dir / "best.ckpt", out.result.best_model);
    if (!out.result.best_model.adapter_spec.is_null() && cfg.train.adapter.method != AdapterMethod::fft) {
      save_adapter_checkpoint(run_dir / "best.adapter", out.result.best_model);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix

struct MatrixCell {
  AdapterMethod method = AdapterMethod::lora;
  bool personalization = false;
  bool specaugment = false;

  std::string label() const {
    return std::string(to_string(method)) + (personalization ? "-pers" : "-nopers") + (specaugment ? "-sa" : "-nosa");
  }
};

struct MatrixRow {
  std::string preset;
  MatrixCell cell;
  /// ok | failed
  std::string status;
  double wer = std::nan("");
  double semscore = std::nan("");
  long best_step = -1;
  std::string run_dir;
  std::string error;
};

inline std::vector<MatrixCell> matrix_cells(const MatrixConfig& m, const TrainConfig& defaults) {
  const auto methods = m.methods.empty() ? std::vector<AdapterMethod>{defaults.adapter.method} : m.methods;
  const auto pers = m.personalization.empty() ? std::vector<bool>{defaults.use_personalization} : m.personalization;
  const auto sa = m.specaugment.empty() ? std::vector<bool>{defaults.use_specaugment} : m.specaugment;
  std::vector<MatrixCell> cells;
  for (auto me : methods) {
    for (bool p : pers) {
      for (bool s : sa) cells.push_back({me, p, s});
    }
  }
  return cells;
}

inline nlohmann::ordered_json matrix_row_json(const MatrixRow& r) {
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::ordered_json j;
  j["preset"] = r.preset;
  j["method"] = to_string(r.cell.method);
  j["personalization"] = r.cell.personalization;
  j["specaugment"] = r.cell.specaugment;
  j["status"] = r.status;
  j["wer"] = num(r.wer);
  j["semscore"] = num(r.semscore);
  j["best_step"] = r.best_step >= 0 ? nlohmann::ordered_json(r.best_step) : nlohmann::ordered_json(nullptr);
  j["run_dir"] = r.run_dir;
  j["error"] = r.error;
  return j;
}

inline void write_matrix_summary(const std::vector<MatrixRow>& rows, const std::filesystem::path& dir) {
  nlohmann::ordered_json all = nlohmann::ordered_json::array();
  for (const auto& r : rows) all.push_back(matrix_row_json(r));
  std::ofstream(dir / "summary.json", std::ios::binary) << all.dump(2) << "\n";
  std::ofstream tsv(dir / "summary.tsv", std::ios::binary);
  tsv << "preset\tmethod\tpersonalization\tspecaugment\tstatus\twer\tsemscore\tbest_step\terror\n";
  auto fmt = [](double v) {
    if (!std::isfinite(v)) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    std::string err = r.error;
    for (auto& c : err) {
      if (c == '\t' || c == '\n') c = ' ';
    }
    tsv << r.preset << '\t' << to_string(r.cell.method) << '\t' << (r.cell.personalization ? "yes" : "no") << '\t'
        << (r.cell.specaugment ? "yes" : "no") << '\t' << r.status << '\t' << fmt(r.wer) << '\t' << fmt(r.semscore)
        << '\t' << (r.best_step >= 0 ? std::to_string(r.best_step) : "-") << '\t' << err << '\n';
  }
}

/// Trains every cell of every preset's matrix under
/// `out_dir/<preset>/<cell>/`. A failing cell is recorded and the others still
/// run. Up to `parallelism` cells train concurrently; rows keep matrix order.
/// summary.json and summary.tsv are rewritten as cells finish.
inline std::vector<MatrixRow> run_experiment_matrix(const std::vector<ExperimentConfig>& presets, const RunInputs& in,
                                                    const std::filesystem::path& out_dir, int parallelism = 1,
                                                    std::function<void(const MatrixRow&)> on_row = {}) {
  if (parallelism < 1) throw std::invalid_argument("matrix parallelism must be >= 1");
  std::filesystem::create_directories(out_dir);
  struct Job {
    const ExperimentConfig* cfg;
    MatrixCell cell;
  };
  std::vector<Job> jobs;
  std::set<std::string> names;
  for (const auto& p : presets) {
    if (!names.insert(p.name).second) throw std::invalid_argument("preset listed twice: " + p.name);
    for (const auto& c : matrix_cells(p.matrix, p.train)) jobs.push_back({&p, c});
  }
  std::vector<MatrixRow> rows(jobs.size());
  std::vector<bool> done(jobs.size(), false);
  std::mutex mu;
  auto run_one = [&](std::size_t k) {
    const Job& job = jobs[k];
    MatrixRow row;
    row.preset = job.cfg->name;
    row.cell = job.cell;
    row.run_dir = (std::filesystem::path(job.cfg->name) / job.cell.label()).string();
    try {
      ExperimentConfig c = *job.cfg;
      c.train.adapter.method = job.cell.method;
      c.train.use_personalization = job.cell.personalization;
      c.train.use_specaugment = job.cell.specaugment;
      c.resolved["adapter"]["method"] = to_string(job.cell.method);
      c.resolved["train"]["use_personalization"] = job.cell.personalization;
      c.resolved["train"]["use_specaugment"] = job.cell.specaugment;
      if (job.cell.personalization && c.registry.empty()) {
        throw std::invalid_argument("personalization needs a registry source");
      }
      const auto outcome = run_training(c, in, out_dir / row.run_dir);
      if (!outcome.best) throw std::runtime_error("no evaluation was recorded");
      row.status = "ok";
      row.wer = outcome.best->wer;
      row.semscore = outcome.best->semscore;
      row.best_step = outcome.best->step;
    } catch (const std::exception& e) {
      row.status = "failed";
      row.error = e.what();
    }
    std::lock_guard<std::mutex> lock(mu);
    rows[k] = row;
    done[k] = true;
    std::vector<MatrixRow> finished;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (done[i]) finished.push_back(rows[i]);
    }
    write_matrix_summary(finished, out_dir);
    if (on_row) on_row(row);
  };
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) run_one(k);
  };
  std::vector<std::thread> pool;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(parallelism), jobs.size());
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return rows;
}

}  // namespace pasr
