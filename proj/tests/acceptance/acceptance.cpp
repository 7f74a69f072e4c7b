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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pasr/adapters/adapters.hpp"
#include "pasr/conditioning/conditioning.hpp"
#include "pasr/manifests/manifest.hpp"
#include "pasr/metrics/edit_distance.hpp"
#include "pasr/metrics/report.hpp"
#include "pasr/synth/pipeline.hpp"
#include "pasr/synth/stubs.hpp"
#include "pasr/trainer/toy_corpus.hpp"
#include "pasr/trainer/trainer.hpp"

namespace {

using namespace pasr;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("pasr-acceptance-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double sd = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
  return m;
}

BackboneConfig toy_backbone(int input_dim, int width, int vocab) {
  BackboneConfig c;
  c.input_dim = input_dim;
  c.width = width;
  c.heads = 2;
  c.ffn_dim = 2 * width;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.vocab_size = vocab;
  c.max_decode_len = 8;
  return c;
}

// ---------------------------------------------------------------------------

std::string shape_law() {
  BackboneConfig c;
  const Model m = make_reference_backbone(c, 1);
  Rng rng(1);
  for (int t : {2, 10, 100, 101, 480}) {
    FeatureMatrix f;
    f.frames = random_matrix(t, c.input_dim, rng);
    const auto mem = encode(m, f);
    require(mem.length() == t / 2, "T=" + std::to_string(t) + " gave " + std::to_string(mem.length()) + " rows");
    require(mem.vectors.cols() == c.width, "width mismatch");
  }
  return "M = floor(T/2), width " + std::to_string(c.width);
}

std::string conditioning_law() {
  Rng rng(2);
  const int b = 16;
  for (int n = 0; n <= 3; ++n) {
    const LatentSequence mem{random_matrix(9, b, rng)};
    std::vector<Eigen::VectorXd> mapped;
    for (int i = 0; i < n; ++i) mapped.push_back(random_matrix(b, 1, rng).col(0));
    const auto out = condition(mem, mapped);
    require(out.length() == n + 9, "row count for N=" + std::to_string(n));
    require(out.vectors.bottomRows(9) == mem.vectors, "trailing rows differ for N=" + std::to_string(n));

    Model model = make_reference_backbone(toy_backbone(6, b, 10), 3);
    EmbeddingProviderRegistry reg;
    for (int i = 0; i < n; ++i) {
      reg.add(std::make_shared<FixedVectorExtractor>("s" + std::to_string(i), random_matrix(3 + i, 1, rng).col(0)));
    }
    if (n > 0) attach_mapping_networks(model, reg, 4, 0.0);
    Waveform w;
    w.samples.assign(160, 0.0);
    Tape t(false);
    const Matrix g = conditioned_memory_graph(t, model, t.constant(mem.vectors), extract_all(reg, w), ForwardContext{}).value();
    require(g.rows() == n + 9 && g.bottomRows(9) == mem.vectors, "graph form for N=" + std::to_string(n));
  }
  return "N in 0..3, trailing rows bit-equal";
}

std::string mapping_gradients() {
  const double h = 1e-6;
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    Rng rng(100 + inst);
    Model m = make_reference_backbone(toy_backbone(6, 8, 10), inst);
    EmbeddingProviderRegistry reg;
    reg.add(std::make_shared<FixedVectorExtractor>("speaker", random_matrix(4, 1, rng).col(0)), 4);
    attach_mapping_networks(m, reg, 1000 + inst, 0.0);
    for (auto& p : m.params) {
      if (is_mapping_param(p.name)) p.value = random_matrix(p.value.rows(), p.value.cols(), rng, 0.5);
    }
    Waveform w;
    w.samples.assign(10, 0.0);
    const auto pooled = extract_all(reg, w);
    const Matrix mem = random_matrix(3, 8, rng);
    const Matrix weights = random_matrix(4, 8, rng);
    auto loss = [&](const Model& mm) {
      Tape t(false);
      return conditioned_memory_graph(t, mm, t.constant(mem), pooled, ForwardContext{}).value().cwiseProduct(weights).sum();
    };
    Tape t;
    Var out = conditioned_memory_graph(t, m, t.constant(mem), pooled, ForwardContext{});
    Var total = ops::matmul(ops::matmul(t.constant(Matrix::Ones(1, 4)), ops::mul(out, t.constant(weights))),
                            t.constant(Matrix::Ones(8, 1)));
    for (auto& p : m.params) p.zero_grad();
    t.backward(total);
    t.accumulate_into(m.params);
    for (auto& p : m.params) {
      if (!is_mapping_param(p.name)) continue;
      for (Eigen::Index i = 0; i < p.value.size(); ++i) {
        const double orig = p.value.data()[i];
        p.value.data()[i] = orig + h;
        const double up = loss(m);
        p.value.data()[i] = orig - h;
        const double down = loss(m);
        p.value.data()[i] = orig;
        const double numeric = (up - down) / (2 * h);
        const double analytic = p.grad.data()[i];
        const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-3});
        worst = std::max(worst, rel);
        require(rel <= 1e-4, p.name + " relative error " + std::to_string(rel));
      }
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "20 instances, worst relative error %.2e", worst);
  return buf;
}

struct ToyRun {
  Manifest corpus;
  FrontendConfig frontend;
  EmbeddingProviderRegistry registry;
};

ToyRun toy_run(int speakers, int per_speaker, std::uint64_t seed) {
  ToyRun r;
  ToyCorpusConfig cc;
  cc.speakers = speakers;
  cc.train_per_speaker = per_speaker;
  cc.dev_per_speaker = 2;
  cc.seed = seed;
  r.corpus = make_toy_corpus(cc);
  r.frontend.n_mels = 40;
  r.registry.add(std::make_shared<BandEnergyExtractor>("speaker", 8));
  return r;
}

std::vector<std::string> transcripts(const Manifest& m) {
  std::vector<std::string> out;
  for (const auto& u : m.records) out.push_back(u.transcript);
  return out;
}

std::string freezing_contract() {
  const ToyRun toy = toy_run(2, 6, 5);
  TrainConfig c;
  c.adapter.method = AdapterMethod::lora;
  c.learning_rate = 5e-3;
  c.warmup_steps = 10;
  c.max_steps = 100;
  c.epochs = 1000;
  c.eval_every_steps = 100;
  c.dev_subsample_fraction = 1.0;
  c.use_specaugment = false;
  Model m = build_model(toy_backbone(40, 32, 0), WordTokenizer::build(transcripts(toy.corpus)), c.adapter,
                        &toy.registry, 7);

  std::set<std::string> expected;
  std::map<std::string, Matrix> frozen;
  for (const auto& p : m.params) {
    if (is_adapter_param(p.name) || is_mapping_param(p.name)) expected.insert(p.name);
    if (!p.trainable) frozen[p.name] = p.value;
  }
  const auto names = trainable_parameters(m);
  require(std::set<std::string>(names.begin(), names.end()) == expected, "trainable set is not adapters + mapping");

  const Matrix mapping_before = m.params.at("mapping.speaker.w1").value;
  long checked = 0;
  TrainOptions opts;
  opts.frontend = toy.frontend;
  opts.registry = &toy.registry;
  opts.on_step = [&](long step, double, const Model& cur) {
    for (const auto& [name, value] : frozen) {
      require(cur.params.at(name).value == value, name + " changed at step " + std::to_string(step));
    }
    ++checked;
  };
  train(m, c, toy.corpus, toy.corpus, opts);
  require(checked == 100, "expected 100 steps, saw " + std::to_string(checked));
  for (const auto& [name, value] : frozen) require(m.params.at(name).value == value, name + " changed");
  require(m.params.at("mapping.speaker.w1").value != mapping_before, "mapping network did not train");
  return std::to_string(frozen.size()) + " frozen tensors unchanged over 100 steps, " + std::to_string(expected.size()) +
         " trainable";
}

std::string merge_equivalence() {
  const BackboneConfig cfg = toy_backbone(6, 16, 12);
  const Model base = make_reference_backbone(cfg, 5);
  double worst_all = 0.0;
  for (auto method : {AdapterMethod::lora, AdapterMethod::adalora}) {
    AdapterSpec spec;
    spec.method = method;
    spec.dropout_p = 0.0;
    Model adapted = inject(base, spec, 6);
    Rng rng(7);
    for (auto& p : adapted.params) {
      if (!is_adapter_param(p.name) || p.name.ends_with(".mask") || p.name.ends_with(".importance")) continue;
      p.value = random_matrix(p.value.rows(), p.value.cols(), rng, 0.05);
    }
    if (method == AdapterMethod::adalora) {
      adapted.params.at(adapter_param(adapter_sites(adapted)[0], "mask")).value(0, 1) = 0.0;
    }
    const Model merged = merge(adapted);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Matrix f = random_matrix(4 + i, 6, rng);
      std::vector<int> tok{1};
      const int n = static_cast<int>(rng.uniform_int(1, 6));
      for (int k = 0; k < n; ++k) tok.push_back(static_cast<int>(rng.uniform_int(3, 11)));
      Tape ta(false), tb(false);
      const Matrix la = decode_graph(ta, adapted, tok, encode_graph(ta, adapted, f, {}), {}).value();
      const Matrix lb = decode_graph(tb, merged, tok, encode_graph(tb, merged, f, {}), {}).value();
      worst = std::max(worst, (la - lb).cwiseAbs().maxCoeff());
    }
    require(worst <= 1e-5, std::string(to_string(method)) + " max abs diff " + std::to_string(worst));
    worst_all = std::max(worst_all, worst);
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "lora and adalora, max abs logit diff %.2e", worst_all);
  return buf;
}

std::string adalora_budget_check() {
  const long sites = static_cast<long>(resolve_sites(toy_backbone(6, 16, 12), {"query", "value"}).size());
  const std::vector<std::pair<int, int>> pairs{{12, 8}, {16, 12}, {24, 16}, {32, 24}, {64, 32}};
  for (auto [warmup, end] : std::vector<std::pair<int, int>>{{0, 1000}, {200, 1500}}) {
    for (auto [ri, rt] : pairs) {
      AdapterSpec s;
      s.method = AdapterMethod::adalora;
      s.r_initial = ri;
      s.r_target = rt;
      s.warmup_steps = warmup;
      s.end_step = end;
      long prev = adalora_budget(0, s, sites);
      for (long step = 0; step <= end + 100; ++step) {
        const long b = adalora_budget(step, s, sites);
        const std::string at = std::to_string(ri) + "/" + std::to_string(rt) + " step " + std::to_string(step);
        require(b <= prev, "budget increased at " + at);
        if (step <= warmup) require(b == sites * ri, "warmup budget at " + at);
        if (step >= end) require(b == sites * rt, "final budget at " + at);
        const double p = double(step - warmup) / double(end - warmup);
        if (step > warmup && step < end) {
          const long expect = static_cast<long>(std::floor(sites * rt + sites * (ri - rt) * std::pow(1.0 - p, 3)));
          require(b == expect, "cubic schedule at " + at);
        }
        prev = b;
      }
    }
  }
  return "5 grid pairs x 2 schedules, " + std::to_string(sites) + " sites";
}

// Exhaustive enumeration of every alignment path. Returns the least-error
// alignment, preferring more substitutions among ties.
void enumerate(const std::vector<int>& r, const std::vector<int>& h, std::size_t i, std::size_t j, EditCounts acc,
               EditCounts& best, bool& have) {
  if (i == r.size() && j == h.size()) {
    if (!have || acc.errors() < best.errors() ||
        (acc.errors() == best.errors() && acc.substitutions > best.substitutions)) {
      best = acc;
      have = true;
    }
    return;
  }
  if (i < r.size() && j < h.size()) {
    EditCounts next = acc;
    if (r[i] != h[j]) ++next.substitutions;
    enumerate(r, h, i + 1, j + 1, next, best, have);
  }
  if (i < r.size()) {
    EditCounts next = acc;
    ++next.deletions;
    enumerate(r, h, i + 1, j, next, best, have);
  }
  if (j < h.size()) {
    EditCounts next = acc;
    ++next.insertions;
    enumerate(r, h, i, j + 1, next, best, have);
  }
}

std::string wer_oracle() {
  Rng rng(7);
  for (int k = 0; k < 500; ++k) {
    std::vector<int> r(static_cast<std::size_t>(rng.uniform_int(0, 6)));
    std::vector<int> h(static_cast<std::size_t>(rng.uniform_int(0, 6)));
    for (auto& x : r) x = static_cast<int>(rng.uniform_int(0, 2));
    for (auto& x : h) x = static_cast<int>(rng.uniform_int(0, 2));
    EditCounts best;
    bool have = false;
    enumerate(r, h, 0, 0, EditCounts{}, best, have);
    best.reference_length = static_cast<long>(r.size());
    const auto got = edit_counts(std::span<const int>(r), std::span<const int>(h));
    require(got == best, "pair " + std::to_string(k) + " disagrees with enumeration");
  }
  return "500 random pairs match exhaustive enumeration";
}

std::string numbered(int n, int errors) {
  std::string s;
  for (int i = 0; i < n; ++i) s += std::string(i ? " " : "") + (i < errors ? "x" : "w") + std::to_string(i);
  return s;
}

SynthCandidate keyed(std::string prompt, int key) {
  SynthCandidate c;
  c.prompt = std::move(prompt);
  c.audio.samples = {static_cast<double>(key)};
  return c;
}

FunctionClient keyed_asr(std::map<int, std::string> texts) {
  return FunctionClient("asr", [texts = std::move(texts)](const json& req) -> json {
    auto it = texts.find(static_cast<int>(req.at("samples")[0].get<double>()));
    if (it == texts.end()) throw ClientError("asr unavailable");
    return {{"text", it->second}};
  });
}

std::string filter_boundary() {
  std::vector<SynthCandidate> cands{keyed(numbered(1000, 0), 0), keyed(numbered(20, 0), 1), keyed(numbered(25, 0), 2)};
  auto asr = keyed_asr({{0, numbered(1000, 349)}, {1, numbered(20, 7)}, {2, numbered(25, 9)}});
  const auto r = filter_intelligibility(cands, asr, 35.0);
  require(r.accepted.size() == 1 && r.rejected.size() == 2, "boundary partition sizes");
  require(*r.accepted[0].filter_wer == 34.9, "34.9 not accepted");
  require(*r.rejected[0].filter_wer == 35.0 && *r.rejected[1].filter_wer == 36.0, "35.0 / 36.0 not rejected");

  Rng rng(42);
  std::vector<SynthCandidate> pool;
  std::map<int, std::string> texts;
  for (int i = 0; i < 200; ++i) {
    const int n = static_cast<int>(rng.uniform_int(1, 12));
    std::string ref, hyp;
    for (int k = 0; k < n; ++k) {
      const std::string w = "c" + std::to_string(i) + "_" + std::to_string(k);
      ref += (k ? " " : "") + w;
      hyp += (k ? " " : "") + (rng.bernoulli(0.3) ? std::string("zz") : w);
    }
    pool.push_back(keyed(ref, i));
    if (!rng.bernoulli(0.05)) texts[i] = hyp;
  }
  auto pool_asr = keyed_asr(texts);
  const auto p = filter_intelligibility(pool, pool_asr, 35.0, 4);
  require(p.accepted.size() + p.rejected.size() == 200, "partition loses candidates");
  std::set<std::string> seen;
  for (const auto& c : p.accepted) {
    require(seen.insert(c.prompt).second, "duplicate candidate");
    require(c.filter_wer && *c.filter_wer < 35.0, "accepted candidate at or above threshold");
    const double expect = wer(utterance_counts(c.prompt, texts.at(static_cast<int>(c.audio.samples[0]))));
    require(*c.filter_wer == expect, "recorded WER disagrees with recomputation");
  }
  for (const auto& c : p.rejected) {
    require(seen.insert(c.prompt).second, "duplicate candidate");
    require(!c.filter_wer || *c.filter_wer >= 35.0, "rejected candidate below threshold");
  }
  return "34.9 kept, 35.0 and 36.0 dropped; 200-candidate pool: " + std::to_string(p.accepted.size()) + " kept, " +
         std::to_string(p.rejected.size()) + " dropped";
}

std::string mixing_ratios() {
  Manifest real, synth;
  for (int i = 0; i < 1000; ++i) {
    Utterance u;
    u.id = "real" + std::to_string(i);
    u.audio = "audio/" + u.id + ".wav";
    u.transcript = "open the door";
    u.speaker_id = "s" + std::to_string(i % 10);
    u.etiology = Etiology::parkinson;
    u.split = Split::train;
    u.duration_s = 1.0;
    real.records.push_back(u);
    u.id = "synth" + std::to_string(i);
    u.audio = "audio/" + u.id + ".wav";
    u.provenance = Provenance::synthetic;
    u.etiology = Etiology::unknown;
    u.filter_wer = 0.0;
    synth.records.push_back(u);
  }
  for (auto [ratio, total] : std::vector<std::pair<double, std::size_t>>{{0.1, 1100}, {0.5, 1500}, {1.0, 2000}}) {
    const auto mixed = mix_synthetic(real, synth, ratio, 11);
    require(mixed.records.size() == total, "ratio " + std::to_string(ratio) + " gave " +
                                               std::to_string(mixed.records.size()) + " records");
    std::size_t n_real = 0, n_synth = 0;
    std::set<std::string> ids;
    for (const auto& u : mixed.records) {
      (u.provenance == Provenance::real ? n_real : n_synth) += 1;
      ids.insert(u.id);
    }
    require(n_real == 1000 && n_synth == total - 1000, "provenance counts");
    require(ids.size() == total, "duplicate ids");
  }
  return "1100 / 1500 / 2000 records with 1000 real each";
}

std::string schedule() {
  const double eta = 1e-3;
  const long warmup = 500, total = 8000;
  require(lr_at(warmup, eta, warmup, total) == eta, "lr at end of warm-up");
  require(lr_at(total, eta, warmup, total) == 0.0, "lr at last step");
  require(lr_at(0, eta, warmup, total) == 0.0, "lr at step 0");
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const long s = static_cast<long>(rng.uniform_int(0, total));
    const double expect = s <= warmup ? eta * double(s) / double(warmup) : eta * double(total - s) / double(total - warmup);
    require(std::abs(lr_at(s, eta, warmup, total) - expect) <= 1e-15, "step " + std::to_string(s));
  }
  return "peak at 500, zero at end, 100 sampled steps linear";
}

std::string overfit_smoke(bool& warn) {
  // 4 speakers x 8 train utterances.
  const ToyRun toy = toy_run(4, 8, 0);
  const Manifest train_set = filter_split(toy.corpus, Split::train);
  require(train_set.records.size() == 32, "expected 32 training utterances");
  Manifest as_dev = train_set;
  for (auto& u : as_dev.records) u.split = Split::dev;

  // Base backbone trained on a disjoint toy corpus.
  ToyCorpusConfig pc;
  pc.speakers = 8;
  pc.train_per_speaker = 16;
  pc.seed = 99;
  const Manifest pre = filter_split(make_toy_corpus(pc), Split::train);
  auto texts = transcripts(train_set);
  for (const auto& t : transcripts(pre)) texts.push_back(t);
  const BackboneConfig bc = toy_backbone(40, 32, 0);
  AdapterSpec fft;
  fft.method = AdapterMethod::fft;
  Model base = build_model(bc, WordTokenizer::build(texts), fft, nullptr, 7);
  TrainConfig pcfg;
  pcfg.adapter = fft;
  pcfg.learning_rate = 2e-3;
  pcfg.epochs = 100000;
  pcfg.max_steps = 1500;
  pcfg.warmup_steps = 100;
  pcfg.eval_every_steps = 1500;
  pcfg.dev_subsample_fraction = 0.25;
  pcfg.use_specaugment = true;
  Manifest pre_dev = pre;
  for (auto& u : pre_dev.records) u.split = Split::dev;
  TrainOptions po;
  po.frontend = toy.frontend;
  po.frontend.specaugment.max_freq_width = 5;
  po.frontend.specaugment.max_time_width = 5;
  train(base, pcfg, pre, pre_dev, po);
  base.adapter_spec = nullptr;
  base.hooks.clear();
  for (auto& p : base.params) p.trainable = true;

  AdapterSpec lora;
  lora.method = AdapterMethod::lora;
  lora.rank = 8;
  lora.alpha = 32;
  TrainConfig cfg;
  cfg.adapter = lora;
  cfg.learning_rate = 5e-3;
  cfg.epochs = 100000;
  cfg.max_steps = 1000;
  cfg.warmup_steps = 100;
  cfg.eval_every_steps = 250;
  cfg.dev_subsample_fraction = 1.0;
  cfg.use_specaugment = false;

  auto run = [&](bool personalize) {
    Model b = base;
    if (personalize) attach_mapping_networks(b, toy.registry, 7);
    Model m = inject(b, lora, 7);
    TrainOptions o;
    o.frontend = toy.frontend;
    o.registry = &toy.registry;
    return train(m, cfg, train_set, as_dev, o).records;
  };
  const auto pers = run(true);
  const auto plain = run(false);
  double best = 1e9;
  for (const auto& r : pers) best = std::min(best, r.wer);
  require(best <= 5.0, "personalized train WER never reached 5 (best " + std::to_string(best) + ")");
  const double fp = pers.back().wer, fn = plain.back().wer;
  warn = fp > fn;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "best train WER %.2f by step 1000; final personalized %.2f vs plain %.2f%s", best, fp,
                fn, warn ? " (WARN: personalized is worse)" : "");
  return buf;
}

std::string synth_determinism() {
  auto run = [](const std::filesystem::path& out) {
    ToyCorpusConfig cc;
    cc.seed = 3;
    const Manifest train_m = make_toy_corpus(cc);
    SynthConfig cfg;
    cfg.candidates = 24;
    cfg.sentences_per_seed = 6;
    cfg.parallelism = 2;
    StubTextGenerator llm;
    StubTts tts(0.3);
    StubRecognizer asr;
    auto cands = generate_candidates(cfg, train_m, llm, tts, 17);
    auto filtered = filter_intelligibility(std::move(cands), asr, cfg.threshold, cfg.parallelism);
    const Manifest m = export_pool(filtered.accepted, out);
    std::string bytes = slurp(m.base_dir / "manifest.jsonl");
    for (const auto& u : m.records) bytes += slurp(m.base_dir / std::get<std::string>(u.audio));
    return std::make_pair(bytes, filtered.accepted.size());
  };
  TempDir a, b;
  const auto [x, kept] = run(a.path());
  const auto [y, kept2] = run(b.path());
  require(kept > 0 && kept == kept2, "accepted counts differ");
  require(x == y, "manifests differ between runs");
  return std::to_string(kept) + " exported records byte-identical across runs";
}

std::string report_pooling() {
  auto result = [](std::string id, Etiology e, std::string ref, std::string hyp) {
    Utterance u;
    u.id = std::move(id);
    u.audio = "audio/" + u.id + ".wav";
    u.transcript = std::move(ref);
    u.speaker_id = "s";
    u.etiology = e;
    u.split = Split::test;
    u.duration_s = 1.0;
    return HypothesisResult{u, std::move(hyp)};
  };
  const std::vector<HypothesisResult> rs{
      result("p1", Etiology::parkinson, "turn on the kitchen light please", "turn on the kitchen light please"),
      result("p2", Etiology::parkinson, "what time is it", "what time is at"),
      result("a1", Etiology::als, "call my daughter right now", "call my"),
  };
  auto clients = SemScoreClients::stubs();
  const auto rep = report(rs, {}, clients);
  require(rep.etiologies.size() == 2, "expected two etiology rows");
  long tokens = 0, errors = 0;
  double mean_of_rows = 0.0;
  for (const auto& row : rep.etiologies) {
    tokens += row.counts.reference_length;
    errors += row.counts.errors();
    mean_of_rows += row.wer_percent() / 2;
  }
  require(tokens == rep.overall.counts.reference_length && tokens == 15, "token counts do not sum to the total");
  require(errors == 4, "expected 4 errors");
  require(rep.overall.wer_percent() == 100.0 * errors / tokens, "overall WER is not pooled");
  require(format_percent(rep.overall.wer_percent()) == "26.67", "pooled WER formatting");
  require(std::abs(mean_of_rows - rep.overall.wer_percent()) > 1.0, "fixture does not separate pooled from mean");
  return "15 tokens, pooled WER 26.67 (row mean " + format_percent(mean_of_rows) + ")";
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<std::string()> run;
  };
  bool warn = false;
  const std::vector<Criterion> all{
      {1, "encoder shape law", shape_law},
      {2, "conditioning law", conditioning_law},
      {3, "mapping network gradients", mapping_gradients},
      {4, "freezing contract", freezing_contract},
      {5, "merge equivalence", merge_equivalence},
      {6, "adalora budget schedule", adalora_budget_check},
      {7, "wer oracle equivalence", wer_oracle},
      {8, "intelligibility filter boundary", filter_boundary},
      {9, "synthetic mixing ratios", mixing_ratios},
      {10, "learning rate schedule", schedule},
      {11, "end-to-end overfit smoke", [&] { return overfit_smoke(warn); }},
      {12, "synthetic pipeline determinism", synth_determinism},
      {13, "report pooling", report_pooling},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s [%2d] %-34s %7.2fs  %s\n", ok ? "PASS" : "FAIL", c.id, c.name, secs, detail.c_str());
    std::fflush(stdout);
    failed += ok ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
