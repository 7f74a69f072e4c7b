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

// pasr: train, evaluate, transcribe, synth generate, synth filter, mix,
// report, matrix, plus toy-corpus and validate-config.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pasr/backbone/checkpoint.hpp"
#include "pasr/cli/config.hpp"
#include "pasr/cli/experiment.hpp"
#include "pasr/manifests/manifest.hpp"
#include "pasr/metrics/report.hpp"
#include "pasr/synth/pipeline.hpp"
#include "pasr/trainer/toy_corpus.hpp"
#include "pasr/trainer/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::vector<std::string> preset_dirs;
  bool quiet = false;
};

std::vector<fs::path> search_path(const Globals& g) {
  std::vector<fs::path> out(g.preset_dirs.begin(), g.preset_dirs.end());
  for (auto& d : pasr::default_preset_dirs()) out.push_back(d);
  return out;
}

pasr::ExperimentConfig load_config(const Globals& g, const std::string& path) {
  return pasr::validate_config(path, search_path(g));
}

void refuse_existing(const fs::path& p) {
  if (fs::exists(p)) throw std::runtime_error("refusing to overwrite " + p.string());
}

/// Rewrites relative audio paths against the manifest's directory so the
/// manifest can be saved elsewhere.
pasr::Manifest absolutize_audio(pasr::Manifest m) {
  for (auto& u : m.records) {
    if (auto* p = std::get_if<std::string>(&u.audio); p != nullptr && fs::path(*p).is_relative()) {
      *p = fs::absolute(m.base_dir / *p).lexically_normal().string();
    }
  }
  return m;
}

std::vector<double> parse_weights(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad weight '" + item + "'");
    out.push_back(v);
  }
  if (out.size() != 3) throw std::invalid_argument("--weights needs three comma-separated values");
  return out;
}

std::string fmt2(double v) {
  if (!std::isfinite(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, train_manifest, dev_manifest, synthetic_manifest, out;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  const auto cfg = load_config(g, a.config);
  pasr::RunInputs in{pasr::load_manifest(a.train_manifest), pasr::load_manifest(a.dev_manifest), std::nullopt};
  if (!a.synthetic_manifest.empty()) in.synthetic = pasr::load_manifest(a.synthetic_manifest);
  const auto dir = pasr::next_version_dir(a.out);
  auto on_step = [&](long step, double loss, const pasr::Model&) {
    if (!g.quiet && (step == 1 || step % 50 == 0)) std::fprintf(stderr, "step %ld loss %.4f\n", step, loss);
  };
  const auto outcome = pasr::run_training(cfg, in, dir, on_step);
  for (const auto& r : outcome.result.records) {
    std::printf("step %ld  wer %s  semscore %s  lr %.3g%s\n", r.step, fmt2(r.wer).c_str(), fmt2(r.semscore).c_str(),
                r.lr, r.is_best ? "  best" : "");
  }
  std::printf("run directory: %s\n", dir.string().c_str());
  return 0;
}

struct EvaluateArgs {
  std::string manifest, hypotheses, weights, config, out, split;
};

int cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
  pasr::Manifest m = pasr::load_manifest(a.manifest);
  if (!a.split.empty()) {
    const auto s = pasr::parse_split(a.split);
    if (!s) throw std::invalid_argument("unknown split '" + a.split + "'");
    m = pasr::filter_split(m, *s);
  }
  pasr::SemScoreWeights w;
  pasr::SemScoreClients clients = pasr::SemScoreClients::stubs();
  if (!a.config.empty()) {
    const auto cfg = load_config(g, a.config);
    w = cfg.metrics.weights;
    clients = pasr::make_semscore_clients(cfg.metrics);
  }
  if (!a.weights.empty()) {
    const auto v = parse_weights(a.weights);
    w = {v[0], v[1], v[2]};
  }
  const auto rep = pasr::report(pasr::join_hypotheses(m, pasr::read_hypotheses(a.hypotheses)), w, clients);
  const std::string table = rep.to_table();
  if (!a.out.empty()) {
    const fs::path machine = a.out + ".json";
    const fs::path human = a.out + ".txt";
    refuse_existing(machine);
    refuse_existing(human);
    std::ofstream(machine, std::ios::binary) << rep.to_json().dump(2) << "\n";
    std::ofstream(human, std::ios::binary) << table;
  }
  std::cout << table;
  return 0;
}

struct TranscribeArgs {
  std::string model, adapter, config, manifest, wav, split, out;
};

int cmd_transcribe(const Globals& g, const TranscribeArgs& a) {
  pasr::Model model = pasr::load_checkpoint(a.model);
  if (!a.adapter.empty()) model = pasr::apply_adapter_checkpoint(pasr::as_base_model(model), a.adapter);
  pasr::FrontendConfig frontend;
  frontend.n_mels = model.config.input_dim;
  pasr::EmbeddingProviderRegistry registry;
  if (!a.config.empty()) {
    const auto cfg = load_config(g, a.config);
    frontend = cfg.frontend;
    if (!model.conditioning_sources.empty()) registry = pasr::make_registry(cfg);
  }
  if (!model.conditioning_sources.empty() && registry.size() != model.conditioning_sources.size()) {
    throw std::invalid_argument("the model is personalized; pass --config with its registry");
  }
  if (!a.wav.empty()) {
    std::cout << pasr::transcribe(model, pasr::read_wav(a.wav), registry, frontend) << "\n";
    return 0;
  }
  pasr::Manifest m = pasr::load_manifest(a.manifest);
  if (!a.split.empty()) {
    const auto s = pasr::parse_split(a.split);
    if (!s) throw std::invalid_argument("unknown split '" + a.split + "'");
    m = pasr::filter_split(m, *s);
  }
  std::vector<pasr::Hypothesis> hyps;
  for (const auto& u : m.records) hyps.push_back({u.id, pasr::transcribe(model, u, m, registry, frontend)});
  if (a.out.empty()) {
    for (const auto& h : hyps) std::cout << nlohmann::ordered_json{{"id", h.id}, {"text", h.text}}.dump() << "\n";
  } else {
    refuse_existing(a.out);
    pasr::write_hypotheses(a.out, hyps);
    std::printf("%zu hypotheses written to %s\n", hyps.size(), a.out.c_str());
  }
  return 0;
}

struct SynthGenerateArgs {
  std::string config, train_manifest, out;
  long n = -1;
};

int cmd_synth_generate(const Globals& g, const SynthGenerateArgs& a) {
  const auto cfg = load_config(g, a.config);
  pasr::SynthConfig sc = cfg.synth.config;
  if (a.n >= 0) sc.candidates = static_cast<std::size_t>(a.n);
  const pasr::Manifest train = pasr::filter_split(pasr::load_manifest(a.train_manifest), pasr::Split::train);
  auto llm = pasr::make_model_client(cfg.synth.llm, "generate");
  auto tts = pasr::make_model_client(cfg.synth.tts, "tts");
  pasr::GenerationStats stats;
  const auto cands = pasr::generate_candidates(sc, train, *llm, *tts, cfg.sub_seed("synth"), &stats);
  const auto dir = pasr::next_version_dir(a.out);
  pasr::save_candidate_pool(cands, dir);
  std::printf("%zu candidates (%ld requests, %ld retries) written to %s\n", cands.size(), stats.requests,
              stats.retries, dir.string().c_str());
  return 0;
}

struct SynthFilterArgs {
  std::string pool, config, out;
  double threshold = pasr::kDefaultFilterThreshold;
  int parallelism = 0;
};

int cmd_synth_filter(const Globals& g, const SynthFilterArgs& a) {
  std::shared_ptr<pasr::ModelClient> asr = std::make_shared<pasr::StubRecognizer>();
  int parallelism = 1;
  if (!a.config.empty()) {
    const auto cfg = load_config(g, a.config);
    asr = pasr::make_model_client(cfg.synth.asr, "transcribe");
    parallelism = cfg.synth.config.parallelism;
  }
  if (a.parallelism > 0) parallelism = a.parallelism;
  auto res = pasr::filter_intelligibility(pasr::load_candidate_pool(a.pool), *asr, a.threshold, parallelism);
  if (res.accepted.empty()) {
    throw std::runtime_error("no candidate passed the filter (" + std::to_string(res.rejected.size()) + " rejected)");
  }
  const pasr::Manifest m = pasr::export_pool(res.accepted, a.out);
  std::ofstream rej(m.base_dir / "rejected.jsonl", std::ios::binary);
  for (const auto& c : res.rejected) {
    nlohmann::ordered_json j;
    j["prompt"] = c.prompt;
    j["recognized"] = c.recognized;
    j["filter_wer"] = c.filter_wer ? nlohmann::ordered_json(*c.filter_wer) : nlohmann::ordered_json(nullptr);
    j["reason"] = c.rejection_reason;
    rej << j.dump() << "\n";
  }
  std::printf("%zu accepted, %zu rejected; manifest %s\n", res.accepted.size(), res.rejected.size(),
              (m.base_dir / "manifest.jsonl").string().c_str());
  return 0;
}

struct MixArgs {
  std::string real, synthetic, config, out;
  double ratio = 0.0;
  long long seed = -1;
};

int cmd_mix(const Globals& g, const MixArgs& a) {
  std::uint64_t seed = 0;
  if (!a.config.empty()) seed = load_config(g, a.config).sub_seed("mix");
  if (a.seed >= 0) seed = static_cast<std::uint64_t>(a.seed);
  const auto real = absolutize_audio(pasr::load_manifest(a.real));
  const auto synth = absolutize_audio(pasr::load_manifest(a.synthetic));
  const auto mixed = pasr::mix_synthetic(real, synth, a.ratio, seed);
  const auto dir = pasr::next_version_dir(a.out);
  fs::create_directories(dir);
  pasr::save_manifest(dir / "manifest.jsonl", mixed);
  std::size_t n_syn = 0;
  for (const auto& u : mixed.records) n_syn += u.provenance == pasr::Provenance::synthetic ? 1 : 0;
  std::printf("%zu records (%zu real, %zu synthetic) written to %s\n", mixed.records.size(),
              mixed.records.size() - n_syn, n_syn, (dir / "manifest.jsonl").string().c_str());
  return 0;
}

struct ReportArgs {
  std::string matrix, run, format = "table";
};

int cmd_report(const Globals&, const ReportArgs& a) {
  if (a.matrix.empty() == a.run.empty()) throw std::invalid_argument("pass exactly one of --matrix or --run");
  if (a.format != "table" && a.format != "json") throw std::invalid_argument("--format must be table or json");
  if (!a.matrix.empty()) {
    fs::path p = a.matrix;
    if (fs::is_directory(p)) p /= "summary.json";
    std::ifstream is(p);
    if (!is) throw std::runtime_error("cannot open " + p.string());
    const auto rows = nlohmann::ordered_json::parse(is);
    if (a.format == "json") {
      std::cout << rows.dump(2) << "\n";
      return 0;
    }
    std::printf("%-16s %-8s %-15s %-11s %8s %9s %6s\n", "preset", "method", "personalization", "specaugment", "WER",
                "SemScore", "status");
    for (const auto& r : rows) {
      auto num = [](const nlohmann::ordered_json& v) { return v.is_number() ? fmt2(v.get<double>()) : std::string("-"); };
      std::printf("%-16s %-8s %-15s %-11s %8s %9s %6s\n", r.at("preset").get<std::string>().c_str(),
                  r.at("method").get<std::string>().c_str(), r.at("personalization").get<bool>() ? "yes" : "no",
                  r.at("specaugment").get<bool>() ? "yes" : "no", num(r.at("wer")).c_str(),
                  num(r.at("semscore")).c_str(), r.at("status").get<std::string>().c_str());
    }
    return 0;
  }
  std::ifstream is(fs::path(a.run) / "records.json");
  if (!is) throw std::runtime_error("no records.json in " + a.run);
  const auto recs = nlohmann::ordered_json::parse(is);
  if (a.format == "json") {
    std::cout << recs.dump(2) << "\n";
    return 0;
  }
  std::printf("%8s %8s %9s %10s\n", "step", "WER", "SemScore", "lr");
  for (const auto& r : recs) {
    std::printf("%8ld %8s %9s %10.3g%s\n", r.at("step").get<long>(), fmt2(r.at("wer").get<double>()).c_str(),
                fmt2(r.at("semscore").get<double>()).c_str(), r.at("lr").get<double>(),
                r.value("is_best", false) ? "  best" : "");
  }
  return 0;
}

struct MatrixArgs {
  std::vector<std::string> presets;
  std::string train_manifest, dev_manifest, synthetic_manifest, out;
  int parallelism = 1;
};

int cmd_matrix(const Globals& g, const MatrixArgs& a) {
  std::vector<pasr::ExperimentConfig> cfgs;
  std::vector<std::string> errors;
  for (const auto& p : a.presets) {
    try {
      cfgs.push_back(load_config(g, p));
    } catch (const pasr::ConfigError& e) {
      for (const auto& v : e.violations()) errors.push_back(p + ": " + v);
    }
  }
  if (!errors.empty()) throw pasr::ConfigError(errors);
  pasr::RunInputs in{pasr::load_manifest(a.train_manifest), pasr::load_manifest(a.dev_manifest), std::nullopt};
  if (!a.synthetic_manifest.empty()) in.synthetic = pasr::load_manifest(a.synthetic_manifest);
  const auto dir = pasr::next_version_dir(a.out);
  const auto rows = pasr::run_experiment_matrix(cfgs, in, dir, a.parallelism, [&](const pasr::MatrixRow& r) {
    if (!g.quiet) {
      std::fprintf(stderr, "%s/%s: %s%s%s\n", r.preset.c_str(), r.cell.label().c_str(), r.status.c_str(),
                   r.error.empty() ? "" : ": ", r.error.c_str());
    }
  });
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.status == "ok" ? 0 : 1;
  std::printf("%zu runs, %zu failed; summary %s\n", rows.size(), failed, (dir / "summary.json").string().c_str());
  return 0;
}

struct ToyArgs {
  std::string out;
  pasr::ToyCorpusConfig cfg;
};

int cmd_toy(const Globals&, const ToyArgs& a) {
  const auto dir = pasr::next_version_dir(a.out);
  const auto m = pasr::materialize_audio(pasr::make_toy_corpus(a.cfg), dir);
  pasr::save_manifest(dir / "manifest.jsonl", m);
  std::printf("%zu utterances written to %s\n", m.records.size(), (dir / "manifest.jsonl").string().c_str());
  return 0;
}

int cmd_validate(const Globals& g, const std::string& config) {
  const auto cfg = load_config(g, config);
  std::cout << pasr::config_snapshot(cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pasr: personalized adapter-based speech recognition"};
  app.set_help_all_flag("--help-all", "Print help for every command and flag");
  app.require_subcommand(1);
  Globals g;
  app.add_option("--preset-dir", g.preset_dirs, "Extra directory searched for presets named in --config or extends:");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train adapters (or the full model) and write a run directory");
  c_train->add_option("--config", train.config, "Experiment config file or preset name")->required();
  c_train->add_option("--train-manifest", train.train_manifest, "Manifest whose train split is used")->required();
  c_train->add_option("--dev-manifest", train.dev_manifest, "Manifest whose dev split is evaluated")->required();
  c_train->add_option("--synthetic-manifest", train.synthetic_manifest,
                      "Synthetic pool mixed in at train.synthetic_ratio");
  c_train->add_option("--out", train.out, "Parent directory; each run gets a fresh vNNN")->required();

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score hypotheses against a manifest");
  c_eval->add_option("--manifest", ev.manifest, "Reference manifest")->required();
  c_eval->add_option("--hypotheses", ev.hypotheses, "JSON lines of {id, text}")->required();
  c_eval->add_option("--weights", ev.weights, "SemScore weights w_sem,w_phon,w_nli");
  c_eval->add_option("--config", ev.config, "Config supplying metric clients and default weights");
  c_eval->add_option("--split", ev.split, "Only score this split (train, dev, test)");
  c_eval->add_option("--out", ev.out, "Writes <out>.json and <out>.txt; never overwrites");

  TranscribeArgs tr;
  auto* c_tr = app.add_subcommand("transcribe", "Greedy transcription with a trained model");
  c_tr->add_option("--model", tr.model, "Full model checkpoint")->required();
  c_tr->add_option("--adapter", tr.adapter, "Adapter checkpoint applied to the model's backbone");
  c_tr->add_option("--config", tr.config, "Config supplying the frontend and registry");
  auto* o_man = c_tr->add_option("--manifest", tr.manifest, "Manifest to transcribe");
  auto* o_wav = c_tr->add_option("--wav", tr.wav, "Single WAV file to transcribe");
  o_man->excludes(o_wav);
  c_tr->add_option("--split", tr.split, "Only transcribe this split");
  c_tr->add_option("--out", tr.out, "Hypotheses file to create (stdout when omitted)");

  auto* c_synth = app.add_subcommand("synth", "Synthetic data generation");
  c_synth->require_subcommand(1);
  SynthGenerateArgs sg;
  auto* c_gen = c_synth->add_subcommand("generate", "Generate transcripts and synthesize candidate audio");
  c_gen->add_option("--config", sg.config, "Experiment config (synth block and root seed)")->required();
  c_gen->add_option("--train-manifest", sg.train_manifest, "Source of prompt examples and voice attributes")
      ->required();
  c_gen->add_option("--n", sg.n, "Number of candidates (default synth.candidates)");
  c_gen->add_option("--out", sg.out, "Parent directory; each pool gets a fresh vNNN")->required();
  SynthFilterArgs sf;
  auto* c_filter = c_synth->add_subcommand("filter", "Keep candidates whose recognition WER is below the threshold");
  c_filter->add_option("--pool", sf.pool, "Candidate pool directory")->required();
  c_filter->add_option("--threshold", sf.threshold, "Rejection threshold in WER percent")->capture_default_str();
  c_filter->add_option("--config", sf.config, "Config supplying the recognizer client");
  c_filter->add_option("--parallelism", sf.parallelism, "Concurrent recognizer calls (default synth.parallelism)");
  c_filter->add_option("--out", sf.out, "Parent directory; each export gets a fresh vNNN")->required();

  MixArgs mx;
  auto* c_mix = app.add_subcommand("mix", "Add synthetic records to the real train split");
  c_mix->add_option("--real", mx.real, "Real manifest")->required();
  c_mix->add_option("--synthetic", mx.synthetic, "Synthetic manifest")->required();
  c_mix->add_option("--ratio", mx.ratio, "Synthetic records as a fraction of real train records")->required();
  c_mix->add_option("--config", mx.config, "Config whose root seed fixes the draw");
  c_mix->add_option("--seed", mx.seed, "Explicit draw seed (overrides --config)");
  c_mix->add_option("--out", mx.out, "Parent directory; each mix gets a fresh vNNN")->required();

  ReportArgs rp;
  auto* c_rep = app.add_subcommand("report", "Summarize a matrix or a training run");
  c_rep->add_option("--matrix", rp.matrix, "Matrix output directory or summary.json");
  c_rep->add_option("--run", rp.run, "Training run directory");
  c_rep->add_option("--format", rp.format, "table or json")->capture_default_str();

  MatrixArgs mt;
  auto* c_mat = app.add_subcommand("matrix", "Run method x personalization x SpecAugment for each preset");
  c_mat->add_option("--preset", mt.presets, "Preset name or config file (repeatable)")->required();
  c_mat->add_option("--train-manifest", mt.train_manifest, "Manifest whose train split is used")->required();
  c_mat->add_option("--dev-manifest", mt.dev_manifest, "Manifest whose dev split is evaluated")->required();
  c_mat->add_option("--synthetic-manifest", mt.synthetic_manifest, "Synthetic pool for train.synthetic_ratio");
  c_mat->add_option("--parallelism", mt.parallelism, "Runs trained concurrently")->capture_default_str();
  c_mat->add_option("--out", mt.out, "Parent directory; each matrix gets a fresh vNNN")->required();

  ToyArgs ty;
  auto* c_toy = app.add_subcommand("toy-corpus", "Write the built-in synthetic toy corpus");
  c_toy->add_option("--out", ty.out, "Parent directory; each corpus gets a fresh vNNN")->required();
  c_toy->add_option("--seed", ty.cfg.seed, "Corpus seed")->capture_default_str();
  c_toy->add_option("--speakers", ty.cfg.speakers, "Speakers")->capture_default_str();
  c_toy->add_option("--train-per-speaker", ty.cfg.train_per_speaker, "Train utterances per speaker")
      ->capture_default_str();
  c_toy->add_option("--dev-per-speaker", ty.cfg.dev_per_speaker, "Dev utterances per speaker")->capture_default_str();
  c_toy->add_option("--vocabulary", ty.cfg.vocabulary, "Distinct words")->capture_default_str();

  std::string vc;
  auto* c_val = app.add_subcommand("validate-config", "Resolve extends: and report every violated constraint");
  c_val->add_option("--config", vc, "Config file or preset name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_train->parsed()) return cmd_train(g, train);
    if (c_eval->parsed()) return cmd_evaluate(g, ev);
    if (c_tr->parsed()) {
      if (tr.manifest.empty() == tr.wav.empty()) throw std::invalid_argument("pass exactly one of --manifest or --wav");
      return cmd_transcribe(g, tr);
    }
    if (c_gen->parsed()) return cmd_synth_generate(g, sg);
    if (c_filter->parsed()) return cmd_synth_filter(g, sf);
    if (c_mix->parsed()) return cmd_mix(g, mx);
    if (c_rep->parsed()) return cmd_report(g, rp);
    if (c_mat->parsed()) return cmd_matrix(g, mt);
    if (c_toy->parsed()) return cmd_toy(g, ty);
    if (c_val->parsed()) return cmd_validate(g, vc);
  } catch (const pasr::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
