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

// Experiment configuration. A YAML file may name a parent with
// `extends: <preset or path>`; maps merge recursively (child wins) and
// sequences are replaced. Presets are looked up as <dir>/<name>.yaml in the
// preset search path, then relative to the extending file.

#pragma once

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pasr/adapters/adapters.hpp"
#include "pasr/backbone/config.hpp"
#include "pasr/conditioning/conditioning.hpp"
#include "pasr/core/client.hpp"
#include "pasr/core/http_client.hpp"
#include "pasr/frontend/features.hpp"
#include "pasr/metrics/semscore.hpp"
#include "pasr/synth/pipeline.hpp"
#include "pasr/synth/stubs.hpp"
#include "pasr/trainer/trainer.hpp"

namespace pasr {

/// Every violated constraint, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : std::runtime_error(join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

struct ClientConfig {
  /// stub | external-command | http-endpoint ("in-process" reads as stub)
  std::string kind = "stub";
  /// Stub variant; empty selects the role's default stub.
  std::string stub;
  std::string command;
  std::string url;
  double timeout_s = 60.0;
  /// Environment variable holding a bearer token.
  std::string api_key_env;
  nlohmann::json params = nlohmann::json::object();
};

struct RegistrySourceConfig {
  std::string source;
  ClientConfig client;
  int dim = 0;
  /// 0 means "same as dim".
  int hidden = 0;
  /// Forwarded to client extractors as "layer"; empty leaves the choice to the client.
  std::string layer;
};

struct MetricsConfig {
  SemScoreWeights weights;
  ClientConfig semantic;
  ClientConfig nli;
  ClientConfig g2p;
};

struct SynthBlock {
  SynthConfig config;
  ClientConfig llm;
  ClientConfig tts;
  ClientConfig asr;
};

struct MatrixConfig {
  std::vector<AdapterMethod> methods;
  std::vector<bool> personalization;
  std::vector<bool> specaugment;
};

struct ExperimentConfig {
  std::string name;
  std::uint64_t seed = 0;
  FrontendConfig frontend;
  BackboneConfig backbone;
  std::vector<RegistrySourceConfig> registry;
  double mapping_dropout = 0.1;
  TrainConfig train;
  /// Optional pretrained model to adapt (path).
  std::string base_checkpoint;
  MetricsConfig metrics;
  SynthBlock synth;
  MatrixConfig matrix;
  /// Documented search grid; informational.
  nlohmann::json grid;
  /// Merged configuration as loaded.
  nlohmann::json resolved;

  std::uint64_t sub_seed(std::string_view name) const { return derive_seed(seed, name); }
};

namespace detail {

inline nlohmann::json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& x : n) a.push_back(yaml_to_json(x));
      return a;
    }
    case YAML::NodeType::Map: {
      nlohmann::json o = nlohmann::json::object();
      for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return o;
    }
    case YAML::NodeType::Scalar:
      break;
  }
  const std::string s = n.Scalar();
  if (n.Tag() == "!") return s;  // quoted
  static const std::regex kInt(R"([-+]?[0-9]+)");
  static const std::regex kFloat(R"([-+]?([0-9]+\.?[0-9]*|\.[0-9]+)([eE][-+]?[0-9]+)?)");
  if (s == "true" || s == "True" || s == "yes") return true;
  if (s == "false" || s == "False" || s == "no") return false;
  if (s == "null" || s == "~") return nullptr;
  if (std::regex_match(s, kInt)) {
    try {
      return std::stoll(s);
    } catch (const std::out_of_range&) {
      return std::stoull(s);
    }
  }
  if (std::regex_match(s, kFloat)) return std::stod(s);
  return s;
}

inline void deep_merge(nlohmann::json& base, const nlohmann::json& over) {
  if (!base.is_object() || !over.is_object()) {
    base = over;
    return;
  }
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key())) {
      deep_merge(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

inline std::filesystem::path find_preset(const std::string& ref, const std::filesystem::path& from_dir,
                                         const std::vector<std::filesystem::path>& search) {
  std::vector<std::filesystem::path> cands;
  const bool looks_like_path = ref.find('/') != std::string::npos || ref.find(".y") != std::string::npos;
  if (looks_like_path) {
    cands.push_back(std::filesystem::path(ref).is_absolute() ? std::filesystem::path(ref) : from_dir / ref);
  } else {
    for (const auto& d : search) cands.push_back(d / (ref + ".yaml"));
    cands.push_back(from_dir / (ref + ".yaml"));
  }
  for (const auto& c : cands) {
    if (std::filesystem::exists(c)) return c;
  }
  throw ConfigError({"cannot resolve extends: '" + ref + "'"});
}

inline nlohmann::json load_layered(const std::filesystem::path& path, const std::vector<std::filesystem::path>& search,
                                   std::vector<std::string>& chain) {
  const std::string key = std::filesystem::weakly_canonical(path).string();
  for (const auto& c : chain) {
    if (c == key) throw ConfigError({"extends cycle through " + key});
  }
  chain.push_back(key);
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  nlohmann::json j = yaml_to_json(root);
  if (j.is_null()) j = nlohmann::json::object();
  if (!j.is_object()) throw ConfigError({path.string() + ": top level must be a mapping"});
  nlohmann::json out = nlohmann::json::object();
  if (j.contains("extends")) {
    std::vector<std::string> parents;
    if (j["extends"].is_string()) {
      parents.push_back(j["extends"].get<std::string>());
    } else if (j["extends"].is_array()) {
      for (const auto& p : j["extends"]) parents.push_back(p.get<std::string>());
    } else {
      throw ConfigError({path.string() + ": extends must be a string or list"});
    }
    for (const auto& p : parents) deep_merge(out, load_layered(find_preset(p, path.parent_path(), search), search, chain));
    j.erase("extends");
  }
  deep_merge(out, j);
  chain.pop_back();
  return out;
}

/// Reads typed fields from a JSON object, recording problems instead of
/// throwing. Keys never read are reported as unknown by finish().
class BlockReader {
 public:
  BlockReader(const nlohmann::json& j, std::string prefix, std::vector<std::string>& out)
      : j_(j), prefix_(std::move(prefix)), out_(out) {
    if (!j_.is_null() && !j_.is_object()) out_.push_back(prefix_ + " must be a mapping");
  }

  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    static const nlohmann::json kNull;
    return has(key) ? j_.at(key) : kNull;
  }

  template <typename T>
  void read(const std::string& key, T& dst) {
    seen_.insert(key);
    if (!has(key) || j_.at(key).is_null()) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const std::exception& e) {
      out_.push_back(path(key) + ": " + e.what());
    }
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void finish() {
    if (!j_.is_object()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (seen_.count(it.key()) == 0) out_.push_back("unknown key " + path(it.key()));
    }
  }

 private:
  const nlohmann::json& j_;
  std::string prefix_;
  std::vector<std::string>& out_;
  std::set<std::string> seen_;
};

inline ClientConfig read_client(const nlohmann::json& j, const std::string& prefix, std::vector<std::string>& v) {
  ClientConfig c;
  if (j.is_null()) return c;
  BlockReader r(j, prefix, v);
  r.read("kind", c.kind);
  r.read("stub", c.stub);
  r.read("command", c.command);
  r.read("url", c.url);
  r.read("timeout_s", c.timeout_s);
  r.read("api_key_env", c.api_key_env);
  if (const auto& p = r.raw("params"); !p.is_null()) c.params = p;
  r.finish();
  if (c.kind == "in-process") c.kind = "stub";
  if (c.kind != "stub" && c.kind != "external-command" && c.kind != "http-endpoint") {
    v.push_back(prefix + ".kind must be stub, in-process, external-command, or http-endpoint");
  }
  if (c.kind == "external-command" && c.command.empty()) v.push_back(prefix + ".command is required for external-command");
  if (c.kind == "http-endpoint" && c.url.rfind("http://", 0) != 0) {
    v.push_back(prefix + ".url must be an http:// URL for http-endpoint");
  }
  if (!(c.timeout_s > 0.0)) v.push_back(prefix + ".timeout_s must be > 0");
  return c;
}

inline void check_stub(const ClientConfig& c, const std::string& prefix, std::initializer_list<const char*> allowed,
                       std::vector<std::string>& v) {
  if (c.kind != "stub" || c.stub.empty()) return;
  for (const char* a : allowed) {
    if (c.stub == a) return;
  }
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
  v.push_back(prefix + ".stub '" + c.stub + "' is not one of: " + list);
}

}  // namespace detail

/// Parses and validates a merged configuration object.
inline ExperimentConfig parse_config(const nlohmann::json& j, std::string name = {}) {
  std::vector<std::string> v;
  ExperimentConfig cfg;
  cfg.name = std::move(name);
  cfg.resolved = j;
  detail::BlockReader top(j, "", v);
  top.read("name", cfg.name);
  top.read("seed", cfg.seed);
  std::string description;
  top.read("description", description);

  {  // frontend
    detail::BlockReader r(top.raw("frontend"), "frontend", v);
    auto& f = cfg.frontend;
    r.read("sample_rate", f.sample_rate);
    r.read("n_mels", f.n_mels);
    r.read("window_ms", f.window_ms);
    r.read("hop_ms", f.hop_ms);
    r.read("energy_floor", f.energy_floor);
    r.read("f_min", f.f_min);
    r.read("f_max", f.f_max);
    r.read("normalize", f.normalize);
    detail::BlockReader s(r.raw("specaugment"), "frontend.specaugment", v);
    s.read("num_freq_masks", f.specaugment.num_freq_masks);
    s.read("max_freq_width", f.specaugment.max_freq_width);
    s.read("num_time_masks", f.specaugment.num_time_masks);
    s.read("max_time_width", f.specaugment.max_time_width);
    std::string fill = "zero";
    s.read("fill", fill);
    if (fill == "zero") {
      f.specaugment.fill = MaskFill::zero;
    } else if (fill == "per_utterance_mean") {
      f.specaugment.fill = MaskFill::per_utterance_mean;
    } else {
      v.push_back("frontend.specaugment.fill must be zero or per_utterance_mean");
    }
    s.finish();
    r.finish();
    if (f.sample_rate < 1) v.push_back("frontend.sample_rate must be >= 1");
    if (f.n_mels < 1) v.push_back("frontend.n_mels must be >= 1");
    if (!(f.window_ms > 0.0) || !(f.hop_ms > 0.0)) v.push_back("frontend.window_ms and frontend.hop_ms must be > 0");
    if (!(f.energy_floor > 0.0)) v.push_back("frontend.energy_floor must be > 0");
    if (f.f_max > 0.0 && f.f_max <= f.f_min) v.push_back("frontend.f_max must exceed frontend.f_min");
    if (f.specaugment.num_freq_masks < 0 || f.specaugment.num_time_masks < 0 || f.specaugment.max_freq_width < 0 ||
        f.specaugment.max_time_width < 0) {
      v.push_back("frontend.specaugment counts and widths must be >= 0");
    }
    if (f.specaugment.max_freq_width > f.n_mels) v.push_back("frontend.specaugment.max_freq_width must not exceed frontend.n_mels");
  }

  {  // backbone
    detail::BlockReader r(top.raw("backbone"), "backbone", v);
    auto& b = cfg.backbone;
    b.input_dim = cfg.frontend.n_mels;
    if (r.has("input_dim")) {
      int d = 0;
      r.read("input_dim", d);
      if (d != cfg.frontend.n_mels) v.push_back("backbone.input_dim must equal frontend.n_mels");
    } else {
      r.raw("input_dim");
    }
    r.read("width", b.width);
    r.read("encoder_layers", b.encoder_layers);
    r.read("decoder_layers", b.decoder_layers);
    r.read("heads", b.heads);
    r.read("ffn_dim", b.ffn_dim);
    r.read("max_decode_len", b.max_decode_len);
    r.read("mask_zero_memory_rows", b.mask_zero_memory_rows);
    r.finish();
    for (auto& s : b.violations()) v.push_back(s);
  }

  {  // registry
    const auto& reg = top.raw("registry");
    if (!reg.is_null() && !reg.is_array()) v.push_back("registry must be a list");
    std::set<std::string> sources;
    if (reg.is_array()) {
      for (std::size_t i = 0; i < reg.size(); ++i) {
        const std::string p = "registry[" + std::to_string(i) + "]";
        detail::BlockReader r(reg[i], p, v);
        RegistrySourceConfig s;
        r.read("source", s.source);
        r.read("dim", s.dim);
        r.read("hidden", s.hidden);
        r.read("layer", s.layer);
        s.client = detail::read_client(r.raw("client"), p + ".client", v);
        r.finish();
        if (s.source.empty()) v.push_back(p + ".source is required");
        if (!sources.insert(s.source).second) v.push_back(p + ".source '" + s.source + "' is duplicated");
        if (s.dim < 1) v.push_back(p + ".dim must be >= 1");
        if (s.hidden < 0) v.push_back(p + ".hidden must be >= 0");
        if (s.hidden == 0) s.hidden = s.dim;
        detail::check_stub(s.client, p + ".client", {"band-energy", "fixed"}, v);
        if (s.client.kind == "stub" && s.client.stub == "fixed") {
          const auto& vec = s.client.params.value("vector", nlohmann::json::array());
          if (!vec.is_array() || static_cast<int>(vec.size()) != s.dim) {
            v.push_back(p + ".client.params.vector must have dim entries");
          }
        }
        cfg.registry.push_back(std::move(s));
      }
    }
    top.read("mapping_dropout", cfg.mapping_dropout);
    if (!(cfg.mapping_dropout >= 0.0 && cfg.mapping_dropout < 1.0)) v.push_back("mapping_dropout must be in [0, 1)");
  }

  {  // adapter
    detail::BlockReader r(top.raw("adapter"), "adapter", v);
    auto& a = cfg.train.adapter;
    std::string method = std::string(to_string(a.method));
    r.read("method", method);
    try {
      a.method = parse_adapter_method(method);
    } catch (const std::exception& e) {
      v.push_back(std::string("adapter.method: ") + e.what());
    }
    r.read("targets", a.targets);
    r.read("rank", a.rank);
    r.read("alpha", a.alpha);
    r.read("dropout_p", a.dropout_p);
    r.read("r_initial", a.r_initial);
    r.read("r_target", a.r_target);
    r.read("warmup_steps", a.warmup_steps);
    r.read("end_step", a.end_step);
    r.read("importance_decay", a.importance_decay);
    r.read("reallocate_every", a.reallocate_every);
    r.read("orthogonality_weight", a.orthogonality_weight);
    r.finish();
    if (a.method == AdapterMethod::lora || a.method == AdapterMethod::adalora) {
      try {
        resolve_sites(cfg.backbone, a.targets);
      } catch (const std::exception& e) {
        v.push_back(std::string("adapter.targets: ") + e.what());
      }
    }
  }

  {  // train
    detail::BlockReader r(top.raw("train"), "train", v);
    auto& t = cfg.train;
    r.read("learning_rate", t.learning_rate);
    r.read("epochs", t.epochs);
    r.read("warmup_steps", t.warmup_steps);
    r.read("eval_every_steps", t.eval_every_steps);
    r.read("max_steps", t.max_steps);
    r.read("batch_size", t.batch_size);
    r.read("dev_subsample_fraction", t.dev_subsample_fraction);
    std::string strat = "by_utterance";
    r.read("dev_stratification", strat);
    if (strat == "by_utterance") {
      t.dev_stratification = DevStratification::by_utterance;
    } else if (strat == "by_speaker") {
      t.dev_stratification = DevStratification::by_speaker;
    } else {
      v.push_back("train.dev_stratification must be by_utterance or by_speaker");
    }
    r.read("use_specaugment", t.use_specaugment);
    r.read("use_personalization", t.use_personalization);
    r.read("synthetic_ratio", t.synthetic_ratio);
    r.read("optimizer", t.optimizer);
    r.read("base_checkpoint", cfg.base_checkpoint);
    r.finish();
    for (auto& s : t.violations()) v.push_back(s);
    t.seed = cfg.sub_seed("trainer");
    if (t.use_personalization && cfg.registry.empty()) {
      v.push_back("train.use_personalization requires at least one registry source");
    }
  }

  {  // metrics
    detail::BlockReader r(top.raw("metrics"), "metrics", v);
    const auto& w = r.raw("weights");
    if (w.is_array()) {
      if (w.size() != 3) {
        v.push_back("metrics.weights must have three entries (semantic, phonetic, nli)");
      } else {
        cfg.metrics.weights = {w[0].get<double>(), w[1].get<double>(), w[2].get<double>()};
      }
    } else if (w.is_object()) {
      detail::BlockReader wr(w, "metrics.weights", v);
      wr.read("semantic", cfg.metrics.weights.semantic);
      wr.read("phonetic", cfg.metrics.weights.phonetic);
      wr.read("nli", cfg.metrics.weights.nli);
      wr.finish();
    } else if (!w.is_null()) {
      v.push_back("metrics.weights must be a list or mapping");
    }
    for (auto& s : cfg.metrics.weights.violations()) v.push_back(s);
    cfg.metrics.semantic = detail::read_client(r.raw("semantic"), "metrics.semantic", v);
    cfg.metrics.nli = detail::read_client(r.raw("nli"), "metrics.nli", v);
    cfg.metrics.g2p = detail::read_client(r.raw("g2p"), "metrics.g2p", v);
    detail::check_stub(cfg.metrics.semantic, "metrics.semantic", {"hash", "constant"}, v);
    detail::check_stub(cfg.metrics.nli, "metrics.nli", {"hash", "constant"}, v);
    detail::check_stub(cfg.metrics.g2p, "metrics.g2p", {"rules"}, v);
    r.finish();
  }

  {  // synth
    detail::BlockReader r(top.raw("synth"), "synth", v);
    auto& s = cfg.synth.config;
    r.read("prompt_examples", s.prompt_examples);
    r.read("candidates", s.candidates);
    r.read("sentences_per_seed", s.sentences_per_seed);
    r.read("retry_bound", s.retry_bound);
    r.read("threshold", s.threshold);
    r.read("parallelism", s.parallelism);
    r.read("attributes", s.bins);
    cfg.synth.llm = detail::read_client(r.raw("llm"), "synth.llm", v);
    cfg.synth.tts = detail::read_client(r.raw("tts"), "synth.tts", v);
    cfg.synth.asr = detail::read_client(r.raw("asr"), "synth.asr", v);
    detail::check_stub(cfg.synth.llm, "synth.llm", {"recombine"}, v);
    detail::check_stub(cfg.synth.tts, "synth.tts", {"tone"}, v);
    detail::check_stub(cfg.synth.asr, "synth.asr", {"tone"}, v);
    r.finish();
    for (auto& x : s.violations()) v.push_back(x);
  }

  {  // matrix
    detail::BlockReader r(top.raw("matrix"), "matrix", v);
    std::vector<std::string> methods;
    r.read("methods", methods);
    for (const auto& m : methods) {
      try {
        cfg.matrix.methods.push_back(parse_adapter_method(m));
      } catch (const std::exception& e) {
        v.push_back(std::string("matrix.methods: ") + e.what());
      }
    }
    r.read("personalization", cfg.matrix.personalization);
    r.read("specaugment", cfg.matrix.specaugment);
    r.finish();
    if (cfg.registry.empty()) {
      for (bool p : cfg.matrix.personalization) {
        if (p) {
          v.push_back("matrix.personalization includes true but the registry is empty");
          break;
        }
      }
    }
  }

  cfg.grid = top.raw("grid");
  top.finish();
  if (!v.empty()) throw ConfigError(std::move(v));
  return cfg;
}

/// Default preset search path: the bundled presets directory when known.
inline std::vector<std::filesystem::path> default_preset_dirs() {
#ifdef PASR_PRESET_DIR
  return {std::filesystem::path(PASR_PRESET_DIR)};
#else
  return {};
#endif
}

/// Loads `path` with its `extends` chain and validates the result. Errors list
/// every violated constraint.
inline ExperimentConfig validate_config(const std::filesystem::path& path,
                                        std::vector<std::filesystem::path> preset_dirs = default_preset_dirs()) {
  std::filesystem::path p = path;
  if (!std::filesystem::exists(p)) p = detail::find_preset(path.string(), std::filesystem::current_path(), preset_dirs);
  std::vector<std::string> chain;
  const nlohmann::json merged = detail::load_layered(p, preset_dirs, chain);
  return parse_config(merged, p.stem().string());
}

/// The merged configuration rendered as YAML.
inline std::string config_snapshot(const ExperimentConfig& cfg) {
  std::function<YAML::Node(const nlohmann::json&)> conv = [&](const nlohmann::json& j) -> YAML::Node {
    YAML::Node n;
    if (j.is_object()) {
      for (auto it = j.begin(); it != j.end(); ++it) n[it.key()] = conv(it.value());
    } else if (j.is_array()) {
      n = YAML::Node(YAML::NodeType::Sequence);
      for (const auto& x : j) n.push_back(conv(x));
    } else if (j.is_string()) {
      n = j.get<std::string>();
    } else if (j.is_null()) {
      n = YAML::Node(YAML::NodeType::Null);
    } else {
      n = j.dump();
    }
    return n;
  };
  YAML::Emitter out;
  out << conv(cfg.resolved);
  return std::string(out.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Client construction

inline std::shared_ptr<ModelClient> make_remote_client(const ClientConfig& c) {
  if (c.kind == "external-command") return std::make_shared<ExternalCommandClient>(c.command);
  if (c.kind == "http-endpoint") return std::make_shared<HttpEndpointClient>(c.url, c.timeout_s, c.api_key_env);
  throw std::invalid_argument("not a remote client kind: " + c.kind);
}

/// role: generate | tts | transcribe
inline std::shared_ptr<ModelClient> make_model_client(const ClientConfig& c, const std::string& role) {
  if (c.kind != "stub") return make_remote_client(c);
  if (role == "generate") return std::make_shared<StubTextGenerator>();
  if (role == "tts") return std::make_shared<StubTts>(c.params.value("garble_fraction", 0.0));
  if (role == "transcribe") return std::make_shared<StubRecognizer>();
  throw std::invalid_argument("no stub for role " + role);
}

/// role: semantic | nli
inline std::shared_ptr<TextPairScorer> make_scorer(const ClientConfig& c, const std::string& role) {
  if (c.kind != "stub") return std::make_shared<ClientScorer>(role, make_remote_client(c));
  if (c.stub == "constant") return std::make_shared<ConstantScorer>(c.params.value("value", 1.0));
  return std::make_shared<HashStubScorer>(role);
}

inline SemScoreClients make_semscore_clients(const MetricsConfig& m) {
  SemScoreClients s;
  s.semantic = make_scorer(m.semantic, "semantic");
  s.nli = make_scorer(m.nli, "nli");
  if (m.g2p.kind == "stub") {
    s.g2p = std::make_shared<RuleG2P>();
  } else {
    s.g2p = std::make_shared<ClientG2P>(make_remote_client(m.g2p));
  }
  return s;
}

inline std::shared_ptr<EmbeddingExtractor> make_extractor(const RegistrySourceConfig& s, int sample_rate) {
  if (s.client.kind == "stub") {
    if (s.client.stub == "fixed") {
      const auto vec = s.client.params.at("vector").get<std::vector<double>>();
      return std::make_shared<FixedVectorExtractor>(
          s.source, Eigen::Map<const Eigen::VectorXd>(vec.data(), static_cast<Eigen::Index>(vec.size())), s.dim);
    }
    return std::make_shared<BandEnergyExtractor>(s.source, s.dim, sample_rate);
  }
  json extra = json::object();
  if (!s.layer.empty()) extra["layer"] = s.layer;
  auto client = make_remote_client(s.client);
  if (!client->concurrent_safe()) client = std::make_shared<SerializedClient>(client);
  return std::make_shared<ClientExtractor>(s.source, s.dim, client, extra);
}

inline EmbeddingProviderRegistry make_registry(const ExperimentConfig& cfg) {
  EmbeddingProviderRegistry reg;
  for (const auto& s : cfg.registry) reg.add(make_extractor(s, cfg.frontend.sample_rate), s.hidden);
  return reg;
}

}  // namespace pasr
