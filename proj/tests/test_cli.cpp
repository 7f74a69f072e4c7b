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

#include <gtest/gtest.h>

#include <algorithm>
#include <thread>

#include "pasr/cli/config.hpp"
#include "pasr/cli/experiment.hpp"
#include "pasr/trainer/toy_corpus.hpp"
#include "test_support.hpp"

// After Eigen: resolv.h defines _res.
#include "httplib.h"
#include "pasr/core/http_client.hpp"

namespace pasr {
namespace {

const std::vector<std::filesystem::path> kPresets{PASR_PRESET_DIR};

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

std::vector<std::string> violations_of(const std::string& yaml) {
  testing::TempDir dir;
  testing::write_file(dir / "c.yaml", yaml);
  try {
    validate_config(dir / "c.yaml", kPresets);
  } catch (const ConfigError& e) {
    return e.violations();
  }
  return {};
}

TEST(Config, BundledPresetsValidate) {
  int n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(PASR_PRESET_DIR)) {
    if (entry.path().extension() != ".yaml") continue;
    EXPECT_NO_THROW(validate_config(entry.path(), kPresets)) << entry.path();
    ++n;
  }
  EXPECT_GE(n, 5);
  const auto smoke = validate_config("toy-smoke", kPresets);
  EXPECT_EQ(smoke.name, "toy-smoke");
  EXPECT_EQ(smoke.backbone.input_dim, 40);
  EXPECT_EQ(smoke.train.adapter.rank, 8);
  EXPECT_EQ(smoke.registry.size(), 1u);
}

TEST(Config, ExtendsMergesDeeply) {
  testing::TempDir dir;
  testing::write_file(dir / "parent.yaml", "seed: 3\nbackbone: {width: 32, heads: 4}\ntrain: {learning_rate: 0.01, use_personalization: false}\n");
  testing::write_file(dir / "child.yaml", "extends: parent.yaml\nbackbone: {width: 64}\n");
  const auto cfg = validate_config(dir / "child.yaml", kPresets);
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.backbone.width, 64);
  EXPECT_EQ(cfg.backbone.heads, 4);
  EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 0.01);

  testing::write_file(dir / "a.yaml", "extends: b.yaml\n");
  testing::write_file(dir / "b.yaml", "extends: a.yaml\n");
  EXPECT_THROW(validate_config(dir / "a.yaml", kPresets), ConfigError);
}

TEST(Config, CollectsEveryViolation) {
  const auto v = violations_of(
      "extends: toy-smoke\n"
      "adapter: {method: adalora, r_initial: 4, r_target: 8}\n"
      "train: {learning_rate: -1, bogus: 1}\n"
      "backbone: {heads: 5}\n"
      "metrics: {weights: [0.5, 0.5, 0.5]}\n"
      "colour: blue\n");
  EXPECT_GE(v.size(), 6u);
  EXPECT_TRUE(mentions(v, "r_target"));
  EXPECT_TRUE(mentions(v, "learning_rate"));
  EXPECT_TRUE(mentions(v, "unknown key train.bogus"));
  EXPECT_TRUE(mentions(v, "unknown key colour"));
  EXPECT_TRUE(mentions(v, "heads"));
  EXPECT_TRUE(mentions(v, "weights"));
}

TEST(Config, RejectsInconsistentBlocks) {
  EXPECT_TRUE(mentions(violations_of("extends: toy-smoke\nbackbone: {input_dim: 80}\n"), "input_dim"));
  EXPECT_TRUE(mentions(violations_of("extends: toy-smoke\nregistry: []\n"), "registry"));
  EXPECT_TRUE(mentions(violations_of("extends: toy-smoke\nadapter: {targets: [nothing]}\n"), "adapter.targets"));
  EXPECT_TRUE(mentions(violations_of("extends: toy-smoke\nsynth: {llm: {kind: external-command}}\n"), "command"));
  EXPECT_TRUE(mentions(violations_of("extends: toy-smoke\nsynth: {tts: {kind: stub, stub: nope}}\n"), "synth.tts.stub"));
  EXPECT_TRUE(violations_of("extends: toy-smoke\nsynth: {asr: {kind: in-process}}\n").empty());
}

TEST(Config, SnapshotRoundTrips) {
  const auto cfg = validate_config("toy-smoke", kPresets);
  testing::TempDir dir;
  testing::write_file(dir / "snap.yaml", config_snapshot(cfg));
  const auto back = validate_config(dir / "snap.yaml", kPresets);
  EXPECT_EQ(config_snapshot(back), config_snapshot(cfg));
}

ExperimentConfig quick_matrix_config() {
  std::vector<std::string> chain;
  const auto path = detail::find_preset("toy-matrix", std::filesystem::current_path(), kPresets);
  auto j = detail::load_layered(path, kPresets, chain);
  j["backbone"]["width"] = 16;
  j["backbone"]["ffn_dim"] = 32;
  j["frontend"]["n_mels"] = 16;
  j["frontend"]["specaugment"]["max_freq_width"] = 4;
  j["train"]["max_steps"] = 12;
  j["train"]["eval_every_steps"] = 6;
  j["train"]["warmup_steps"] = 2;
  j["adapter"]["end_step"] = 10;
  j["adapter"]["warmup_steps"] = 2;
  j["adapter"]["reallocate_every"] = 2;
  return parse_config(j, "toy-matrix");
}

RunInputs toy_inputs() {
  ToyCorpusConfig c;
  c.speakers = 2;
  c.train_per_speaker = 4;
  c.dev_per_speaker = 1;
  c.vocabulary = 8;
  c.seed = 5;
  const auto m = make_toy_corpus(c);
  return {filter_split(m, Split::train), filter_split(m, Split::dev), std::nullopt};
}

TEST(Matrix, CellsFollowDeclaredOrder) {
  const auto cfg = quick_matrix_config();
  const auto cells = matrix_cells(cfg.matrix, cfg.train);
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[0].label(), "lora-nopers-nosa");
  EXPECT_EQ(cells[1].label(), "lora-pers-nosa");
  EXPECT_EQ(cells[2].label(), "adalora-nopers-nosa");
  EXPECT_EQ(cells[3].label(), "adalora-pers-nosa");
  MatrixConfig empty;
  EXPECT_EQ(matrix_cells(empty, cfg.train).size(), 1u);
}

TEST(Matrix, RunsEveryCellDeterministically) {
  const auto cfg = quick_matrix_config();
  const auto in = toy_inputs();
  testing::TempDir a, b;
  const auto rows = run_experiment_matrix({cfg}, in, a.path(), 2);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.status, "ok") << r.error;
    EXPECT_EQ(r.best_step % 6, 0);
    EXPECT_TRUE(std::filesystem::exists(a / r.run_dir / "best.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(a / r.run_dir / "records.log"));
  }
  const auto again = run_experiment_matrix({cfg}, in, b.path(), 1);
  EXPECT_EQ(testing::read_file(a / "summary.tsv"), testing::read_file(b / "summary.tsv"));
  EXPECT_EQ(testing::read_file(a / "summary.json"), testing::read_file(b / "summary.json"));
  const auto tsv = testing::read_file(a / "summary.tsv");
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 5);
}

TEST(Matrix, FailedCellIsRecordedAndOthersRun) {
  auto cfg = quick_matrix_config();
  cfg.registry.clear();
  testing::TempDir dir;
  const auto rows = run_experiment_matrix({cfg}, toy_inputs(), dir.path());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].status, "ok");
  EXPECT_EQ(rows[1].status, "failed");
  EXPECT_FALSE(rows[1].error.empty());
  EXPECT_EQ(rows[2].status, "ok");
  EXPECT_EQ(rows[3].status, "failed");
  const auto summary = json::parse(testing::read_file(dir / "summary.json"));
  EXPECT_EQ(summary.size(), 4u);
  EXPECT_TRUE(summary[1]["wer"].is_null());
}

TEST(Matrix, RefusesToOverwriteRunDirectory) {
  const auto cfg = quick_matrix_config();
  testing::TempDir dir;
  testing::write_file(dir / "keep.txt", "x");
  EXPECT_THROW(run_training(cfg, toy_inputs(), dir.path()), std::runtime_error);
}

TEST(Clients, HttpEndpointRoundTrip) {
  httplib::Server server;
  server.Post("/asr", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    json out{{"text", "heard " + body.at("task").get<std::string>()}};
    if (req.has_header("Authorization")) out["auth"] = req.get_header_value("Authorization");
    res.set_content(out.dump(), "application/json");
  });
  server.Post("/fail", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  server.Post("/garbage", [](const httplib::Request&, httplib::Response& res) { res.set_content("{", "text/plain"); });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  ::setenv("PASR_TEST_KEY", "sekret", 1);
  HttpEndpointClient c(base + "/asr", 5.0, "PASR_TEST_KEY");
  const auto out = c.call({{"task", "transcribe"}});
  EXPECT_EQ(out.at("text"), "heard transcribe");
  EXPECT_EQ(out.at("auth"), "Bearer sekret");
  HttpEndpointClient fail(base + "/fail", 5.0);
  EXPECT_THROW(fail.call({{"task", "x"}}), ClientError);
  HttpEndpointClient garbage(base + "/garbage", 5.0);
  EXPECT_THROW(garbage.call({{"task", "x"}}), ClientError);
  EXPECT_THROW(HttpEndpointClient("https://example.org/x"), ClientError);
  server.stop();
  th.join();
  HttpEndpointClient closed(base + "/asr", 1.0);
  EXPECT_THROW(closed.call({{"task", "x"}}), ClientError);
}

TEST(Clients, ExternalCommandSpeaksJsonLines) {
  ExternalCommandClient echo("while read -r line; do printf '{\"seen\":%s}\\n' \"$line\"; done");
  const auto a = echo.call({{"task", "generate"}, {"n", 1}});
  EXPECT_EQ(a.at("seen").at("task"), "generate");
  EXPECT_EQ(echo.call({{"n", 2}}).at("seen").at("n"), 2);

  ExternalCommandClient err("while read -r line; do echo '{\"error\":\"boom\"}'; done");
  EXPECT_THROW(err.call({{"x", 1}}), ClientError);
  ExternalCommandClient dead("exit 3");
  EXPECT_THROW(dead.call({{"x", 1}}), ClientError);

  ClientConfig cc;
  cc.kind = "external-command";
  cc.command = "cat";
  auto client = make_model_client(cc, "transcribe");
  EXPECT_EQ(client->call({{"text", "loop"}}).at("text"), "loop");
}

TEST(Clients, StubFactoryCoversEveryRole) {
  ClientConfig stub;
  for (const char* role : {"generate", "tts", "transcribe"}) EXPECT_NE(make_model_client(stub, role), nullptr);
  EXPECT_THROW(make_model_client(stub, "paint"), std::invalid_argument);
  const auto clients = make_semscore_clients(MetricsConfig{});
  EXPECT_NE(clients.semantic, nullptr);
  EXPECT_NE(clients.nli, nullptr);
  EXPECT_NE(clients.g2p, nullptr);
}

}  // namespace
}  // namespace pasr
