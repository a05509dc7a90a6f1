// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "posvit/checkpoint.hpp"
#include "posvit/dataset.hpp"
#include "posvit/errors.hpp"
#include "posvit/experiment.hpp"
#include "posvit/model.hpp"
#include "posvit/optim.hpp"
#include "posvit/recipes.hpp"
#include "support.hpp"

namespace posvit {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("posvit_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

// Two 4x4 images holding 0..15 and 240..255, labelled 3 and 7.
void write_idx_fixture(const fs::path& dir) {
  std::string img, lbl;
  put_be32(img, 0x00000803);
  put_be32(img, 2);
  put_be32(img, 4);
  put_be32(img, 4);
  for (int i = 0; i < 16; ++i) img.push_back(static_cast<char>(i));
  for (int i = 240; i < 256; ++i) img.push_back(static_cast<char>(i));
  put_be32(lbl, 0x00000801);
  put_be32(lbl, 2);
  lbl.push_back(3);
  lbl.push_back(7);
  spit(dir / "images.idx", img);
  spit(dir / "labels.idx", lbl);
}

TEST(Idx, LoadsHandBuiltFixture) {
  const fs::path dir = scratch("idx_ok");
  write_idx_fixture(dir);
  const Dataset d = load_idx(dir / "images.idx", dir / "labels.idx");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.shape.height, 4u);
  EXPECT_EQ(d.shape.width, 4u);
  EXPECT_EQ(d.shape.channels, 1u);
  EXPECT_EQ(d.labels, (std::vector<std::size_t>{3, 7}));
  EXPECT_EQ(d.num_classes, 8u);
  for (int i = 0; i < 16; ++i) {
    EXPECT_NEAR(d.image(0)[i], i / 255.0, 1e-12);
    EXPECT_NEAR(d.image(1)[i], (240 + i) / 255.0, 1e-12);
  }
  const Dataset via_uri =
      load_dataset("idx:" + (dir / "images.idx").string() + "," + (dir / "labels.idx").string());
  EXPECT_EQ(via_uri.pixels, d.pixels);
}

TEST(Idx, BadMagicRejected) {
  const fs::path dir = scratch("idx_magic");
  write_idx_fixture(dir);
  EXPECT_THROW(load_idx(dir / "labels.idx", dir / "labels.idx"), FormatError);
  EXPECT_THROW(load_idx(dir / "images.idx", dir / "images.idx"), FormatError);
}

TEST(Idx, TruncatedPayloadNamesByteCounts) {
  const fs::path dir = scratch("idx_trunc");
  write_idx_fixture(dir);
  std::string img = slurp(dir / "images.idx");
  img.resize(img.size() - 5);
  spit(dir / "images.idx", img);
  try {
    load_idx(dir / "images.idx", dir / "labels.idx");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 48 bytes"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found 43"), std::string::npos) << msg;
  }
}

TEST(Idx, CountMismatchRejected) {
  const fs::path dir = scratch("idx_count");
  write_idx_fixture(dir);
  std::string lbl;
  put_be32(lbl, 0x00000801);
  put_be32(lbl, 3);
  lbl += std::string("\x01\x02\x03", 3);
  spit(dir / "labels.idx", lbl);
  EXPECT_THROW(load_idx(dir / "images.idx", dir / "labels.idx"), FormatError);
}

TEST(Synthetic, DeterministicBalancedAndGraded) {
  const Dataset a = make_synthetic(100, 5), b = make_synthetic(100, 5), c = make_synthetic(100, 6);
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.pixels, c.pixels);
  std::vector<std::size_t> per_class(10, 0);
  for (std::size_t l : a.labels) ++per_class[l];
  for (std::size_t n : per_class) EXPECT_EQ(n, 10u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(a.image(i)[0], a.image(i)[31 * 32 + 31]);
  const Dataset u = load_dataset("synthetic:5:100");
  EXPECT_EQ(u.pixels, a.pixels);
  EXPECT_THROW(load_dataset("imagenet:/data"), ConfigError);
}

ParameterList tiny_params(std::uint64_t seed, HeadMode head = HeadMode::apl) {
  return init_model(testing::tiny_config(head), seed).parameters();
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const fs::path dir = scratch("ckpt_rt");
  const ModelConfig cfg = testing::tiny_config(HeadMode::rpl);
  Model src = init_model(cfg, 1);
  ParameterList sp = src.parameters();
  Rng rng(2);
  for (auto& p : sp) {
    for (double& v : p.tensor.mutable_data()) v = rng.normal() * 1e-3 + 1.0 / 3.0;
  }
  AdamWState state = make_adamw_state(sp);
  state.step = 17;
  state.m[0][0] = 0.125;
  state.v.back().back() = 1e-300;
  save_checkpoint(dir, sp, cfg, 4, &state);

  Model dst = init_model(cfg, 9);
  ParameterList dp = dst.parameters();
  AdamWState loaded;
  const CheckpointInfo info = load_checkpoint(dir, dp, cfg, &loaded);
  EXPECT_EQ(info.epoch, 4u);
  EXPECT_TRUE(info.has_optimizer);
  EXPECT_EQ(info.config, cfg);
  for (std::size_t i = 0; i < sp.size(); ++i) EXPECT_EQ(testing::values(sp[i].tensor), testing::values(dp[i].tensor));
  EXPECT_EQ(loaded.step, 17u);
  EXPECT_EQ(loaded.m, state.m);
  EXPECT_EQ(loaded.v, state.v);
  EXPECT_EQ(fs::file_size(dir / "weights.bin") % 8, 0u);
}

TEST(Checkpoint, EditedShapeRejected) {
  const fs::path dir = scratch("ckpt_shape");
  const ModelConfig cfg = testing::tiny_config();
  save_checkpoint(dir, tiny_params(1), cfg, 0);
  auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
  for (auto& t : j["tensors"]) {
    if (t["name"] == "classifier.w") t["shape"] = {t["shape"][1], t["shape"][0]};
  }
  spit(dir / "manifest.json", j.dump(2));
  ParameterList p = tiny_params(2);
  EXPECT_THROW(load_checkpoint(dir, p, cfg), FormatError);
}

TEST(Checkpoint, MismatchedConfigRefusedWithDiff) {
  const fs::path dir = scratch("ckpt_hash");
  const ModelConfig cfg = testing::tiny_config();
  save_checkpoint(dir, tiny_params(1), cfg, 0);
  ModelConfig other = cfg;
  other.ln_eps = 1e-5;
  ParameterList p = tiny_params(2);
  try {
    load_checkpoint(dir, p, other);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("ln_eps"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(load_checkpoint(dir, p, other, nullptr, true));
  EXPECT_NE(config_hash(cfg), config_hash(other));
}

TEST(Checkpoint, VersionAndPayloadChecked) {
  const fs::path dir = scratch("ckpt_version");
  const ModelConfig cfg = testing::tiny_config();
  save_checkpoint(dir, tiny_params(1), cfg, 0);
  const std::string manifest = slurp(dir / "manifest.json");
  auto j = nlohmann::json::parse(manifest);
  j["format_version"] = 2;
  spit(dir / "manifest.json", j.dump());
  ParameterList p = tiny_params(2);
  EXPECT_THROW(load_checkpoint(dir, p, cfg), FormatError);
  spit(dir / "manifest.json", manifest);
  std::string w = slurp(dir / "weights.bin");
  spit(dir / "weights.bin", w.substr(0, w.size() - 8));
  EXPECT_THROW(load_checkpoint(dir, p, cfg), FormatError);
  AdamWState s;
  spit(dir / "weights.bin", w);
  EXPECT_THROW(load_checkpoint(dir, p, cfg, &s), FormatError);
}

TEST(Experiment, UnknownKeysAndBadTypesRejected) {
  EXPECT_THROW(parse_experiment(R"({"epochs": 3, "learning_rate": 0.1})"), ConfigError);
  EXPECT_THROW(parse_experiment(R"({"epochs": "three"})"), ConfigError);
  EXPECT_THROW(parse_experiment(R"({"head_mode": "sideways"})"), ConfigError);
  EXPECT_THROW(parse_experiment("{not json"), ConfigError);
  const ExperimentConfig c = parse_experiment(R"({"epochs": 3, "head_mode": "rpl", "use_pe": true})");
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.model.head_mode, HeadMode::rpl);
  EXPECT_TRUE(c.model.use_pe);
}

TEST(Experiment, OverridesAndRoundTrip) {
  ExperimentConfig c;
  apply_override(c, "lambda=0.25");
  apply_override(c, "head_mode=rpl");
  apply_override(c, "crop=true");
  apply_override(c, "dataset=synthetic:3:64");
  EXPECT_EQ(c.train.lambda, 0.25);
  EXPECT_EQ(c.model.head_mode, HeadMode::rpl);
  EXPECT_TRUE(c.train.augment.crop);
  EXPECT_EQ(c.dataset, "synthetic:3:64");
  EXPECT_THROW(apply_override(c, "nonsense=1"), ConfigError);
  EXPECT_THROW(apply_override(c, "lambda"), ConfigError);
  EXPECT_EQ(parse_experiment(to_json_text(c)), c);

  const fs::path dir = scratch("resolved");
  write_resolved_config(c, dir);
  EXPECT_EQ(load_experiment(dir / "resolved_config.json"), c);
  const ExperimentConfig o = load_experiment(dir / "resolved_config.json", {"epochs=2"});
  EXPECT_EQ(o.train.epochs, 2u);
}

TEST(Recipes, CommandSetAndLambdaRange) {
  const auto& names = command_names();
  for (const char* n : {"train", "eval", "gradcheck", "finetune", "pretrain-mae", "ablate-pe", "sweep-lambda",
                        "ablate-augment"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), n), names.end()) << n;
  }
  EXPECT_EQ(lambda_sweep_values(), (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0, 1.25}));
}

#ifdef POSVIT_CLI_PATH

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(POSVIT_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// A 32x32 model small enough for a few seconds of CLI work.
fs::path write_small_config(const fs::path& dir) {
  ExperimentConfig c;
  c.model.embed_dim = 8;
  c.model.depth = 1;
  c.model.heads = 1;
  c.model.pos_dim = 8;
  c.train.epochs = 1;
  c.train.warmup_epochs = 0;
  c.train.batch_size = 4;
  c.dataset = "synthetic:1:8";
  c.gradcheck_samples = 50;
  spit(dir / "small.json", to_json_text(c));
  return dir / "small.json";
}

TEST(Cli, UsageErrorsExitTwo) {
  const fs::path dir = scratch("cli_usage");
  EXPECT_EQ(run_cli("bogus", dir / "log"), 2);
  EXPECT_NE(slurp(dir / "log").find("unknown command"), std::string::npos);
  EXPECT_EQ(run_cli("train --no-such-flag", dir / "log"), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "missing.json").string(), dir / "log"), 2);
  EXPECT_EQ(run_cli("train --set unknown_key=1", dir / "log"), 2);
  EXPECT_EQ(run_cli("", dir / "log"), 2);
}

TEST(Cli, GradcheckExitsZeroWhenAccurate) {
  const fs::path dir = scratch("cli_gradcheck");
  const fs::path cfg = write_small_config(dir);
  EXPECT_EQ(run_cli("gradcheck --config " + cfg.string() + " --output " + (dir / "out").string(), dir / "log"), 0)
      << slurp(dir / "log");
  EXPECT_TRUE(fs::exists(dir / "out" / "gradcheck.csv"));
}

TEST(Cli, SweepLambdaEmitsSixRuns) {
  const fs::path dir = scratch("cli_sweep");
  const fs::path cfg = write_small_config(dir);
  ASSERT_EQ(run_cli("sweep-lambda --config " + cfg.string() + " --output " + (dir / "out").string(), dir / "log"), 0)
      << slurp(dir / "log");
  std::istringstream summary(slurp(dir / "out" / "summary.csv"));
  std::string line;
  std::getline(summary, line);
  EXPECT_EQ(line.rfind("cell,use_pe,head_mode,lambda,", 0), 0u);
  std::vector<std::string> lambdas;
  while (std::getline(summary, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    lambdas.push_back(fields.at(3));
    EXPECT_TRUE(fs::exists(dir / "out" / fields[0] / "metrics.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / fields[0] / "resolved_config.json"));
  }
  EXPECT_EQ(lambdas, (std::vector<std::string>{"0", "0.25", "0.5", "0.75", "1", "1.25"}));
}

TEST(Cli, RerunFromResolvedConfigIsByteIdentical) {
  const fs::path dir = scratch("cli_rerun");
  const fs::path cfg = write_small_config(dir);
  ASSERT_EQ(run_cli("train --config " + cfg.string() + " --set epochs=2 --set hflip=true --output " +
                        (dir / "a").string(),
                    dir / "log"),
            0)
      << slurp(dir / "log");
  const fs::path cell = dir / "a" / "train-seed0";
  ASSERT_TRUE(fs::exists(cell / "resolved_config.json"));
  ASSERT_EQ(run_cli("train --config " + (cell / "resolved_config.json").string() + " --output " +
                        (dir / "b").string(),
                    dir / "log"),
            0)
      << slurp(dir / "log");
  EXPECT_EQ(slurp(cell / "metrics.csv"), slurp(dir / "b" / "train-seed0" / "metrics.csv"));

  ASSERT_EQ(run_cli("eval --config " + cfg.string() + " --set checkpoint=" + (cell / "checkpoint").string() +
                        " --output " + (dir / "e").string(),
                    dir / "log"),
            0)
      << slurp(dir / "log");
  EXPECT_TRUE(fs::exists(dir / "e" / "eval.csv"));
  EXPECT_EQ(run_cli("eval --config " + cfg.string() + " --set embed_dim=16 --set checkpoint=" +
                        (cell / "checkpoint").string() + " --output " + (dir / "f").string(),
                    dir / "log"),
            2);
}

#endif

}  // namespace
}  // namespace posvit
