// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "posvit/augment.hpp"
#include "posvit/checkpoint.hpp"
#include "posvit/dataset.hpp"
#include "posvit/experiment.hpp"
#include "posvit/mae.hpp"
#include "posvit/model.hpp"
#include "posvit/ops.hpp"
#include "posvit/pretrainer.hpp"
#include "posvit/recipes.hpp"
#include "posvit/trainer.hpp"

namespace {

using namespace posvit;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<double> uniform_pixels(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(count);
  for (double& x : v) x = rng.uniform();
  return v;
}

/// 8x8 grayscale images cut into 4x4 patches.
ModelConfig grid2_config(HeadMode head) {
  ModelConfig c;
  c.image_height = c.image_width = 8;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.pos_dim = 8;
  c.head_mode = head;
  return c;
}

Outcome gradient_fidelity() {
  const Stopwatch clock;
  const std::size_t samples = 1000;
  const double h = 1e-5;
  const GradCheckReport apl = gradcheck_model(grid2_config(HeadMode::apl), 0.5, samples, h, 0);
  const GradCheckReport rpl = gradcheck_model(grid2_config(HeadMode::rpl), 0.5, samples, h, 0);
  const GradCheckReport mae = gradcheck_mae(grid2_config(HeadMode::apl), 0.5, 0.5, samples, h, 0);
  const double worst = std::max({apl.max_rel_error, rpl.max_rel_error, mae.max_rel_error});
  const std::size_t fewest = std::min({apl.coordinates, rpl.coordinates, mae.coordinates});
  const double t = clock.seconds();
  return {worst < 1e-4 && fewest >= 1000 && t < 300,
          "apl " + fmt(apl.max_rel_error) + ", rpl " + fmt(rpl.max_rel_error) + ", mae " +
              fmt(mae.max_rel_error) + " over >= " + std::to_string(fewest) + " coordinates, " + fmt(t) + " s"};
}

Outcome uniform_losses() {
  struct Geometry {
    const char* name;
    std::size_t side, patch;
  };
  double worst = 0.0;
  std::string detail;
  for (const Geometry& g : {Geometry{"32/4", 32, 4}, Geometry{"224/16", 224, 16}}) {
    ModelConfig cfg;
    cfg.image_height = cfg.image_width = g.side;
    cfg.patch = g.patch;
    cfg.embed_dim = 8;
    cfg.depth = 1;
    cfg.heads = 1;
    cfg.pos_dim = 8;
    cfg.head_mode = HeadMode::both;
    const Model m = init_model(cfg, 1);
    const std::size_t n = cfg.num_patches();
    const std::size_t rows = cfg.grid_rows(), cols = cfg.grid_cols();
    const Tensor patches = patchify_batch(uniform_pixels(g.side * g.side, 2), 1, cfg);
    const std::vector<std::size_t> label = {3};
    const ForwardResult r = model_forward(m, patches, 1, label, {});
    const Tensor z = encoder_forward(embed(patches, 1, m.encoder, cfg).tokens, 1, m.encoder, cfg);
    const PatchLayout layout = PatchLayout::full(1, n);
    const double ls = r.classification.item();
    const double lp = absolute_position_loss(z, layout, *m.absolute_head).loss.item();
    const double lr =
        relative_position_loss(z, layout, *m.relative_head, RelativeIndexTable(rows, cols)).loss.item();
    const double rel_classes = static_cast<double>((2 * rows - 1) * (2 * cols - 1));
    worst = std::max({worst, std::abs(ls - std::log(10.0)), std::abs(lp - std::log(static_cast<double>(n))),
                      std::abs(lr - std::log(rel_classes))});
    detail += std::string(detail.empty() ? "" : "; ") + g.name + ": Ls " + fmt(ls) + ", Lp " + fmt(lp) +
              ", Lp_r " + fmt(lr);
  }
  return {worst < 1e-9, detail + "; max deviation " + fmt(worst)};
}

Outcome relative_index_oracle() {
  const Stopwatch clock;
  std::size_t checked = 0, mismatches = 0;
  for (std::size_t g : {1u, 2u, 3u, 4u, 8u, 14u}) {
    const RelativeIndexTable table(g, g);
    const long s = static_cast<long>(g);
    std::size_t next = 0;
    for (long dr = -(s - 1); dr <= s - 1; ++dr) {
      for (long dc = -(s - 1); dc <= s - 1; ++dc) {
        if (relative_index(dr, dc, table) != next) ++mismatches;
        ++next;
        ++checked;
      }
    }
    if (next != table.num_classes()) ++mismatches;
  }
  const double t = clock.seconds();
  return {mismatches == 0 && t < 1.0,
          std::to_string(checked) + " offsets, " + std::to_string(mismatches) + " mismatches, " + fmt(t) + " s"};
}

double equivariance_gap(const ModelConfig& cfg, std::uint64_t seed) {
  Rng init(seed);
  EncoderParams p = init_encoder(cfg, init);
  if (p.has_pe()) {
    for (double& v : p.pos_embed.mutable_data()) v = init.truncated_normal(0.02);
  }
  const std::size_t n = cfg.num_patches(), d = cfg.embed_dim;
  const Tensor patches = patchify_batch(uniform_pixels(cfg.image_height * cfg.image_width, seed + 1), 1, cfg);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed + 2);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  const Tensor z = encoder_forward(embed(patches, 1, p, cfg).tokens, 1, p, cfg);
  const Tensor zp = encoder_forward(embed(gather_rows(patches, perm), 1, p, cfg).tokens, 1, p, cfg);
  double gap = 0.0;
  for (std::size_t c = 0; c < d; ++c) gap = std::max(gap, std::abs(z.at(0, c) - zp.at(0, c)));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) gap = std::max(gap, std::abs(zp.at(1 + i, c) - z.at(1 + perm[i], c)));
  }
  return gap;
}

Outcome permutation_equivariance() {
  const Stopwatch clock;
  ModelConfig cfg;
  cfg.head_mode = HeadMode::none;
  double without = 0.0, with = 1e300;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) without = std::max(without, equivariance_gap(cfg, seed));
  cfg.use_pe = true;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) with = std::min(with, equivariance_gap(cfg, seed));
  const double t = clock.seconds();
  return {without < 1e-9 && with > 1e-3 && t < 10.0,
          "no PE max diff " + fmt(without) + ", PE min diff " + fmt(with) + ", " + fmt(t) + " s"};
}

Outcome position_learnability() {
  const Stopwatch clock;
  ModelConfig cfg;  // 32x32, N=64, D=64, depth 4, APL, no PE
  TrainConfig train;  // 30 epochs, batch 32, lambda 0.5
  const Dataset data = make_synthetic(1024, 0);
  const Dataset held_out = make_synthetic(256, 1);
  Model model = init_model(cfg, train.seed);
  const TrainResult r = train_supervised(model, data, train);
  if (r.diverged || r.history.size() < 5) return {false, "training stopped early: " + r.error};
  bool monotone = true;
  for (std::size_t e = 1; e < 5; ++e) monotone = monotone && r.history[e].joint <= r.history[e - 1].joint * 1.02;
  const double final_pos = r.history.back().pos_top1.value_or(0.0);
  const EvalMetrics val = evaluate(model, held_out, train);
  const double t = clock.seconds();
  std::string joints;
  for (std::size_t e = 0; e < 5; ++e) joints += (e ? " " : "") + fmt(r.history[e].joint);
  return {final_pos >= 0.90 && monotone && t < 900,
          "pos top-1 " + fmt(final_pos) + " after " + std::to_string(r.history.size()) +
              " epochs (held-out " + fmt(val.pos_top1.value_or(0.0)) + ", chance " + fmt(1.0 / 64) +
              "), first joint losses " + joints + ", " + fmt(t) + " s"};
}

ModelConfig small_desk(HeadMode head) {
  ModelConfig c;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.pos_dim = 16;
  c.head_mode = head;
  return c;
}

TrainConfig short_train(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.warmup_epochs = 1;
  t.batch_size = 16;
  return t;
}

Outcome joint_bookkeeping() {
  const Dataset data = make_synthetic(128, 3);
  double worst = 0.0;
  std::size_t rows = 0;
  for (HeadMode head : {HeadMode::apl, HeadMode::rpl}) {
    for (double lambda : {0.5, 1.25}) {
      TrainConfig t = short_train(3);
      t.lambda = lambda;
      t.pair_budget = 256;
      Model m = init_model(small_desk(head), 1);
      const TrainResult r = train_supervised(m, data, t);
      if (r.diverged) return {false, "diverged: " + r.error};
      for (const EpochMetrics& e : r.history) {
        worst = std::max(worst, std::abs(e.joint - (e.ls + lambda * e.lp.value_or(1e300))));
        ++rows;
      }
    }
  }
  TrainConfig t = short_train(3);
  t.lambda = 0.0;
  Model with_head = init_model(small_desk(HeadMode::apl), 2);
  Model without = init_model(small_desk(HeadMode::none), 2);
  const TrainResult a = train_supervised(with_head, data, t);
  const TrainResult b = train_supervised(without, data, t);
  bool identical = a.history.size() == b.history.size() && !a.history.empty();
  for (std::size_t e = 0; identical && e < a.history.size(); ++e) identical = a.history[e].ls == b.history[e].ls;
  return {worst <= 1e-12 && identical,
          "max |joint - (Ls + lambda Lp)| " + fmt(worst) + " over " + std::to_string(rows) +
              " epochs; lambda=0 Ls trajectory " + (identical ? "bit-identical" : "differs") + " to headless run"};
}

Outcome mae_coupling() {
  std::vector<std::string> failures;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const MaskPlan p = sample_mask(64, 0.75, seed);
    if (p.masked.size() != 48 || p.visible.size() != 16) failures.push_back("mask split");
  }

  // Reconstruction gradient on visible target pixels.
  ModelConfig cfg = small_desk(HeadMode::apl);
  MaeModel mae = init_mae(cfg, 4);
  Rng jitter(5);
  for (auto& p : mae.parameters()) {
    for (double& v : p.tensor.mutable_data()) v += 0.05 * jitter.normal();
  }
  const Tensor patches = patchify_batch(uniform_pixels(2 * 1024, 6), 2, cfg);
  const Tensor targets = Tensor::from_data(patches.shape(), {patches.data().begin(), patches.data().end()}, true);
  const std::vector<MaskPlan> plans = {sample_mask(64, 0.75, 7), sample_mask(64, 0.75, 8)};
  backward(mae_forward(patches, targets, plans, mae, {}).recon_loss);
  double visible_mass = 0.0, masked_mass = 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 64; ++i) {
      const bool vis = std::binary_search(plans[b].visible.begin(), plans[b].visible.end(), i);
      for (std::size_t c = 0; c < cfg.patch_dim(); ++c) {
        const double g = std::abs(targets.grad()[(b * 64 + i) * cfg.patch_dim() + c]);
        (vis ? visible_mass : masked_mass) += g;
      }
    }
  }
  if (visible_mass != 0.0 || masked_mass == 0.0) failures.push_back("visible target gradient");

  // Every visible subset of a 4x4 grid keeps raster targets.
  std::size_t subsets = 0;
  for (std::uint32_t bits = 1; bits < (1u << 16); ++bits) {
    MaskPlan plan;
    plan.num_patches = 16;
    for (std::size_t i = 0; i < 16; ++i) ((bits >> i) & 1u ? plan.visible : plan.masked).push_back(i);
    const std::vector<MaskPlan> one = {plan};
    const PatchLayout layout = visible_layout(one);
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < 16; ++i) {
      if ((bits >> i) & 1u) expect.push_back(i);
    }
    if (layout.positions != expect) failures.push_back("raster targets");
    ++subsets;
  }

  // Forward-level check on a 4x4 grid: the head is scored against raster indices.
  ModelConfig g4 = cfg;
  g4.image_height = g4.image_width = 16;
  MaeModel small = init_mae(g4, 9);
  for (auto& p : small.parameters()) {
    for (double& v : p.tensor.mutable_data()) v += 0.05 * jitter.normal();
  }
  double forward_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor px = patchify_batch(uniform_pixels(256, 100 + seed), 1, g4);
    const std::vector<MaskPlan> pl = {sample_mask(16, 0.5, seed)};
    const MaeOutput out = mae_forward(px, pl, small, {});
    const Tensor z =
        encoder_forward(embed_tokens(gather_rows(px, pl[0].visible), 1, small.encoder), 1, small.encoder, g4);
    std::vector<std::size_t> rows(pl[0].visible.size());
    std::iota(rows.begin(), rows.end(), std::size_t{1});
    const Tensor logits = position_logits(*small.absolute_head, gather_rows(z, rows));
    const Tensor expect = cross_entropy(logits, pl[0].visible);
    forward_gap = std::max(forward_gap, std::abs(out.position_loss.item() - expect.item()));
  }
  if (forward_gap > 1e-12) failures.push_back("forward position targets");

  // Zero-PE fine-tune init against the pretrained PE-free forward.
  const Model fine = finetune_model(mae);
  const Tensor za = encoder_forward(embed(patches, 2, mae.encoder, mae.config).tokens, 2, mae.encoder, mae.config);
  const Tensor zb = encoder_forward(embed(patches, 2, fine.encoder, fine.config).tokens, 2, fine.encoder, fine.config);
  const Tensor la = classify(za, 2, mae.encoder), lb = classify(zb, 2, fine.encoder);
  const bool exact = std::equal(za.data().begin(), za.data().end(), zb.data().begin()) &&
                     std::equal(la.data().begin(), la.data().end(), lb.data().begin());
  if (!exact || !fine.encoder.has_pe()) failures.push_back("fine-tune forward");

  std::string detail = "48/16 split on 100 masks; visible target grad " + fmt(visible_mass) + ", masked " +
                       fmt(masked_mass) + "; " + std::to_string(subsets) + " 4x4 visible subsets; forward gap " +
                       fmt(forward_gap) + "; fine-tune forward " + (exact ? "bit-exact" : "differs");
  if (!failures.empty()) detail += "; failed: " + failures.front();
  return {failures.empty(), detail};
}

Outcome mask_ratio_trend() {
  const Stopwatch clock;
  const std::vector<double> ratios = {0.25, 0.5, 0.75};
  const Dataset data = make_synthetic(256, 0);
  std::vector<double> mean_lp(ratios.size(), 0.0);
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      TrainConfig t = short_train(4);
      t.seed = seed;
      t.mask_ratio = ratios[k];
      MaeModel m = init_mae(small_desk(HeadMode::apl), seed);
      const PretrainResult r = pretrain_mae(m, data, t);
      if (r.diverged) return {false, "diverged: " + r.error};
      mean_lp[k] += r.history.back().lp.value_or(0.0) / 3.0;
    }
  }
  std::size_t violations = 0;
  bool small = true;
  for (std::size_t k = 1; k < ratios.size(); ++k) {
    if (mean_lp[k] < mean_lp[k - 1]) {
      ++violations;
      small = small && (mean_lp[k - 1] - mean_lp[k]) <= 0.05 * mean_lp[k - 1];
    }
  }
  const double t = clock.seconds();
  return {violations <= 1 && small && t < 1800,
          "mean final Lp at 0.25/0.5/0.75: " + fmt(mean_lp[0]) + " " + fmt(mean_lp[1]) + " " + fmt(mean_lp[2]) +
              ", " + std::to_string(violations) + " violations, " + fmt(t) + " s"};
}

Outcome augmentation_semantics() {
  ModelConfig cfg;
  cfg.channels = 3;
  const ImageShape shape{cfg.image_height, cfg.image_width, cfg.channels};
  const std::size_t g = cfg.grid_cols(), m = cfg.patch, c = cfg.channels;
  std::size_t mismatches = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto img = uniform_pixels(shape.numel(), seed);
    const Tensor plain = patchify_batch(img, 1, cfg);
    const Tensor flipped = patchify_batch(hflip_image(img, shape), 1, cfg);
    for (std::size_t pr = 0; pr < cfg.grid_rows(); ++pr) {
      for (std::size_t pc = 0; pc < g; ++pc) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t k = 0; k < c; ++k) {
              const double got = flipped.at(pr * g + pc, (i * m + j) * c + k);
              const double want = plain.at(pr * g + (g - 1 - pc), (i * m + (m - 1 - j)) * c + k);
              if (got != want) ++mismatches;
            }
          }
        }
      }
    }
  }
  std::vector<std::size_t> raster(cfg.num_patches());
  std::iota(raster.begin(), raster.end(), std::size_t{0});
  bool targets_fixed = true;
  Rng rng(11);
  Rng init(12);
  const EncoderParams enc = init_encoder(cfg, init);
  for (int trial = 0; trial < 20; ++trial) {
    const auto img = augment(uniform_pixels(shape.numel(), 50 + trial), shape, Augmentations{true, true, true}, rng);
    const PatchSequence seq = embed(patchify_batch(img, 1, cfg), 1, enc, cfg);
    targets_fixed = targets_fixed && seq.abs_labels == raster && absolute_targets(g, g) == raster;
  }
  return {mismatches == 0 && targets_fixed,
          std::to_string(mismatches) + " mismatched values between flip-then-patchify and mirrored grid; targets " +
              (targets_fixed ? "stay 0..N-1" : "changed") + " under crop+flips"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism_and_persistence() {
  const fs::path root = fs::temp_directory_path() / "posvit_acceptance_c10";
  fs::remove_all(root);
  ExperimentConfig cfg;
  cfg.model = small_desk(HeadMode::rpl);
  cfg.train = short_train(2);
  cfg.train.augment = {true, true, true};
  cfg.train.pair_budget = 128;
  cfg.dataset = "synthetic:4:64";
  std::ostringstream log;
  cfg.output_dir = (root / "a").string();
  run_command("train", cfg, {}, log);
  const ExperimentConfig again = load_experiment(root / "a" / "train-seed0" / "resolved_config.json",
                                                 {"output_dir=" + (root / "b").string()});
  run_command("train", again, {}, log);
  const std::string csv_a = slurp(root / "a" / "train-seed0" / "metrics.csv");
  const std::string csv_b = slurp(root / "b" / "train-seed0" / "metrics.csv");
  const bool csv_same = !csv_a.empty() && csv_a == csv_b;

  // Round trip.
  const Dataset data = load_dataset(cfg.dataset);
  Model trained = init_model(cfg.model, 0);
  SupervisedTrainer first(trained, cfg.train, data);
  first.train_epoch();
  const ParameterList tp = trained.parameters();
  save_checkpoint(root / "ckpt", tp, cfg.model, 1, &first.optimizer_state());
  Model restored = init_model(cfg.model, 99);
  ParameterList rp = restored.parameters();
  AdamWState state;
  load_checkpoint(root / "ckpt", rp, cfg.model, &state);
  bool round_trip = true;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    round_trip = round_trip && std::equal(tp[i].tensor.data().begin(), tp[i].tensor.data().end(),
                                          rp[i].tensor.data().begin());
  }

  // Resume against unbroken training.
  Model unbroken = init_model(cfg.model, 0);
  SupervisedTrainer straight(unbroken, cfg.train, data);
  straight.train_epoch();
  const EpochMetrics straight_last = straight.train_epoch();
  SupervisedTrainer resumed(restored, cfg.train, data);
  resumed.resume(state, 1);
  const EpochMetrics resumed_last = resumed.train_epoch();
  double gap = std::abs(straight_last.joint - resumed_last.joint);
  const ParameterList up = unbroken.parameters(), rp2 = restored.parameters();
  for (std::size_t i = 0; i < up.size(); ++i) {
    for (std::size_t k = 0; k < up[i].tensor.numel(); ++k) {
      gap = std::max(gap, std::abs(up[i].tensor.data()[k] - rp2[i].tensor.data()[k]));
    }
  }
  fs::remove_all(root);
  return {csv_same && round_trip && gap <= 1e-12,
          std::string("metrics CSVs ") + (csv_same ? "byte-identical" : "differ") + "; checkpoint round trip " +
              (round_trip ? "bit-exact" : "differs") + "; resumed vs unbroken max diff " + fmt(gap)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"posvit acceptance suite"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "gradient fidelity", gradient_fidelity},
      {2, "uniform-loss exactness", uniform_losses},
      {3, "relative-index oracle", relative_index_oracle},
      {4, "permutation equivariance", permutation_equivariance},
      {5, "position learnability", position_learnability},
      {6, "joint-supervision bookkeeping", joint_bookkeeping},
      {7, "MAE coupling", mae_coupling},
      {8, "mask-ratio trend", mask_ratio_trend},
      {9, "augmentation semantics", augmentation_semantics},
      {10, "determinism and persistence", determinism_and_persistence},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    if (only != 0 && c.id != only) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d %s: %s (%s)\n", c.id, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
