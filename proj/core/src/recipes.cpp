// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/recipes.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "posvit/checkpoint.hpp"
#include "posvit/dataset.hpp"
#include "posvit/errors.hpp"
#include "posvit/mae.hpp"
#include "posvit/pretrainer.hpp"
#include "posvit/trainer.hpp"

namespace posvit {

namespace fs = std::filesystem;

namespace {

constexpr double kGradcheckPerturbation = 0.2;
constexpr double kGradcheckTolerance = 1e-4;

std::ofstream open_csv(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

std::string opt(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }
std::string flag(bool b) { return b ? "true" : "false"; }

struct Data {
  Dataset train;
  std::optional<Dataset> val;
};

Data load_data(const ExperimentConfig& config) {
  Data d{load_dataset(config.dataset), std::nullopt};
  if (!config.val_dataset.empty()) d.val = load_dataset(config.val_dataset);
  return d;
}

TrainConfig pretrain_config(const ExperimentConfig& config) {
  TrainConfig t = config.train;
  t.epochs = config.pretrain_epochs;
  t.warmup_epochs = config.pretrain_warmup_epochs;
  return t;
}

void log_epoch(std::ostream& log, const std::string& cell, const EpochMetrics& m) {
  log << cell << " epoch " << m.epoch << " ls " << format_number(m.ls);
  if (m.lp) log << " lp " << format_number(*m.lp);
  log << " joint " << format_number(m.joint) << " top1 " << format_number(m.top1);
  if (m.pos_top1) log << " pos_top1 " << format_number(*m.pos_top1);
  log << std::endl;
}

void log_pretrain(std::ostream& log, const std::string& cell, const PretrainMetrics& m) {
  log << cell << " epoch " << m.epoch << " recon " << format_number(m.recon);
  if (m.lp) log << " lp " << format_number(*m.lp);
  log << " joint " << format_number(m.joint);
  if (m.pos_top1) log << " pos_top1 " << format_number(*m.pos_top1);
  log << std::endl;
}

/// Trains `model` and writes metrics.csv and checkpoint/ into `dir`.
TrainResult train_into(Model& model, const ExperimentConfig& config, const Data& data,
                       const fs::path& dir, const std::string& cell, std::ostream& log) {
  SupervisedTrainer trainer(model, config.train, data.train, data.val ? &*data.val : nullptr);
  if (config.resume) {
    if (config.checkpoint.empty()) throw ConfigError("resume needs a checkpoint directory");
    ParameterList params = model.parameters();
    AdamWState state;
    const CheckpointInfo info = load_checkpoint(config.checkpoint, params, model.config, &state, config.force);
    trainer.resume(std::move(state), info.epoch);
    log << cell << " resumed at epoch " << info.epoch << std::endl;
  }
  std::ofstream csv = open_csv(dir / "metrics.csv");
  csv << metrics_header(config.train.extended_csv) << '\n' << std::flush;
  TrainResult result = trainer.run([&](const EpochMetrics& m) {
    csv << metrics_row(m, config.train.extended_csv) << '\n' << std::flush;
    log_epoch(log, cell, m);
  });
  if (result.diverged) log << cell << " diverged: " << result.error << std::endl;
  save_checkpoint(dir / "checkpoint", model.parameters(), model.config, trainer.epochs_done(),
                  &trainer.optimizer_state());
  return result;
}

PretrainResult pretrain_into(MaeModel& model, const TrainConfig& config, const Dataset& data,
                             const fs::path& dir, const std::string& cell, std::ostream& log) {
  MaeTrainer trainer(model, config, data);
  std::ofstream csv = open_csv(dir / "pretrain.csv");
  csv << pretrain_header() << '\n' << std::flush;
  PretrainResult result = trainer.run([&](const PretrainMetrics& m) {
    csv << pretrain_row(m) << '\n' << std::flush;
    log_pretrain(log, cell, m);
  });
  if (result.diverged) log << cell << " diverged: " << result.error << std::endl;
  save_checkpoint(dir / "pretrain_checkpoint", model.parameters(), model.config,
                  trainer.epochs_done(), &trainer.optimizer_state());
  return result;
}

struct Cell {
  std::string name;
  ExperimentConfig config;
};

std::string summary_header() {
  return "cell,use_pe,head_mode,lambda,crop,hflip,vflip,seed,epochs,ls,lp,joint,top1,top5,pos_top1,"
         "val_top1,val_top5,diverged";
}

std::string summary_row(const Cell& cell, const TrainResult& r) {
  const ExperimentConfig& c = cell.config;
  std::string row = cell.name + "," + flag(c.model.use_pe) + "," + std::string(to_string(c.model.head_mode)) +
                    "," + format_number(c.train.lambda) + "," + flag(c.train.augment.crop) + "," +
                    flag(c.train.augment.hflip) + "," + flag(c.train.augment.vflip) + "," +
                    std::to_string(c.train.seed) + "," + std::to_string(r.history.size());
  if (r.history.empty()) {
    row += ",,,,,,,,";
  } else {
    const EpochMetrics& m = r.history.back();
    row += "," + format_number(m.ls) + "," + opt(m.lp) + "," + format_number(m.joint) + "," +
           format_number(m.top1) + "," + format_number(m.top5) + "," + opt(m.pos_top1) + ",";
    row += m.val ? format_number(m.val->top1) + "," + format_number(m.val->top5) : std::string(",");
  }
  return row + "," + flag(r.diverged);
}

/// Runs every cell (times `repeats` seeds) and writes summary.csv.
int run_grid(std::vector<Cell> cells, const ExperimentConfig& base, std::ostream& log) {
  const Data data = load_data(base);
  const fs::path root = base.output_dir;
  write_resolved_config(base, root);
  std::ofstream summary = open_csv(root / "summary.csv");
  summary << summary_header() << '\n' << std::flush;
  int status = 0;
  for (const Cell& proto : cells) {
    for (std::size_t rep = 0; rep < base.repeats; ++rep) {
      Cell cell = proto;
      cell.config.train.seed = base.train.seed + rep;
      cell.name += "-seed" + std::to_string(cell.config.train.seed);
      cell.config.recipe = "train";
      cell.config.output_dir = (root / cell.name).string();
      cell.config.resume = false;
      cell.config.validate();
      write_resolved_config(cell.config, cell.config.output_dir);
      Model model = init_model(cell.config.model, cell.config.train.seed);
      const TrainResult r = train_into(model, cell.config, data, cell.config.output_dir, cell.name, log);
      summary << summary_row(cell, r) << '\n' << std::flush;
      if (r.diverged) status = 1;
    }
  }
  return status;
}

int cmd_train(const ExperimentConfig& config, std::ostream& log) {
  return run_grid({Cell{"train", config}}, config, log);
}

int cmd_ablate_pe(const ExperimentConfig& config, std::ostream& log) {
  std::vector<Cell> cells;
  for (bool pe : {false, true}) {
    for (HeadMode h : {HeadMode::none, HeadMode::apl, HeadMode::rpl}) {
      Cell c{std::string(pe ? "pe" : "nope") + "-" + std::string(to_string(h)), config};
      c.config.model.use_pe = pe;
      c.config.model.head_mode = h;
      cells.push_back(std::move(c));
    }
  }
  return run_grid(std::move(cells), config, log);
}

int cmd_sweep_lambda(const ExperimentConfig& config, std::ostream& log) {
  if (config.model.head_mode == HeadMode::none) {
    throw ConfigError("sweep-lambda needs a positional head (head_mode apl, rpl or both)");
  }
  std::vector<Cell> cells;
  for (double l : lambda_sweep_values()) {
    Cell c{"lambda" + format_number(l), config};
    c.config.train.lambda = l;
    cells.push_back(std::move(c));
  }
  return run_grid(std::move(cells), config, log);
}

int cmd_ablate_augment(const ExperimentConfig& config, std::ostream& log) {
  struct Row {
    const char* name;
    Augmentations aug;
    HeadMode head;
  };
  const Row rows[] = {
      {"crop-rhf-baseline", {true, true, false}, HeadMode::none},
      {"crop-apl", {true, false, false}, HeadMode::apl},
      {"crop-rpl", {true, false, false}, HeadMode::rpl},
      {"crop-rhf-apl", {true, true, false}, HeadMode::apl},
      {"crop-rhf-rpl", {true, true, false}, HeadMode::rpl},
      {"crop-rhf-rvf-apl", {true, true, true}, HeadMode::apl},
      {"crop-rhf-rvf-rpl", {true, true, true}, HeadMode::rpl},
  };
  std::vector<Cell> cells;
  for (const Row& r : rows) {
    Cell c{r.name, config};
    c.config.train.augment = r.aug;
    c.config.model.head_mode = r.head;
    cells.push_back(std::move(c));
  }
  return run_grid(std::move(cells), config, log);
}

int cmd_eval(const ExperimentConfig& config, std::ostream& log) {
  if (config.checkpoint.empty()) throw ConfigError("eval needs a checkpoint directory (--set checkpoint=...)");
  const Data data = load_data(config);
  Model model = init_model(config.model, config.train.seed);
  ParameterList params = model.parameters();
  const CheckpointInfo info = load_checkpoint(config.checkpoint, params, config.model, nullptr, config.force);
  const Dataset& target = data.val ? *data.val : data.train;
  const EvalMetrics m = evaluate(model, target, config.train, info.epoch);
  write_resolved_config(config, config.output_dir);
  std::ofstream csv = open_csv(fs::path(config.output_dir) / "eval.csv");
  const std::string row = format_number(m.ls) + "," + opt(m.lp) + "," + format_number(m.joint) + "," +
                          format_number(m.top1) + "," + format_number(m.top5) + "," + opt(m.pos_top1);
  csv << "ls,lp,joint,top1,top5,pos_top1\n" << row << '\n';
  log << "eval ls " << format_number(m.ls) << " joint " << format_number(m.joint) << " top1 "
      << format_number(m.top1) << " top5 " << format_number(m.top5);
  if (m.pos_top1) log << " pos_top1 " << format_number(*m.pos_top1);
  log << std::endl;
  return 0;
}

int cmd_gradcheck(const ExperimentConfig& config, std::ostream& log) {
  const GradCheckReport r = gradcheck_model(config.model, config.train.lambda, config.gradcheck_samples,
                                            config.gradcheck_h, config.train.seed);
  write_resolved_config(config, config.output_dir);
  std::ofstream csv = open_csv(fs::path(config.output_dir) / "gradcheck.csv");
  csv << "coordinates,h,max_rel_error,worst_param,worst_index,worst_analytic,worst_numeric\n"
      << r.coordinates << "," << format_number(config.gradcheck_h) << "," << format_number(r.max_rel_error)
      << "," << r.worst_param << "," << r.worst_index << "," << format_number(r.worst_analytic) << ","
      << format_number(r.worst_numeric) << '\n';
  log << "max relative error " << format_number(r.max_rel_error) << " over " << r.coordinates
      << " coordinates" << std::endl;
  return r.max_rel_error < kGradcheckTolerance ? 0 : 1;
}

int cmd_pretrain_mae(const ExperimentConfig& config, const RecipeOptions& options, std::ostream& log) {
  std::vector<double> ratios = options.mask_ratios;
  if (ratios.empty()) ratios.push_back(config.train.mask_ratio);
  const Dataset data = load_dataset(config.dataset);
  const fs::path root = config.output_dir;
  write_resolved_config(config, root);
  std::ofstream summary = open_csv(root / "summary.csv");
  summary << "cell,mask_ratio,head_mode,lambda,seed,epochs,recon,lp,joint,pos_top1,diverged\n" << std::flush;
  int status = 0;
  std::map<double, std::pair<double, std::size_t>> mean_lp;
  for (double ratio : ratios) {
    for (std::size_t rep = 0; rep < config.repeats; ++rep) {
      ExperimentConfig cell = config;
      cell.train.mask_ratio = ratio;
      cell.train.seed = config.train.seed + rep;
      cell.recipe = "pretrain-mae";
      const std::string name = "mask" + format_number(ratio) + "-seed" + std::to_string(cell.train.seed);
      cell.output_dir = (root / name).string();
      cell.validate();
      write_resolved_config(cell, cell.output_dir);
      MaeModel mae = init_mae(cell.model, cell.train.seed);
      const PretrainResult r = pretrain_into(mae, pretrain_config(cell), data, cell.output_dir, name, log);
      std::string row = name + "," + format_number(ratio) + "," + std::string(to_string(cell.model.head_mode)) +
                        "," + format_number(cell.train.lambda) + "," + std::to_string(cell.train.seed) + "," +
                        std::to_string(r.history.size());
      if (r.history.empty()) {
        row += ",,,,";
      } else {
        const PretrainMetrics& m = r.history.back();
        row += "," + format_number(m.recon) + "," + opt(m.lp) + "," + format_number(m.joint) + "," + opt(m.pos_top1);
        if (m.lp) {
          mean_lp[ratio].first += *m.lp;
          mean_lp[ratio].second += 1;
        }
      }
      summary << row << "," << flag(r.diverged) << '\n' << std::flush;
      if (r.diverged) status = 1;
    }
  }
  for (const auto& [ratio, acc] : mean_lp) {
    log << "mask ratio " << format_number(ratio) << " mean final position loss "
        << format_number(acc.first / static_cast<double>(acc.second)) << std::endl;
  }
  return status;
}

int cmd_finetune(const ExperimentConfig& config, std::ostream& log) {
  const Data data = load_data(config);
  const fs::path root = config.output_dir;
  write_resolved_config(config, root);
  MaeModel mae = init_mae(config.model, config.train.seed);
  if (!config.pretrained.empty()) {
    ParameterList params = mae.parameters();
    load_checkpoint(config.pretrained, params, mae.config, nullptr, config.force);
    log << "loaded pretrained weights from " << config.pretrained << std::endl;
  } else {
    const PretrainResult pre = pretrain_into(mae, pretrain_config(config), data.train, root, "pretrain", log);
    if (pre.diverged) return 1;
  }
  Model model = finetune_model(mae);
  ExperimentConfig ft = config;
  ft.model = model.config;
  const TrainResult r = train_into(model, ft, data, root, "finetune", log);
  std::ofstream summary = open_csv(root / "summary.csv");
  summary << summary_header() << '\n' << summary_row(Cell{"finetune", ft}, r) << '\n';
  return r.diverged ? 1 : 0;
}

std::vector<double> random_pixels(std::size_t count, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "gradcheck.data");
  std::vector<double> px(count);
  for (double& v : px) v = rng.uniform();
  return px;
}

void perturb(ParameterList& params, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "gradcheck.perturb");
  for (NamedParameter& p : params) {
    for (double& v : p.tensor.mutable_data()) v += kGradcheckPerturbation * rng.normal();
  }
}

std::vector<Tensor> tensors_of(const ParameterList& params) {
  std::vector<Tensor> out;
  for (const NamedParameter& p : params) out.push_back(p.tensor);
  return out;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"train",        "eval",         "gradcheck",
                                                 "finetune",     "pretrain-mae", "ablate-pe",
                                                 "sweep-lambda", "ablate-augment"};
  return names;
}

const std::vector<double>& lambda_sweep_values() {
  static const std::vector<double> values = {0.0, 0.25, 0.5, 0.75, 1.0, 1.25};
  return values;
}

int run_command(const std::string& command, const ExperimentConfig& config, const RecipeOptions& options,
                std::ostream& log) {
  config.validate();
  if (command == "train") return cmd_train(config, log);
  if (command == "eval") return cmd_eval(config, log);
  if (command == "gradcheck") return cmd_gradcheck(config, log);
  if (command == "finetune") return cmd_finetune(config, log);
  if (command == "pretrain-mae") return cmd_pretrain_mae(config, options, log);
  if (command == "ablate-pe") return cmd_ablate_pe(config, log);
  if (command == "sweep-lambda") return cmd_sweep_lambda(config, log);
  if (command == "ablate-augment") return cmd_ablate_augment(config, log);
  throw ConfigError("unknown command '" + command + "'");
}

GradCheckReport gradcheck_model(const ModelConfig& config, double lambda, std::size_t samples, double h,
                                std::uint64_t seed) {
  Model model = init_model(config, seed);
  ParameterList params = model.parameters();
  perturb(params, seed);
  const std::size_t batch = 2;
  const auto px = random_pixels(batch * config.image_height * config.image_width * config.channels, seed);
  const Tensor patches = patchify_batch(px, batch, config);
  const std::vector<std::size_t> labels = {0, 1};
  const ForwardOptions options{lambda, 0, nullptr};
  auto loss = [&] { return model_forward(model, patches, batch, labels, options).joint; };
  std::vector<Tensor> tensors = tensors_of(params);
  Rng sampler = Rng::stream(seed, "gradcheck.sample");
  return grad_check(loss, tensors, h, samples, sampler);
}

GradCheckReport gradcheck_mae(const ModelConfig& config, double lambda, double mask_ratio, std::size_t samples,
                              double h, std::uint64_t seed) {
  MaeModel model = init_mae(config, seed);
  ParameterList params = model.parameters();
  perturb(params, seed);
  const std::size_t batch = 2;
  const auto px = random_pixels(batch * config.image_height * config.image_width * config.channels, seed);
  const Tensor patches = patchify_batch(px, batch, config);
  Rng mask_rng = Rng::stream(seed, "gradcheck.mask");
  std::vector<MaskPlan> plans;
  for (std::size_t b = 0; b < batch; ++b) {
    plans.push_back(sample_mask(config.num_patches(), mask_ratio, mask_rng.next_u64()));
  }
  MaeOptions options;
  options.lambda = lambda;
  auto loss = [&] { return mae_forward(patches, plans, model, options).total; };
  std::vector<Tensor> tensors = tensors_of(params);
  Rng sampler = Rng::stream(seed, "gradcheck.sample");
  return grad_check(loss, tensors, h, samples, sampler);
}

}  // namespace posvit
