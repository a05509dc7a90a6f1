// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/experiment.hpp"

#include <fstream>
#include <sstream>

#include "config_json.hpp"
#include "posvit/errors.hpp"

namespace posvit {

namespace detail {

JsonReader::JsonReader(const nlohmann::json& object) : object_(object) {
  if (!object_.is_object()) throw ConfigError("configuration must be a JSON object");
}

const nlohmann::json* JsonReader::find(const std::string& key) {
  const auto it = object_.find(key);
  if (it == object_.end()) return nullptr;
  used_.insert(key);
  return &*it;
}

void JsonReader::read(const std::string& key, std::size_t& out) {
  if (const auto* v = find(key)) {
    if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0)) {
      throw ConfigError("config key '" + key + "' must be a non-negative integer, got " + v->dump());
    }
    out = v->get<std::size_t>();
  }
}

void JsonReader::read(const std::string& key, double& out) {
  if (const auto* v = find(key)) {
    if (!v->is_number()) throw ConfigError("config key '" + key + "' must be a number, got " + v->dump());
    out = v->get<double>();
  }
}

void JsonReader::read(const std::string& key, bool& out) {
  if (const auto* v = find(key)) {
    if (!v->is_boolean()) throw ConfigError("config key '" + key + "' must be true or false, got " + v->dump());
    out = v->get<bool>();
  }
}

void JsonReader::read(const std::string& key, std::string& out) {
  if (const auto* v = find(key)) {
    if (!v->is_string()) throw ConfigError("config key '" + key + "' must be a string, got " + v->dump());
    out = v->get<std::string>();
  }
}

void JsonReader::read(const std::string& key, HeadMode& out) {
  std::string text(to_string(out));
  read(key, text);
  out = parse_head_mode(text);
}

void JsonReader::finish() const {
  for (const auto& item : object_.items()) {
    if (!used_.contains(item.key())) throw ConfigError("unknown config key '" + item.key() + "'");
  }
}

void model_to_json(const ModelConfig& c, nlohmann::json& out) {
  out["image_height"] = c.image_height;
  out["image_width"] = c.image_width;
  out["channels"] = c.channels;
  out["patch"] = c.patch;
  out["embed_dim"] = c.embed_dim;
  out["depth"] = c.depth;
  out["heads"] = c.heads;
  out["mlp_ratio"] = c.mlp_ratio;
  out["pos_dim"] = c.pos_dim;
  out["num_classes"] = c.num_classes;
  out["use_pe"] = c.use_pe;
  out["head_mode"] = std::string(to_string(c.head_mode));
  out["decoder_depth"] = c.decoder_depth;
  out["decoder_dim"] = c.decoder_dim;
  out["decoder_heads"] = c.decoder_heads;
  out["ln_eps"] = c.ln_eps;
}

void read_model(JsonReader& r, ModelConfig& c) {
  r.read("image_height", c.image_height);
  r.read("image_width", c.image_width);
  r.read("channels", c.channels);
  r.read("patch", c.patch);
  r.read("embed_dim", c.embed_dim);
  r.read("depth", c.depth);
  r.read("heads", c.heads);
  r.read("mlp_ratio", c.mlp_ratio);
  r.read("pos_dim", c.pos_dim);
  r.read("num_classes", c.num_classes);
  r.read("use_pe", c.use_pe);
  r.read("head_mode", c.head_mode);
  r.read("decoder_depth", c.decoder_depth);
  r.read("decoder_dim", c.decoder_dim);
  r.read("decoder_heads", c.decoder_heads);
  r.read("ln_eps", c.ln_eps);
}

}  // namespace detail

namespace {

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  detail::model_to_json(c.model, j);
  const TrainConfig& t = c.train;
  j["epochs"] = t.epochs;
  j["warmup_epochs"] = t.warmup_epochs;
  j["base_lr"] = t.base_lr;
  j["weight_decay"] = t.weight_decay;
  j["batch_size"] = t.batch_size;
  j["seed"] = t.seed;
  j["lambda"] = t.lambda;
  j["crop"] = t.augment.crop;
  j["hflip"] = t.augment.hflip;
  j["vflip"] = t.augment.vflip;
  j["mask_ratio"] = t.mask_ratio;
  j["grad_clip"] = t.grad_clip;
  j["pair_budget"] = t.pair_budget;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["adam_eps"] = t.adam_eps;
  j["norm_pix_loss"] = t.norm_pix_loss;
  j["log_wall_time"] = t.log_wall_time;
  j["extended_csv"] = t.extended_csv;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["pretrain_warmup_epochs"] = c.pretrain_warmup_epochs;
  j["dataset"] = c.dataset;
  j["val_dataset"] = c.val_dataset;
  j["output_dir"] = c.output_dir;
  j["recipe"] = c.recipe;
  j["checkpoint"] = c.checkpoint;
  j["resume"] = c.resume;
  j["force"] = c.force;
  j["pretrained"] = c.pretrained;
  j["repeats"] = c.repeats;
  j["gradcheck_samples"] = c.gradcheck_samples;
  j["gradcheck_h"] = c.gradcheck_h;
  return j;
}

ExperimentConfig from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::JsonReader r(j);
  detail::read_model(r, c.model);
  TrainConfig& t = c.train;
  r.read("epochs", t.epochs);
  r.read("warmup_epochs", t.warmup_epochs);
  r.read("base_lr", t.base_lr);
  r.read("weight_decay", t.weight_decay);
  r.read("batch_size", t.batch_size);
  r.read("seed", t.seed);
  r.read("lambda", t.lambda);
  r.read("crop", t.augment.crop);
  r.read("hflip", t.augment.hflip);
  r.read("vflip", t.augment.vflip);
  r.read("mask_ratio", t.mask_ratio);
  r.read("grad_clip", t.grad_clip);
  r.read("pair_budget", t.pair_budget);
  r.read("beta1", t.beta1);
  r.read("beta2", t.beta2);
  r.read("adam_eps", t.adam_eps);
  r.read("norm_pix_loss", t.norm_pix_loss);
  r.read("log_wall_time", t.log_wall_time);
  r.read("extended_csv", t.extended_csv);
  r.read("pretrain_epochs", c.pretrain_epochs);
  r.read("pretrain_warmup_epochs", c.pretrain_warmup_epochs);
  r.read("dataset", c.dataset);
  r.read("val_dataset", c.val_dataset);
  r.read("output_dir", c.output_dir);
  r.read("recipe", c.recipe);
  r.read("checkpoint", c.checkpoint);
  r.read("resume", c.resume);
  r.read("force", c.force);
  r.read("pretrained", c.pretrained);
  r.read("repeats", c.repeats);
  r.read("gradcheck_samples", c.gradcheck_samples);
  r.read("gradcheck_h", c.gradcheck_h);
  r.finish();
  c.validate();
  return c;
}

nlohmann::json parse_json(std::string_view text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  if (pretrain_epochs == 0) throw ConfigError("pretrain_epochs must be at least 1");
  if (pretrain_warmup_epochs > pretrain_epochs) {
    throw ConfigError("pretrain_warmup_epochs must not exceed pretrain_epochs");
  }
  if (repeats == 0) throw ConfigError("repeats must be at least 1");
  if (gradcheck_samples == 0) throw ConfigError("gradcheck_samples must be at least 1");
  if (!(gradcheck_h > 0.0)) throw ConfigError("gradcheck_h must be positive");
}

std::string to_json_text(const ExperimentConfig& config) { return to_json(config).dump(2) + "\n"; }

ExperimentConfig parse_experiment(std::string_view json_text) { return from_json(parse_json(json_text)); }

void apply_override(ExperimentConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string_view value = assignment.substr(eq + 1);
  nlohmann::json j = to_json(config);
  if (!j.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = std::string(value);
  j[key] = parsed;
  config = from_json(j);
}

ExperimentConfig load_experiment(const std::filesystem::path& path,
                                 const std::vector<std::string>& overrides) {
  ExperimentConfig config;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    config = parse_experiment(text.str());
  }
  for (const std::string& o : overrides) apply_override(config, o);
  return config;
}

void write_resolved_config(const ExperimentConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "resolved_config.json", std::ios::binary);
  if (!out) throw FormatError("cannot write " + (dir / "resolved_config.json").string());
  out << to_json_text(config);
}

}  // namespace posvit
