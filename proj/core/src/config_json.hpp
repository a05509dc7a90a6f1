// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <string>

#include "json.hpp"
#include "posvit/errors.hpp"
#include "posvit/model_config.hpp"

namespace posvit::detail {

/// Strict reader over a flat JSON object: typed lookups and a final check
/// that every key was consumed.
class JsonReader {
 public:
  explicit JsonReader(const nlohmann::json& object);

  void read(const std::string& key, std::size_t& out);
  void read(const std::string& key, double& out);
  void read(const std::string& key, bool& out);
  void read(const std::string& key, std::string& out);
  void read(const std::string& key, HeadMode& out);

  /// Throws ConfigError naming the first key never read.
  void finish() const;

 private:
  const nlohmann::json* find(const std::string& key);

  const nlohmann::json& object_;
  std::set<std::string> used_;
};

void model_to_json(const ModelConfig& config, nlohmann::json& out);
void read_model(JsonReader& reader, ModelConfig& config);

}  // namespace posvit::detail
