#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mediqa/data/synthetic.hpp"
#include "mediqa/model.hpp"
#include "mediqa/train.hpp"

namespace mediqa::cli {

/// Resolved settings for one invocation: defaults, then the --config file
/// (flat dotted keys), then command-line flags.
train::TrainConfig classifier_defaults();

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string manifest;
  std::string pretrain_manifest;
  std::string checkpoint;
  std::string classifier;
  std::string split = "test";
  bool reset_heads = false;
  bool write_svg = true;

  data::SyntheticConfig data;
  model::ModelConfig model;
  train::TrainConfig train;
  train::TrainConfig classifier_train = classifier_defaults();

  /// Throws ConfigError on an unknown key or a value of the wrong type.
  void apply_json(const nlohmann::json& flat);
  nlohmann::json to_json() const;
  /// Checks every invariant before compute starts.
  void validate() const;
  /// Propagates the seed into the model, data and training configs.
  void finalize();
};

RunConfig load_config_file(const std::string& path);
bool parse_switch(const std::string& value);  // "on" / "off"

}  // namespace mediqa::cli
