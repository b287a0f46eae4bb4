#include "run_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mediqa/error.hpp"

namespace mediqa::cli {

namespace {

using json = nlohmann::json;

template <class T>
T value_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_profiles(const std::vector<data::Profile>& profiles) {
  std::string out;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (i) out += ',';
    out += data::to_string(profiles[i]);
  }
  return out;
}

}  // namespace

train::TrainConfig classifier_defaults() {
  train::TrainConfig c;
  c.learning_rate = 1e-3;
  c.epochs = 10;
  return c;
}

bool parse_switch(const std::string& value) {
  if (value == "on") return true;
  if (value == "off") return false;
  throw UsageError("expected on|off, got '" + value + "'");
}

void RunConfig::apply_json(const json& flat) {
  if (!flat.is_object()) throw ConfigError("config file must hold a JSON object with flat dotted keys");
  using Setter = std::function<void(const json&, const std::string&)>;
  auto sz = [](std::size_t& field) -> Setter {
    return [&field](const json& v, const std::string& k) { field = value_as<std::size_t>(v, k); };
  };
  auto dbl = [](double& field) -> Setter {
    return [&field](const json& v, const std::string& k) { field = value_as<double>(v, k); };
  };
  auto str = [](std::string& field) -> Setter {
    return [&field](const json& v, const std::string& k) { field = value_as<std::string>(v, k); };
  };
  auto flag = [](bool& field) -> Setter {
    return [&field](const json& v, const std::string& k) {
      field = v.is_string() ? parse_switch(value_as<std::string>(v, k)) : value_as<bool>(v, k);
    };
  };
  auto& b = model.blocks;
  const std::map<std::string, Setter> setters{
      {"seed", [this](const json& v, const std::string& k) { seed = value_as<std::uint64_t>(v, k); }},
      {"out", str(out)},
      {"manifest", str(manifest)},
      {"pretrain_manifest", str(pretrain_manifest)},
      {"checkpoint", str(checkpoint)},
      {"classifier", str(classifier)},
      {"split", str(split)},
      {"reset_heads", flag(reset_heads)},
      {"write_svg", flag(write_svg)},
      {"data.count", sz(data.count)},
      {"data.profiles",
       [this](const json& v, const std::string& k) {
         data.profiles.clear();
         for (const auto& p : split_list(value_as<std::string>(v, k))) data.profiles.push_back(data::parse_profile(p));
       }},
      {"data.levels",
       [this](const json& v, const std::string& k) { data.levels = value_as<std::vector<double>>(v, k); }},
      {"data.image_size", sz(data.image_size)},
      {"data.depth", sz(data.depth)},
      {"data.empty_slices", sz(data.empty_slices)},
      {"data.sigma_max", dbl(data.sigma_max)},
      {"data.kappa_max", dbl(data.kappa_max)},
      {"data.dose_ramp", flag(data.dose_ramp)},
      {"model.image_size", sz(b.image_size)},
      {"model.embed_dim", sz(b.embed_dim)},
      {"model.num_heads", sz(b.num_heads)},
      {"model.depth", sz(b.depth)},
      {"model.patch_size", sz(b.patch_size)},
      {"model.window_size", sz(b.window_size)},
      {"model.mlp_ratio", sz(b.mlp_ratio)},
      {"model.sstb_scale", dbl(b.sstb_scale)},
      {"model.num_params", sz(model.num_params)},
      {"train.learning_rate", dbl(train.learning_rate)},
      {"train.batch_size", sz(train.batch_size)},
      {"train.epochs", sz(train.epochs)},
      {"train.clip_norm", dbl(train.clip_norm)},
      {"train.freeze_encoder", flag(train.freeze_encoder)},
      {"classifier.learning_rate", dbl(classifier_train.learning_rate)},
      {"classifier.batch_size", sz(classifier_train.batch_size)},
      {"classifier.epochs", sz(classifier_train.epochs)},
      {"salient.fg_threshold", dbl(train.salient.fg_threshold)},
      {"salient.min_fg_ratio", dbl(train.salient.min_fg_ratio)},
      {"prompts",
       [this](const json& v, const std::string& k) { train.prompts = prompt::parse_prompt_mode(value_as<std::string>(v, k)); }},
      {"flags.pt", flag(train.flags.pt)},
      {"flags.pm", flag(train.flags.pm)},
      {"flags.ss", flag(train.flags.ss)},
  };
  for (const auto& [key, value] : flat.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(value, key);
  }
}

json RunConfig::to_json() const {
  const auto& b = model.blocks;
  return json{
      {"seed", seed},
      {"out", out},
      {"manifest", manifest},
      {"pretrain_manifest", pretrain_manifest},
      {"checkpoint", checkpoint},
      {"classifier", classifier},
      {"split", split},
      {"reset_heads", reset_heads},
      {"write_svg", write_svg},
      {"data.count", data.count},
      {"data.profiles", join_profiles(data.profiles)},
      {"data.levels", data.levels},
      {"data.image_size", data.image_size},
      {"data.depth", data.depth},
      {"data.empty_slices", data.empty_slices},
      {"data.sigma_max", data.sigma_max},
      {"data.kappa_max", data.kappa_max},
      {"data.dose_ramp", data.dose_ramp},
      {"model.image_size", b.image_size},
      {"model.embed_dim", b.embed_dim},
      {"model.num_heads", b.num_heads},
      {"model.depth", b.depth},
      {"model.patch_size", b.patch_size},
      {"model.window_size", b.window_size},
      {"model.mlp_ratio", b.mlp_ratio},
      {"model.sstb_scale", b.sstb_scale},
      {"model.num_params", model.num_params},
      {"train.learning_rate", train.learning_rate},
      {"train.batch_size", train.batch_size},
      {"train.epochs", train.epochs},
      {"train.clip_norm", train.clip_norm},
      {"train.freeze_encoder", train.freeze_encoder},
      {"classifier.learning_rate", classifier_train.learning_rate},
      {"classifier.batch_size", classifier_train.batch_size},
      {"classifier.epochs", classifier_train.epochs},
      {"salient.fg_threshold", train.salient.fg_threshold},
      {"salient.min_fg_ratio", train.salient.min_fg_ratio},
      {"prompts", std::string(prompt::to_string(train.prompts))},
      {"flags.pt", train.flags.pt},
      {"flags.pm", train.flags.pm},
      {"flags.ss", train.flags.ss},
  };
}

void RunConfig::finalize() {
  data.seed = seed;
  model.blocks.seed = seed;
  train.seed = seed;
  classifier_train.seed = seed;
  train.salient.target_size = model.blocks.image_size;
  data::parse_split(split);
}

void RunConfig::validate() const {
  model.blocks.validate();
  if (model.num_params == 0) throw ConfigError("model.num_params must be >= 1");
  train.validate();
  classifier_train.validate();
  data.validate();
  const auto& s = train.salient;
  if (!(s.fg_threshold >= 0.0 && s.fg_threshold <= 1.0) || !(s.min_fg_ratio >= 0.0 && s.min_fg_ratio <= 1.0)) {
    throw ConfigError("salient thresholds must lie in [0, 1]");
  }
  if (data::parse_split(split) == data::Split::kNone) throw ConfigError("split must be train, val or test");
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  RunConfig c;
  c.apply_json(j);
  return c;
}

}  // namespace mediqa::cli
