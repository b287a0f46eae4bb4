#include "mediqa/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "mediqa/checkpoint.hpp"
#include "mediqa/data/volume_io.hpp"
#include "mediqa/error.hpp"

namespace mediqa::train {

using namespace nc;

std::string_view to_string(Stage stage) { return stage == Stage::kPretrain ? "pretrain" : "finetune"; }

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.numel() != target.numel() || pred.numel() == 0) {
    throw ContractError("mse_loss: lengths " + std::to_string(pred.numel()) + " and " +
                        std::to_string(target.numel()) + " differ or are empty");
  }
  const Tensor p = reshape(pred, {pred.numel()});
  const Tensor t = reshape(target, {target.numel()});
  return mean(square(sub(p, t)));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ContractError("cross_entropy: logits " + shape_string(logits.shape()) + " do not match " +
                        std::to_string(labels.size()) + " labels");
  }
  const std::size_t c = logits.dim(1);
  std::vector<std::size_t> flat(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= c) throw ContractError("cross_entropy: label out of range");
    flat[i] = i * c + labels[i];
  }
  const Tensor probs = reshape(softmax(logits, 1), {logits.numel()});
  return scale(mean(log(take(probs, 0, flat))), -1.0);
}

void zero_gradients(const blocks::ParamList& params) {
  for (const auto& [name, t] : params) {
    auto handle = t;
    handle.zero_grad();
  }
}

double clip_gradients(const blocks::ParamList& params, double max_norm) {
  double total = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) total += g * g;
  }
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& [name, t] : params) {
      if (!t.has_grad()) continue;
      for (double& g : t.node()->grad) g *= factor;
    }
  }
  return norm;
}

void adam_step(const blocks::ParamList& params, AdamState& state, const TrainConfig& config) {
  if (state.m.empty()) {
    for (const auto& [name, t] : params) {
      state.m.emplace_back(t.numel(), 0.0);
      state.v.emplace_back(t.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params[i];
    if (state.m[i].size() != t.numel()) {
      throw ContractError("adam_step: state for '" + name + "' has the wrong size");
    }
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in '" + name + "'");
    }
  }
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto t = params[i].second;
    const auto grad = t.grad();
    auto data = t.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      data[j] -= config.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.adam_eps);
    }
  }
}

LoadOptions load_options_for(const TrainConfig& config, const blocks::VitClassifier* classifier) {
  LoadOptions options;
  options.preparation.salient = config.salient;
  options.preparation.salient_slices = config.flags.ss;
  options.prompts.mode = config.flags.pm ? config.prompts : prompt::PromptMode::kOff;
  options.prompts.classifier = classifier;
  return options;
}

std::vector<Example> load_examples(const data::Manifest& manifest, data::Split split, const LoadOptions& options) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (split != data::Split::kNone && r.split != split) continue;
    const Volume volume = data::read_volume(manifest.resolve(r));
    prompt::PromptSources sources = options.prompts;
    sources.manifest = {r.fields.modality, r.fields.region, r.fields.type};
    Example e;
    e.input = model::prepare_input(volume, options.preparation);
    e.prompt = prompt::auto_generate(volume, sources);
    e.label = r.label;
    e.record = i;
    out.push_back(std::move(e));
  }
  return out;
}

Tensor stage_forward(const model::MedIQAModel& model, const Example& example, Stage stage) {
  if (stage == Stage::kPretrain) {
    return reshape(take(model.predict_params(example.input.images, example.prompt), 0, {0}), {});
  }
  return model::quality_forward(model, example.input, example.prompt);
}

double mean_loss(const model::MedIQAModel& model, const std::vector<Example>& examples, Stage stage) {
  if (examples.empty()) throw ContractError("mean_loss: no examples");
  double total = 0.0;
  for (const auto& e : examples) {
    const double d = stage_forward(model, e, stage).item() - e.label;
    total += d * d;
  }
  return total / static_cast<double>(examples.size());
}

namespace {

blocks::ParamList trainable(const model::MedIQAModel& model, const TrainConfig& config) {
  blocks::ParamList all = model.parameters();
  blocks::ParamList frozen;
  if (!config.flags.pm) {
    auto inj = model.injection_parameters();
    frozen.insert(frozen.end(), inj.begin(), inj.end());
  }
  if (config.freeze_encoder) {
    auto enc = model.encoder_parameters();
    frozen.insert(frozen.end(), enc.begin(), enc.end());
  }
  blocks::ParamList out;
  for (auto& p : all) {
    const bool skip = std::any_of(frozen.begin(), frozen.end(),
                                  [&](const auto& f) { return f.second.node() == p.second.node(); });
    if (!skip) out.push_back(std::move(p));
  }
  return out;
}

void check_labels(const std::vector<Example>& examples, const data::Manifest& manifest, data::LabelKind kind) {
  for (const auto& e : examples) {
    const auto& r = manifest.records[e.record];
    if (r.label_kind != kind) {
      throw ContractError("sample '" + r.path + "' has label_kind " + std::string(data::to_string(r.label_kind)) +
                          ", expected " + std::string(data::to_string(kind)));
    }
  }
}

}  // namespace

TrainResult fit(model::MedIQAModel& model, const std::vector<Example>& train, const std::vector<Example>& val,
                const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw ContractError("training split is empty");
  if (config.stage == Stage::kPretrain && model.config().num_params != 1) {
    throw ConfigError("pretraining on scalar labels needs num_params = 1");
  }
  if (!config.flags.pm) model.zero_injections();

  const blocks::ParamList params = trainable(model, config);
  for (const auto& [name, t] : model.parameters()) {
    auto handle = t;
    handle.set_requires_grad(std::any_of(params.begin(), params.end(),
                                         [&](const auto& p) { return p.second.node() == t.node(); }));
  }

  AdamState state;
  auto shuffle_rng = make_rng(config.seed, "shuffle");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  model::MedIQAModel best = model.clone();
  bool have_best = false;
  GradTape tape;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double train_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      zero_gradients(params);
      Tensor loss;
      {
        TapeScope scope(tape);
        std::vector<Tensor> preds;
        std::vector<double> targets;
        for (std::size_t k = start; k < end; ++k) {
          preds.push_back(reshape(stage_forward(model, train[order[k]], config.stage), {1}));
          targets.push_back(train[order[k]].label);
        }
        const Tensor pred = preds.size() == 1 ? preds.front() : concat(preds, 0);
        loss = mse_loss(pred, Tensor({targets.size()}, targets));
      }
      train_total += loss.item() * static_cast<double>(end - start);
      backward(loss, tape);
      clip_gradients(params, config.clip_norm);
      adam_step(params, state, config);
    }
    const double train_mse = train_total / static_cast<double>(train.size());
    result.curve.push_back({epoch, data::Split::kTrain, train_mse});
    double select = train_mse;
    if (!val.empty()) {
      select = mean_loss(model, val, config.stage);
      result.curve.push_back({epoch, data::Split::kVal, select});
    }
    if (!have_best || select < result.best_val) {
      have_best = true;
      result.best_val = select;
      result.best_epoch = epoch;
      best.copy_parameters_from(model);
    }
  }
  model.copy_parameters_from(best);
  for (const auto& [name, t] : model.parameters()) {
    auto handle = t;
    handle.zero_grad();
    handle.set_requires_grad(true);
  }
  return result;
}

TrainResult pretrain(model::MedIQAModel& model, const data::Manifest& manifest, const TrainConfig& config) {
  TrainConfig c = config;
  c.stage = Stage::kPretrain;
  c.validate();
  const auto options = load_options_for(c);
  const auto train = load_examples(manifest, data::Split::kTrain, options);
  const auto val = load_examples(manifest, data::Split::kVal, options);
  check_labels(train, manifest, data::LabelKind::kPhysical);
  check_labels(val, manifest, data::LabelKind::kPhysical);
  return fit(model, train, val, c);
}

TrainResult finetune(model::MedIQAModel& model, const data::Manifest& manifest, const TrainConfig& config,
                     const blocks::VitClassifier* classifier) {
  TrainConfig c = config;
  c.stage = Stage::kFinetune;
  c.validate();
  const auto options = load_options_for(c, classifier);
  const auto train = load_examples(manifest, data::Split::kTrain, options);
  const auto val = load_examples(manifest, data::Split::kVal, options);
  check_labels(train, manifest, data::LabelKind::kExpert);
  check_labels(val, manifest, data::LabelKind::kExpert);
  return fit(model, train, val, c);
}

model::MedIQAModel finetune_start(const model::ModelConfig& config, const std::optional<std::string>& checkpoint,
                                  const TrainConfig& train_config, bool reset_heads) {
  if (train_config.flags.pt) {
    if (!checkpoint) throw ConfigError("PT is on but no pretrained checkpoint was given");
    model::LoadOptions options;
    options.reset_heads = reset_heads;
    options.head_seed = derive_seed(train_config.seed, "heads");
    return model::load_checkpoint(*checkpoint, options);
  }
  return model::MedIQAModel(config);
}

std::string format_loss_csv(const std::vector<LossRecord>& curve) {
  std::string out = "epoch,split,mse\n";
  char buf[64];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g\n", r.epoch, std::string(data::to_string(r.split)).c_str(), r.mse);
    out += buf;
  }
  return out;
}

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& curve) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << format_loss_csv(curve);
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<ClassifierExample> load_classifier_examples(const data::Manifest& manifest, data::Split split,
                                                        std::size_t image_size) {
  std::vector<ClassifierExample> out;
  for (const auto& r : manifest.records) {
    if (split != data::Split::kNone && r.split != split) continue;
    const Volume volume = data::read_volume(manifest.resolve(r));
    const Image2D img = salient::normalize_resize(volume.slice(volume.depth() / 2), image_size);
    out.push_back({Tensor({1, 1, image_size, image_size}, img.pixels), static_cast<std::size_t>(r.fields.modality),
                   static_cast<std::size_t>(r.fields.region), static_cast<std::size_t>(r.fields.type)});
  }
  return out;
}

std::vector<double> train_classifier(blocks::VitClassifier& classifier, const std::vector<ClassifierExample>& train,
                                     const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw ContractError("classifier training split is empty");
  const blocks::ParamList params = classifier.parameters();
  AdamState state;
  auto shuffle_rng = make_rng(config.seed, "shuffle");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> curve;
  GradTape tape;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Tensor> images;
      std::vector<std::size_t> mod, reg, typ;
      for (std::size_t k = start; k < end; ++k) {
        const auto& e = train[order[k]];
        images.push_back(e.image);
        mod.push_back(e.modality);
        reg.push_back(e.region);
        typ.push_back(e.type);
      }
      zero_gradients(params);
      Tensor loss;
      {
        TapeScope scope(tape);
        const auto out = classifier.logits(images.size() == 1 ? images.front() : concat(images, 0));
        loss = add(add(cross_entropy(out.modality, mod), cross_entropy(out.region, reg)),
                   cross_entropy(out.type, typ));
      }
      total += loss.item() * static_cast<double>(end - start);
      backward(loss, tape);
      clip_gradients(params, config.clip_norm);
      adam_step(params, state, config);
    }
    curve.push_back(total / static_cast<double>(train.size()));
  }
  zero_gradients(params);
  return curve;
}

ClassifierAccuracy classifier_accuracy(const blocks::VitClassifier& classifier,
                                       const std::vector<ClassifierExample>& examples) {
  ClassifierAccuracy acc;
  acc.n = examples.size();
  if (examples.empty()) return acc;
  for (const auto& e : examples) {
    const auto h = prompt::classify_fields(classifier, e.image);
    acc.modality += static_cast<std::size_t>(*h.modality) == e.modality ? 1.0 : 0.0;
    acc.region += static_cast<std::size_t>(*h.region) == e.region ? 1.0 : 0.0;
    acc.type += static_cast<std::size_t>(*h.type) == e.type ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(examples.size());
  acc.modality /= n;
  acc.region /= n;
  acc.type /= n;
  return acc;
}

}  // namespace mediqa::train
