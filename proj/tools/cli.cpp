#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "mediqa/checkpoint.hpp"
#include "mediqa/data/volume_io.hpp"
#include "mediqa/error.hpp"
#include "mediqa/eval/evaluate.hpp"
#include "mediqa/train.hpp"
#include "run_config.hpp"

namespace mediqa::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::shared_ptr<spdlog::logger> logger() {
  auto log = spdlog::get("mediqa");
  if (!log) log = spdlog::stderr_logger_st("mediqa");
  const char* env = std::getenv("MEDIQA_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") log->set_level(spdlog::level::err);
  else if (level == "info") log->set_level(spdlog::level::info);
  else if (level == "debug") log->set_level(spdlog::level::debug);
  else throw UsageError("MEDIQA_LOG must be error, info or debug, got '" + level + "'");
  log->set_pattern("[%l] %v");
  return log;
}

/// Flags shared by every subcommand; unset values leave the config alone.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> prompts;
  std::optional<std::string> pt, pm, ss;
  bool reset_heads = false;
  std::optional<std::string> out;
  std::optional<std::string> manifest;
  std::optional<std::string> pretrain_manifest;
  std::optional<std::string> checkpoint;
  std::optional<std::string> classifier;
  std::optional<std::string> split;
  std::vector<std::string> sets;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "JSON config with flat dotted keys");
    app.add_option("--seed", seed, "Root seed for every random stream");
    app.add_option("--prompts", prompts, "Prompt source")->check(CLI::IsMember({"auto", "manifest", "off"}));
    app.add_option("--pt", pt, "Pretraining on|off")->check(CLI::IsMember({"on", "off"}));
    app.add_option("--pm", pm, "Prompt strategy on|off")->check(CLI::IsMember({"on", "off"}));
    app.add_option("--ss", ss, "Salient slices on|off")->check(CLI::IsMember({"on", "off"}));
    app.add_flag("--reset-heads", reset_heads, "Fresh quality heads when loading a checkpoint");
    app.add_option("--out", out, "Output directory");
    app.add_option("--manifest", manifest, "Dataset manifest CSV");
    app.add_option("--pretrain-manifest", pretrain_manifest, "Physical-parameter manifest (ablate)");
    app.add_option("--checkpoint", checkpoint, "Model checkpoint");
    app.add_option("--classifier", classifier, "Prompt classifier checkpoint");
    app.add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
    app.add_option("--set", sets, "Override a config key, KEY=VALUE (repeatable)");
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : load_config_file(config);
    json overrides = json::object();
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects KEY=VALUE, got '" + s + "'");
      const std::string key = s.substr(0, eq), raw = s.substr(eq + 1);
      json value = json::parse(raw, nullptr, false);
      overrides[key] = value.is_discarded() ? json(raw) : value;
    }
    c.apply_json(overrides);
    if (seed) c.seed = *seed;
    if (prompts) c.train.prompts = prompt::parse_prompt_mode(*prompts);
    if (pt) c.train.flags.pt = parse_switch(*pt);
    if (pm) c.train.flags.pm = parse_switch(*pm);
    if (ss) c.train.flags.ss = parse_switch(*ss);
    if (reset_heads) c.reset_heads = true;
    if (out) c.out = *out;
    if (manifest) c.manifest = *manifest;
    if (pretrain_manifest) c.pretrain_manifest = *pretrain_manifest;
    if (checkpoint) c.checkpoint = *checkpoint;
    if (classifier) c.classifier = *classifier;
    if (split) c.split = *split;
    c.finalize();
    c.validate();
    return c;
  }
};

struct Context {
  RunConfig config;
  std::shared_ptr<spdlog::logger> log;
  std::ostream& out;
};

fs::path prepare_out(const RunConfig& c, const std::string& command) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw IoError("cannot create output directory '" + c.out + "': " + ec.message());
  eval::write_text((fs::path(c.out) / (command + "_config.json")).string(), c.to_json().dump(2) + "\n");
  return fs::path(c.out);
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

std::optional<blocks::VitClassifier> maybe_classifier(const RunConfig& c) {
  if (c.classifier.empty()) return std::nullopt;
  return model::load_classifier(c.classifier);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

int cmd_gen_data(Context& ctx) {
  const auto& c = ctx.config;
  prepare_out(c, "gen-data");
  const auto manifest = data::generate_synthetic(c.out, c.data);
  ctx.out << "wrote " << manifest.records.size() << " samples to " << c.out << " (train "
          << manifest.count(data::Split::kTrain) << ", val " << manifest.count(data::Split::kVal) << ", test "
          << manifest.count(data::Split::kTest) << ")\n";
  return 0;
}

int cmd_train_classifier(Context& ctx) {
  const auto& c = ctx.config;
  require(c.manifest, "--manifest");
  const fs::path out = prepare_out(c, "train-classifier");
  const auto manifest = data::read_manifest(c.manifest);
  const std::size_t size = c.model.blocks.image_size;
  const auto train_set = train::load_classifier_examples(manifest, data::Split::kTrain, size);
  const auto test_set = train::load_classifier_examples(manifest, data::Split::kTest, size);
  blocks::VitClassifier classifier(c.model.blocks);
  const auto curve = train::train_classifier(classifier, train_set, c.classifier_train);
  std::string csv = "epoch,split,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) csv += std::to_string(i + 1) + ",train," + fmt_double(curve[i]) + "\n";
  eval::write_text((out / "classifier_loss.csv").string(), csv);
  model::save_classifier(classifier, (out / "classifier.ckpt").string());
  const auto acc = train::classifier_accuracy(classifier, test_set.empty() ? train_set : test_set);
  ctx.out << "accuracy modality=" << fmt_double(acc.modality) << " region=" << fmt_double(acc.region)
          << " type=" << fmt_double(acc.type) << " n=" << acc.n << "\n";
  return 0;
}

int cmd_pretrain(Context& ctx) {
  const auto& c = ctx.config;
  require(c.manifest, "--manifest");
  const fs::path out = prepare_out(c, "pretrain");
  const auto manifest = data::read_manifest(c.manifest);
  model::MedIQAModel m(c.model);
  const auto result = train::pretrain(m, manifest, c.train);
  train::write_loss_csv((out / "pretrain_loss.csv").string(), result.curve);
  model::save_checkpoint(m, (out / "pretrain.ckpt").string());
  ctx.out << "best_epoch " << result.best_epoch << " val_mse " << fmt_double(result.best_val) << "\n";
  return 0;
}

eval::Evaluation evaluate_on(const model::MedIQAModel& m, const data::Manifest& manifest, const RunConfig& c,
                             const blocks::VitClassifier* classifier) {
  const auto options = train::load_options_for(c.train, classifier);
  auto ev = eval::evaluate_model(m, manifest, data::parse_split(c.split), options);
  ev.report.flags = c.train.flags;
  ev.report.fingerprint = eval::fingerprint(c.to_json().dump());
  return ev;
}

void write_evaluation(const fs::path& out, const eval::Evaluation& ev, const RunConfig& c) {
  eval::write_report((out / "report.csv").string(), {ev.report});
  std::string csv = "path,label,score\n";
  char buf[64];
  for (const auto& s : ev.samples) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", s.label, s.score);
    csv += s.path + buf;
  }
  eval::write_text((out / "predictions.csv").string(), csv);
  if (c.write_svg) {
    eval::write_text((out / "scatter.svg").string(),
                     eval::scatter_svg(ev.samples, "score vs label (" + c.split + ")"));
  }
}

int cmd_finetune(Context& ctx) {
  const auto& c = ctx.config;
  require(c.manifest, "--manifest");
  const fs::path out = prepare_out(c, "finetune");
  const auto manifest = data::read_manifest(c.manifest);
  const auto classifier = maybe_classifier(c);
  const std::optional<std::string> ckpt = c.checkpoint.empty() ? std::nullopt : std::optional(c.checkpoint);
  auto m = train::finetune_start(c.model, ckpt, c.train, c.reset_heads);
  const auto result = train::finetune(m, manifest, c.train, classifier ? &*classifier : nullptr);
  train::write_loss_csv((out / "finetune_loss.csv").string(), result.curve);
  model::save_checkpoint(m, (out / "finetune.ckpt").string());
  const auto ev = evaluate_on(m, manifest, c, classifier ? &*classifier : nullptr);
  write_evaluation(out, ev, c);
  ctx.out << "best_epoch " << result.best_epoch << " val_mse " << fmt_double(result.best_val) << "\n";
  ctx.out << eval::kReportHeader << "\n" << eval::format_report_row(ev.report) << "\n";
  return 0;
}

int cmd_evaluate(Context& ctx) {
  const auto& c = ctx.config;
  require(c.manifest, "--manifest");
  require(c.checkpoint, "--checkpoint");
  const fs::path out = prepare_out(c, "evaluate");
  const auto manifest = data::read_manifest(c.manifest);
  const auto classifier = maybe_classifier(c);
  const auto m = model::load_checkpoint(c.checkpoint);
  const auto ev = evaluate_on(m, manifest, c, classifier ? &*classifier : nullptr);
  write_evaluation(out, ev, c);
  ctx.out << eval::kReportHeader << "\n" << eval::format_report_row(ev.report) << "\n";
  return 0;
}

struct PredictFlags {
  std::string path;
  std::optional<std::string> modality, region, type;
};

int cmd_predict(Context& ctx, const PredictFlags& flags) {
  const auto& c = ctx.config;
  require(c.checkpoint, "--checkpoint");
  const auto m = model::load_checkpoint(c.checkpoint);
  const auto classifier = maybe_classifier(c);
  const Volume volume = data::read_volume(flags.path);
  auto options = train::load_options_for(c.train, classifier ? &*classifier : nullptr);
  if (flags.modality) options.prompts.explicit_fields.modality = prompt::parse_modality(*flags.modality);
  if (flags.region) options.prompts.explicit_fields.region = prompt::parse_region(*flags.region);
  if (flags.type) options.prompts.explicit_fields.type = prompt::parse_type(*flags.type);
  const auto p = prompt::auto_generate(volume, options.prompts);
  const auto input = model::prepare_input(volume, options.preparation);
  const auto pred = model::predict_quality(m, input, p);
  ctx.out << "prompt " << (p ? prompt::describe(*p) : std::string("off")) << "\n";
  char buf[96];
  if (!input.volumetric) {
    std::snprintf(buf, sizeof buf, "q %.17g\n", pred.score);
    ctx.out << buf;
    return 0;
  }
  std::snprintf(buf, sizeof buf, "Q %.17g\n", pred.score);
  ctx.out << buf << "slice,q,weight\n";
  for (const auto& s : pred.slices) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", s.index, s.q, s.weight);
    ctx.out << buf;
  }
  return 0;
}

int cmd_ablate(Context& ctx) {
  const auto& c = ctx.config;
  require(c.manifest, "--manifest");
  const fs::path out = prepare_out(c, "ablate");
  const auto manifest = data::read_manifest(c.manifest);
  const auto classifier = maybe_classifier(c);
  std::string pretrained = c.checkpoint;
  if (pretrained.empty()) {
    if (c.pretrain_manifest.empty()) throw UsageError("ablate needs --checkpoint or --pretrain-manifest for PT rows");
    model::MedIQAModel m(c.model);
    const auto result = train::pretrain(m, data::read_manifest(c.pretrain_manifest), c.train);
    train::write_loss_csv((out / "pretrain_loss.csv").string(), result.curve);
    pretrained = (out / "pretrain.ckpt").string();
    model::save_checkpoint(m, pretrained);
    ctx.log->info("pretrained checkpoint written to {}", pretrained);
  }
  const train::AblationFlags rows[] = {{false, false, false}, {true, false, false}, {true, true, false}, {true, true, true}};
  std::vector<eval::MetricReport> reports;
  for (const auto& flags : rows) {
    RunConfig row = c;
    row.train.flags = flags;
    auto m = train::finetune_start(row.model, pretrained, row.train, true);
    train::finetune(m, manifest, row.train, classifier ? &*classifier : nullptr);
    const auto ev = evaluate_on(m, manifest, row, classifier ? &*classifier : nullptr);
    ctx.log->info("ablation row {}", eval::format_report_row(ev.report));
    reports.push_back(ev.report);
  }
  eval::write_report((out / "ablation.csv").string(), reports);
  ctx.out << eval::format_report(reports);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"No-reference medical image quality assessment"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonFlags common;
  PredictFlags predict_flags;
  std::vector<std::pair<CLI::App*, std::string>> commands;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    common.attach(*sub);
    commands.emplace_back(sub, name);
    return sub;
  };
  add("gen-data", "Generate a synthetic dataset and manifest");
  add("train-classifier", "Train the prompt classifier");
  add("pretrain", "Physical-parameter pretraining");
  add("finetune", "Quality-score fine-tuning");
  add("evaluate", "Evaluate a checkpoint on a manifest split");
  CLI::App* predict = add("predict", "Score one image or volume");
  predict->add_option("path", predict_flags.path, "Raw volume (.raw/.hdr stem)")->required();
  predict->add_option("--modality", predict_flags.modality, "Explicit modality prompt");
  predict->add_option("--region", predict_flags.region, "Explicit region prompt");
  predict->add_option("--type", predict_flags.type, "Explicit type prompt");
  add("ablate", "Fine-tune and evaluate the PT/PM/SS ablation grid");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string what = e.what();
    for (auto& ch : what) {
      if (ch == '\n') ch = ' ';
    }
    err << "error usage: " << what << "\n";
    return 2;
  }

  try {
    auto log = logger();
    Context ctx{common.resolve(), log, out};
    std::string name;
    for (const auto& [sub, n] : commands) {
      if (sub->parsed()) name = n;
    }
    log->info("{} resolved config {}", name, ctx.config.to_json().dump());
    if (name == "gen-data") return cmd_gen_data(ctx);
    if (name == "train-classifier") return cmd_train_classifier(ctx);
    if (name == "pretrain") return cmd_pretrain(ctx);
    if (name == "finetune") return cmd_finetune(ctx);
    if (name == "evaluate") return cmd_evaluate(ctx);
    if (name == "predict") return cmd_predict(ctx, predict_flags);
    if (name == "ablate") return cmd_ablate(ctx);
    throw UsageError("unknown subcommand");
  } catch (const UsageError& e) {
    err << "error usage: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mediqa::cli
