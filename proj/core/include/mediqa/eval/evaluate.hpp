#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mediqa/data/manifest.hpp"
#include "mediqa/model.hpp"
#include "mediqa/train.hpp"

namespace mediqa::eval {

struct MetricReport {
  double srcc = 0.0;
  double plcc = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
  std::string fingerprint;  // hash of the resolved config
  train::AblationFlags flags;
  data::Split split = data::Split::kTest;
};

struct SamplePrediction {
  std::string path;
  double label = 0.0;
  double score = 0.0;
};

struct Evaluation {
  MetricReport report;
  std::vector<SamplePrediction> samples;
};

/// All three metrics; an undefined correlation is raised, never skipped.
MetricReport compute_report(std::span<const double> pred, std::span<const double> labels);

/// Scores every record of `split` with `scorer(record, index)`.
using Scorer = std::function<double(const data::SampleRecord&, std::size_t)>;
Evaluation evaluate_scorer(const data::Manifest& manifest, data::Split split, const Scorer& scorer);

/// Per-sample q (images) or Q (volumes) from the same code path as predict.
Evaluation evaluate_model(const model::MedIQAModel& model, const data::Manifest& manifest, data::Split split,
                          const train::LoadOptions& options);
Evaluation evaluate_examples(const model::MedIQAModel& model, const data::Manifest& manifest,
                             const std::vector<train::Example>& examples, data::Split split);

/// FNV-1a of `text` as 16 hex digits.
std::string fingerprint(const std::string& text);

/// `flags_pt,flags_pm,flags_ss,split,n,srcc,plcc,rmse`
inline constexpr const char* kReportHeader = "flags_pt,flags_pm,flags_ss,split,n,srcc,plcc,rmse";
std::string format_report_row(const MetricReport& report);
std::string format_report(const std::vector<MetricReport>& reports);
void write_report(const std::string& path, const std::vector<MetricReport>& reports);

/// Score-vs-label scatter plot.
std::string scatter_svg(const std::vector<SamplePrediction>& samples, const std::string& title);
void write_text(const std::string& path, const std::string& text);

}  // namespace mediqa::eval
