#include "mediqa/eval/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "mediqa/error.hpp"
#include "mediqa/eval/metrics.hpp"

namespace mediqa::eval {

MetricReport compute_report(std::span<const double> pred, std::span<const double> labels) {
  MetricReport r;
  r.n = pred.size();
  r.srcc = srcc(pred, labels);
  r.plcc = plcc(pred, labels);
  r.rmse = rmse(pred, labels);
  return r;
}

namespace {

Evaluation finish(std::vector<SamplePrediction> samples, data::Split split) {
  if (samples.empty()) throw ContractError("evaluation split is empty");
  std::vector<double> pred, labels;
  for (const auto& s : samples) {
    pred.push_back(s.score);
    labels.push_back(s.label);
  }
  Evaluation out;
  out.report = compute_report(pred, labels);
  out.report.split = split;
  out.samples = std::move(samples);
  return out;
}

}  // namespace

Evaluation evaluate_scorer(const data::Manifest& manifest, data::Split split, const Scorer& scorer) {
  std::vector<SamplePrediction> samples;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (split != data::Split::kNone && r.split != split) continue;
    samples.push_back({r.path, r.label, scorer(r, i)});
  }
  return finish(std::move(samples), split);
}

Evaluation evaluate_examples(const model::MedIQAModel& model, const data::Manifest& manifest,
                             const std::vector<train::Example>& examples, data::Split split) {
  std::vector<SamplePrediction> samples;
  for (const auto& e : examples) {
    const auto& r = manifest.records[e.record];
    samples.push_back({r.path, e.label, model::predict_quality(model, e.input, e.prompt).score});
  }
  return finish(std::move(samples), split);
}

Evaluation evaluate_model(const model::MedIQAModel& model, const data::Manifest& manifest, data::Split split,
                          const train::LoadOptions& options) {
  return evaluate_examples(model, manifest, train::load_examples(manifest, split, options), split);
}

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_report_row(const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%zu,%.6f,%.6f,%.6f", r.flags.pt ? "on" : "off",
                r.flags.pm ? "on" : "off", r.flags.ss ? "on" : "off", std::string(data::to_string(r.split)).c_str(),
                r.n, r.srcc, r.plcc, r.rmse);
  return buf;
}

std::string format_report(const std::vector<MetricReport>& reports) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : reports) out += format_report_row(r) + "\n";
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_report(const std::string& path, const std::vector<MetricReport>& reports) {
  write_text(path, format_report(reports));
}

std::string scatter_svg(const std::vector<SamplePrediction>& samples, const std::string& title) {
  constexpr double kSize = 400.0, kMargin = 40.0, kPlot = kSize - 2 * kMargin;
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" viewBox=\"0 0 %g %g\">\n",
                kSize, kSize, kSize, kSize);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", kMargin,
                kMargin, kPlot, kPlot);
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#bbb\" stroke-dasharray=\"4 4\"/>\n", kMargin,
                kMargin + kPlot, kMargin + kPlot, kMargin);
  out += buf;
  std::string escaped;
  for (char c : title) {
    if (c == '<') escaped += "&lt;";
    else if (c == '>') escaped += "&gt;";
    else if (c == '&') escaped += "&amp;";
    else escaped += c;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">", kSize / 2);
  out += buf + escaped + "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-size=\"12\">label</text>\n"
                "<text x=\"14\" y=\"%g\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 %g)\">"
                "score</text>\n",
                kSize / 2, kSize - 10, kSize / 2, kSize / 2);
  out += buf;
  for (const auto& s : samples) {
    const double x = kMargin + std::clamp(s.label, 0.0, 1.0) * kPlot;
    const double y = kMargin + (1.0 - std::clamp(s.score, 0.0, 1.0)) * kPlot;
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"#3366cc\" fill-opacity=\"0.6\"/>\n",
                  x, y);
    out += buf;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace mediqa::eval
