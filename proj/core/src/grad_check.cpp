#include "mediqa/numcore/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mediqa/error.hpp"

namespace mediqa::nc {

namespace {

double evaluate_scalar(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  // A scratch tape keeps the probe evaluations off any caller tape.
  GradTape scratch;
  double value = 0.0;
  {
    TapeScope scope(scratch);
    value = f(x).item();
  }
  if (!std::isfinite(value)) throw EvaluationError("grad_check: f(x) is not finite");
  return value;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                           const GradCheckOptions& options) {
  const bool previous = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();

  GradTape tape;
  Tensor y;
  {
    TapeScope scope(tape);
    y = f(x);
  }
  if (y.numel() != 1) throw ContractError("grad_check: f must return a scalar");
  if (!std::isfinite(y.item())) throw EvaluationError("grad_check: f(x) is not finite");
  std::vector<double> analytic(x.numel(), 0.0);
  if (tape.produced(y.node())) {
    backward(y, tape);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  }

  const std::size_t n = x.numel();
  const std::size_t stride =
      options.max_elements == 0 || options.max_elements >= n ? 1 : n / options.max_elements;

  GradCheckReport report;
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < n; i += stride) {
    const double original = data[i];
    data[i] = original + options.step;
    const double plus = evaluate_scalar(f, x);
    data[i] = original - options.step;
    const double minus = evaluate_scalar(f, x);
    data[i] = original;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > report.max_relative_error || report.checked == 0) {
      report.max_relative_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
    ++report.checked;
  }
  report.passed = report.max_relative_error < options.tolerance;
  x.zero_grad();
  x.set_requires_grad(previous);
  return report;
}

}  // namespace mediqa::nc
