#include "mediqa/numcore/tensor.hpp"

#include <atomic>
#include <sstream>

#include "mediqa/error.hpp"

namespace mediqa::nc {

namespace {

thread_local GradTape* g_active_tape = nullptr;
std::atomic<bool> g_finite_checks{false};

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(node_->shape, node_->data, requires_grad);
}

bool GradTape::produced(const Node* node) const {
  for (const auto& r : records_) {
    if (r.output.get() == node) return true;
  }
  return false;
}

GradTape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(GradTape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(const Tensor& loss, GradTape& tape) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss");
  }
  if (!tape.produced(loss.node())) {
    throw ContractError("backward(): loss was not recorded on the tape");
  }
  auto& records = tape.records();
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // no gradient flows here
    it->backward(*it);
    if (it->output.get() != loss.node()) {
      // Intermediate gradients are not needed once propagated.
      std::vector<double>().swap(it->output->grad);
    }
  }
  tape.reset();
}

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

}  // namespace mediqa::nc
