#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mediqa::nc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Storage shared by all handles of one tensor.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the backward pass touches it
  bool requires_grad = false;

  double* grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad.data();
  }
};

/// Dense row-major float64 tensor. Copies are cheap handles onto the same
/// storage; use `clone()` for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_node(std::shared_ptr<Node> node);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  /// Direct write access, meant for leaves (parameters, inputs). Mutating a
  /// tensor that is already on a tape invalidates the recorded gradients.
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  Tensor clone(bool requires_grad = false) const;
  Tensor detach() const { return clone(false); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Ordered log of differentiable operations. Records are appended as ops
/// execute, so every node's inputs precede it.
class GradTape {
 public:
  struct Record {
    const char* op = "";
    std::vector<std::shared_ptr<Node>> inputs;
    std::shared_ptr<Node> output;
    std::function<void(Record&)> backward;
  };

  void record(Record r) { records_.push_back(std::move(r)); }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<Record>& records() const { return records_; }
  std::vector<Record>& records() { return records_; }
  bool produced(const Node* node) const;
  void reset() { records_.clear(); }

 private:
  std::vector<Record> records_;
};

/// The tape ops record onto for the current thread, or null (no recording).
GradTape* active_tape();

/// Activates `tape` on the calling thread for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

/// Reverse pass from a scalar loss recorded on `tape`. Gradients accumulate
/// into every requires_grad leaf; the tape is reset afterwards.
void backward(const Tensor& loss, GradTape& tape);

/// When enabled, every op checks its output for NaN/Inf and throws
/// NumericError. Off by default.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace mediqa::nc
