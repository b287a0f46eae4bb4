#pragma once

#include <cstddef>
#include <vector>

#include "mediqa/numcore/tensor.hpp"

namespace mediqa::nc {

// Linear algebra. `a` is [..., m, k]; `b` is either [k, n] (shared across
// the leading dims of `a`) or [..., k, n] with the same leading dims.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& x, Shape shape);

// Elementwise binary ops. `b` may be equal in shape to `a` or match a
// trailing suffix of it, in which case it is broadcast over leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor square(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Exact GELU, x * Phi(x) with Phi from erf.
Tensor gelu(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes over the last axis, then applies gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Gathers `indices` along `axis` (repeats allowed).
Tensor take(const Tensor& x, std::size_t axis,
            const std::vector<std::size_t>& indices);

/// sum(w * s) / max(sum(w), eps) over the last axis.
Tensor weighted_average(const Tensor& s, const Tensor& w, double eps);

}  // namespace mediqa::nc
