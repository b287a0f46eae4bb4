#include "mediqa/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>

#include "mediqa/error.hpp"

namespace mediqa::nc {

namespace {

using Record = GradTape::Record;

void check_finite(const char* op, const std::vector<double>& data) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

// Wraps freshly computed output storage into a tensor and, when a tape is
// active and any input needs gradients, records the backward rule.
template <class Backward>
Tensor finish(const char* op, Shape shape, std::vector<double> data,
              std::initializer_list<const Tensor*> inputs, Backward&& bw) {
  if (finite_checks_enabled()) check_finite(op, data);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (GradTape* tape = active_tape()) {
    bool needed = false;
    for (const Tensor* t : inputs) needed = needed || t->requires_grad();
    if (needed) {
      node->requires_grad = true;
      Record r;
      r.op = op;
      for (const Tensor* t : inputs) r.inputs.push_back(t->node_ptr());
      r.output = node;
      r.backward = std::forward<Backward>(bw);
      tape->record(std::move(r));
    }
  }
  return Tensor::from_node(std::move(node));
}

template <class Backward>
Tensor finish_n(const char* op, Shape shape, std::vector<double> data,
                const std::vector<Tensor>& inputs, Backward&& bw) {
  if (finite_checks_enabled()) check_finite(op, data);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (GradTape* tape = active_tape()) {
    bool needed = std::any_of(inputs.begin(), inputs.end(),
                              [](const Tensor& t) { return t.requires_grad(); });
    if (needed) {
      node->requires_grad = true;
      Record r;
      r.op = op;
      for (const Tensor& t : inputs) r.inputs.push_back(t.node_ptr());
      r.output = node;
      r.backward = std::forward<Backward>(bw);
      tape->record(std::move(r));
    }
  }
  return Tensor::from_node(std::move(node));
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// da[m x k] += dc[m x n] * b^T
void gemm_acc_bt(const double* dc, const double* b, double* da, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* dci = dc + i * n;
    double* dai = da + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += dci[j] * bp[j];
      dai[p] += acc;
    }
  }
}

// db[k x n] += a^T * dc
void gemm_acc_at(const double* a, const double* dc, double* db, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* dci = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      double* dbp = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbp[j] += av * dci[j];
    }
  }
}

// Number of leading repetitions when `b` is broadcast against `a`.
std::size_t broadcast_outer(const char* op, const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(sb) + " onto " +
                         shape_string(sa));
  }
  return a.numel() / b.numel();
}

template <class Fwd, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  const std::size_t outer = broadcast_outer(op, a, b);
  const std::size_t inner = b.numel();
  std::vector<double> out(a.numel());
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t i = o * inner + j;
      out[i] = fwd(pa[i], pb[j]);
    }
  }
  return finish(op, a.shape(), std::move(out), {&a, &b},
                [outer, inner, da, db](Record& r) {
                  Node& na = *r.inputs[0];
                  Node& nb = *r.inputs[1];
                  const double* g = r.output->grad.data();
                  const double* y = r.output->data.data();
                  if (na.requires_grad) {
                    double* ga = na.grad_buffer();
                    for (std::size_t o = 0; o < outer; ++o)
                      for (std::size_t j = 0; j < inner; ++j) {
                        const std::size_t i = o * inner + j;
                        ga[i] += g[i] * da(na.data[i], nb.data[j], y[i]);
                      }
                  }
                  if (nb.requires_grad) {
                    double* gb = nb.grad_buffer();
                    for (std::size_t o = 0; o < outer; ++o)
                      for (std::size_t j = 0; j < inner; ++j) {
                        const std::size_t i = o * inner + j;
                        gb[j] += g[i] * db(na.data[i], nb.data[j], y[i]);
                      }
                  }
                });
}

// y = f(x) with dy/dx expressed through (x, y).
template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return finish(op, x.shape(), std::move(out), {&x}, [deriv](Record& r) {
    Node& nx = *r.inputs[0];
    if (!nx.requires_grad) return;
    double* gx = nx.grad_buffer();
    const double* g = r.output->grad.data();
    const double* y = r.output->data.data();
    for (std::size_t i = 0; i < nx.data.size(); ++i) gx[i] += g[i] * deriv(nx.data[i], y[i]);
  });
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_string(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Flat source index for every output element of a permutation.
std::vector<std::size_t> permutation_map(const Shape& in_shape, const std::vector<std::size_t>& axes,
                                         Shape& out_shape) {
  const std::size_t r = in_shape.size();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in_shape[i];
  out_shape.resize(r);
  std::vector<std::size_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[axes[i]];
    stride[i] = in_stride[axes[i]];
  }
  const std::size_t n = shape_numel(in_shape);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; ++o) {
    map[o] = src;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      src += stride[d];
      if (idx[d] < out_shape[d]) break;
      src -= stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  return map;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) throw DimensionError("matmul needs rank >= 2 operands");
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape().back();
  const std::size_t kb = b.shape()[b.rank() - 2];
  const std::size_t n = b.shape().back();
  if (k != kb) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  std::size_t batch = 1;
  for (auto e : out_shape) batch *= e;
  const bool shared = b.rank() == 2;
  if (!shared) {
    if (!std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin(), b.shape().end() - 2)) {
      throw DimensionError("matmul: batch extents differ, " + shape_string(a.shape()) + " x " +
                           shape_string(b.shape()));
    }
  }
  out_shape.push_back(m);
  out_shape.push_back(n);
  // A shared right operand lets all leading rows go through one product.
  const std::size_t rows = shared ? batch * m : m;
  const std::size_t reps = shared ? 1 : batch;
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t t = 0; t < reps; ++t) {
    gemm_acc(a.data().data() + t * rows * k, b.data().data() + (shared ? 0 : t * k * n),
             out.data() + t * rows * n, rows, k, n);
  }
  return finish("matmul", std::move(out_shape), std::move(out), {&a, &b},
                [rows, reps, k, n, shared](Record& r) {
                  Node& na = *r.inputs[0];
                  Node& nb = *r.inputs[1];
                  const double* g = r.output->grad.data();
                  for (std::size_t t = 0; t < reps; ++t) {
                    const double* bt = nb.data.data() + (shared ? 0 : t * k * n);
                    const double* gt = g + t * rows * n;
                    if (na.requires_grad) {
                      gemm_acc_bt(gt, bt, na.grad_buffer() + t * rows * k, rows, k, n);
                    }
                    if (nb.requires_grad) {
                      gemm_acc_at(na.data.data() + t * rows * k, gt,
                                  nb.grad_buffer() + (shared ? 0 : t * k * n), rows, k, n);
                    }
                  }
                });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  if (axes.size() != x.rank()) throw DimensionError("permute: axis list length != rank");
  std::vector<bool> seen(axes.size(), false);
  for (auto a : axes) {
    if (a >= axes.size() || seen[a]) throw DimensionError("permute: invalid axis permutation");
    seen[a] = true;
  }
  Shape out_shape;
  auto map = permutation_map(x.shape(), axes, out_shape);
  std::vector<double> out(map.size());
  const auto in = x.data();
  for (std::size_t o = 0; o < map.size(); ++o) out[o] = in[map[o]];
  return finish("permute", std::move(out_shape), std::move(out), {&x},
                [map = std::move(map)](Record& r) {
                  Node& nx = *r.inputs[0];
                  if (!nx.requires_grad) return;
                  double* gx = nx.grad_buffer();
                  const double* g = r.output->grad.data();
                  for (std::size_t o = 0; o < map.size(); ++o) gx[map[o]] += g[o];
                });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2");
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[x.rank() - 1], axes[x.rank() - 2]);
  return permute(x, axes);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel() ||
      std::find(shape.begin(), shape.end(), 0) != shape.end()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return finish("reshape", std::move(shape), std::move(out), {&x}, [](Record& r) {
    Node& nx = *r.inputs[0];
    if (!nx.requires_grad) return;
    double* gx = nx.grad_buffer();
    const auto& g = r.output->grad;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      "add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      "gelu", x, [&](double v) { return v * 0.5 * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto s = split_axis("softmax", x.shape(), axis);
  std::vector<double> out(x.numel());
  const double* in = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      const std::size_t base = o * s.len * s.inner + j;
      double mx = in[base];
      for (std::size_t t = 1; t < s.len; ++t) mx = std::max(mx, in[base + t * s.inner]);
      double total = 0.0;
      for (std::size_t t = 0; t < s.len; ++t) {
        const double e = std::exp(in[base + t * s.inner] - mx);
        out[base + t * s.inner] = e;
        total += e;
      }
      for (std::size_t t = 0; t < s.len; ++t) out[base + t * s.inner] /= total;
    }
  }
  return finish("softmax", x.shape(), std::move(out), {&x}, [s](Record& r) {
    Node& nx = *r.inputs[0];
    if (!nx.requires_grad) return;
    double* gx = nx.grad_buffer();
    const double* g = r.output->grad.data();
    const double* y = r.output->data.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.inner; ++j) {
        const std::size_t base = o * s.len * s.inner + j;
        double dot = 0.0;
        for (std::size_t t = 0; t < s.len; ++t) {
          const std::size_t i = base + t * s.inner;
          dot += g[i] * y[i];
        }
        for (std::size_t t = 0; t < s.len; ++t) {
          const std::size_t i = base + t * s.inner;
          gx[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1) throw DimensionError("layer_norm needs rank >= 1");
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d || gamma.rank() != 1 || beta.rank() != 1) {
    throw DimensionError("layer_norm: gamma/beta must have extent " + std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.numel());
  const double* in = x.data().data();
  const double* gm = gamma.data().data();
  const double* bt = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = gm[j] * h + bt[j];
    }
  }
  return finish("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
                [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Record& r) {
                  Node& nx = *r.inputs[0];
                  Node& ng = *r.inputs[1];
                  Node& nb = *r.inputs[2];
                  const double* g = r.output->grad.data();
                  if (ng.requires_grad || nb.requires_grad) {
                    double* gg = ng.requires_grad ? ng.grad_buffer() : nullptr;
                    double* gb = nb.requires_grad ? nb.grad_buffer() : nullptr;
                    for (std::size_t row = 0; row < rows; ++row)
                      for (std::size_t j = 0; j < d; ++j) {
                        const std::size_t i = row * d + j;
                        if (gg) gg[j] += g[i] * xhat[i];
                        if (gb) gb[j] += g[i];
                      }
                  }
                  if (!nx.requires_grad) return;
                  double* gx = nx.grad_buffer();
                  const double* gm = ng.data.data();
                  for (std::size_t row = 0; row < rows; ++row) {
                    double m1 = 0.0;
                    double m2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      const std::size_t i = row * d + j;
                      const double dh = g[i] * gm[j];
                      m1 += dh;
                      m2 += dh * xhat[i];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                      const std::size_t i = row * d + j;
                      const double dh = g[i] * gm[j];
                      gx[i] += inv_std[row] * (dh - m1 - xhat[i] * m2);
                    }
                  }
                });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return finish("sum", {}, {total}, {&x}, [](Record& r) {
    Node& nx = *r.inputs[0];
    if (!nx.requires_grad) return;
    double* gx = nx.grad_buffer();
    const double g = r.output->grad[0];
    for (std::size_t i = 0; i < nx.data.size(); ++i) gx[i] += g;
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  const auto s = split_axis("sum_axis", x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const double* in = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t t = 0; t < s.len; ++t)
      for (std::size_t j = 0; j < s.inner; ++j)
        out[o * s.inner + j] += in[(o * s.len + t) * s.inner + j];
  return finish("sum_axis", std::move(out_shape), std::move(out), {&x}, [s](Record& r) {
    Node& nx = *r.inputs[0];
    if (!nx.requires_grad) return;
    double* gx = nx.grad_buffer();
    const double* g = r.output->grad.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t t = 0; t < s.len; ++t)
        for (std::size_t j = 0; j < s.inner; ++j)
          gx[(o * s.len + t) * s.inner + j] += g[o * s.inner + j];
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const auto len = split_axis("mean_axis", x.shape(), axis).len;
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(len));
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range");
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == ref[i];
    if (!ok) {
      throw DimensionError("concat: " + shape_string(s) + " incompatible with " +
                           shape_string(ref));
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  const auto split = split_axis("concat", ref, axis);
  Shape out_shape = ref;
  out_shape[axis] = total;
  std::vector<double> out(split.outer * total * split.inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const std::size_t chunk = lens[p] * split.inner;
    const double* in = parts[p].data().data();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(in + o * chunk, chunk, out.data() + o * total * split.inner + offset);
    }
    offset += chunk;
  }
  return finish_n("concat", std::move(out_shape), std::move(out), parts,
                  [lens, total, split](Record& r) {
                    const double* g = r.output->grad.data();
                    std::size_t offset = 0;
                    for (std::size_t p = 0; p < r.inputs.size(); ++p) {
                      const std::size_t chunk = lens[p] * split.inner;
                      Node& np = *r.inputs[p];
                      if (np.requires_grad) {
                        double* gp = np.grad_buffer();
                        for (std::size_t o = 0; o < split.outer; ++o) {
                          const double* src = g + o * total * split.inner + offset;
                          for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += src[i];
                        }
                      }
                      offset += chunk;
                    }
                  });
}

Tensor take(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& indices) {
  const auto s = split_axis("take", x.shape(), axis);
  if (indices.empty()) throw DimensionError("take: empty index list");
  for (auto i : indices) {
    if (i >= s.len) throw DimensionError("take: index " + std::to_string(i) + " out of range");
  }
  Shape out_shape = x.shape();
  out_shape[axis] = indices.size();
  const std::size_t k = indices.size();
  std::vector<double> out(s.outer * k * s.inner);
  const double* in = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t t = 0; t < k; ++t)
      std::copy_n(in + (o * s.len + indices[t]) * s.inner, s.inner,
                  out.data() + (o * k + t) * s.inner);
  return finish("take", std::move(out_shape), std::move(out), {&x}, [s, indices, k](Record& r) {
    Node& nx = *r.inputs[0];
    if (!nx.requires_grad) return;
    double* gx = nx.grad_buffer();
    const double* g = r.output->grad.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t t = 0; t < k; ++t)
        for (std::size_t j = 0; j < s.inner; ++j)
          gx[(o * s.len + indices[t]) * s.inner + j] += g[(o * k + t) * s.inner + j];
  });
}

Tensor weighted_average(const Tensor& s, const Tensor& w, double eps) {
  if (s.shape() != w.shape() || s.rank() < 1) {
    throw DimensionError("weighted_average: score/weight shapes differ, " +
                         shape_string(s.shape()) + " vs " + shape_string(w.shape()));
  }
  const std::size_t n = s.shape().back();
  const std::size_t rows = s.numel() / n;
  Shape out_shape(s.shape().begin(), s.shape().end() - 1);
  std::vector<double> out(rows);
  std::vector<double> denom(rows);
  std::vector<bool> guarded(rows);
  const double* ps = s.data().data();
  const double* pw = w.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += pw[r * n + i] * ps[r * n + i];
      den += pw[r * n + i];
    }
    guarded[r] = !(den > eps);
    denom[r] = guarded[r] ? eps : den;
    out[r] = num / denom[r];
  }
  return finish("weighted_average", std::move(out_shape), std::move(out), {&s, &w},
                [n, rows, denom = std::move(denom), guarded = std::move(guarded)](Record& r) {
                  Node& ns = *r.inputs[0];
                  Node& nw = *r.inputs[1];
                  const double* g = r.output->grad.data();
                  const double* q = r.output->data.data();
                  for (std::size_t row = 0; row < rows; ++row) {
                    const double scale = g[row] / denom[row];
                    if (ns.requires_grad) {
                      double* gs = ns.grad_buffer();
                      for (std::size_t i = 0; i < n; ++i) gs[row * n + i] += scale * nw.data[row * n + i];
                    }
                    if (nw.requires_grad) {
                      double* gw = nw.grad_buffer();
                      const double shift = guarded[row] ? 0.0 : q[row];
                      for (std::size_t i = 0; i < n; ++i)
                        gw[row * n + i] += scale * (ns.data[row * n + i] - shift);
                    }
                  }
                });
}

}  // namespace mediqa::nc
