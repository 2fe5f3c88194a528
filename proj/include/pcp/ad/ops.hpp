#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pcp/ad/tensor.hpp"

namespace pcp::ad {

namespace detail {

// Index maps from an output element to the contributing element of each
// operand under trailing-dimension broadcasting with size-1 expansion.
struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> ia, ib;
};

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// For each element of `out`, the flat index into a tensor of shape `in` that
// broadcasts to it.
inline std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  const std::size_t off = r - in.size();
  std::vector<std::size_t> in_stride(r, 0);
  std::size_t s = 1;
  for (std::size_t i = r; i-- > off;) {
    const std::size_t d = in[i - off];
    in_stride[i] = d == 1 ? 0 : s;
    s *= d;
  }
  const std::size_t n = numel(out);
  std::vector<std::size_t> idx(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t cur = 0;
  for (std::size_t k = 0; k < n; ++k) {
    idx[k] = cur;
    for (std::size_t i = r; i-- > 0;) {
      ++counter[i];
      cur += in_stride[i];
      if (counter[i] < out[i]) break;
      cur -= in_stride[i] * counter[i];
      counter[i] = 0;
    }
  }
  return idx;
}

inline BroadcastPlan plan(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  p.out = broadcast_shape(a, b);
  p.ia = broadcast_index(a, p.out);
  p.ib = broadcast_index(b, p.out);
  return p;
}

template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  check_inputs_finite(a, op);
  check_inputs_finite(b, op);
  auto p = std::make_shared<BroadcastPlan>(plan(a.shape(), b.shape()));
  const auto& A = a.data();
  const auto& B = b.data();
  const std::size_t n = numel(p->out);
  std::vector<double> out(n);
  if (p->same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(A[i], B[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(A[p->ia[i]], B[p->ib[i]]);
  }
  return make_result(op, p->out, std::move(out), {a, b}, [p, dfa, dfb](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const auto& g = self.grad;
    const auto& y = self.data;
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ia = p->same ? i : p->ia[i];
      const std::size_t ib = p->same ? i : p->ib[i];
      if (na.requires_grad) na.grad[ia] += g[i] * dfa(na.data[ia], nb.data[ib], y[i]);
      if (nb.requires_grad) nb.grad[ib] += g[i] * dfb(na.data[ia], nb.data[ib], y[i]);
    }
  });
}

template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
  check_inputs_finite(x, op);
  const auto& X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = f(X[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [df](Node& self) {
    Node& nx = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      nx.grad[i] += self.grad[i] * df(nx.data[i], self.data[i]);
    }
  });
}

inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

inline double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_value(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

}  // namespace detail

// ---- elementwise ---------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary(
      "scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary(
      "add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator*(double c, const Tensor& x) { return scale(x, c); }

inline Tensor square(const Tensor& x) {
  return detail::unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  return detail::unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor sqrt(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("sqrt: non-positive input");
  }
  return detail::unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

inline Tensor abs(const Tensor& x) {
  return detail::unary(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      "sigmoid", x, [](double v) { return detail::sigmoid_value(v); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor silu(const Tensor& x) {
  return detail::unary(
      "silu", x, [](double v) { return v * detail::sigmoid_value(v); },
      [](double v, double) {
        const double s = detail::sigmoid_value(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

inline Tensor softplus(const Tensor& x) {
  return detail::unary(
      "softplus", x, [](double v) { return detail::softplus_value(v); },
      [](double v, double) { return detail::sigmoid_value(v); });
}

// ---- reductions ----------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  detail::check_inputs_finite(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result("sum", {1}, {s}, {x}, [](Node& self) {
    Node& nx = *self.inputs[0];
    const double g = self.grad[0];
    for (double& v : nx.grad) v += g;
  });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

// Sums over one axis; the axis is removed unless keepdim.
inline Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = false) {
  if (axis >= x.rank()) throw ShapeError("sum_axis: axis out of range for " + shape_str(x.shape()));
  detail::check_inputs_finite(x, "sum_axis");
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  std::vector<double> out(outer * inner, 0.0);
  const auto& X = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < len; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += X[(o * len + k) * inner + i];
  Shape os = s;
  if (keepdim) {
    os[axis] = 1;
  } else {
    os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
    if (os.empty()) os = {1};
  }
  return detail::make_result("sum_axis", os, std::move(out), {x},
                             [outer, inner, len](Node& self) {
                               Node& nx = *self.inputs[0];
                               for (std::size_t o = 0; o < outer; ++o)
                                 for (std::size_t k = 0; k < len; ++k)
                                   for (std::size_t i = 0; i < inner; ++i)
                                     nx.grad[(o * len + k) * inner + i] += self.grad[o * inner + i];
                             });
}

inline Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim = false) {
  return scale(sum_axis(x, axis, keepdim), 1.0 / static_cast<double>(x.dim(axis)));
}

// ---- shape manipulation --------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return detail::make_result("reshape", std::move(shape), x.data(), {x}, [](Node& self) {
    Node& nx = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx.grad[i] += self.grad[i];
  });
}

inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& s = x.shape();
  if (axes.size() != s.size()) throw ShapeError("permute: axis count mismatch for " + shape_str(s));
  Shape os(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) os[i] = s.at(axes[i]);
  const auto in_st = detail::strides_of(s);
  const std::size_t n = x.size();
  auto map = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(os.size(), 0);
  std::size_t cur = 0;
  for (std::size_t k = 0; k < n; ++k) {
    (*map)[k] = cur;
    for (std::size_t i = os.size(); i-- > 0;) {
      ++counter[i];
      cur += in_st[axes[i]];
      if (counter[i] < os[i]) break;
      cur -= in_st[axes[i]] * counter[i];
      counter[i] = 0;
    }
  }
  std::vector<double> out(n);
  const auto& X = x.data();
  for (std::size_t k = 0; k < n; ++k) out[k] = X[(*map)[k]];
  return detail::make_result("permute", os, std::move(out), {x}, [map](Node& self) {
    Node& nx = *self.inputs[0];
    for (std::size_t k = 0; k < self.grad.size(); ++k) nx.grad[(*map)[k]] += self.grad[k];
  });
}

inline Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose expects rank 2, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  const auto& s = x.shape();
  if (axis >= s.size() || start + len > s[axis] || len == 0) {
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(len) +
                     ") on axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t full = s[axis];
  Shape os = s;
  os[axis] = len;
  std::vector<double> out(outer * len * inner);
  const auto& X = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(X.begin() + static_cast<std::ptrdiff_t>((o * full + start) * inner), len * inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * len * inner));
  return detail::make_result("slice", os, std::move(out), {x},
                             [outer, inner, full, start, len](Node& self) {
                               Node& nx = *self.inputs[0];
                               for (std::size_t o = 0; o < outer; ++o)
                                 for (std::size_t i = 0; i < len * inner; ++i)
                                   nx.grad[(o * full + start) * inner + i] +=
                                       self.grad[o * len * inner + i];
                             });
}

inline Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_str(s0));
  std::size_t total = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == s0[i];
    if (!ok) throw ShapeError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(s0));
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape os = s0;
  os[axis] = total;
  std::vector<double> out(outer * total * inner);
  auto lens = std::make_shared<std::vector<std::size_t>>();
  std::size_t off = 0;
  for (const auto& t : xs) {
    const std::size_t len = t.dim(axis);
    lens->push_back(len);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(o * len * inner), len * inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + off) * inner));
    off += len;
  }
  return detail::make_result("concat", os, std::move(out), xs,
                             [lens, outer, inner, total](Node& self) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                                 Node& nx = *self.inputs[k];
                                 const std::size_t len = (*lens)[k];
                                 if (nx.requires_grad) {
                                   for (std::size_t o = 0; o < outer; ++o)
                                     for (std::size_t i = 0; i < len * inner; ++i)
                                       nx.grad[o * len * inner + i] +=
                                           self.grad[(o * total + off) * inner + i];
                                 }
                                 off += len;
                               }
                             });
}

inline Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  const Shape out = detail::broadcast_shape(x.shape(), shape);
  if (out != shape) {
    throw ShapeError("cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(detail::broadcast_index(x.shape(), shape));
  std::vector<double> data(idx->size());
  for (std::size_t i = 0; i < idx->size(); ++i) data[i] = x.data()[(*idx)[i]];
  return detail::make_result("broadcast", shape, std::move(data), {x}, [idx](Node& self) {
    Node& nx = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx.grad[(*idx)[i]] += self.grad[i];
  });
}

// ---- linear algebra --------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  detail::check_inputs_finite(a, "matmul");
  detail::check_inputs_finite(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return detail::make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const double* G = self.grad.data();
    if (na.requires_grad) {
      // dA = G B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* brow = nb.data.data() + p * n;
          const double* grow = G + i * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          na.grad[i * k + p] += s;
        }
    }
    if (nb.requires_grad) {
      // dB = A^T G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = na.data[i * k + p];
          if (av == 0.0) continue;
          double* gb = nb.grad.data() + p * n;
          const double* grow = G + i * n;
          for (std::size_t j = 0; j < n; ++j) gb[j] += av * grow[j];
        }
    }
  });
}

// Row-wise softmax over the last axis.
inline Tensor softmax(const Tensor& x) {
  detail::check_inputs_finite(x, "softmax");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  std::vector<double> out(x.size());
  const auto& X = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, X[r * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out[r * n + j] = std::exp(X[r * n + j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= z;
  }
  return detail::make_result("softmax", x.shape(), std::move(out), {x}, [rows, n](Node& self) {
    Node& nx = *self.inputs[0];
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[r * n + j] * self.data[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        nx.grad[r * n + j] += self.data[r * n + j] * (self.grad[r * n + j] - dot);
    }
  });
}

// ---- convolutions ----------------------------------------------------------

// Zero-padded "same" convolution of every row (last axis) with a fixed
// kernel, centred at (K-1)/2. Linear in x; the kernel carries no gradient.
inline Tensor conv1d_fixed(const Tensor& x, const std::vector<double>& kernel) {
  if (kernel.empty()) throw ShapeError("conv1d_fixed: empty kernel");
  detail::check_inputs_finite(x, "conv1d");
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.size() / len;
  const std::size_t K = kernel.size();
  const std::ptrdiff_t c = static_cast<std::ptrdiff_t>((K - 1) / 2);
  auto k = std::make_shared<std::vector<double>>(kernel);
  std::vector<double> out(x.size(), 0.0);
  const auto& X = x.data();
  const auto L = static_cast<std::ptrdiff_t>(len);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::ptrdiff_t t = 0; t < L; ++t) {
      double s = 0.0;
      for (std::size_t j = 0; j < K; ++j) {
        const std::ptrdiff_t src = t + c - static_cast<std::ptrdiff_t>(j);
        if (src >= 0 && src < L) s += kernel[j] * X[r * len + static_cast<std::size_t>(src)];
      }
      out[r * len + static_cast<std::size_t>(t)] = s;
    }
  return detail::make_result("conv1d", x.shape(), std::move(out), {x}, [k, rows, len, c](Node& self) {
    Node& nx = *self.inputs[0];
    const auto L = static_cast<std::ptrdiff_t>(len);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::ptrdiff_t t = 0; t < L; ++t) {
        const double g = self.grad[r * len + static_cast<std::size_t>(t)];
        for (std::size_t j = 0; j < k->size(); ++j) {
          const std::ptrdiff_t src = t + c - static_cast<std::ptrdiff_t>(j);
          if (src >= 0 && src < L) nx.grad[r * len + static_cast<std::size_t>(src)] += (*k)[j] * g;
        }
      }
  });
}

// Per-channel temporal convolution: x [T, C], w [K, C] with odd K, centred,
// zero padded. y[t, c] = sum_j w[j, c] * x[t + j - (K-1)/2, c].
inline Tensor depthwise_conv_time(const Tensor& x, const Tensor& w) {
  if (x.rank() != 2 || w.rank() != 2 || w.dim(1) != x.dim(1) || w.dim(0) % 2 == 0) {
    throw ShapeError("depthwise_conv_time: shapes " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  detail::check_inputs_finite(x, "depthwise_conv_time");
  detail::check_inputs_finite(w, "depthwise_conv_time");
  const std::size_t T = x.dim(0), C = x.dim(1), K = w.dim(0);
  const auto half = static_cast<std::ptrdiff_t>(K / 2);
  std::vector<double> out(T * C, 0.0);
  const auto& X = x.data();
  const auto& W = w.data();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < K; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      const double* xr = X.data() + static_cast<std::size_t>(src) * C;
      const double* wr = W.data() + j * C;
      double* orow = out.data() + t * C;
      for (std::size_t ch = 0; ch < C; ++ch) orow[ch] += wr[ch] * xr[ch];
    }
  return detail::make_result("depthwise_conv_time", {T, C}, std::move(out), {x, w},
                             [T, C, K, half](Node& self) {
                               Node& nx = *self.inputs[0];
                               Node& nw = *self.inputs[1];
                               for (std::size_t t = 0; t < T; ++t)
                                 for (std::size_t j = 0; j < K; ++j) {
                                   const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - half;
                                   if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
                                   const std::size_t s = static_cast<std::size_t>(src);
                                   for (std::size_t ch = 0; ch < C; ++ch) {
                                     const double g = self.grad[t * C + ch];
                                     if (nx.requires_grad) nx.grad[s * C + ch] += nw.data[j * C + ch] * g;
                                     if (nw.requires_grad) nw.grad[j * C + ch] += nx.data[s * C + ch] * g;
                                   }
                                 }
                             });
}

// Spatio-temporal convolution, stride 1, zero "same" padding.
// x [Cin, T, H, W], w [Cout, Cin, kt, kh, kw] (odd extents), b [Cout].
inline Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 4 || w.rank() != 5 || w.dim(1) != x.dim(0) || b.size() != w.dim(0)) {
    throw ShapeError("conv3d: shapes " + shape_str(x.shape()) + ", " + shape_str(w.shape()) +
                     ", " + shape_str(b.shape()));
  }
  const std::size_t Ci = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = w.dim(0), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  const auto pt = static_cast<std::ptrdiff_t>(kt / 2), ph = static_cast<std::ptrdiff_t>(kh / 2),
             pw = static_cast<std::ptrdiff_t>(kw / 2);
  detail::check_inputs_finite(x, "conv3d");
  detail::check_inputs_finite(w, "conv3d");
  const std::size_t vol = T * H * W;
  std::vector<double> out(Co * vol);
  const auto& X = x.data();
  const auto& Wt = w.data();
  // Visits each (out voxel, weight tap, in voxel) triple once.
  auto visit = [=](auto&& f) {
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t ci = 0; ci < Ci; ++ci)
        for (std::size_t a = 0; a < kt; ++a)
          for (std::size_t bb = 0; bb < kh; ++bb)
            for (std::size_t c = 0; c < kw; ++c) {
              const std::size_t widx = (((co * Ci + ci) * kt + a) * kh + bb) * kw + c;
              const std::ptrdiff_t dt = static_cast<std::ptrdiff_t>(a) - pt;
              const std::ptrdiff_t dh = static_cast<std::ptrdiff_t>(bb) - ph;
              const std::ptrdiff_t dw = static_cast<std::ptrdiff_t>(c) - pw;
              const std::size_t t0 = dt < 0 ? static_cast<std::size_t>(-dt) : 0;
              const std::size_t t1 = dt > 0 ? T - std::min(T, static_cast<std::size_t>(dt)) : T;
              const std::size_t h0 = dh < 0 ? static_cast<std::size_t>(-dh) : 0;
              const std::size_t h1 = dh > 0 ? H - std::min(H, static_cast<std::size_t>(dh)) : H;
              const std::size_t w0 = dw < 0 ? static_cast<std::size_t>(-dw) : 0;
              const std::size_t w1 = dw > 0 ? W - std::min(W, static_cast<std::size_t>(dw)) : W;
              for (std::size_t t = t0; t < t1; ++t)
                for (std::size_t h = h0; h < h1; ++h) {
                  const std::size_t obase = co * vol + (t * H + h) * W;
                  const std::size_t ibase =
                      ci * vol + ((t + static_cast<std::size_t>(dt)) * H + h + static_cast<std::size_t>(dh)) * W +
                      static_cast<std::size_t>(dw);
                  f(widx, obase, ibase, w0, w1);
                }
            }
  };
  for (std::size_t co = 0; co < Co; ++co)
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(co * vol), vol, b.data()[co]);
  visit([&](std::size_t widx, std::size_t ob, std::size_t ib, std::size_t w0, std::size_t w1) {
    const double wv = Wt[widx];
    for (std::size_t q = w0; q < w1; ++q) out[ob + q] += wv * X[ib + q];
  });
  return detail::make_result("conv3d", {Co, T, H, W}, std::move(out), {x, w, b},
                             [visit, Co, vol](Node& self) {
                               Node& nx = *self.inputs[0];
                               Node& nw = *self.inputs[1];
                               Node& nb = *self.inputs[2];
                               const auto& G = self.grad;
                               if (nb.requires_grad)
                                 for (std::size_t co = 0; co < Co; ++co)
                                   for (std::size_t v = 0; v < vol; ++v) nb.grad[co] += G[co * vol + v];
                               visit([&](std::size_t widx, std::size_t ob, std::size_t ib,
                                         std::size_t w0, std::size_t w1) {
                                 if (nw.requires_grad) {
                                   double s = 0.0;
                                   for (std::size_t q = w0; q < w1; ++q) s += G[ob + q] * nx.data[ib + q];
                                   nw.grad[widx] += s;
                                 }
                                 if (nx.requires_grad) {
                                   const double wv = nw.data[widx];
                                   for (std::size_t q = w0; q < w1; ++q) nx.grad[ib + q] += wv * G[ob + q];
                                 }
                               });
                             });
}

// Batched 2-D convolution, stride 1, zero "same" padding.
// x [B, Cin, H, W], w [Cout, Cin, kh, kw], b [Cout].
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 4 || w.rank() != 4 || w.dim(1) != x.dim(1) || b.size() != w.dim(0)) {
    throw ShapeError("conv2d: shapes " + shape_str(x.shape()) + ", " + shape_str(w.shape()) +
                     ", " + shape_str(b.shape()));
  }
  const std::size_t Ci = x.dim(1);
  // A batch of 2-D images is a 3-D volume whose depth kernel has extent 1.
  Tensor xv = permute(x, {1, 0, 2, 3});  // [Ci, B, H, W]
  Tensor wv = reshape(w, {w.dim(0), Ci, 1, w.dim(2), w.dim(3)});
  Tensor y = conv3d(xv, wv, b);  // [Co, B, H, W]
  return permute(y, {1, 0, 2, 3});
}

// Non-overlapping k x k average pooling of x [B, C, H, W].
inline Tensor avg_pool2d(const Tensor& x, std::size_t k) {
  if (x.rank() != 4 || x.dim(2) % k || x.dim(3) % k) {
    throw ShapeError("avg_pool2d: shape " + shape_str(x.shape()) + " not divisible by " +
                     std::to_string(k));
  }
  const std::size_t BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t h = H / k, w = W / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  std::vector<double> out(BC * h * w, 0.0);
  const auto& X = x.data();
  for (std::size_t p = 0; p < BC; ++p)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) out[(p * h + i / k) * w + j / k] += inv * X[(p * H + i) * W + j];
  return detail::make_result("avg_pool2d", {x.dim(0), x.dim(1), h, w}, std::move(out), {x},
                             [BC, H, W, h, w, k, inv](Node& self) {
                               Node& nx = *self.inputs[0];
                               for (std::size_t p = 0; p < BC; ++p)
                                 for (std::size_t i = 0; i < H; ++i)
                                   for (std::size_t j = 0; j < W; ++j)
                                     nx.grad[(p * H + i) * W + j] +=
                                         inv * self.grad[(p * h + i / k) * w + j / k];
                             });
}

// Nearest-neighbour k x upsampling of x [B, C, H, W].
inline Tensor upsample_nearest2d(const Tensor& x, std::size_t k) {
  if (x.rank() != 4) throw ShapeError("upsample_nearest2d: shape " + shape_str(x.shape()));
  const std::size_t BC = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t H = h * k, W = w * k;
  std::vector<double> out(BC * H * W);
  const auto& X = x.data();
  for (std::size_t p = 0; p < BC; ++p)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) out[(p * H + i) * W + j] = X[(p * h + i / k) * w + j / k];
  return detail::make_result("upsample_nearest2d", {x.dim(0), x.dim(1), H, W}, std::move(out), {x},
                             [BC, H, W, h, w, k](Node& self) {
                               Node& nx = *self.inputs[0];
                               for (std::size_t p = 0; p < BC; ++p)
                                 for (std::size_t i = 0; i < H; ++i)
                                   for (std::size_t j = 0; j < W; ++j)
                                     nx.grad[(p * h + i / k) * w + j / k] += self.grad[(p * H + i) * W + j];
                             });
}

// ---- recurrence ------------------------------------------------------------

// Diagonal linear recurrence h[t] = decay[t] * h[t-1] + drive[t], h[-1] = 0,
// over inputs of shape [T, N].
inline Tensor scan(const Tensor& decay, const Tensor& drive) {
  if (decay.shape() != drive.shape() || decay.rank() != 2) {
    throw ShapeError("scan: shapes " + shape_str(decay.shape()) + " and " + shape_str(drive.shape()));
  }
  detail::check_inputs_finite(decay, "scan");
  detail::check_inputs_finite(drive, "scan");
  const std::size_t T = decay.dim(0), N = decay.dim(1);
  const auto& A = decay.data();
  const auto& B = drive.data();
  std::vector<double> h(T * N);
  for (std::size_t n = 0; n < N; ++n) h[n] = B[n];
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t n = 0; n < N; ++n) h[t * N + n] = A[t * N + n] * h[(t - 1) * N + n] + B[t * N + n];
  return detail::make_result("scan", {T, N}, std::move(h), {decay, drive}, [T, N](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    std::vector<double> carry(N, 0.0);  // dL/dh[t] including future steps
    for (std::size_t t = T; t-- > 0;) {
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t i = t * N + n;
        const double g = self.grad[i] + carry[n];
        if (nb.requires_grad) nb.grad[i] += g;
        if (na.requires_grad && t > 0) na.grad[i] += g * self.data[i - N];
        carry[n] = g * na.data[i];
      }
    }
  });
}

// ---- generic fixed linear map ----------------------------------------------

using LinearFn = std::function<void(std::span<const double>, std::span<double>)>;

// y = L(x) for a fixed linear operator given by its forward map and adjoint.
// Both callbacks write into a zero-initialised output buffer.
inline Tensor linear_map(const char* op, const Tensor& x, Shape out_shape, LinearFn forward,
                         LinearFn adjoint) {
  detail::check_inputs_finite(x, op);
  std::vector<double> out(numel(out_shape), 0.0);
  forward(x.data(), out);
  return detail::make_result(op, std::move(out_shape), std::move(out), {x},
                             [adjoint = std::move(adjoint)](Node& self) {
                               Node& nx = *self.inputs[0];
                               std::vector<double> tmp(nx.data.size(), 0.0);
                               adjoint(self.grad, tmp);
                               for (std::size_t i = 0; i < tmp.size(); ++i) nx.grad[i] += tmp[i];
                             });
}

}  // namespace pcp::ad
