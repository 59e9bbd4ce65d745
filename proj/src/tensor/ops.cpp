// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace moeasr {

namespace {

thread_local std::uint64_t g_macs = 0;

using detail::Node;

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (!x.defined() || x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         (x.defined() ? shape_to_string(x.shape()) : std::string("undefined")));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

// Grad buffer of parent i when it wants one, else nullptr.
double* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

const double* parent_data(Node& self, std::size_t i) { return self.parents[i]->data.data(); }

// C[m×n] += A[m×k]·B[k×n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m×n] += A[m×k]·B[n×k]ᵀ
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[k×n] += A[m×k]ᵀ·B[m×n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D dfdx_from_xy) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [dfdx_from_xy](Node& self) {
    double* gx = parent_grad(self, 0);
    if (!gx) return;
    const double* xd = parent_data(self, 0);
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      gx[i] += self.grad[i] * dfdx_from_xy(xd[i], self.data[i]);
    }
  });
}

}  // namespace

std::uint64_t MacCounter::value() { return g_macs; }
void MacCounter::reset() { g_macs = 0; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
  g_macs += m * k * n;
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    if (double* ga = parent_grad(self, 0)) gemm_nt(m, n, k, self.grad.data(), parent_data(self, 1), ga);
    if (double* gb = parent_grad(self, 1)) gemm_tn(m, k, n, parent_data(self, 0), self.grad.data(), gb);
  });
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_bt");
  require_rank(b, 2, "matmul_bt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_bt: inner extents differ, " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(m, k, n, a.data().data(), b.data().data(), out.data());
  g_macs += m * k * n;
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    // dA = dY·B, dB = dYᵀ·A
    if (double* ga = parent_grad(self, 0)) gemm_nn(m, n, k, self.grad.data(), parent_data(self, 1), ga);
    if (double* gb = parent_grad(self, 1)) gemm_tn(m, n, k, self.grad.data(), parent_data(self, 0), gb);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k) {
    throw DimensionError("linear: input " + shape_to_string(x.shape()) + " vs weight " +
                         shape_to_string(w.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != n)) {
    throw DimensionError("linear: bias " + shape_to_string(bias.shape()) + " vs weight " +
                         shape_to_string(w.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  if (has_bias) {
    auto bd = bias.data();
    for (std::size_t i = 0; i < m; ++i) std::copy(bd.begin(), bd.end(), out.begin() + i * n);
  }
  gemm_nn(m, k, n, x.data().data(), w.data().data(), out.data());
  g_macs += m * k * n;
  std::vector<Tensor> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return Tensor::make_result({m, n}, std::move(out), std::move(parents),
                             [m, k, n, has_bias](Node& self) {
    if (double* gx = parent_grad(self, 0)) gemm_nt(m, n, k, self.grad.data(), parent_data(self, 1), gx);
    if (double* gw = parent_grad(self, 1)) gemm_tn(m, k, n, parent_data(self, 0), self.grad.data(), gw);
    if (has_bias) {
      if (double* gb = parent_grad(self, 2)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = parent_grad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const double* ad = parent_data(self, 0);
    const double* bd = parent_data(self, 1);
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bd[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * ad[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_rank(x, 2, "add_row");
  require_rank(row, 1, "add_row");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (row.dim(0) != n) {
    throw DimensionError("add_row: " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(row.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto rd = row.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += rd[j];
  return Tensor::make_result(x.shape(), std::move(out), {x, row}, [m, n](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
  });
}

Tensor mul_rows(const Tensor& x, const Tensor& row_scale) {
  require_rank(x, 2, "mul_rows");
  require_rank(row_scale, 1, "mul_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (row_scale.dim(0) != m) {
    throw DimensionError("mul_rows: " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(row_scale.shape()));
  }
  std::vector<double> out(m * n);
  auto xd = x.data(), sd = row_scale.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] * sd[i];
  return Tensor::make_result(x.shape(), std::move(out), {x, row_scale}, [m, n](Node& self) {
    const double* xd = parent_data(self, 0);
    const double* sd = parent_data(self, 1);
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j] * sd[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += self.grad[i * n + j] * xd[i * n + j];
        g[i] += acc;
      }
  });
}

Tensor mul_const(const Tensor& x, std::span<const double> factors) {
  if (factors.size() != x.numel()) {
    throw DimensionError("mul_const: " + std::to_string(factors.size()) + " factors for " +
                         shape_to_string(x.shape()));
  }
  std::vector<double> f(factors.begin(), factors.end());
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * f[i];
  return Tensor::make_result(x.shape(), std::move(out), {x}, [f = std::move(f)](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * f[i];
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (!x.defined() || axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         (x.defined() ? shape_to_string(x.shape()) : std::string("undefined")));
  }
  const auto& shape = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xd[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        out[base + k * inner] = std::exp(xd[base + k * inner] - mx);
        z += out[base + k * inner];
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  }
  return Tensor::make_result(shape, std::move(out), {x}, [outer, inner, len](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k)
          dot += self.grad[base + k * inner] * self.data[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          g[idx] += self.data[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  if (!x.defined() || x.rank() == 0) throw DimensionError("log_softmax: empty tensor");
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * len;
    double mx = *std::max_element(row, row + len);
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) z += std::exp(row[k] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t k = 0; k < len; ++k) out[r * len + k] = row[k] - lse;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, len](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t k = 0; k < len; ++k) gs += self.grad[r * len + k];
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t idx = r * len + k;
        g[idx] += self.grad[idx] - std::exp(self.data[idx]) * gs;
      }
    }
  });
}

Tensor masked_softmax(const Tensor& scores, std::span<const std::uint8_t> allowed) {
  require_rank(scores, 2, "masked_softmax");
  const std::size_t rows = scores.dim(0), cols = scores.dim(1);
  if (allowed.size() != rows * cols) {
    throw DimensionError("masked_softmax: mask of " + std::to_string(allowed.size()) +
                         " entries for scores " + shape_to_string(scores.shape()));
  }
  std::vector<double> out(rows * cols, 0.0);
  auto sd = scores.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (allowed[r * cols + c]) mx = std::max(mx, sd[r * cols + c]);
    if (mx == -std::numeric_limits<double>::infinity()) continue;
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!allowed[r * cols + c]) continue;
      out[r * cols + c] = std::exp(sd[r * cols + c] - mx);
      z += out[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= z;
  }
  return Tensor::make_result(scores.shape(), std::move(out), {scores}, [rows, cols](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += self.grad[r * cols + c] * self.data[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t idx = r * cols + c;
        g[idx] += self.data[idx] * (self.grad[idx] - dot);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!x.defined() || x.rank() == 0) throw DimensionError("layer_norm: empty input");
  const std::size_t d = x.shape().back();
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d) {
    throw DimensionError("layer_norm: gain " + shape_to_string(gain.shape()) + " / bias " +
                         shape_to_string(bias.shape()) + " vs input " +
                         shape_to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(rows);
  auto xd = x.data(), gd = gain.data(), bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t k = 0; k < d; ++k) mu += row[k];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t k = 0; k < d; ++k) var += (row[k] - mu) * (row[k] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t k = 0; k < d; ++k) {
      xhat[r * d + k] = (row[k] - mu) * rstd[r];
      out[r * d + k] = xhat[r * d + k] * gd[k] + bd[k];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const double* gd = parent_data(self, 1);
        double* gx = parent_grad(self, 0);
        double* gg = parent_grad(self, 1);
        double* gb = parent_grad(self, 2);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* dy = self.grad.data() + r * d;
          const double* xh = xhat.data() + r * d;
          if (gg)
            for (std::size_t k = 0; k < d; ++k) gg[k] += dy[k] * xh[k];
          if (gb)
            for (std::size_t k = 0; k < d; ++k) gb[k] += dy[k];
          if (gx) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
              const double dxh = dy[k] * gd[k];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[k];
            }
            mean_dxh *= inv_d;
            mean_dxh_xh *= inv_d;
            for (std::size_t k = 0; k < d; ++k) {
              const double dxh = dy[k] * gd[k];
              gx[r * d + k] += rstd[r] * (dxh - mean_dxh - xh[k] * mean_dxh_xh);
            }
          }
        }
      });
}

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw ParameterError("conv2d: stride must be positive");
  if (extent + 2 < kernel) {
    throw DimensionError("conv2d: padded extent " + std::to_string(extent + 2) +
                         " smaller than kernel " + std::to_string(kernel));
  }
  return (extent + 2 - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride) {
  require_rank(x, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != cin) {
    throw DimensionError("conv2d: kernels " + shape_to_string(kernels.shape()) + " vs input " +
                         shape_to_string(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv2d: bias " + shape_to_string(bias.shape()) + " for " +
                         std::to_string(cout) + " output channels");
  }
  const std::size_t ho = conv_output_extent(h, kh, stride);
  const std::size_t wo = conv_output_extent(w, kw, stride);
  constexpr std::ptrdiff_t pad = 1;

  // Visits (output index, input index, kernel index) triples in a fixed order.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t i = 0; i < ho; ++i)
          for (std::size_t u = 0; u < kh; ++u) {
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) - pad;
            if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t j = 0; j < wo; ++j)
              for (std::size_t v = 0; v < kw; ++v) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(j * stride + v) - pad;
                if (s < 0 || s >= static_cast<std::ptrdiff_t>(w)) continue;
                fn((o * ho + i) * wo + j, (c * h + static_cast<std::size_t>(r)) * w + static_cast<std::size_t>(s),
                   ((o * cin + c) * kh + u) * kw + v);
              }
          }
  };

  std::vector<double> out(cout * ho * wo, 0.0);
  if (has_bias) {
    auto bd = bias.data();
    for (std::size_t o = 0; o < cout; ++o)
      std::fill(out.begin() + o * ho * wo, out.begin() + (o + 1) * ho * wo, bd[o]);
  }
  auto xd = x.data();
  auto kd = kernels.data();
  for_each_tap([&](std::size_t yo, std::size_t xi, std::size_t ki) { out[yo] += kd[ki] * xd[xi]; });
  g_macs += cout * cin * ho * wo * kh * kw;

  std::vector<Tensor> parents{x, kernels};
  if (has_bias) parents.push_back(bias);
  return Tensor::make_result({cout, ho, wo}, std::move(out), std::move(parents),
                             [for_each_tap, has_bias, cout, ho, wo](Node& self) {
    const double* xd = parent_data(self, 0);
    const double* kd = parent_data(self, 1);
    double* gx = parent_grad(self, 0);
    double* gk = parent_grad(self, 1);
    const double* dy = self.grad.data();
    if (gx || gk) {
      for_each_tap([&](std::size_t yo, std::size_t xi, std::size_t ki) {
        if (gx) gx[xi] += kd[ki] * dy[yo];
        if (gk) gk[ki] += xd[xi] * dy[yo];
      });
    }
    if (has_bias) {
      if (double* gb = parent_grad(self, 2))
        for (std::size_t o = 0; o < cout; ++o)
          for (std::size_t k = 0; k < ho * wo; ++k) gb[o] += dy[o * ho * wo + k];
    }
  });
}

Tensor dropout(const Tensor& x, double p, RngStream& rng, bool training) {
  if (!(p >= 0.0) || p >= 1.0) {
    throw ParameterError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() >= p ? keep_scale : 0.0;
  return mul_const(x, mask);
}

LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmWeights& w) {
  require_rank(x, 2, "lstm_cell input");
  require_rank(prev.h, 2, "lstm_cell h");
  const std::size_t hidden = prev.h.dim(1);
  if (w.input.rank() != 2 || w.input.dim(0) != x.dim(1) || w.input.dim(1) != 4 * hidden ||
      w.hidden.rank() != 2 || w.hidden.dim(0) != hidden || w.hidden.dim(1) != 4 * hidden ||
      prev.c.shape() != prev.h.shape() || prev.h.dim(0) != x.dim(0)) {
    throw DimensionError("lstm_cell: x " + shape_to_string(x.shape()) + ", h " +
                         shape_to_string(prev.h.shape()) + ", W_x " +
                         shape_to_string(w.input.shape()) + ", W_h " +
                         shape_to_string(w.hidden.shape()));
  }
  Tensor gates = add(linear(x, w.input, w.bias), matmul(prev.h, w.hidden));
  Tensor i = sigmoid(slice_cols(gates, 0, hidden));
  Tensor f = sigmoid(slice_cols(gates, hidden, 2 * hidden));
  Tensor g = tanh(slice_cols(gates, 2 * hidden, 3 * hidden));
  Tensor o = sigmoid(slice_cols(gates, 3 * hidden, 4 * hidden));
  Tensor c = add(mul(f, prev.c), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " to " +
                         shape_to_string(shape));
  }
  return Tensor::make_result(shape, x.to_vector(), {x}, [](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor swap_leading_axes(const Tensor& x) {
  require_rank(x, 3, "swap_leading_axes");
  const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2);
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      std::copy(xd.begin() + (i * b + j) * c, xd.begin() + (i * b + j + 1) * c,
                out.begin() + (j * a + i) * c);
  return Tensor::make_result({b, a, c}, std::move(out), {x}, [a, b, c](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
          for (std::size_t k = 0; k < c; ++k) g[(i * b + j) * c + k] += self.grad[(j * a + i) * c + k];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_rows");
  if (begin >= end || end > x.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") of " + shape_to_string(x.shape()));
  }
  const std::size_t n = x.dim(1);
  auto xd = x.data();
  std::vector<double> out(xd.begin() + begin * n, xd.begin() + end * n);
  return Tensor::make_result({end - begin, n}, std::move(out), {x}, [begin, n](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  if (begin >= end || end > x.dim(1)) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") of " + shape_to_string(x.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1), w = end - begin;
  auto xd = x.data();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy(xd.begin() + i * n + begin, xd.begin() + i * n + end, out.begin() + i * w);
  return Tensor::make_result({m, w}, std::move(out), {x}, [m, n, w, begin](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != n) {
      throw DimensionError("concat_rows: " + shape_to_string(p.shape()) + " vs width " +
                           std::to_string(n));
    }
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * n);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return Tensor::make_result({rows, n}, std::move(out), std::move(parents),
                             [offsets = std::move(offsets)](Node& self) {
    for (std::size_t p = 0; p < offsets.size(); ++p) {
      if (double* g = parent_grad(self, p)) {
        const std::size_t len = self.parents[p]->data.size();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offsets[p] + i];
      }
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].dim(0);
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) {
      throw DimensionError("concat_cols: " + shape_to_string(p.shape()) + " vs height " +
                           std::to_string(m));
    }
    offsets.push_back(cols);
    cols += p.dim(1);
  }
  std::vector<double> out(m * cols);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const std::size_t w = parts[p].dim(1);
    auto pd = parts[p].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy(pd.begin() + i * w, pd.begin() + (i + 1) * w, out.begin() + i * cols + offsets[p]);
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return Tensor::make_result({m, cols}, std::move(out), std::move(parents),
                             [m, cols, offsets = std::move(offsets)](Node& self) {
    for (std::size_t p = 0; p < offsets.size(); ++p) {
      if (double* g = parent_grad(self, p)) {
        const std::size_t w = self.parents[p]->shape[1];
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * cols + offsets[p] + j];
      }
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "gather_rows");
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * n);
  auto xd = x.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= m) {
      throw DimensionError("gather_rows: row " + std::to_string(idx[i]) + " of " +
                           shape_to_string(x.shape()));
    }
    std::copy(xd.begin() + idx[i] * n, xd.begin() + (idx[i] + 1) * n, out.begin() + i * n);
  }
  const std::size_t count = idx.size();
  return Tensor::make_result({count, n}, std::move(out), {x}, [n, idx = std::move(idx)](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) g[idx[i] * n + j] += self.grad[i * n + j];
  });
}

Tensor scatter_rows(const Tensor& src, std::span<const std::size_t> rows, std::size_t num_rows) {
  require_rank(src, 2, "scatter_rows");
  if (rows.size() != src.dim(0)) {
    throw DimensionError("scatter_rows: " + std::to_string(rows.size()) + " indices for " +
                         shape_to_string(src.shape()));
  }
  const std::size_t n = src.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(num_rows * n, 0.0);
  auto sd = src.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= num_rows) {
      throw DimensionError("scatter_rows: row " + std::to_string(idx[i]) + " >= " +
                           std::to_string(num_rows));
    }
    for (std::size_t j = 0; j < n; ++j) out[idx[i] * n + j] += sd[i * n + j];
  }
  return Tensor::make_result({num_rows, n}, std::move(out), {src},
                             [n, idx = std::move(idx)](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[idx[i] * n + j];
  });
}

Tensor gather_elements(const Tensor& x, std::span<const std::size_t> rows,
                       std::span<const std::size_t> cols) {
  require_rank(x, 2, "gather_elements");
  if (rows.size() != cols.size() || rows.empty()) {
    throw DimensionError("gather_elements: index lists must be equal-length and non-empty");
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<std::size_t> flat(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m || cols[i] >= n) {
      throw DimensionError("gather_elements: (" + std::to_string(rows[i]) + ", " +
                           std::to_string(cols[i]) + ") outside " + shape_to_string(x.shape()));
    }
    flat[i] = rows[i] * n + cols[i];
  }
  std::vector<double> out(flat.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < flat.size(); ++i) out[i] = xd[flat[i]];
  const std::size_t count = flat.size();
  return Tensor::make_result({count}, std::move(out), {x}, [flat = std::move(flat)](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < flat.size(); ++i) g[flat[i]] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_result({1}, {acc}, {x}, [](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      const std::size_t len = self.parents[0]->data.size();
      for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(n, 0.0);
  auto xd = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xd[i * n + j];
  const double inv = 1.0 / static_cast<double>(m);
  for (auto& v : out) v *= inv;
  return Tensor::make_result({n}, std::move(out), {x}, [m, n, inv](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j] * inv;
  });
}

Tensor dot_const(const Tensor& x, std::span<const double> weights) {
  if (weights.size() != x.numel()) {
    throw DimensionError("dot_const: " + std::to_string(weights.size()) + " weights for " +
                         shape_to_string(x.shape()));
  }
  std::vector<double> w(weights.begin(), weights.end());
  double acc = 0.0;
  auto xd = x.data();
  for (std::size_t i = 0; i < w.size(); ++i) acc += xd[i] * w[i];
  return Tensor::make_result({1}, {acc}, {x}, [w = std::move(w)](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < w.size(); ++i) g[i] += self.grad[0] * w[i];
  });
}

Tensor outer_add(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "outer_add");
  require_rank(b, 2, "outer_add");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("outer_add: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  const std::size_t ta = a.dim(0), tb = b.dim(0), d = a.dim(1);
  std::vector<double> out(ta * tb * d);
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < ta; ++i)
    for (std::size_t j = 0; j < tb; ++j)
      for (std::size_t k = 0; k < d; ++k) out[(i * tb + j) * d + k] = ad[i * d + k] + bd[j * d + k];
  return Tensor::make_result({ta * tb, d}, std::move(out), {a, b}, [ta, tb, d](Node& self) {
    double* ga = parent_grad(self, 0);
    double* gb = parent_grad(self, 1);
    for (std::size_t i = 0; i < ta; ++i)
      for (std::size_t j = 0; j < tb; ++j)
        for (std::size_t k = 0; k < d; ++k) {
          const double g = self.grad[(i * tb + j) * d + k];
          if (ga) ga[i * d + k] += g;
          if (gb) gb[j * d + k] += g;
        }
  });
}

Tensor add_relative_bias(const Tensor& scores, const Tensor& bias, std::size_t left,
                         std::size_t right) {
  require_rank(scores, 2, "add_relative_bias");
  require_rank(bias, 1, "add_relative_bias");
  if (bias.dim(0) != left + right + 1) {
    throw DimensionError("add_relative_bias: bias " + shape_to_string(bias.shape()) +
                         " for window [-" + std::to_string(left) + ", " +
                         std::to_string(right) + "]");
  }
  const std::size_t tq = scores.dim(0), tk = scores.dim(1);
  std::vector<std::size_t> slot(tq * tk);
  for (std::size_t t = 0; t < tq; ++t)
    for (std::size_t s = 0; s < tk; ++s) {
      const auto offset = std::clamp(static_cast<std::ptrdiff_t>(s) - static_cast<std::ptrdiff_t>(t),
                                     -static_cast<std::ptrdiff_t>(left),
                                     static_cast<std::ptrdiff_t>(right));
      slot[t * tk + s] = static_cast<std::size_t>(offset + static_cast<std::ptrdiff_t>(left));
    }
  std::vector<double> out(scores.data().begin(), scores.data().end());
  auto bd = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[slot[i]];
  return Tensor::make_result(scores.shape(), std::move(out), {scores, bias},
                             [slot = std::move(slot)](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[slot[i]] += self.grad[i];
  });
}

}  // namespace moeasr
