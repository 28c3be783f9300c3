#include "dualran/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dualran/errors.hpp"

namespace dualran::ops {

namespace {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
void require_rank2(const char* op, const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

template <typename T>
Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  out.back() = last;
  return out;
}

// Elementwise unary op; `deriv(x, y)` is dy/dx given input x and output y.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D deriv) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(x.shape(), std::move(out), {x}, [deriv](Node<T>& n) {
    auto gx = n.parent_grad(0);
    if (gx.empty()) return;
    const auto xv = n.parent_value(0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i] * deriv(xv[i], n.value[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  const auto av = a.data(), bv = b.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto g = n.parent_grad(p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  const auto av = a.data(), bv = b.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    auto ga = n.parent_grad(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
    auto gb = n.parent_grad(1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= n.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  const auto av = a.data(), bv = b.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    const auto av = n.parent_value(0), bv = n.parent_value(1);
    auto ga = n.parent_grad(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * bv[i];
    auto gb = n.parent_grad(1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[i] * av[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || bias.dim(0) != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto xv = x.data(), bv = bias.data();
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + bv[c];
  return make_result<T>(x.shape(), std::move(out), {x, bias}, [rows, cols](Node<T>& n) {
    auto gx = n.parent_grad(0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i];
    auto gb = n.parent_grad(1);
    if (!gb.empty()) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[c] += n.grad[r * cols + c];
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const auto av = a.data(), bv = b.data();
  std::vector<T> out(m * n, T{});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  return make_result<T>({m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& node) {
    const auto av = node.parent_value(0), bv = node.parent_value(1);
    const auto& g = node.grad;
    // dA = G * B^T
    auto ga = node.parent_grad(0);
    if (!ga.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T acc{};
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    // dB = A^T * G
    auto gb = node.parent_grad(1);
    if (!gb.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2("matmul_nt", a);
  require_rank2("matmul_nt", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  const auto av = a.data(), bv = b.data();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc{};
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = acc;
    }
  return make_result<T>({m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& node) {
    const auto av = node.parent_value(0), bv = node.parent_value(1);
    const auto& g = node.grad;
    // dA = G * B
    auto ga = node.parent_grad(0);
    if (!ga.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const T gij = g[i * n + j];
          if (gij == T{}) continue;
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[j * k + p];
        }
    }
    // dB = G^T * A
    auto gb = node.parent_grad(1);
    if (!gb.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const T gij = g[i * n + j];
          if (gij == T{}) continue;
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av[i * k + p];
        }
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank2("transpose", a);
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto av = a.data();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result<T>({n, m}, std::move(out), {a}, [m, n](Node<T>& node) {
    auto ga = node.parent_grad(0);
    if (ga.empty()) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += node.grad[j * m + i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc{};
  for (T v : x.data()) acc += v;
  return make_result<T>({1}, {acc}, {x}, [](Node<T>& n) {
    auto g = n.parent_grad(0);
    for (auto& v : g) v += n.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> sum_squares(const Tensor<T>& x) {
  T acc{};
  for (T v : x.data()) acc += v * v;
  return make_result<T>({1}, {acc}, {x}, [](Node<T>& n) {
    auto g = n.parent_grad(0);
    const auto xv = n.parent_value(0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += T{2} * xv[i] * n.grad[0];
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T* o = out.data() + r * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (std::isnan(in[c])) throw NumericError("softmax: NaN input at row " + std::to_string(r));
      mx = std::max(mx, in[c]);
    }
    if (!std::isfinite(mx)) throw NumericError("softmax: row " + std::to_string(r) + " has no finite entry");
    T z{};
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [rows, cols](Node<T>& n) {
    auto gx = n.parent_grad(0);
    if (gx.empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = n.value.data() + r * cols;
      const T* g = n.grad.data() + r * cols;
      T dot{};
      for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += y[c] * (g[c] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (std::isnan(in[c])) throw NumericError("log_softmax: NaN input at row " + std::to_string(r));
      mx = std::max(mx, in[c]);
    }
    T z{};
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(in[c] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[c] - lse;
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [rows, cols](Node<T>& n) {
    auto gx = n.parent_grad(0);
    if (gx.empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = n.value.data() + r * cols;
      const T* g = n.grad.data() + r * cols;
      T gsum{};
      for (std::size_t c = 0; c < cols; ++c) gsum += g[c];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c] - std::exp(y[c]) * gsum;
    }
  });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return T{1} / (T{1} + std::exp(-v)); }, [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  const T inv_sqrt2pi = static_cast<T>(1.0 / std::sqrt(2.0 * std::numbers::pi));
  return unary(
      x, [=](T v) { return T{0.5} * v * (T{1} + std::erf(v * inv_sqrt2)); },
      [=](T v, T) {
        const T cdf = T{0.5} * (T{1} + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt2pi * std::exp(T{-0.5} * v * v);
      });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows || p.rank() != parts[0].rank()) {
      throw DimensionError("concat_cols: cannot join " + shape_str(parts[0].shape()) + " and " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  return make_result<T>(with_last<T>(parts[0].shape(), total), std::move(out), parts,
                        [rows, total, widths](Node<T>& n) {
                          std::size_t off = 0;
                          for (std::size_t k = 0; k < widths.size(); ++k) {
                            auto g = n.parent_grad(k);
                            if (!g.empty()) {
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < widths[k]; ++c)
                                  g[r * widths[k] + c] += n.grad[r * total + off + c];
                            }
                            off += widths[k];
                          }
                        });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (begin >= end || end > cols) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  const auto xv = x.data();
  std::vector<T> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.data() + r * cols + begin, w, out.data() + r * w);
  return make_result<T>(with_last<T>(x.shape(), w), std::move(out), {x}, [rows, cols, begin, w](Node<T>& n) {
    auto g = n.parent_grad(0);
    if (g.empty()) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) g[r * cols + begin + c] += n.grad[r * w + c];
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: cannot stack " + shape_str(parts[0].shape()) + " and " +
                           shape_str(p.shape()));
    }
    rows += p.rows();
    sizes.push_back(p.numel());
  }
  std::vector<T> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result<T>({rows, cols}, std::move(out), parts, [sizes](Node<T>& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      auto g = n.parent_grad(k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[off + i];
      off += sizes[k];
    }
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (begin >= end || end > rows) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_str(x.shape()));
  }
  const auto xv = x.data();
  std::vector<T> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                     xv.begin() + static_cast<std::ptrdiff_t>(end * cols));
  return make_result<T>({end - begin, cols}, std::move(out), {x}, [begin, cols](Node<T>& n) {
    auto g = n.parent_grad(0);
    if (g.empty()) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[begin * cols + i] += n.grad[i];
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::int64_t> ids) {
  require_rank2("gather_rows", table);
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw DimensionError("gather_rows: empty id sequence");
  std::vector<std::int64_t> idx(ids.begin(), ids.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      throw IndexError("gather_rows: id " + std::to_string(idx[i]) + " at position " + std::to_string(i) +
                       " outside table of " + std::to_string(vocab) + " rows");
    }
  }
  const auto tv = table.data();
  std::vector<T> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
  return make_result<T>({ids.size(), d}, std::move(out), {table}, [idx = std::move(idx), d](Node<T>& n) {
    auto g = n.parent_grad(0);
    if (g.empty()) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) g[static_cast<std::size_t>(idx[i]) * d + c] += n.grad[i * d + c];
  });
}

template <typename T>
Tensor<T> mask_columns(const Tensor<T>& x, std::span<const std::uint8_t> keep, T fill) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (keep.size() != cols) {
    throw DimensionError("mask_columns: mask of length " + std::to_string(keep.size()) + " for " +
                         shape_str(x.shape()));
  }
  std::vector<std::uint8_t> k(keep.begin(), keep.end());
  const auto xv = x.data();
  std::vector<T> out(xv.begin(), xv.end());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (!k[c]) out[r * cols + c] = fill;
  return make_result<T>(x.shape(), std::move(out), {x}, [rows, cols, k = std::move(k)](Node<T>& n) {
    auto g = n.parent_grad(0);
    if (g.empty()) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        if (k[c]) g[r * cols + c] += n.grad[r * cols + c];
  });
}

template <typename T>
Tensor<T> masked_nll(const Tensor<T>& log_probs, std::span<const std::int64_t> labels,
                     std::span<const std::uint8_t> mask) {
  const std::size_t rows = log_probs.rows(), cols = log_probs.cols();
  if (labels.size() != rows || mask.size() != rows) {
    throw DimensionError("masked_nll: " + std::to_string(labels.size()) + " labels / " +
                         std::to_string(mask.size()) + " mask entries for " + shape_str(log_probs.shape()));
  }
  std::vector<std::pair<std::size_t, std::size_t>> picks;  // (row, label)
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= cols) {
      throw LabelError("masked_nll: label " + std::to_string(labels[r]) + " at row " + std::to_string(r) +
                       " outside [0, " + std::to_string(cols) + ")");
    }
    picks.emplace_back(r, static_cast<std::size_t>(labels[r]));
  }
  if (picks.empty()) throw ContractError("masked_nll: no valid rows");
  const auto lp = log_probs.data();
  T acc{};
  for (auto [r, c] : picks) acc -= lp[r * cols + c];
  const T inv = T{1} / static_cast<T>(picks.size());
  return make_result<T>({1}, {acc * inv}, {log_probs}, [picks = std::move(picks), cols, inv](Node<T>& n) {
    auto g = n.parent_grad(0);
    if (g.empty()) return;
    for (auto [r, c] : picks) g[r * cols + c] -= n.grad[0] * inv;
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int64_t> labels,
                        std::span<const std::uint8_t> mask) {
  return masked_nll(log_softmax(logits), labels, mask);
}

#define DUALRAN_INSTANTIATE_OPS(T)                                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                                      \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> transpose(const Tensor<T>&);                                                     \
  template Tensor<T> sum(const Tensor<T>&);                                                           \
  template Tensor<T> mean(const Tensor<T>&);                                                          \
  template Tensor<T> sum_squares(const Tensor<T>&);                                                   \
  template Tensor<T> softmax(const Tensor<T>&);                                                       \
  template Tensor<T> log_softmax(const Tensor<T>&);                                                   \
  template Tensor<T> exp(const Tensor<T>&);                                                           \
  template Tensor<T> log(const Tensor<T>&);                                                           \
  template Tensor<T> tanh(const Tensor<T>&);                                                          \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
  template Tensor<T> relu(const Tensor<T>&);                                                          \
  template Tensor<T> gelu(const Tensor<T>&);                                                          \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                      \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                          \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                                      \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                          \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::int64_t>);                    \
  template Tensor<T> mask_columns(const Tensor<T>&, std::span<const std::uint8_t>, T);                \
  template Tensor<T> masked_nll(const Tensor<T>&, std::span<const std::int64_t>,                      \
                                std::span<const std::uint8_t>);                                       \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::int64_t>,                   \
                                   std::span<const std::uint8_t>);

DUALRAN_INSTANTIATE_OPS(float)
DUALRAN_INSTANTIATE_OPS(double)

}  // namespace dualran::ops
