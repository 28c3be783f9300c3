#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dualran/tensor.hpp"

/// Differentiable tensor ops.
///
/// Matrix ops take rank-2 tensors. Row-wise ops (softmax, bias, column
/// slicing) treat the last axis as columns and flatten the leading axes into
/// rows. All shape violations raise DimensionError naming both shapes.
namespace dualran::ops {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
/// x[..., n] + b[n], broadcast over rows.
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

/// a[m x k] * b[k x n].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// a[m x k] * b[n x k]^T. The natural product for row-major weight matrices.
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> sum_squares(const Tensor<T>& x);

/// Softmax over the last axis, max-subtracted. NaN input -> NumericError.
template <typename T> Tensor<T> softmax(const Tensor<T>& x);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& x);

template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
/// Exact (erf) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end);

/// out[i] = table[ids[i]]; gradient scatters back into the looked-up rows.
template <typename T> Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::int64_t> ids);

/// Replaces every column j with keep[j] == 0 by `fill`; those entries get no
/// gradient. Used for key masking before softmax.
template <typename T>
Tensor<T> mask_columns(const Tensor<T>& x, std::span<const std::uint8_t> keep,
                       T fill = -std::numeric_limits<T>::infinity());

/// -(1/|valid|) * sum over rows r with mask[r] of log_probs[r, labels[r]].
/// Rows with mask 0 are never read, whatever their label.
template <typename T>
Tensor<T> masked_nll(const Tensor<T>& log_probs, std::span<const std::int64_t> labels,
                     std::span<const std::uint8_t> mask);
/// masked_nll(log_softmax(logits)).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int64_t> labels,
                        std::span<const std::uint8_t> mask);

}  // namespace dualran::ops

namespace dualran {

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return ops::add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return ops::sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return ops::mul(a, b); }

}  // namespace dualran
