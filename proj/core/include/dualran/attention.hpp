#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dualran/nn.hpp"

namespace dualran {

/// Valid-utterance mask; nonzero marks a real turn.
using Mask = std::vector<std::uint8_t>;

Mask full_mask(std::size_t length);
/// Number of leading valid entries. A mask whose valid entries are not a
/// prefix raises ContractError (padding only ever trails).
std::size_t prefix_length(std::span<const std::uint8_t> mask);

template <typename T>
struct MhaParams {
  std::size_t heads = 1;
  nn::LinearParams<T> q, k, v, o;  // each d -> d
  double dropout = 0.0;            // on attention weights

  std::size_t head_dim() const { return q.out_features() / heads; }
};

template <typename T>
MhaParams<T> make_mha(ParamStore<T>& store, const std::string& name, std::size_t d, std::size_t heads,
                      double dropout, Rng& rng);

/// Position-free multi-head self-attention over the whole sequence.
/// Per head: softmax(Q K^T / sqrt(d_k)) with masked keys excluded, times V;
/// heads concatenated then projected by W_O. When `weights_out` is given it
/// receives one [T x T] attention-weight tensor per head (pre-dropout).
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, std::span<const std::uint8_t> mask, const MhaParams<T>& p,
                               const nn::ForwardContext& ctx, std::vector<Tensor<T>>* weights_out = nullptr);

template <typename T>
struct GlobalBlockParams {
  MhaParams<T> mha;
  nn::LayerNormParams<T> norm1;
  nn::LayerNormParams<T> norm2;
  nn::FeedForwardParams<T> ffn;
  double dropout = 0.0;
};

struct GlobalBlockShape {
  std::size_t d = 0;
  std::size_t heads = 1;
  std::size_t ff = 0;
  nn::Activation activation = nn::Activation::Relu;
  double dropout = 0.0;
};

template <typename T>
GlobalBlockParams<T> make_global_block(ParamStore<T>& store, const std::string& name,
                                       const GlobalBlockShape& shape, Rng& rng);

std::size_t global_block_param_count(const GlobalBlockShape& shape);

/// x_att = x + ATT(LN1(x));  out = x_att + FEED(LN2(x_att)).
template <typename T>
Tensor<T> global_block(const Tensor<T>& x, std::span<const std::uint8_t> mask, const GlobalBlockParams<T>& p,
                       const nn::ForwardContext& ctx, bool residual = true);

template <typename T>
Tensor<T> global_stack(const Tensor<T>& x, std::span<const std::uint8_t> mask,
                       const std::vector<GlobalBlockParams<T>>& layers, const nn::ForwardContext& ctx,
                       bool residual = true);

}  // namespace dualran
