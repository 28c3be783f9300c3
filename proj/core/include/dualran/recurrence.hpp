#pragma once

#include <string>
#include <vector>

#include "dualran/nn.hpp"

namespace dualran {

enum class RnnKind { Lstm, Gru };

std::string to_string(RnnKind k);
RnnKind parse_rnn_kind(const std::string& s);

/// One direction of a gated recurrent cell.
///
/// LSTM (gate order i, f, g, o):
///   z = W_ih x + b_ih + W_hh h      (b_hh unused)
///   c' = sigmoid(f) c + sigmoid(i) tanh(g);  h' = sigmoid(o) tanh(c')
/// GRU (gate order r, z, n):
///   a = W_ih x + b_ih,  b = W_hh h + b_hh
///   r = sigmoid(a_r + b_r), u = sigmoid(a_z + b_z), n = tanh(a_n + r * b_n)
///   h' = (1 - u) n + u h
template <typename T>
struct RnnCellParams {
  RnnKind kind = RnnKind::Lstm;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor<T> w_ih;  // [G*h x d]
  Tensor<T> w_hh;  // [G*h x h]
  Tensor<T> b_ih;  // [G*h]
  Tensor<T> b_hh;  // [G*h], GRU only

  std::size_t gates() const { return kind == RnnKind::Lstm ? 4 : 3; }
};

/// Weights U(-1/sqrt(h), 1/sqrt(h)); LSTM forget-gate bias shifted by +1.
template <typename T>
RnnCellParams<T> make_rnn_cell(ParamStore<T>& store, const std::string& name, RnnKind kind,
                               std::size_t input_dim, std::size_t hidden_dim, Rng& rng);

std::size_t rnn_cell_param_count(RnnKind kind, std::size_t input_dim, std::size_t hidden_dim);

/// Runs one direction over rows [0, length) of x [T x d]; rows >= length of
/// the result are zero. `reverse` walks right to left.
template <typename T>
Tensor<T> rnn_direction(const Tensor<T>& x, std::size_t length, const RnnCellParams<T>& cell, bool reverse);

/// Forward and backward passes concatenated along features: [T x 2h].
template <typename T>
Tensor<T> rnn_bidir(const Tensor<T>& x, std::size_t length, const RnnCellParams<T>& forward_cell,
                    const RnnCellParams<T>& backward_cell);

/// Recurrent residual block of the local stream.
template <typename T>
struct LocalBlockParams {
  RnnCellParams<T> forward_cell;
  RnnCellParams<T> backward_cell;
  nn::LinearParams<T> proj;  // 2h -> d
  nn::LayerNormParams<T> norm1;
  nn::LayerNormParams<T> norm2;
  nn::FeedForwardParams<T> ffn;
  double dropout = 0.0;
};

struct LocalBlockShape {
  std::size_t d = 0;
  std::size_t hidden = 0;  // per direction
  std::size_t ff = 0;
  RnnKind kind = RnnKind::Lstm;
  nn::Activation activation = nn::Activation::Relu;
  double dropout = 0.0;
};

template <typename T>
LocalBlockParams<T> make_local_block(ParamStore<T>& store, const std::string& name,
                                     const LocalBlockShape& shape, Rng& rng);

std::size_t local_block_param_count(const LocalBlockShape& shape);

/// DP(FC(RNN(x))): [T x d] -> [T x d].
template <typename T>
Tensor<T> rnn_prime(const Tensor<T>& x, std::size_t length, const LocalBlockParams<T>& p,
                    const nn::ForwardContext& ctx);

/// x_rnn = x + RNN'(LN1(x));  out = x_rnn + FEED(LN2(x_rnn)).
/// With residual == false the additions are dropped (sub-layer outputs
/// replace their inputs).
template <typename T>
Tensor<T> local_block(const Tensor<T>& x, std::size_t length, const LocalBlockParams<T>& p,
                      const nn::ForwardContext& ctx, bool residual = true);

/// Sequential application of every layer. An empty stack is a ConfigError.
template <typename T>
Tensor<T> local_stack(const Tensor<T>& x, std::size_t length, const std::vector<LocalBlockParams<T>>& layers,
                      const nn::ForwardContext& ctx, bool residual = true);

}  // namespace dualran
