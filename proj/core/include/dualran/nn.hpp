#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "dualran/params.hpp"
#include "dualran/rng.hpp"
#include "dualran/tensor.hpp"

namespace dualran::nn {

/// Training vs inference, plus the random source for dropout masks.
/// Inference ignores `rng`.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

enum class Activation { Relu, Gelu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // [out x in]
  Tensor<T> bias;    // [out], undefined when the layer is bias-free

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
  bool has_bias() const { return bias.defined(); }
};

/// Registers `<name>.weight` (and `<name>.bias`) with U(-1/sqrt(in), 1/sqrt(in)).
template <typename T>
LinearParams<T> make_linear(ParamStore<T>& store, const std::string& name, std::size_t in,
                            std::size_t out, bool bias, Rng& rng);

/// y = x W^T + b over rows of x [.. x in].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const LinearParams<T>& p);

template <typename T>
struct LayerNormParams {
  Tensor<T> gain;   // [d]
  Tensor<T> shift;  // [d]
  double epsilon = 1e-5;
};

template <typename T>
LayerNormParams<T> make_layer_norm(ParamStore<T>& store, const std::string& name, std::size_t d);

/// Per-row standardisation followed by gain * xhat + shift. A zero-variance
/// row collapses to `shift`.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p);

struct DropoutSpec {
  double rate = 0.0;
  bool training = false;
};

/// Inverted dropout: survivors are scaled by 1/(1-rate). Identity in
/// inference mode or when rate == 0. rate outside [0, 1) -> ConfigError.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, const DropoutSpec& spec, Rng* rng);

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, const ForwardContext& ctx) {
  return dropout(x, DropoutSpec{rate, ctx.training}, ctx.rng);
}

template <typename T>
struct EmbeddingTable {
  Tensor<T> table;  // [V x d]
  std::size_t vocab() const { return table.dim(0); }
  std::size_t dim() const { return table.dim(1); }
};

template <typename T>
EmbeddingTable<T> make_embedding(ParamStore<T>& store, const std::string& name, std::size_t vocab,
                                 std::size_t d, double stddev, Rng& rng);

/// Row i of the result is table row ids[i]. Out-of-range id -> IndexError.
template <typename T>
Tensor<T> embed(std::span<const std::int64_t> ids, const EmbeddingTable<T>& table);

template <typename T>
struct FeedForwardParams {
  LinearParams<T> fc1;  // d -> d_ff
  LinearParams<T> fc2;  // d_ff -> d
  Activation activation = Activation::Relu;
  double dropout = 0.0;
};

template <typename T>
FeedForwardParams<T> make_feed_forward(ParamStore<T>& store, const std::string& name, std::size_t d,
                                       std::size_t d_ff, Activation act, double dropout, Rng& rng);

/// DP(FC2(DP(act(FC1(x))))).
template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardParams<T>& p, const ForwardContext& ctx);

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a);

/// d*d_ff + d_ff + d_ff*d + d.
std::size_t feed_forward_param_count(std::size_t d, std::size_t d_ff);

}  // namespace dualran::nn
