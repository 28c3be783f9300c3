#include "dualran/attention.hpp"

#include <cmath>

#include "dualran/errors.hpp"
#include "dualran/ops.hpp"

namespace dualran {

Mask full_mask(std::size_t length) { return Mask(length, 1); }

std::size_t prefix_length(std::span<const std::uint8_t> mask) {
  std::size_t n = 0;
  while (n < mask.size() && mask[n]) ++n;
  for (std::size_t i = n; i < mask.size(); ++i) {
    if (mask[i]) throw ContractError("mask has a valid entry at " + std::to_string(i) + " after padding");
  }
  return n;
}

template <typename T>
MhaParams<T> make_mha(ParamStore<T>& store, const std::string& name, std::size_t d, std::size_t heads,
                      double dropout, Rng& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  MhaParams<T> p;
  p.heads = heads;
  p.q = nn::make_linear(store, name + ".q", d, d, true, rng);
  p.k = nn::make_linear(store, name + ".k", d, d, true, rng);
  p.v = nn::make_linear(store, name + ".v", d, d, true, rng);
  p.o = nn::make_linear(store, name + ".o", d, d, true, rng);
  p.dropout = dropout;
  return p;
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, std::span<const std::uint8_t> mask, const MhaParams<T>& p,
                               const nn::ForwardContext& ctx, std::vector<Tensor<T>>* weights_out) {
  const std::size_t d = p.q.in_features();
  if (x.rank() != 2 || x.cols() != d) {
    throw DimensionError("attention: input " + shape_str(x.shape()) + " vs model dim " + std::to_string(d));
  }
  if (p.heads == 0 || d % p.heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(d) + " not divisible by " +
                      std::to_string(p.heads) + " heads");
  }
  if (mask.size() != x.rows()) {
    throw DimensionError("attention: mask of length " + std::to_string(mask.size()) + " for " +
                         shape_str(x.shape()));
  }
  bool any_valid = false;
  for (auto m : mask) any_valid = any_valid || m != 0;
  if (!any_valid) throw ContractError("attention: every key is masked");

  const std::size_t dk = d / p.heads;
  const T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  Tensor<T> q = nn::linear(x, p.q), k = nn::linear(x, p.k), v = nn::linear(x, p.v);
  if (weights_out) weights_out->clear();
  std::vector<Tensor<T>> heads;
  heads.reserve(p.heads);
  for (std::size_t hd = 0; hd < p.heads; ++hd) {
    const std::size_t b = hd * dk, e = b + dk;
    Tensor<T> qh = p.heads == 1 ? q : ops::slice_cols(q, b, e);
    Tensor<T> kh = p.heads == 1 ? k : ops::slice_cols(k, b, e);
    Tensor<T> vh = p.heads == 1 ? v : ops::slice_cols(v, b, e);
    Tensor<T> scores = ops::mask_columns(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt_dk), mask);
    Tensor<T> weights = ops::softmax(scores);
    if (weights_out) weights_out->push_back(weights);
    heads.push_back(ops::matmul(nn::dropout(weights, p.dropout, ctx), vh));
  }
  Tensor<T> joined = heads.size() == 1 ? heads[0] : ops::concat_cols(heads);
  return nn::linear(joined, p.o);
}

template <typename T>
GlobalBlockParams<T> make_global_block(ParamStore<T>& store, const std::string& name,
                                       const GlobalBlockShape& shape, Rng& rng) {
  GlobalBlockParams<T> p;
  p.norm1 = nn::make_layer_norm(store, name + ".norm1", shape.d);
  p.mha = make_mha(store, name + ".attn", shape.d, shape.heads, shape.dropout, rng);
  p.norm2 = nn::make_layer_norm(store, name + ".norm2", shape.d);
  p.ffn = nn::make_feed_forward(store, name + ".ffn", shape.d, shape.ff, shape.activation, shape.dropout, rng);
  p.dropout = shape.dropout;
  return p;
}

std::size_t global_block_param_count(const GlobalBlockShape& s) {
  return 2 * s.d + 4 * (s.d * s.d + s.d) + 2 * s.d + nn::feed_forward_param_count(s.d, s.ff);
}

template <typename T>
Tensor<T> global_block(const Tensor<T>& x, std::span<const std::uint8_t> mask, const GlobalBlockParams<T>& p,
                       const nn::ForwardContext& ctx, bool residual) {
  Tensor<T> a = multi_head_attention(nn::layer_norm(x, p.norm1), mask, p.mha, ctx);
  Tensor<T> x_att = residual ? ops::add(x, a) : a;
  Tensor<T> b = nn::feed_forward(nn::layer_norm(x_att, p.norm2), p.ffn, ctx);
  return residual ? ops::add(x_att, b) : b;
}

template <typename T>
Tensor<T> global_stack(const Tensor<T>& x, std::span<const std::uint8_t> mask,
                       const std::vector<GlobalBlockParams<T>>& layers, const nn::ForwardContext& ctx,
                       bool residual) {
  if (layers.empty()) throw ConfigError("global stack needs at least one layer");
  Tensor<T> h = x;
  for (const auto& layer : layers) h = global_block(h, mask, layer, ctx, residual);
  return h;
}

#define DUALRAN_INSTANTIATE_ATT(T)                                                                        \
  template MhaParams<T> make_mha(ParamStore<T>&, const std::string&, std::size_t, std::size_t, double,     \
                                 Rng&);                                                                   \
  template Tensor<T> multi_head_attention(const Tensor<T>&, std::span<const std::uint8_t>,                \
                                          const MhaParams<T>&, const nn::ForwardContext&,                 \
                                          std::vector<Tensor<T>>*);                                       \
  template GlobalBlockParams<T> make_global_block(ParamStore<T>&, const std::string&,                     \
                                                  const GlobalBlockShape&, Rng&);                         \
  template Tensor<T> global_block(const Tensor<T>&, std::span<const std::uint8_t>,                        \
                                  const GlobalBlockParams<T>&, const nn::ForwardContext&, bool);          \
  template Tensor<T> global_stack(const Tensor<T>&, std::span<const std::uint8_t>,                        \
                                  const std::vector<GlobalBlockParams<T>>&, const nn::ForwardContext&, bool);

DUALRAN_INSTANTIATE_ATT(float)
DUALRAN_INSTANTIATE_ATT(double)

}  // namespace dualran
