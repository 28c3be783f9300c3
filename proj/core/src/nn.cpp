#include "dualran/nn.hpp"

#include <cmath>

#include "dualran/errors.hpp"
#include "dualran/ops.hpp"

namespace dualran::nn {

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "gelu"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "gelu") return Activation::Gelu;
  throw ConfigError("unknown activation '" + s + "' (expected relu|gelu)");
}

template <typename T>
LinearParams<T> make_linear(ParamStore<T>& store, const std::string& name, std::size_t in,
                            std::size_t out, bool bias, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  LinearParams<T> p;
  p.weight = store.add(name + ".weight", {out, in}, uniform_values<T>(rng, out * in, bound));
  if (bias) p.bias = store.add(name + ".bias", {out}, uniform_values<T>(rng, out, bound));
  return p;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const LinearParams<T>& p) {
  if (x.cols() != p.in_features()) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(p.weight.shape()));
  }
  Tensor<T> y = ops::matmul_nt(x, p.weight);
  return p.has_bias() ? ops::add_bias(y, p.bias) : y;
}

template <typename T>
LayerNormParams<T> make_layer_norm(ParamStore<T>& store, const std::string& name, std::size_t d) {
  LayerNormParams<T> p;
  p.gain = store.add(name + ".gain", {d}, std::vector<T>(d, T{1}));
  p.shift = store.add(name + ".shift", {d}, std::vector<T>(d, T{0}));
  return p;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p) {
  const std::size_t rows = x.rows(), d = x.cols();
  if (p.gain.numel() != d || p.shift.numel() != d) {
    throw DimensionError("layer_norm: input " + shape_str(x.shape()) + " vs params " +
                         shape_str(p.gain.shape()));
  }
  if (!(p.epsilon > 0.0)) throw ConfigError("layer_norm: epsilon must be positive");
  const auto xv = x.data(), gv = p.gain.data(), sv = p.shift.data();
  const T eps = static_cast<T>(p.epsilon);
  std::vector<T> out(xv.size()), xhat(xv.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    T mu{};
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<T>(d);
    T var{};
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<T>(d);
    inv_std[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (row[c] - mu) * inv_std[r];
      out[r * d + c] = gv[c] * xhat[r * d + c] + sv[c];
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {x, p.gain, p.shift},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& n) {
        const auto gv = n.parent_value(1);
        auto gx = n.parent_grad(0);
        auto gg = n.parent_grad(1);
        auto gs = n.parent_grad(2);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* g = n.grad.data() + r * d;
          const T* xh = xhat.data() + r * d;
          if (!gg.empty())
            for (std::size_t c = 0; c < d; ++c) gg[c] += g[c] * xh[c];
          if (!gs.empty())
            for (std::size_t c = 0; c < d; ++c) gs[c] += g[c];
          if (gx.empty()) continue;
          // dx = inv_std/d * (d*gh - sum(gh) - xhat*sum(gh*xhat)), gh = g*gain
          T sum_gh{}, sum_gh_xh{};
          for (std::size_t c = 0; c < d; ++c) {
            const T gh = g[c] * gv[c];
            sum_gh += gh;
            sum_gh_xh += gh * xh[c];
          }
          const T scale = inv_std[r] / static_cast<T>(d);
          for (std::size_t c = 0; c < d; ++c) {
            const T gh = g[c] * gv[c];
            gx[r * d + c] += scale * (static_cast<T>(d) * gh - sum_gh - xh[c] * sum_gh_xh);
          }
        }
      });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, const DropoutSpec& spec, Rng* rng) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(spec.rate));
  }
  if (!spec.training || spec.rate == 0.0) return x;
  if (rng == nullptr) throw ContractError("dropout: training mode needs a random source");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - spec.rate));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng->bernoulli(spec.rate) ? T{0} : keep_scale;
  return ops::mul(x, Tensor<T>::from_data(x.shape(), std::move(mask)));
}

template <typename T>
EmbeddingTable<T> make_embedding(ParamStore<T>& store, const std::string& name, std::size_t vocab,
                                 std::size_t d, double stddev, Rng& rng) {
  return {store.add(name + ".table", {vocab, d}, normal_values<T>(rng, vocab * d, stddev))};
}

template <typename T>
Tensor<T> embed(std::span<const std::int64_t> ids, const EmbeddingTable<T>& table) {
  return ops::gather_rows(table.table, ids);
}

template <typename T>
FeedForwardParams<T> make_feed_forward(ParamStore<T>& store, const std::string& name, std::size_t d,
                                       std::size_t d_ff, Activation act, double dropout, Rng& rng) {
  FeedForwardParams<T> p;
  p.fc1 = make_linear(store, name + ".fc1", d, d_ff, true, rng);
  p.fc2 = make_linear(store, name + ".fc2", d_ff, d, true, rng);
  p.activation = act;
  p.dropout = dropout;
  return p;
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
  return a == Activation::Relu ? ops::relu(x) : ops::gelu(x);
}

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardParams<T>& p, const ForwardContext& ctx) {
  if (x.cols() != p.fc1.in_features()) {
    throw DimensionError("feed_forward: input " + shape_str(x.shape()) + " vs fc1 " +
                         shape_str(p.fc1.weight.shape()));
  }
  Tensor<T> h = dropout(activate(linear(x, p.fc1), p.activation), p.dropout, ctx);
  return dropout(linear(h, p.fc2), p.dropout, ctx);
}

std::size_t feed_forward_param_count(std::size_t d, std::size_t d_ff) { return d * d_ff + d_ff + d_ff * d + d; }

#define DUALRAN_INSTANTIATE_NN(T)                                                                         \
  template LinearParams<T> make_linear(ParamStore<T>&, const std::string&, std::size_t, std::size_t, bool, \
                                       Rng&);                                                              \
  template Tensor<T> linear(const Tensor<T>&, const LinearParams<T>&);                                     \
  template LayerNormParams<T> make_layer_norm(ParamStore<T>&, const std::string&, std::size_t);            \
  template Tensor<T> layer_norm(const Tensor<T>&, const LayerNormParams<T>&);                              \
  template Tensor<T> dropout(const Tensor<T>&, const DropoutSpec&, Rng*);                                  \
  template EmbeddingTable<T> make_embedding(ParamStore<T>&, const std::string&, std::size_t, std::size_t,  \
                                            double, Rng&);                                                 \
  template Tensor<T> embed(std::span<const std::int64_t>, const EmbeddingTable<T>&);                       \
  template FeedForwardParams<T> make_feed_forward(ParamStore<T>&, const std::string&, std::size_t,          \
                                                  std::size_t, Activation, double, Rng&);                  \
  template Tensor<T> activate(const Tensor<T>&, Activation);                                               \
  template Tensor<T> feed_forward(const Tensor<T>&, const FeedForwardParams<T>&, const ForwardContext&);

DUALRAN_INSTANTIATE_NN(float)
DUALRAN_INSTANTIATE_NN(double)

}  // namespace dualran::nn
