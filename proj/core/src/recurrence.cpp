#include "dualran/recurrence.hpp"

#include <cmath>

#include "dualran/errors.hpp"
#include "dualran/ops.hpp"

namespace dualran {

std::string to_string(RnnKind k) { return k == RnnKind::Lstm ? "lstm" : "gru"; }

RnnKind parse_rnn_kind(const std::string& s) {
  if (s == "lstm") return RnnKind::Lstm;
  if (s == "gru") return RnnKind::Gru;
  throw ConfigError("unknown rnn kind '" + s + "' (expected lstm|gru)");
}

namespace {

template <typename T>
T sigm(T v) {
  return T{1} / (T{1} + std::exp(-v));
}

// Processing position s -> row index.
inline std::size_t row_at(std::size_t s, std::size_t length, bool reverse) {
  return reverse ? length - 1 - s : s;
}

// y[r] += sum_c W[r, c] * v[c]   (W is rows x cols)
template <typename T>
void gemv_acc(const T* w, std::size_t rows, std::size_t cols, const T* v, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    T acc{};
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * v[c];
    y[r] += acc;
  }
}

// y[c] += sum_r W[r, c] * v[r]
template <typename T>
void gemv_t_acc(const T* w, std::size_t rows, std::size_t cols, const T* v, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T vr = v[r];
    if (vr == T{}) continue;
    for (std::size_t c = 0; c < cols; ++c) y[c] += w[r * cols + c] * vr;
  }
}

// W[r, c] += a[r] * b[c]
template <typename T>
void outer_acc(T* w, std::size_t rows, std::size_t cols, const T* a, const T* b) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T ar = a[r];
    if (ar == T{}) continue;
    for (std::size_t c = 0; c < cols; ++c) w[r * cols + c] += ar * b[c];
  }
}

// xw: [T x 4h] input projections (bias included). Returns [T x h].
template <typename T>
Tensor<T> lstm_scan(const Tensor<T>& xw, const Tensor<T>& w_hh, std::size_t length, bool reverse) {
  const std::size_t steps = xw.rows(), h = w_hh.dim(1), g4 = 4 * h;
  const auto xv = xw.data(), wv = w_hh.data();
  std::vector<T> out(steps * h, T{});
  // Per processed step: activated gates [i f g o], cell, tanh(cell).
  std::vector<T> gates(length * g4), cell(length * h), tcell(length * h);
  std::vector<T> h_prev(h, T{}), c_prev(h, T{}), z(g4);
  for (std::size_t s = 0; s < length; ++s) {
    const std::size_t t = row_at(s, length, reverse);
    std::copy_n(xv.data() + t * g4, g4, z.data());
    gemv_acc(wv.data(), g4, h, h_prev.data(), z.data());
    T* ga = gates.data() + s * g4;
    for (std::size_t j = 0; j < h; ++j) {
      ga[j] = sigm(z[j]);
      ga[h + j] = sigm(z[h + j]);
      ga[2 * h + j] = std::tanh(z[2 * h + j]);
      ga[3 * h + j] = sigm(z[3 * h + j]);
      const T c = ga[h + j] * c_prev[j] + ga[j] * ga[2 * h + j];
      cell[s * h + j] = c;
      tcell[s * h + j] = std::tanh(c);
      out[t * h + j] = ga[3 * h + j] * tcell[s * h + j];
    }
    std::copy_n(out.data() + t * h, h, h_prev.data());
    std::copy_n(cell.data() + s * h, h, c_prev.data());
  }
  return make_result<T>(
      {steps, h}, std::move(out), {xw, w_hh},
      [length, reverse, h, g4, gates = std::move(gates), cell = std::move(cell),
       tcell = std::move(tcell)](Node<T>& n) {
        auto gx = n.parent_grad(0);
        auto gw = n.parent_grad(1);
        const auto wv = n.parent_value(1);
        std::vector<T> dh_next(h, T{}), dc_next(h, T{}), dz(g4), dh(h);
        for (std::size_t s = length; s-- > 0;) {
          const std::size_t t = row_at(s, length, reverse);
          const T* ga = gates.data() + s * g4;
          for (std::size_t j = 0; j < h; ++j) {
            dh[j] = n.grad[t * h + j] + dh_next[j];
            const T i = ga[j], f = ga[h + j], g = ga[2 * h + j], o = ga[3 * h + j];
            const T tc = tcell[s * h + j];
            const T c_prev = s > 0 ? cell[(s - 1) * h + j] : T{};
            const T dc = dh[j] * o * (T{1} - tc * tc) + dc_next[j];
            dz[j] = dc * g * i * (T{1} - i);
            dz[h + j] = dc * c_prev * f * (T{1} - f);
            dz[2 * h + j] = dc * i * (T{1} - g * g);
            dz[3 * h + j] = dh[j] * tc * o * (T{1} - o);
            dc_next[j] = dc * f;
          }
          if (!gx.empty())
            for (std::size_t k = 0; k < g4; ++k) gx[t * g4 + k] += dz[k];
          if (s > 0 && !gw.empty()) {
            const std::size_t tp = row_at(s - 1, length, reverse);
            outer_acc(gw.data(), g4, h, dz.data(), n.value.data() + tp * h);
          }
          std::fill(dh_next.begin(), dh_next.end(), T{});
          gemv_t_acc(wv.data(), g4, h, dz.data(), dh_next.data());
        }
      });
}

// xw: [T x 3h] input projections (b_ih included). Returns [T x h].
template <typename T>
Tensor<T> gru_scan(const Tensor<T>& xw, const Tensor<T>& w_hh, const Tensor<T>& b_hh, std::size_t length,
                   bool reverse) {
  const std::size_t steps = xw.rows(), h = w_hh.dim(1), g3 = 3 * h;
  const auto xv = xw.data(), wv = w_hh.data(), bv = b_hh.data();
  std::vector<T> out(steps * h, T{});
  // Per processed step: activated [r u n] and the hidden projection b = W_hh h + b_hh.
  std::vector<T> gates(length * g3), hproj(length * g3);
  std::vector<T> h_prev(h, T{});
  for (std::size_t s = 0; s < length; ++s) {
    const std::size_t t = row_at(s, length, reverse);
    T* hb = hproj.data() + s * g3;
    std::copy_n(bv.data(), g3, hb);
    gemv_acc(wv.data(), g3, h, h_prev.data(), hb);
    const T* a = xv.data() + t * g3;
    T* ga = gates.data() + s * g3;
    for (std::size_t j = 0; j < h; ++j) {
      const T r = sigm(a[j] + hb[j]);
      const T u = sigm(a[h + j] + hb[h + j]);
      const T nn = std::tanh(a[2 * h + j] + r * hb[2 * h + j]);
      ga[j] = r;
      ga[h + j] = u;
      ga[2 * h + j] = nn;
      out[t * h + j] = (T{1} - u) * nn + u * h_prev[j];
    }
    std::copy_n(out.data() + t * h, h, h_prev.data());
  }
  return make_result<T>(
      {steps, h}, std::move(out), {xw, w_hh, b_hh},
      [length, reverse, h, g3, gates = std::move(gates), hproj = std::move(hproj)](Node<T>& n) {
        auto gx = n.parent_grad(0);
        auto gw = n.parent_grad(1);
        auto gb = n.parent_grad(2);
        const auto wv = n.parent_value(1);
        std::vector<T> dh_next(h, T{}), dxw(g3), dhb(g3), hp(h);
        for (std::size_t s = length; s-- > 0;) {
          const std::size_t t = row_at(s, length, reverse);
          const T* ga = gates.data() + s * g3;
          const T* hb = hproj.data() + s * g3;
          if (s > 0) {
            std::copy_n(n.value.data() + row_at(s - 1, length, reverse) * h, h, hp.data());
          } else {
            std::fill(hp.begin(), hp.end(), T{});
          }
          for (std::size_t j = 0; j < h; ++j) {
            const T dh = n.grad[t * h + j] + dh_next[j];
            const T r = ga[j], u = ga[h + j], nn = ga[2 * h + j];
            const T dn = dh * (T{1} - u);
            const T du = dh * (hp[j] - nn);
            const T dpre_n = dn * (T{1} - nn * nn);
            const T dr = dpre_n * hb[2 * h + j];
            const T dpre_r = dr * r * (T{1} - r);
            const T dpre_u = du * u * (T{1} - u);
            dxw[j] = dpre_r;
            dxw[h + j] = dpre_u;
            dxw[2 * h + j] = dpre_n;
            dhb[j] = dpre_r;
            dhb[h + j] = dpre_u;
            dhb[2 * h + j] = dpre_n * r;
            dh_next[j] = dh * u;
          }
          if (!gx.empty())
            for (std::size_t k = 0; k < g3; ++k) gx[t * g3 + k] += dxw[k];
          if (!gb.empty())
            for (std::size_t k = 0; k < g3; ++k) gb[k] += dhb[k];
          if (!gw.empty()) outer_acc(gw.data(), g3, h, dhb.data(), hp.data());
          gemv_t_acc(wv.data(), g3, h, dhb.data(), dh_next.data());
        }
      });
}

}  // namespace

template <typename T>
RnnCellParams<T> make_rnn_cell(ParamStore<T>& store, const std::string& name, RnnKind kind,
                               std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  if (input_dim == 0 || hidden_dim == 0) throw ConfigError("rnn cell dimensions must be positive");
  RnnCellParams<T> p;
  p.kind = kind;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  const std::size_t gh = p.gates() * hidden_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  p.w_ih = store.add(name + ".w_ih", {gh, input_dim}, uniform_values<T>(rng, gh * input_dim, bound));
  p.w_hh = store.add(name + ".w_hh", {gh, hidden_dim}, uniform_values<T>(rng, gh * hidden_dim, bound));
  auto b = uniform_values<T>(rng, gh, bound);
  if (kind == RnnKind::Lstm) {
    for (std::size_t j = 0; j < hidden_dim; ++j) b[hidden_dim + j] += T{1};
  }
  p.b_ih = store.add(name + ".b_ih", {gh}, std::move(b));
  if (kind == RnnKind::Gru) {
    p.b_hh = store.add(name + ".b_hh", {gh}, uniform_values<T>(rng, gh, bound));
  }
  return p;
}

std::size_t rnn_cell_param_count(RnnKind kind, std::size_t input_dim, std::size_t hidden_dim) {
  const std::size_t g = kind == RnnKind::Lstm ? 4 : 3;
  const std::size_t gh = g * hidden_dim;
  return gh * input_dim + gh * hidden_dim + gh * (kind == RnnKind::Gru ? 2 : 1);
}

template <typename T>
Tensor<T> rnn_direction(const Tensor<T>& x, std::size_t length, const RnnCellParams<T>& cell, bool reverse) {
  if (x.rank() != 2 || x.cols() != cell.input_dim) {
    throw DimensionError("rnn: input " + shape_str(x.shape()) + " vs cell input dim " +
                         std::to_string(cell.input_dim));
  }
  if (length > x.rows()) {
    throw ContractError("rnn: length " + std::to_string(length) + " exceeds " + std::to_string(x.rows()) +
                        " rows");
  }
  if (length == 0) return Tensor<T>::zeros({x.rows(), cell.hidden_dim});
  Tensor<T> xw = ops::add_bias(ops::matmul_nt(x, cell.w_ih), cell.b_ih);
  return cell.kind == RnnKind::Lstm ? lstm_scan(xw, cell.w_hh, length, reverse)
                                    : gru_scan(xw, cell.w_hh, cell.b_hh, length, reverse);
}

template <typename T>
Tensor<T> rnn_bidir(const Tensor<T>& x, std::size_t length, const RnnCellParams<T>& forward_cell,
                    const RnnCellParams<T>& backward_cell) {
  return ops::concat_cols<T>(
      {rnn_direction(x, length, forward_cell, false), rnn_direction(x, length, backward_cell, true)});
}

template <typename T>
LocalBlockParams<T> make_local_block(ParamStore<T>& store, const std::string& name,
                                     const LocalBlockShape& shape, Rng& rng) {
  LocalBlockParams<T> p;
  p.norm1 = nn::make_layer_norm(store, name + ".norm1", shape.d);
  p.forward_cell = make_rnn_cell(store, name + ".rnn_fwd", shape.kind, shape.d, shape.hidden, rng);
  p.backward_cell = make_rnn_cell(store, name + ".rnn_bwd", shape.kind, shape.d, shape.hidden, rng);
  p.proj = nn::make_linear(store, name + ".proj", 2 * shape.hidden, shape.d, true, rng);
  p.norm2 = nn::make_layer_norm(store, name + ".norm2", shape.d);
  p.ffn = nn::make_feed_forward(store, name + ".ffn", shape.d, shape.ff, shape.activation, shape.dropout, rng);
  p.dropout = shape.dropout;
  return p;
}

std::size_t local_block_param_count(const LocalBlockShape& s) {
  return 2 * s.d                                          // norm1
         + 2 * rnn_cell_param_count(s.kind, s.d, s.hidden)  // both directions
         + 2 * s.hidden * s.d + s.d                       // proj
         + 2 * s.d                                        // norm2
         + nn::feed_forward_param_count(s.d, s.ff);
}

template <typename T>
Tensor<T> rnn_prime(const Tensor<T>& x, std::size_t length, const LocalBlockParams<T>& p,
                    const nn::ForwardContext& ctx) {
  Tensor<T> r = rnn_bidir(x, length, p.forward_cell, p.backward_cell);
  return nn::dropout(nn::linear(r, p.proj), p.dropout, ctx);
}

template <typename T>
Tensor<T> local_block(const Tensor<T>& x, std::size_t length, const LocalBlockParams<T>& p,
                      const nn::ForwardContext& ctx, bool residual) {
  Tensor<T> a = rnn_prime(nn::layer_norm(x, p.norm1), length, p, ctx);
  Tensor<T> x_rnn = residual ? ops::add(x, a) : a;
  Tensor<T> b = nn::feed_forward(nn::layer_norm(x_rnn, p.norm2), p.ffn, ctx);
  return residual ? ops::add(x_rnn, b) : b;
}

template <typename T>
Tensor<T> local_stack(const Tensor<T>& x, std::size_t length, const std::vector<LocalBlockParams<T>>& layers,
                      const nn::ForwardContext& ctx, bool residual) {
  if (layers.empty()) throw ConfigError("local stack needs at least one layer");
  Tensor<T> h = x;
  for (const auto& layer : layers) h = local_block(h, length, layer, ctx, residual);
  return h;
}

#define DUALRAN_INSTANTIATE_RNN(T)                                                                           \
  template RnnCellParams<T> make_rnn_cell(ParamStore<T>&, const std::string&, RnnKind, std::size_t,          \
                                          std::size_t, Rng&);                                                \
  template Tensor<T> rnn_direction(const Tensor<T>&, std::size_t, const RnnCellParams<T>&, bool);            \
  template Tensor<T> rnn_bidir(const Tensor<T>&, std::size_t, const RnnCellParams<T>&,                       \
                               const RnnCellParams<T>&);                                                     \
  template LocalBlockParams<T> make_local_block(ParamStore<T>&, const std::string&, const LocalBlockShape&,   \
                                                Rng&);                                                       \
  template Tensor<T> rnn_prime(const Tensor<T>&, std::size_t, const LocalBlockParams<T>&,                    \
                               const nn::ForwardContext&);                                                   \
  template Tensor<T> local_block(const Tensor<T>&, std::size_t, const LocalBlockParams<T>&,                  \
                                 const nn::ForwardContext&, bool);                                           \
  template Tensor<T> local_stack(const Tensor<T>&, std::size_t, const std::vector<LocalBlockParams<T>>&,     \
                                 const nn::ForwardContext&, bool);

DUALRAN_INSTANTIATE_RNN(float)
DUALRAN_INSTANTIATE_RNN(double)

}  // namespace dualran
