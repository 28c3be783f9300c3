#include <algorithm>
#include <functional>

#include "cli.hpp"
#include "dualran/errors.hpp"
#include "dualran/gradcheck.hpp"
#include "dualran/ops.hpp"

namespace dualran::cli {

namespace {

constexpr std::size_t kDim = 8;
constexpr std::size_t kTurns = 3;

using Leaves = std::vector<std::pair<std::string, Tensord>>;

Tensord random_leaf(Rng& rng, Shape shape, double stddev = 1.0) {
  return Tensord::from_data(shape, normal_values<double>(rng, shape_numel(shape), stddev), true);
}

Leaves leaves_of(const ParamStore<double>& store) {
  Leaves out;
  for (const auto& e : store.entries()) out.emplace_back(e.name, e.tensor);
  return out;
}

// Contracting with a fixed random probe keeps every output coordinate in play;
// a plain sum is blind to anything layer norm removes.
struct BlockCase {
  ParamStore<double> store;
  Tensord input;
  Tensord probe;
  std::function<Tensord(const Tensord&)> block;

  GradCheckRow check(const std::string& name, const GradCheckOptions& opt) {
    auto leaves = leaves_of(store);
    leaves.emplace_back("input", input);
    const auto r = grad_check_leaves([&] { return ops::sum(ops::mul(block(input), probe)); }, leaves, opt);
    return {name, r.max_deviation, r.coordinates, r.worst_tensor + "[" + std::to_string(r.worst_index) + "]"};
  }
};

GradCheckRow run_block(const std::string& name, const GradCheckOptions& opt) {
  Rng rng(mix_seed(0x67726164, name.size() * 131 + static_cast<unsigned char>(name[0])));
  const nn::ForwardContext eval{};
  const Mask mask = full_mask(kTurns);
  BlockCase c;
  c.input = random_leaf(rng, {kTurns, kDim});
  std::size_t out_dim = kDim;

  if (name == "linear") {
    auto p = nn::make_linear(c.store, "linear", kDim, 5, true, rng);
    out_dim = 5;
    c.block = [p](const Tensord& x) { return nn::linear(x, p); };
  } else if (name == "layer-norm") {
    auto p = nn::make_layer_norm(c.store, "norm", kDim);
    for (auto& v : p.gain.mutable_data()) v += rng.normal(0.0, 0.3);
    for (auto& v : p.shift.mutable_data()) v = rng.normal(0.0, 0.3);
    c.block = [p](const Tensord& x) { return nn::layer_norm(x, p); };
  } else if (name == "feed-forward") {
    auto p = nn::make_feed_forward(c.store, "ffn", kDim, 2 * kDim, nn::Activation::Relu, 0.0, rng);
    c.block = [p, eval](const Tensord& x) { return nn::feed_forward(x, p, eval); };
  } else if (name == "lstm" || name == "gru") {
    const RnnKind kind = name == "lstm" ? RnnKind::Lstm : RnnKind::Gru;
    auto fw = make_rnn_cell(c.store, "fw", kind, kDim, kDim / 2, rng);
    auto bw = make_rnn_cell(c.store, "bw", kind, kDim, kDim / 2, rng);
    c.block = [fw, bw](const Tensord& x) { return rnn_bidir(x, kTurns, fw, bw); };
  } else if (name == "attention") {
    auto p = make_mha(c.store, "mha", kDim, 2, 0.0, rng);
    c.block = [p, mask, eval](const Tensord& x) { return multi_head_attention(x, mask, p, eval); };
  } else if (name == "local-block") {
    const LocalBlockShape shape{kDim, kDim / 2, 2 * kDim, RnnKind::Lstm, nn::Activation::Relu, 0.0};
    auto p = make_local_block(c.store, "local", shape, rng);
    c.block = [p, eval](const Tensord& x) { return local_block(x, kTurns, p, eval); };
  } else if (name == "global-block") {
    const GlobalBlockShape shape{kDim, 2, 2 * kDim, nn::Activation::Relu, 0.0};
    auto p = make_global_block(c.store, "global", shape, rng);
    c.block = [p, mask, eval](const Tensord& x) { return global_block(x, mask, p, eval); };
  } else {
    throw ConfigError("unknown gradcheck block '" + name + "'");
  }
  c.probe = Tensord::from_data({kTurns, out_dim}, normal_values<double>(rng, kTurns * out_dim, 1.0));
  return c.check(name, opt);
}

GradCheckRow run_model(const std::string& name, Variant variant, const GradCheckOptions& opt) {
  ModelConfig mc;
  mc.feature_dim = kDim;
  mc.num_classes = 4;
  mc.local_layers = 2;
  mc.global_layers = 2;
  mc.heads = 2;
  mc.dropout = 0.0;
  mc.speaker_vocab = 4;
  mc.variant = variant;
  auto params = init_params<double>(mc, 0x6d6f64);
  Rng rng(mix_seed(0x6d6f64, static_cast<std::uint64_t>(variant)));
  DialogInput<double> in;
  in.features = random_leaf(rng, {kTurns, kDim});
  in.speakers = {0, 1, 0};
  in.mask = full_mask(kTurns);
  const std::vector<std::int64_t> labels{1, 3, 0};

  auto leaves = leaves_of(params.store);
  leaves.emplace_back("input", in.features);
  const auto r = grad_check_leaves(
      [&] {
        const auto out = forward(params, in, nn::ForwardContext{});
        return ops::masked_nll(ops::log(out.probabilities), labels, in.mask);
      },
      leaves, opt);
  return {name, r.max_deviation, r.coordinates, r.worst_tensor + "[" + std::to_string(r.worst_index) + "]"};
}

}  // namespace

std::vector<std::string> gradcheck_blocks() {
  return {"linear", "layer-norm", "feed-forward", "lstm", "gru", "attention",
          "local-block", "global-block", "dual", "singlev1", "singlev2"};
}

std::vector<GradCheckRow> gradcheck_suite(const std::string& block_filter, bool corrupt) {
  const auto names = gradcheck_blocks();
  if (!block_filter.empty() && std::find(names.begin(), names.end(), block_filter) == names.end())
    throw ConfigError("unknown gradcheck block '" + block_filter + "'");
  GradCheckOptions opt;
  opt.corrupt_analytic = corrupt;
  std::vector<GradCheckRow> rows;
  for (const auto& name : names) {
    if (!block_filter.empty() && name != block_filter) continue;
    if (name == "dual") rows.push_back(run_model(name, Variant::Dual, opt));
    else if (name == "singlev1") rows.push_back(run_model(name, Variant::SingleV1, opt));
    else if (name == "singlev2") rows.push_back(run_model(name, Variant::SingleV2, opt));
    else rows.push_back(run_block(name, opt));
  }
  return rows;
}

}  // namespace dualran::cli
