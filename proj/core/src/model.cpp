#include "dualran/model.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "dualran/errors.hpp"
#include "dualran/ops.hpp"

namespace dualran {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Dual: return "dual";
    case Variant::SingleV1: return "singlev1";
    case Variant::SingleV2: return "singlev2";
  }
  return "dual";
}

Variant parse_variant(const std::string& s) {
  if (s == "dual") return Variant::Dual;
  if (s == "singlev1") return Variant::SingleV1;
  if (s == "singlev2") return Variant::SingleV2;
  throw ConfigError("unknown variant '" + s + "' (expected dual|singlev1|singlev2)");
}

void Ablations::apply(const std::string& name) {
  if (name == "no-local") no_local = true;
  else if (name == "no-global") no_global = true;
  else if (name == "no-speaker") no_speaker = true;
  else if (name == "no-sc-local") no_skip_local = true;
  else if (name == "no-sc-global") no_skip_global = true;
  else if (name == "no-sc-both") no_skip_local = no_skip_global = true;
  else if (name == "none" || name.empty()) {}
  else throw ConfigError("unknown ablation '" + name + "'");
}

std::string Ablations::to_string() const {
  std::vector<std::string> parts;
  if (no_local) parts.emplace_back("no-local");
  if (no_global) parts.emplace_back("no-global");
  if (no_speaker) parts.emplace_back("no-speaker");
  if (no_skip_local) parts.emplace_back("no-sc-local");
  if (no_skip_global) parts.emplace_back("no-sc-global");
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

Ablations parse_ablations(const std::string& comma_list) {
  Ablations a;
  std::stringstream ss(comma_list);
  std::string item;
  while (std::getline(ss, item, ',')) a.apply(item);
  return a;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (num_classes == 0) fail("num_classes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (ablations.no_local && ablations.no_global) fail("no-local and no-global cannot both be set");
  if ((ablations.no_local || ablations.no_global) && variant != Variant::Dual)
    fail("no-local / no-global require the dual variant");
  if (ablations.no_local && ablations.no_skip_local) fail("no-sc-local has no effect without the local stream");
  if (ablations.no_global && ablations.no_skip_global) fail("no-sc-global has no effect without the global stream");
  if (!ablations.no_speaker && speaker_vocab == 0) fail("speaker_vocab must be positive");
  if (ff() == 0) fail("ff_dim must be positive");
  if (uses_local()) {
    if (local_layers == 0) fail("local_layers must be >= 1 (use --ablate no-local to drop the stream)");
    if (hidden() == 0) fail("recurrent hidden size resolves to 0");
  }
  if (uses_global()) {
    if (global_layers == 0) fail("global_layers must be >= 1 (use --ablate no-global to drop the stream)");
    if (heads == 0 || feature_dim % heads != 0)
      fail("feature_dim " + std::to_string(feature_dim) + " not divisible by " + std::to_string(heads) + " heads");
  }
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t to_size(const std::map<std::string, std::string>& kv, const std::string& key, std::size_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size() || v < 0) throw std::invalid_argument(key);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + it->second + "'");
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> ModelConfig::to_key_values() const {
  return {
      {"feature_dim", std::to_string(feature_dim)},
      {"num_classes", std::to_string(num_classes)},
      {"variant", dualran::to_string(variant)},
      {"ablations", ablations.to_string()},
      {"local_layers", std::to_string(local_layers)},
      {"global_layers", std::to_string(global_layers)},
      {"heads", std::to_string(heads)},
      {"rnn", dualran::to_string(rnn)},
      {"hidden_dim", std::to_string(hidden())},
      {"ff_dim", std::to_string(ff())},
      {"activation", nn::to_string(activation)},
      {"dropout", fmt_double(dropout)},
      {"speaker_vocab", std::to_string(speaker_vocab)},
  };
}

ModelConfig ModelConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.feature_dim = to_size(kv, "feature_dim", c.feature_dim);
  c.num_classes = to_size(kv, "num_classes", c.num_classes);
  if (auto it = kv.find("variant"); it != kv.end()) c.variant = parse_variant(it->second);
  if (auto it = kv.find("ablations"); it != kv.end()) c.ablations = parse_ablations(it->second);
  c.local_layers = to_size(kv, "local_layers", c.local_layers);
  c.global_layers = to_size(kv, "global_layers", c.global_layers);
  c.heads = to_size(kv, "heads", c.heads);
  if (auto it = kv.find("rnn"); it != kv.end()) c.rnn = parse_rnn_kind(it->second);
  c.hidden_dim = to_size(kv, "hidden_dim", c.hidden_dim);
  c.ff_dim = to_size(kv, "ff_dim", c.ff_dim);
  if (auto it = kv.find("activation"); it != kv.end()) c.activation = nn::parse_activation(it->second);
  if (auto it = kv.find("dropout"); it != kv.end()) {
    try {
      c.dropout = std::stod(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config key 'dropout': expected a number, got '" + it->second + "'");
    }
  }
  c.speaker_vocab = to_size(kv, "speaker_vocab", c.speaker_vocab);
  return c;
}

std::string ModelConfig::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : to_key_values()) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t ModelConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_text()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams<T> p;
  p.config = config;
  const Rng root(seed);
  const std::size_t d = config.feature_dim;

  if (!config.ablations.no_speaker) {
    Rng rng = root.fork(1);
    p.speakers = nn::make_embedding(p.store, "speaker", config.speaker_vocab, d, 0.02, rng);
  }
  if (config.uses_local()) {
    Rng rng = root.fork(2);
    const LocalBlockShape shape{d, config.hidden(), config.ff(), config.rnn, config.activation, config.dropout};
    for (std::size_t l = 0; l < config.local_layers; ++l)
      p.local.push_back(make_local_block(p.store, "local." + std::to_string(l), shape, rng));
  }
  if (config.uses_global()) {
    Rng rng = root.fork(3);
    const GlobalBlockShape shape{d, config.heads, config.ff(), config.activation, config.dropout};
    for (std::size_t k = 0; k < config.global_layers; ++k)
      p.global.push_back(make_global_block(p.store, "global." + std::to_string(k), shape, rng));
  }
  if (config.uses_fusion()) {
    Rng rng = root.fork(4);
    p.fusion = nn::make_linear(p.store, "fusion", 2 * d, d, false, rng);
  }
  {
    Rng rng = root.fork(5);
    p.head = nn::make_linear(p.store, "head", d, config.num_classes, false, rng);
  }
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
  ModelParams<T> copy = init_params<T>(config, 0);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto src = store.entries()[i].tensor.data();
    auto dst = copy.store.entries()[i].tensor.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return copy;
}

template <typename T>
Tensor<T> speaker_encode(const ModelParams<T>& params, const Tensor<T>& features,
                         std::span<const std::int64_t> speakers) {
  if (speakers.size() != features.rows()) {
    throw DimensionError("speaker_encode: " + std::to_string(speakers.size()) + " speaker ids for features " +
                         shape_str(features.shape()));
  }
  if (!params.speakers) return features;
  return ops::add(features, nn::embed(speakers, *params.speakers));
}

template <typename T>
ForwardOutput<T> forward(const ModelParams<T>& params, const DialogInput<T>& input, const nn::ForwardContext& ctx) {
  const ModelConfig& cfg = params.config;
  const Tensor<T>& c = input.features;
  if (c.rank() != 2 || c.cols() != cfg.feature_dim) {
    throw DimensionError("forward: features " + shape_str(c.shape()) + " vs feature_dim " +
                         std::to_string(cfg.feature_dim));
  }
  if (input.mask.size() != c.rows()) {
    throw DimensionError("forward: mask of length " + std::to_string(input.mask.size()) + " for " +
                         shape_str(c.shape()));
  }
  const std::size_t length = prefix_length(input.mask);
  if (length == 0) throw ContractError("forward: dialog has no valid utterance");
  const bool skip_local = !cfg.ablations.no_skip_local;
  const bool skip_global = !cfg.ablations.no_skip_global;

  const Tensor<T> x = speaker_encode(params, c, input.speakers);
  Tensor<T> fused;
  switch (cfg.variant) {
    case Variant::Dual:
      if (cfg.uses_fusion()) {
        Tensor<T> xl = local_stack(x, length, params.local, ctx, skip_local);
        Tensor<T> xg = global_stack(x, input.mask, params.global, ctx, skip_global);
        fused = nn::linear(ops::concat_cols<T>({xl, xg}), *params.fusion);
      } else if (cfg.uses_local()) {
        fused = local_stack(x, length, params.local, ctx, skip_local);
      } else {
        fused = global_stack(x, input.mask, params.global, ctx, skip_global);
      }
      break;
    case Variant::SingleV1:
      fused = global_stack(local_stack(x, length, params.local, ctx, skip_local), input.mask, params.global, ctx,
                           skip_global);
      break;
    case Variant::SingleV2:
      fused = local_stack(global_stack(x, input.mask, params.global, ctx, skip_global), length, params.local, ctx,
                          skip_local);
      break;
  }
  ForwardOutput<T> out;
  out.logits = nn::linear(fused, params.head);
  out.probabilities = ops::softmax(out.logits);
  return out;
}

template <typename T>
std::vector<std::int64_t> predict(const Tensor<T>& probabilities) {
  const std::size_t rows = probabilities.rows(), cols = probabilities.cols();
  const auto v = probabilities.data();
  std::vector<std::int64_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (v[r * cols + c] > v[r * cols + best]) best = c;
    out[r] = static_cast<std::int64_t>(best);
  }
  return out;
}

std::size_t param_count(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.feature_dim;
  std::size_t n = d * config.num_classes;  // head
  if (!config.ablations.no_speaker) n += config.speaker_vocab * d;
  if (config.uses_local()) {
    n += config.local_layers *
         local_block_param_count({d, config.hidden(), config.ff(), config.rnn, config.activation, config.dropout});
  }
  if (config.uses_global()) {
    n += config.global_layers *
         global_block_param_count({d, config.heads, config.ff(), config.activation, config.dropout});
  }
  if (config.uses_fusion()) n += 2 * d * d;
  return n;
}

#define DUALRAN_INSTANTIATE_MODEL(T)                                                                       \
  template struct ModelParams<T>;                                                                          \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                               \
  template Tensor<T> speaker_encode(const ModelParams<T>&, const Tensor<T>&, std::span<const std::int64_t>); \
  template ForwardOutput<T> forward(const ModelParams<T>&, const DialogInput<T>&, const nn::ForwardContext&); \
  template std::vector<std::int64_t> predict(const Tensor<T>&);

DUALRAN_INSTANTIATE_MODEL(float)
DUALRAN_INSTANTIATE_MODEL(double)

}  // namespace dualran
