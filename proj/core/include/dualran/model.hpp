#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualran/attention.hpp"
#include "dualran/nn.hpp"
#include "dualran/recurrence.hpp"

namespace dualran {

enum class Variant { Dual, SingleV1, SingleV2 };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct Ablations {
  bool no_local = false;
  bool no_global = false;
  bool no_speaker = false;
  bool no_skip_local = false;
  bool no_skip_global = false;

  /// Applies one CLI-style name: no-local, no-global, no-speaker,
  /// no-sc-local, no-sc-global, no-sc-both.
  void apply(const std::string& name);
  /// Comma-separated canonical list ("" when none).
  std::string to_string() const;
  bool operator==(const Ablations&) const = default;
};

Ablations parse_ablations(const std::string& comma_list);

struct ModelConfig {
  std::size_t feature_dim = 16;
  std::size_t local_layers = 2;
  std::size_t global_layers = 2;
  std::size_t heads = 4;
  RnnKind rnn = RnnKind::Lstm;
  double dropout = 0.1;
  Variant variant = Variant::Dual;
  Ablations ablations;
  std::size_t num_classes = 6;
  std::size_t speaker_vocab = 12;
  /// Per-direction recurrent width; 0 means feature_dim / 2.
  std::size_t hidden_dim = 0;
  /// Feed-forward inner width; 0 means 2 * feature_dim.
  std::size_t ff_dim = 0;
  nn::Activation activation = nn::Activation::Relu;

  std::size_t hidden() const { return hidden_dim ? hidden_dim : feature_dim / 2; }
  std::size_t ff() const { return ff_dim ? ff_dim : 2 * feature_dim; }
  bool uses_local() const { return !ablations.no_local; }
  bool uses_global() const { return !ablations.no_global; }
  bool uses_fusion() const { return variant == Variant::Dual && uses_local() && uses_global(); }

  /// Raises ConfigError on any inconsistency.
  void validate() const;

  /// Fully resolved key/value form; the basis of the config hash.
  std::vector<std::pair<std::string, std::string>> to_key_values() const;
  static ModelConfig from_key_values(const std::map<std::string, std::string>& kv);
  std::string canonical_text() const;
  /// FNV-1a 64 of canonical_text().
  std::uint64_t hash() const;
};

std::string hash_hex(std::uint64_t h);

/// Every trainable array of one model instance (W_all), plus typed views of
/// the same tensors per component. Move-only: copies would alias storage.
template <typename T>
struct ModelParams {
  ModelConfig config;
  ParamStore<T> store;
  std::optional<nn::EmbeddingTable<T>> speakers;
  std::vector<LocalBlockParams<T>> local;
  std::vector<GlobalBlockParams<T>> global;
  std::optional<nn::LinearParams<T>> fusion;  // W_gl, 2d -> d, no bias
  nn::LinearParams<T> head;                   // W_smax, d -> |E|, no bias

  ModelParams() = default;
  ModelParams(ModelParams&&) noexcept = default;
  ModelParams& operator=(ModelParams&&) noexcept = default;
  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;

  /// Deep copy with independent storage.
  ModelParams clone() const;
};

/// Initialises a model. Each component draws from its own forked stream, so
/// components shared between ablations get identical initial values.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

/// One dialog, possibly right-padded.
template <typename T>
struct DialogInput {
  Tensor<T> features;                  // [T x d] utterance features C
  std::vector<std::int64_t> speakers;  // [T], order-of-appearance ids
  Mask mask;                           // [T]
};

template <typename T>
struct ForwardOutput {
  Tensor<T> logits;         // [T x |E|]
  Tensor<T> probabilities;  // softmax(logits)
};

/// X = C + EMB(S); identity under the no-speaker ablation.
template <typename T>
Tensor<T> speaker_encode(const ModelParams<T>& params, const Tensor<T>& features,
                         std::span<const std::int64_t> speakers);

template <typename T>
ForwardOutput<T> forward(const ModelParams<T>& params, const DialogInput<T>& input, const nn::ForwardContext& ctx);

/// Row-wise argmax; ties go to the lowest class index.
template <typename T>
std::vector<std::int64_t> predict(const Tensor<T>& probabilities);

/// Closed-form size of W_all for a configuration.
std::size_t param_count(const ModelConfig& config);

}  // namespace dualran
