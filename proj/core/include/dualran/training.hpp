#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualran/data.hpp"
#include "dualran/metrics.hpp"
#include "dualran/model.hpp"

namespace dualran {

enum class Regularization {
  Decoupled,  // AdamW weight decay inside the step
  Literal,    // eta * sum ||W||^2 added to the loss, no decay in the step
};

std::string to_string(Regularization r);
Regularization parse_regularization(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 30;
  double l2_factor = 3e-4;  // eta
  std::uint64_t seed = 1;
  /// Validation metric used to keep the best epoch (see metric_value).
  std::string selection_metric = "weighted_f1";
  Regularization regularization = Regularization::Decoupled;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  /// "f32" or "f64".
  std::string precision = "f32";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
  std::vector<std::pair<std::string, std::string>> to_key_values() const;
  /// One key=value override; unknown keys raise ConfigError.
  void set(const std::string& key, const std::string& value);
};

/// Mean negative log-likelihood of the labelled rows of one dialog given
/// probability rows. Labels at masked rows are never read.
template <typename T>
Tensor<T> data_loss_from_probabilities(const Tensor<T>& probabilities, std::span<const std::int64_t> labels,
                                       std::span<const std::uint8_t> mask);

/// Data loss over a batch: NLL summed over every valid utterance of every
/// dialog, divided by the batch-wide utterance count. Excludes the weight
/// penalty. Builds a graph when gradients are enabled.
template <typename T>
Tensor<T> batch_data_loss(const ModelParams<T>& params, const Batch<T>& batch, const nn::ForwardContext& ctx);

template <typename T>
struct AdamWState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

template <typename T>
AdamWState<T> make_adamw_state(const ParamStore<T>& store);

struct AdamWHyper {
  double lr = 1e-3;
  double weight_decay = 0.0;  // eta, decoupled: p <- p - lr * eta * p
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One AdamW update over every parameter in registration order. A non-finite
/// gradient raises NumericError naming the parameter, before anything moves.
template <typename T>
void adamw_step(ParamStore<T>& store, AdamWState<T>& state, const AdamWHyper& hyper);

/// Global L2 norm of all gradients; rescales them to max_norm when above it.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParamStore<T>& store, double max_norm);

template <typename T>
struct EvalResult {
  ConfusionMatrix confusion;
  MetricReport report;
  double loss = 0.0;  // mean NLL per valid utterance
  std::vector<std::vector<std::int64_t>> predictions;  // corpus order
};

template <typename T>
EvalResult<T> evaluate(const ModelParams<T>& params, const DialogCorpus& corpus, std::size_t batch_size = 32);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<MetricReport> validation;
  double selection_value = 0.0;
  bool improved = false;
  double seconds = 0.0;
};

std::string epoch_record_json(const EpochRecord& record);

template <typename T>
struct TrainResult {
  ModelParams<T> params;  // best by validation selection metric
  std::vector<EpochRecord> history;
  std::optional<std::size_t> best_epoch;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Deterministic given train_config.seed. Without a validation corpus the
/// final epoch's parameters are returned. An empty training corpus raises
/// ConfigError.
template <typename T>
TrainResult<T> train(const DialogCorpus& train_corpus, const DialogCorpus* val_corpus, const ModelConfig& model_config,
                     const TrainConfig& train_config, const EpochCallback& on_epoch = {});

}  // namespace dualran
