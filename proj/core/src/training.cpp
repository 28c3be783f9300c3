#include "dualran/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "json.hpp"

#include "dualran/errors.hpp"
#include "dualran/ops.hpp"

namespace dualran {

std::string to_string(Regularization r) { return r == Regularization::Literal ? "literal" : "decoupled"; }

Regularization parse_regularization(const std::string& s) {
  if (s == "decoupled") return Regularization::Decoupled;
  if (s == "literal") return Regularization::Literal;
  throw ConfigError("unknown regularization '" + s + "' (expected decoupled|literal)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(l2_factor >= 0.0)) fail("l2_factor must be >= 0");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(clip_norm >= 0.0)) fail("clip_norm must be >= 0");
  if (precision != "f32" && precision != "f64") fail("precision must be f32 or f64");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be > 0");
  (void)metric_value(MetricReport{}, selection_metric);
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size() || value.find('-') != std::string::npos) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> TrainConfig::to_key_values() const {
  return {
      {"learning_rate", fmt(learning_rate)},
      {"batch_size", std::to_string(batch_size)},
      {"max_epochs", std::to_string(max_epochs)},
      {"l2_factor", fmt(l2_factor)},
      {"seed", std::to_string(seed)},
      {"selection_metric", selection_metric},
      {"regularization", dualran::to_string(regularization)},
      {"clip_norm", fmt(clip_norm)},
      {"precision", precision},
      {"beta1", fmt(beta1)},
      {"beta2", fmt(beta2)},
      {"adam_epsilon", fmt(adam_epsilon)},
  };
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "batch_size") batch_size = parse_uint(key, value);
  else if (key == "max_epochs") max_epochs = parse_uint(key, value);
  else if (key == "l2_factor") l2_factor = parse_double(key, value);
  else if (key == "seed") seed = parse_uint(key, value);
  else if (key == "selection_metric") selection_metric = value;
  else if (key == "regularization") regularization = parse_regularization(value);
  else if (key == "clip_norm") clip_norm = parse_double(key, value);
  else if (key == "precision") precision = value;
  else if (key == "beta1") beta1 = parse_double(key, value);
  else if (key == "beta2") beta2 = parse_double(key, value);
  else if (key == "adam_epsilon") adam_epsilon = parse_double(key, value);
  else throw ConfigError("unknown train config key '" + key + "'");
}

template <typename T>
Tensor<T> data_loss_from_probabilities(const Tensor<T>& probabilities, std::span<const std::int64_t> labels,
                                       std::span<const std::uint8_t> mask) {
  return ops::masked_nll(ops::log(probabilities), labels, mask);
}

template <typename T>
Tensor<T> batch_data_loss(const ModelParams<T>& params, const Batch<T>& batch, const nn::ForwardContext& ctx) {
  const std::size_t total = batch.valid_count();
  if (total == 0) throw ContractError("batch has no valid utterance");
  Tensor<T> loss;
  for (std::size_t b = 0; b < batch.size; ++b) {
    const DialogInput<T> in = batch.input(b, true);
    const auto labels = batch.labels_of(b, true);
    const ForwardOutput<T> out = forward(params, in, ctx);
    Tensor<T> nll;
    try {
      nll = ops::cross_entropy(out.logits, labels, in.mask);
    } catch (const LabelError& e) {
      throw LabelError("dialog '" + batch.ids[b] + "': " + e.what());
    }
    // masked_nll is a per-dialog mean; reweight so the batch divides by its
    // total utterance count.
    const T w = static_cast<T>(static_cast<double>(batch.lengths[b]) / static_cast<double>(total));
    Tensor<T> term = ops::scale(nll, w);
    loss = loss.defined() ? ops::add(loss, term) : term;
  }
  return loss;
}

template <typename T>
AdamWState<T> make_adamw_state(const ParamStore<T>& store) {
  AdamWState<T> s;
  for (const auto& e : store.entries()) {
    s.m.emplace_back(e.tensor.numel(), T{});
    s.v.emplace_back(e.tensor.numel(), T{});
  }
  return s;
}

template <typename T>
void adamw_step(ParamStore<T>& store, AdamWState<T>& state, const AdamWHyper& h) {
  auto& entries = store.entries();
  if (state.m.size() != entries.size()) {
    throw ContractError("optimizer state tracks " + std::to_string(state.m.size()) + " arrays, store has " +
                        std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto g = entries[i].tensor.grad();
    if (state.m[i].size() != entries[i].tensor.numel()) {
      throw ContractError("optimizer state for '" + entries[i].name + "' has the wrong size");
    }
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(static_cast<double>(g[j]))) {
        throw NumericError("non-finite gradient in '" + entries[i].name + "' at index " + std::to_string(j));
      }
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  const T decay = static_cast<T>(1.0 - h.lr * h.weight_decay);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto p = entries[i].tensor.mutable_data();
    const auto g = entries[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T gj = g.empty() ? T{} : g[j];
      m[j] = b1 * m[j] + (T{1} - b1) * gj;
      v[j] = b2 * v[j] + (T{1} - b2) * gj * gj;
      const double m_hat = static_cast<double>(m[j]) / bc1;
      const double v_hat = static_cast<double>(v[j]) / bc2;
      if (h.weight_decay != 0.0) p[j] *= decay;
      p[j] -= static_cast<T>(h.lr * m_hat / (std::sqrt(v_hat) + h.epsilon));
    }
  }
}

template <typename T>
double clip_grad_norm(ParamStore<T>& store, double max_norm) {
  double sq = 0.0;
  for (const auto& e : store.entries())
    for (auto g : e.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& e : store.entries()) {
      if (e.tensor.grad().empty()) continue;
      for (auto& g : e.tensor.mutable_grad()) g *= f;
    }
  }
  return norm;
}

template <typename T>
EvalResult<T> evaluate(const ModelParams<T>& params, const DialogCorpus& corpus, std::size_t batch_size) {
  NoGradGuard no_grad;
  const nn::ForwardContext ctx{false, nullptr};
  EvalResult<T> r;
  r.confusion = ConfusionMatrix(params.config.num_classes);
  double loss_sum = 0.0;
  std::size_t count = 0;
  for (const auto& batch : make_batches_ordered<T>(corpus, batch_size, params.config.speaker_vocab)) {
    for (std::size_t b = 0; b < batch.size; ++b) {
      const DialogInput<T> in = batch.input(b, true);
      const auto labels = batch.labels_of(b, true);
      const ForwardOutput<T> out = forward(params, in, ctx);
      auto pred = predict(out.probabilities);
      r.confusion.merge(confusion(pred, labels, params.config.num_classes));
      loss_sum += static_cast<double>(ops::cross_entropy(out.logits, labels, in.mask).item()) *
                  static_cast<double>(labels.size());
      count += labels.size();
      r.predictions.push_back(std::move(pred));
    }
  }
  r.loss = count ? loss_sum / static_cast<double>(count) : 0.0;
  r.report = compute_metrics(r.confusion, corpus.manifest.neutral_index);
  return r;
}

std::string epoch_record_json(const EpochRecord& rec) {
  nlohmann::ordered_json j;
  j["epoch"] = rec.epoch;
  j["train_loss"] = rec.train_loss;
  if (rec.validation) {
    j["val_accuracy"] = rec.validation->accuracy;
    j["val_weighted_f1"] = rec.validation->weighted_f1;
    j["val_micro_f1"] = rec.validation->micro_f1;
    j["val_macro_f1"] = rec.validation->macro_f1;
    j["val_micro_f1_excl_neutral"] = rec.validation->micro_f1_excl_neutral;
  }
  j["selection_value"] = rec.selection_value;
  j["improved"] = rec.improved;
  j["seconds"] = rec.seconds;
  return j.dump();
}

template <typename T>
TrainResult<T> train(const DialogCorpus& train_corpus, const DialogCorpus* val_corpus, const ModelConfig& model_config,
                     const TrainConfig& cfg, const EpochCallback& on_epoch) {
  model_config.validate();
  cfg.validate();
  if (train_corpus.dialogs.empty()) throw ConfigError("training split is empty");
  if (val_corpus && val_corpus->dialogs.empty()) val_corpus = nullptr;
  if (train_corpus.feature_dim != model_config.feature_dim) {
    throw ConfigError("corpus feature dim " + std::to_string(train_corpus.feature_dim) + " vs model feature_dim " +
                      std::to_string(model_config.feature_dim));
  }
  if (train_corpus.manifest.size() != model_config.num_classes) {
    throw ConfigError("corpus has " + std::to_string(train_corpus.manifest.size()) + " classes, model expects " +
                      std::to_string(model_config.num_classes));
  }

  TrainResult<T> result{init_params<T>(model_config, cfg.seed), {}, std::nullopt};
  ModelParams<T> live = result.params.clone();
  AdamWState<T> opt = make_adamw_state(live.store);
  const AdamWHyper hyper{cfg.learning_rate,
                         cfg.regularization == Regularization::Decoupled ? cfg.l2_factor : 0.0,
                         cfg.beta1, cfg.beta2, cfg.adam_epsilon};
  const Rng root(cfg.seed);
  Rng dropout_rng = root.fork(7);
  double best = -1.0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle = root.fork(1000 + epoch);
    const auto batches = make_batches<T>(train_corpus, cfg.batch_size, shuffle, model_config.speaker_vocab);
    const nn::ForwardContext ctx{true, &dropout_rng};
    double loss_sum = 0.0;
    std::size_t utterances = 0;
    for (const auto& batch : batches) {
      live.store.zero_grad();
      Tensor<T> loss = batch_data_loss(live, batch, ctx);
      const double data_loss = static_cast<double>(loss.item());
      if (!std::isfinite(data_loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      if (cfg.regularization == Regularization::Literal && cfg.l2_factor > 0.0) {
        Tensor<T> penalty;
        for (const auto& e : live.store.entries()) {
          Tensor<T> s = ops::sum_squares(e.tensor);
          penalty = penalty.defined() ? ops::add(penalty, s) : s;
        }
        loss = ops::add(loss, ops::scale(penalty, static_cast<T>(cfg.l2_factor)));
      }
      backward(loss);
      if (cfg.clip_norm > 0.0) clip_grad_norm(live.store, cfg.clip_norm);
      adamw_step(live.store, opt, hyper);
      const std::size_t n = batch.valid_count();
      loss_sum += data_loss * static_cast<double>(n);
      utterances += n;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(utterances);
    if (val_corpus) {
      const EvalResult<T> ev = evaluate(live, *val_corpus, cfg.batch_size);
      rec.validation = ev.report;
      rec.selection_value = metric_value(ev.report, cfg.selection_metric);
      rec.improved = rec.selection_value > best;
    } else {
      rec.improved = true;
    }
    if (rec.improved) {
      best = rec.selection_value;
      result.params = live.clone();
      result.best_epoch = epoch;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

#define DUALRAN_INSTANTIATE_TRAIN(T)                                                                         \
  template Tensor<T> data_loss_from_probabilities(const Tensor<T>&, std::span<const std::int64_t>,          \
                                                  std::span<const std::uint8_t>);                           \
  template Tensor<T> batch_data_loss(const ModelParams<T>&, const Batch<T>&, const nn::ForwardContext&);    \
  template AdamWState<T> make_adamw_state(const ParamStore<T>&);                                            \
  template void adamw_step(ParamStore<T>&, AdamWState<T>&, const AdamWHyper&);                              \
  template double clip_grad_norm(ParamStore<T>&, double);                                                   \
  template EvalResult<T> evaluate(const ModelParams<T>&, const DialogCorpus&, std::size_t);                 \
  template TrainResult<T> train(const DialogCorpus&, const DialogCorpus*, const ModelConfig&,               \
                                const TrainConfig&, const EpochCallback&);

DUALRAN_INSTANTIATE_TRAIN(float)
DUALRAN_INSTANTIATE_TRAIN(double)

}  // namespace dualran
