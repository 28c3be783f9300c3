#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dualran/data.hpp"

namespace dualran {

// Context-dependent toy corpus. Every turn carries a latent token z_t drawn
// uniformly from K classes; its feature vector is prototype[z_t] plus
// Gaussian noise. The label is the majority token over the window
// z_{t-k} .. z_t (shorter at the start of a dialog). Ties are broken by the
// speaker id parity of turn t: even picks the tied token seen most recently,
// odd the tied token seen earliest. A classifier that sees only turn t can at
// best recover z_t, so its accuracy is capped by the enumeration below.
//
// Optionally each dialog also draws a mood m from `moods` values. A weak mood
// vector (scaled by mood_strength) is added to every turn, and the label
// becomes (window label + m) mod K. The mood is only recoverable by pooling
// over the whole dialog. Granting the context-free classifier the mood for
// free leaves the enumeration ceiling unchanged, since the shift is a
// bijection.
struct SyntheticSpec {
  std::size_t train_dialogs = 500;
  std::size_t val_dialogs = 100;
  std::size_t test_dialogs = 100;
  std::size_t min_len = 8;
  std::size_t max_len = 16;
  std::size_t dim = 16;
  std::size_t num_speakers = 2;
  std::size_t num_classes = 4;
  std::size_t context = 2;  // k
  double noise = 1.0;
  std::size_t moods = 1;  // 1 disables the dialog-level component
  double mood_strength = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<std::pair<std::string, std::string>> to_key_values() const;
  /// Applies one key=value override; unknown keys raise ConfigError.
  void set(const std::string& key, const std::string& value);
};

/// Parses "k=2,noise=0.5,train=200" style overrides on top of the defaults.
SyntheticSpec parse_synthetic_spec(const std::string& inline_spec);

/// Labeling rule on one window, oldest token first.
std::int64_t window_label(const std::vector<std::int64_t>& window, bool odd_parity);

/// Best achievable accuracy when only the last token of a length-w window is
/// known, by exhaustive enumeration over all K^w windows.
double window_ceiling(std::size_t num_classes, std::size_t window, bool odd_parity);

struct SyntheticCeiling {
  double accuracy = 0.0;   // turn-weighted over the corpus
  std::size_t turns = 0;
};

/// Context-free ceiling for the turns actually present in `corpus`.
SyntheticCeiling context_free_ceiling(const SyntheticSpec& spec, const DialogCorpus& corpus);

struct SyntheticCorpus {
  DialogCorpus corpus;  // dialogs tagged train / val / test
  std::vector<std::vector<double>> prototypes;
  std::vector<std::vector<double>> mood_vectors;
  std::vector<std::int64_t> dialog_moods;  // parallel to corpus.dialogs
  std::map<std::string, SyntheticCeiling> ceilings;  // per split
  /// Latent tokens per dialog, parallel to corpus.dialogs.
  std::vector<std::vector<std::int64_t>> tokens;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

/// Label manifest used by generated corpora: c0 .. c{K-1}.
LabelManifest synthetic_manifest(std::size_t num_classes);

}  // namespace dualran
