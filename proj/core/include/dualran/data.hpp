#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dualran/model.hpp"
#include "dualran/rng.hpp"

namespace dualran {

/// Label stored at padded positions. Never a valid class index.
inline constexpr std::int64_t kPadLabel = -1;

struct LabelManifest {
  std::string name;
  std::vector<std::string> classes;  // index order is normative
  std::optional<std::size_t> neutral_index;

  std::size_t size() const { return classes.size(); }
  /// Raises LabelError for a name outside the manifest.
  std::size_t index_of(const std::string& label) const;
};

/// iemocap, meld, emorynlp, dailydialog, sentiment. Unknown names raise
/// ConfigError.
LabelManifest builtin_manifest(const std::string& name);
std::vector<std::string> builtin_manifest_names();
/// JSON object {"name": ..., "classes": [...], "neutral": "<class>"}; the
/// neutral entry is optional.
LabelManifest load_manifest(const std::string& path);

struct Turn {
  std::vector<double> features;
  std::int64_t speaker = 0;  // order-of-appearance id within the dialog
  std::int64_t label = 0;
  std::string speaker_name;
  std::string text;
  std::string sentiment;  // native sentiment tag when the source has one
};

struct Dialog {
  std::string id;
  std::string split;
  std::vector<Turn> turns;
};

struct DialogCorpus {
  std::size_t feature_dim = 0;
  LabelManifest manifest;
  std::vector<Dialog> dialogs;

  std::size_t utterance_count() const;
  /// Dialogs whose split tag equals `split`.
  DialogCorpus subset(const std::string& split) const;
};

/// Reads newline-delimited dialogs, one JSON object per line:
///   {"id": str, "split": str (optional),
///    "turns": [{"features": [num...], "speaker": str|int, "label": str,
///               "text": str (optional), "sentiment": str (optional)}]}
/// Blank lines are skipped. When `split` is non-empty only matching dialogs
/// are kept.
DialogCorpus load_corpus(const std::string& path, const LabelManifest& manifest, const std::string& split = "");
/// Writes the same format back out.
void write_corpus(const DialogCorpus& corpus, const std::string& path);

/// Reference split sizes for the four named datasets.
struct SplitStats {
  std::size_t dialogs = 0;
  std::size_t utterances = 0;
};
std::optional<SplitStats> reference_split_stats(const std::string& dataset, const std::string& split);

/// Maps raw speaker names to ids in order of first appearance.
std::vector<std::int64_t> normalize_speakers(const std::vector<std::string>& names);
/// Same renumbering on ids already assigned; idempotent.
std::vector<std::int64_t> normalize_speakers(const std::vector<std::int64_t>& ids);

/// B dialogs right-padded to the longest one. Row-major flat storage:
/// features [B x T x d], speakers/labels/mask [B x T].
template <typename T>
struct Batch {
  std::size_t size = 0;
  std::size_t max_len = 0;
  std::size_t dim = 0;
  std::vector<T> features;
  std::vector<std::int64_t> speakers;
  std::vector<std::int64_t> labels;
  Mask mask;
  std::vector<std::size_t> lengths;
  std::vector<std::string> ids;

  std::size_t valid_count() const;
  /// Dialog b as a model input: padded to max_len, or cut to its own length
  /// when trim is set.
  DialogInput<T> input(std::size_t b, bool trim = false) const;
  std::vector<std::int64_t> labels_of(std::size_t b, bool trim = false) const;
};

/// Speaker ids >= speaker_cap are clamped to speaker_cap - 1.
template <typename T>
Batch<T> make_batch(const DialogCorpus& corpus, const std::vector<std::size_t>& order, std::size_t speaker_cap);

/// Shuffles with `rng` (callers fork one stream per epoch) and chunks into
/// batches of at most batch_size dialogs; every dialog appears once.
template <typename T>
std::vector<Batch<T>> make_batches(const DialogCorpus& corpus, std::size_t batch_size, Rng& rng,
                                   std::size_t speaker_cap);
/// Same, corpus order, no shuffle.
template <typename T>
std::vector<Batch<T>> make_batches_ordered(const DialogCorpus& corpus, std::size_t batch_size,
                                           std::size_t speaker_cap);

enum class Sentiment { Negative = 0, Neutral = 1, Positive = 2 };
std::string to_string(Sentiment s);

/// Three-way merge of an emotion label for the given dataset. For meld the
/// label must already be a sentiment name. Unknown labels raise LabelError.
Sentiment merge_sentiment(const std::string& label, const std::string& dataset);

/// Relabels a corpus to the sentiment manifest. Turns carrying a native
/// sentiment tag use it directly; others go through merge_sentiment.
DialogCorpus to_sentiment(const DialogCorpus& corpus, const std::string& dataset);

}  // namespace dualran
