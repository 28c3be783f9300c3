#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dualran {

/// counts[true][predicted].
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t k = 0) : num_classes(k), counts(k * k, 0) {}
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * num_classes + pred]; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * num_classes + pred]; }
  std::uint64_t total() const;
  void merge(const ConfusionMatrix& other);
};

/// Pairs with a negative label (padding) are skipped. Other out-of-range
/// values raise IndexError; unequal lengths raise ContractError.
ConfusionMatrix confusion(std::span<const std::int64_t> preds, std::span<const std::int64_t> labels,
                          std::size_t num_classes);

struct MetricReport {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  /// Micro F1 over the non-neutral classes only; equals micro_f1 when no
  /// neutral class is designated.
  double micro_f1_excl_neutral = 0.0;
  std::vector<double> per_class_f1;
  std::vector<double> per_class_precision;
  std::vector<double> per_class_recall;
  std::vector<std::uint64_t> support;
  std::uint64_t total = 0;
};

/// F1 is 0 whenever precision + recall is 0. Macro F1 averages over every
/// class of the matrix, observed or not.
MetricReport compute_metrics(const ConfusionMatrix& cm, std::optional<std::size_t> neutral_index = std::nullopt);

/// Reads a named headline value: accuracy, weighted_f1, micro_f1, macro_f1,
/// micro_f1_excl_neutral. Unknown names raise ConfigError.
double metric_value(const MetricReport& report, const std::string& name);

/// Header row of class names, then one row per true class.
std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);
/// Single JSON object with every field and the class names.
std::string report_json(const MetricReport& report, const std::vector<std::string>& class_names);

}  // namespace dualran
