#include "dualran/metrics.hpp"

#include <sstream>

#include "json.hpp"

#include "dualran/errors.hpp"

namespace dualran {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes != num_classes) {
    throw DimensionError("cannot merge confusion matrices of " + std::to_string(num_classes) + " and " +
                         std::to_string(other.num_classes) + " classes");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

ConfusionMatrix confusion(std::span<const std::int64_t> preds, std::span<const std::int64_t> labels,
                          std::size_t num_classes) {
  if (preds.size() != labels.size()) {
    throw ContractError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix cm(num_classes);
  const auto k = static_cast<std::int64_t>(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0) continue;
    if (labels[i] >= k || preds[i] < 0 || preds[i] >= k) {
      throw IndexError("confusion: pair " + std::to_string(i) + " (label " + std::to_string(labels[i]) +
                       ", prediction " + std::to_string(preds[i]) + ") outside " + std::to_string(num_classes) +
                       " classes");
    }
    cm.at(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(preds[i])) += 1;
  }
  return cm;
}

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double f1_of(double tp, double fp, double fn) {
  const double p = ratio(tp, tp + fp), r = ratio(tp, tp + fn);
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace

MetricReport compute_metrics(const ConfusionMatrix& cm, std::optional<std::size_t> neutral_index) {
  const std::size_t k = cm.num_classes;
  if (neutral_index && *neutral_index >= k) {
    throw IndexError("neutral index " + std::to_string(*neutral_index) + " outside " + std::to_string(k) +
                     " classes");
  }
  MetricReport r;
  r.total = cm.total();
  r.per_class_f1.assign(k, 0.0);
  r.per_class_precision.assign(k, 0.0);
  r.per_class_recall.assign(k, 0.0);
  r.support.assign(k, 0);

  double trace = 0.0, weighted = 0.0, macro = 0.0;
  double tp_x = 0.0, fp_x = 0.0, fn_x = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const double tp = static_cast<double>(cm.at(c, c));
    const double fp = static_cast<double>(col) - tp;
    const double fn = static_cast<double>(row) - tp;
    r.support[c] = row;
    r.per_class_precision[c] = ratio(tp, tp + fp);
    r.per_class_recall[c] = ratio(tp, tp + fn);
    r.per_class_f1[c] = f1_of(tp, fp, fn);
    trace += tp;
    weighted += static_cast<double>(row) * r.per_class_f1[c];
    macro += r.per_class_f1[c];
    if (!neutral_index || c != *neutral_index) {
      tp_x += tp;
      fp_x += fp;
      fn_x += fn;
    }
  }
  const double total = static_cast<double>(r.total);
  r.accuracy = ratio(trace, total);
  r.weighted_f1 = ratio(weighted, total);
  r.macro_f1 = k ? macro / static_cast<double>(k) : 0.0;
  // Summed over all classes, micro precision and recall both reduce to accuracy.
  r.micro_f1 = r.accuracy;
  r.micro_f1_excl_neutral = f1_of(tp_x, fp_x, fn_x);
  return r;
}

double metric_value(const MetricReport& report, const std::string& name) {
  if (name == "accuracy") return report.accuracy;
  if (name == "weighted_f1") return report.weighted_f1;
  if (name == "micro_f1") return report.micro_f1;
  if (name == "macro_f1") return report.macro_f1;
  if (name == "micro_f1_excl_neutral") return report.micro_f1_excl_neutral;
  throw ConfigError("unknown metric '" + name + "'");
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
  if (class_names.size() != cm.num_classes) {
    throw DimensionError("confusion_csv: " + std::to_string(class_names.size()) + " names for " +
                         std::to_string(cm.num_classes) + " classes");
  }
  std::ostringstream out;
  out << "true\\pred";
  for (const auto& n : class_names) out << ',' << n;
  out << '\n';
  for (std::size_t t = 0; t < cm.num_classes; ++t) {
    out << class_names[t];
    for (std::size_t p = 0; p < cm.num_classes; ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
  return out.str();
}

std::string report_json(const MetricReport& report, const std::vector<std::string>& class_names) {
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  j["weighted_f1"] = report.weighted_f1;
  j["micro_f1"] = report.micro_f1;
  j["macro_f1"] = report.macro_f1;
  j["micro_f1_excl_neutral"] = report.micro_f1_excl_neutral;
  j["total"] = report.total;
  j["classes"] = class_names;
  j["per_class_f1"] = report.per_class_f1;
  j["per_class_precision"] = report.per_class_precision;
  j["per_class_recall"] = report.per_class_recall;
  j["support"] = report.support;
  return j.dump(2);
}

}  // namespace dualran
