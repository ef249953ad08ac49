#pragma once

#include <cstddef>
#include <optional>

namespace bct {

// Class 1 is the positive class (damaged / non-residential) everywhere.
inline constexpr int kPositiveClass = 1;

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// Increments exactly one counter. Throws ConfigError for classes outside {0,1}.
ConfusionCounts accumulate(ConfusionCounts counts, int predicted, int truth);

struct MetricReport {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  // Set when the metric's denominator was zero; the value is then 0.
  bool recall_undefined = false;
  bool precision_undefined = false;
  bool f1_undefined = false;
  std::optional<std::size_t> epochs_to_converge;

  bool operator==(const MetricReport&) const = default;
};

// Recall = TP/(TP+FN), Precision = TP/(TP+FP), F1 = 2 Pr Rc/(Pr+Rc),
// Accuracy = (TP+TN)/total. Throws ConfigError on empty counts.
MetricReport compute_metrics(const ConfusionCounts& counts);

// The same counts with class 0 treated as positive.
ConfusionCounts swap_positive_class(const ConfusionCounts& counts);

}  // namespace bct
