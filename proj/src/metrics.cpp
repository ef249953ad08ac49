#include "bct/metrics.hpp"

#include <string>

#include "bct/error.hpp"

namespace bct {

ConfusionCounts accumulate(ConfusionCounts counts, int predicted, int truth) {
  if (predicted < 0 || predicted > 1 || truth < 0 || truth > 1) {
    throw ConfigError("class index out of range: predicted " + std::to_string(predicted) + ", true " +
                      std::to_string(truth));
  }
  const bool pred_pos = predicted == kPositiveClass;
  const bool true_pos = truth == kPositiveClass;
  if (pred_pos && true_pos) {
    ++counts.tp;
  } else if (pred_pos) {
    ++counts.fp;
  } else if (true_pos) {
    ++counts.fn;
  } else {
    ++counts.tn;
  }
  return counts;
}

MetricReport compute_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw ConfigError("compute_metrics: no samples counted");
  MetricReport r;
  const double tp = static_cast<double>(c.tp);
  if (c.tp + c.fn == 0) {
    r.recall_undefined = true;
  } else {
    r.recall = tp / static_cast<double>(c.tp + c.fn);
  }
  if (c.tp + c.fp == 0) {
    r.precision_undefined = true;
  } else {
    r.precision = tp / static_cast<double>(c.tp + c.fp);
  }
  if (r.recall_undefined || r.precision_undefined || r.precision + r.recall == 0.0) {
    r.f1_undefined = true;
  } else {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return r;
}

ConfusionCounts swap_positive_class(const ConfusionCounts& c) { return {c.tn, c.tp, c.fn, c.fp}; }

}  // namespace bct
