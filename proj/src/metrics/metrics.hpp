#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace daufi::metrics {

// K x K pixel-count matrix; rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return k_; }
  std::int64_t at(int gt, int pred) const {
    return counts_[static_cast<std::size_t>(gt) * k_ + pred];
  }
  std::int64_t& at(int gt, int pred) {
    return counts_[static_cast<std::size_t>(gt) * k_ + pred];
  }
  std::int64_t total() const;
  std::int64_t row_sum(int gt) const;
  std::int64_t col_sum(int pred) const;

  // Per-pixel tally; throws std::invalid_argument on size mismatch or
  // out-of-range class indices.
  void accumulate(const std::vector<std::int32_t>& pred,
                  const std::vector<std::int32_t>& gt);
  void merge(const ConfusionMatrix& other);

 private:
  int k_;
  std::vector<std::int64_t> counts_;
};

// What to do with classes absent from both ground truth and prediction when
// averaging per-class scores.
enum class AbsentPolicy { kExclude, kScoreZero, kScoreOne };

struct PerClassResult {
  std::vector<double> per_class;  // NaN where undefined
  std::vector<bool> defined;
  double mean = 0.0;
};

PerClassResult iou(const ConfusionMatrix& cm, bool include_background,
                   AbsentPolicy policy = AbsentPolicy::kExclude);
double fwiou(const ConfusionMatrix& cm);
// Engineer-weighted IoU: sum(w_c * IoU_c) / sum(w_c) over defined classes.
double ciw_iou(const ConfusionMatrix& cm, const std::vector<double>& weights);
PerClassResult f1(const ConfusionMatrix& cm,
                  AbsentPolicy policy = AbsentPolicy::kExclude);
double balanced_accuracy(const ConfusionMatrix& cm);
double mcc(const ConfusionMatrix& cm);

// The full report emitted by evaluation. Key set is fixed:
// iou_bg, iou_nobg, fwiou, ciw_iou, f1, balanced_acc, mcc.
struct MetricsReport {
  double iou_bg = 0.0;
  double iou_nobg = 0.0;
  double fwiou = 0.0;
  double ciw_iou = 0.0;
  double f1 = 0.0;
  double balanced_acc = 0.0;
  double mcc = 0.0;
  std::vector<double> per_class_iou;
  std::vector<double> per_class_f1;

  std::string to_json(const std::vector<std::string>& class_names = {}) const;
};

MetricsReport compute_report(const ConfusionMatrix& cm,
                             const std::vector<double>& ciw_weights);

}  // namespace daufi::metrics
