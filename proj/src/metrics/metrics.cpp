#include "metrics/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace daufi::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_nonzero(const ConfusionMatrix& cm) {
  if (cm.total() == 0)
    throw std::invalid_argument("metrics: empty confusion matrix");
}

double mean_with_policy(const std::vector<double>& values,
                        const std::vector<bool>& defined,
                        const std::vector<bool>& included,
                        AbsentPolicy policy) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (!included[c]) continue;
    if (defined[c]) {
      sum += values[c];
      ++n;
    } else if (policy == AbsentPolicy::kScoreZero) {
      ++n;
    } else if (policy == AbsentPolicy::kScoreOne) {
      sum += 1.0;
      ++n;
    }
  }
  if (n == 0)
    throw std::domain_error("metrics: no defined classes; metric undefined");
  return sum / n;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
  if (num_classes <= 0)
    throw std::invalid_argument("ConfusionMatrix: need at least one class");
  counts_.assign(static_cast<std::size_t>(k_) * k_, 0);
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t v : counts_) t += v;
  return t;
}

std::int64_t ConfusionMatrix::row_sum(int gt) const {
  std::int64_t t = 0;
  for (int p = 0; p < k_; ++p) t += at(gt, p);
  return t;
}

std::int64_t ConfusionMatrix::col_sum(int pred) const {
  std::int64_t t = 0;
  for (int g = 0; g < k_; ++g) t += at(g, pred);
  return t;
}

void ConfusionMatrix::accumulate(const std::vector<std::int32_t>& pred,
                                 const std::vector<std::int32_t>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("ConfusionMatrix: pred/gt size mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::int32_t p = pred[i], g = gt[i];
    if (p < 0 || p >= k_ || g < 0 || g >= k_)
      throw std::invalid_argument("ConfusionMatrix: class index out of range "
                                  "at pixel " + std::to_string(i));
    ++at(g, p);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_)
    throw std::invalid_argument("ConfusionMatrix: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i)
    counts_[i] += other.counts_[i];
}

PerClassResult iou(const ConfusionMatrix& cm, bool include_background,
                   AbsentPolicy policy) {
  require_nonzero(cm);
  const int k = cm.num_classes();
  PerClassResult res;
  res.per_class.assign(k, kNaN);
  res.defined.assign(k, false);
  std::vector<bool> included(k, true);
  if (!include_background && k > 0) included[0] = false;
  for (int c = 0; c < k; ++c) {
    const std::int64_t tp = cm.at(c, c);
    const std::int64_t denom = cm.row_sum(c) + cm.col_sum(c) - tp;
    if (denom > 0) {
      res.per_class[c] = static_cast<double>(tp) / static_cast<double>(denom);
      res.defined[c] = true;
    }
  }
  res.mean = mean_with_policy(res.per_class, res.defined, included, policy);
  return res;
}

double fwiou(const ConfusionMatrix& cm) {
  require_nonzero(cm);
  const int k = cm.num_classes();
  const double total = static_cast<double>(cm.total());
  double acc = 0.0;
  for (int c = 0; c < k; ++c) {
    const std::int64_t rs = cm.row_sum(c);
    if (rs == 0) continue;  // zero frequency contributes nothing
    const std::int64_t tp = cm.at(c, c);
    const std::int64_t denom = rs + cm.col_sum(c) - tp;
    acc += (static_cast<double>(rs) / total) *
           (static_cast<double>(tp) / static_cast<double>(denom));
  }
  return acc;
}

double ciw_iou(const ConfusionMatrix& cm, const std::vector<double>& weights) {
  require_nonzero(cm);
  const int k = cm.num_classes();
  if (static_cast<int>(weights.size()) != k)
    throw std::invalid_argument("ciw_iou: weight count must equal class count");
  PerClassResult i = iou(cm, /*include_background=*/true);
  double num = 0.0, den = 0.0;
  for (int c = 0; c < k; ++c) {
    if (!i.defined[c]) continue;
    num += weights[c] * i.per_class[c];
    den += weights[c];
  }
  if (den <= 0.0)
    throw std::domain_error("ciw_iou: total weight over defined classes is 0");
  return num / den;
}

PerClassResult f1(const ConfusionMatrix& cm, AbsentPolicy policy) {
  require_nonzero(cm);
  const int k = cm.num_classes();
  PerClassResult res;
  res.per_class.assign(k, kNaN);
  res.defined.assign(k, false);
  std::vector<bool> included(k, true);
  for (int c = 0; c < k; ++c) {
    const std::int64_t tp = cm.at(c, c);
    const std::int64_t rs = cm.row_sum(c), cs = cm.col_sum(c);
    if (rs + cs - tp == 0) continue;  // absent from both gt and pred
    const double precision = cs > 0 ? static_cast<double>(tp) / cs : 0.0;
    const double recall = rs > 0 ? static_cast<double>(tp) / rs : 0.0;
    res.per_class[c] = (precision + recall) > 0.0
                           ? 2.0 * precision * recall / (precision + recall)
                           : 0.0;
    res.defined[c] = true;
  }
  res.mean = mean_with_policy(res.per_class, res.defined, included, policy);
  return res;
}

double balanced_accuracy(const ConfusionMatrix& cm) {
  require_nonzero(cm);
  const int k = cm.num_classes();
  double acc = 0.0;
  int n = 0;
  for (int c = 0; c < k; ++c) {
    const std::int64_t rs = cm.row_sum(c);
    if (rs == 0) continue;  // recall defined only for classes present in gt
    acc += static_cast<double>(cm.at(c, c)) / static_cast<double>(rs);
    ++n;
  }
  if (n == 0)
    throw std::domain_error("balanced_accuracy: no classes present");
  return acc / n;
}

double mcc(const ConfusionMatrix& cm) {
  require_nonzero(cm);
  const int k = cm.num_classes();
  const double s = static_cast<double>(cm.total());
  double c_trace = 0.0, pt = 0.0, pp = 0.0, tt = 0.0;
  for (int c = 0; c < k; ++c) {
    c_trace += static_cast<double>(cm.at(c, c));
    const double p = static_cast<double>(cm.col_sum(c));
    const double t = static_cast<double>(cm.row_sum(c));
    pt += p * t;
    pp += p * p;
    tt += t * t;
  }
  const double num = c_trace * s - pt;
  const double f1v = s * s - pp, f2v = s * s - tt;
  if (f1v <= 0.0 || f2v <= 0.0) return 0.0;
  return num / std::sqrt(f1v * f2v);
}

std::string MetricsReport::to_json(
    const std::vector<std::string>& class_names) const {
  auto num = [](double v) {
    if (std::isnan(v)) return std::string("null");
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
  };
  std::ostringstream os;
  os << "{\n"
     << "  \"iou_bg\": " << num(iou_bg) << ",\n"
     << "  \"iou_nobg\": " << num(iou_nobg) << ",\n"
     << "  \"fwiou\": " << num(fwiou) << ",\n"
     << "  \"ciw_iou\": " << num(ciw_iou) << ",\n"
     << "  \"f1\": " << num(f1) << ",\n"
     << "  \"balanced_acc\": " << num(balanced_acc) << ",\n"
     << "  \"mcc\": " << num(mcc) << ",\n";
  auto arr = [&](const char* key, const std::vector<double>& v) {
    os << "  \"" << key << "\": [";
    for (std::size_t i = 0; i < v.size(); ++i)
      os << (i ? ", " : "") << num(v[i]);
    os << "]";
  };
  arr("per_class_iou", per_class_iou);
  os << ",\n";
  arr("per_class_f1", per_class_f1);
  if (!class_names.empty()) {
    os << ",\n  \"class_names\": [";
    for (std::size_t i = 0; i < class_names.size(); ++i)
      os << (i ? ", " : "") << '"' << class_names[i] << '"';
    os << "]";
  }
  os << "\n}\n";
  return os.str();
}

MetricsReport compute_report(const ConfusionMatrix& cm,
                             const std::vector<double>& ciw_weights) {
  MetricsReport r;
  PerClassResult with_bg = iou(cm, true);
  r.iou_bg = with_bg.mean;
  r.iou_nobg = cm.num_classes() > 1 ? iou(cm, false).mean : with_bg.mean;
  r.fwiou = fwiou(cm);
  r.ciw_iou = ciw_iou(cm, ciw_weights);
  PerClassResult f = f1(cm);
  r.f1 = f.mean;
  r.balanced_acc = balanced_accuracy(cm);
  r.mcc = mcc(cm);
  r.per_class_iou = with_bg.per_class;
  r.per_class_f1 = f.per_class;
  return r;
}

}  // namespace daufi::metrics
