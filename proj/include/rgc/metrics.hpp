#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rgc/scan.hpp"

namespace rgc::metrics {

struct ConfusionCounts {
  long tp = 0;
  long tn = 0;
  long fp = 0;
  long fn = 0;

  long total() const noexcept { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Rates with a zero denominator are left empty.
struct ConfusionMetrics {
  ConfusionCounts counts;
  std::optional<double> accuracy;
  std::optional<double> tpr;
  std::optional<double> tnr;
  std::optional<double> fpr;
  std::optional<double> ppv;
  std::optional<double> f1;
};

ConfusionMetrics confusion_metrics(const ConfusionCounts& c);

/// Tallies paired truth/prediction flags, true meaning positive.
ConfusionCounts count_confusion(const std::vector<bool>& truth, const std::vector<bool>& predicted);

struct ClassScore {
  double dice = 1.0;
  double mask_precision = 1.0;
  /// The class is absent from both masks; dice is 1 by definition.
  bool vacuous = false;
};

/// 2TP / (2TP + FN + FP); 1 when the class is absent from both.
double dice(const LabelGrid& pred, const LabelGrid& gt, int class_id);
/// TP / (TP + FP) when dice ≥ 0.5, else 0.
double mask_precision(const LabelGrid& pred, const LabelGrid& gt, int class_id);
ClassScore score_class(const LabelGrid& pred, const LabelGrid& gt, int class_id);

struct ClassSummary {
  int class_id = 0;
  std::optional<double> dice;            // scan-wise mean over non-vacuous scans
  std::optional<double> mask_precision;  // same scans
  std::size_t scans = 0;
};

struct SegmentationScore {
  std::vector<ClassSummary> per_class;
  std::optional<double> mean_dice;            // over classes with a defined mean
  std::optional<double> mean_mask_precision;
};

/// Scores the foreground classes {1, 2} over paired masks.
SegmentationScore score_segmentation(const std::vector<LayerMask>& pred, const std::vector<LayerMask>& gt);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  double auc = 0.0;
};

/// Sweeps every distinct score as a threshold (score ≥ t is positive), tied
/// scores entering together; trapezoidal AUC. Needs both classes.
RocCurve roc(const std::vector<double>& scores, const std::vector<bool>& labels);

struct CorrelationResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Two-tailed Student-t p-value for |t| with `df` degrees of freedom.
double student_t_two_tailed(double t, double df);

/// Product-moment r and its two-tailed p-value. Throws ValidationError for
/// n < 3, mismatched lengths, or zero variance.
CorrelationResult pearson(const std::vector<double>& x, const std::vector<double>& y);

struct MetricReport {
  std::optional<ConfusionMetrics> confusion;
  std::optional<SegmentationScore> segmentation;
  std::optional<RocCurve> roc;
  std::optional<CorrelationResult> correlation;
  /// Extra scalar entries (e.g. grading accuracy, seeds), emitted in key order.
  std::vector<std::pair<std::string, double>> extra;
};

/// `{confusion:{tp,tn,fp,fn,acc,tpr,tnr,fpr,ppv,f1}, seg:{per_class:{dice,
/// mask_precision}, mean_dice, mean_mask_precision}, roc:{auc, points},
/// correlation:{r,p,n}}`; undefined rates are null.
std::string report_json(const MetricReport& report);

}  // namespace rgc::metrics
