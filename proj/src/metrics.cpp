#include "rgc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

#include "json.hpp"
#include "rgc/error.hpp"

namespace rgc::metrics {

using nlohmann::json;

namespace {

std::optional<double> ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

struct PixelCounts {
  long tp = 0, fp = 0, fn = 0;
};

PixelCounts pixel_counts(const LabelGrid& pred, const LabelGrid& gt, int class_id) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw ValidationError("mask shapes differ");
  }
  PixelCounts c;
  const auto p = pred.values(), g = gt.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool ip = p[i] == class_id, ig = g[i] == class_id;
    c.tp += ip && ig;
    c.fp += ip && !ig;
    c.fn += !ip && ig;
  }
  return c;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ConfusionMetrics confusion_metrics(const ConfusionCounts& c) {
  if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) throw ValidationError("negative confusion count");
  ConfusionMetrics m;
  m.counts = c;
  m.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  m.tpr = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  m.tnr = ratio(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
  m.fpr = ratio(static_cast<double>(c.fp), static_cast<double>(c.fp + c.tn));
  m.ppv = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  if (m.tpr && m.ppv) m.f1 = ratio(2.0 * *m.ppv * *m.tpr, *m.ppv + *m.tpr);
  return m;
}

ConfusionCounts count_confusion(const std::vector<bool>& truth, const std::vector<bool>& predicted) {
  if (truth.size() != predicted.size()) throw ValidationError("truth and prediction counts differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) {
      ++(predicted[i] ? c.tp : c.fn);
    } else {
      ++(predicted[i] ? c.fp : c.tn);
    }
  }
  return c;
}

ClassScore score_class(const LabelGrid& pred, const LabelGrid& gt, int class_id) {
  const PixelCounts c = pixel_counts(pred, gt, class_id);
  ClassScore s;
  const long den = 2 * c.tp + c.fn + c.fp;
  if (den == 0) {
    s.vacuous = true;
    return s;
  }
  s.dice = 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
  s.mask_precision = s.dice >= 0.5 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  return s;
}

double dice(const LabelGrid& pred, const LabelGrid& gt, int class_id) {
  return score_class(pred, gt, class_id).dice;
}

double mask_precision(const LabelGrid& pred, const LabelGrid& gt, int class_id) {
  return score_class(pred, gt, class_id).mask_precision;
}

SegmentationScore score_segmentation(const std::vector<LayerMask>& pred, const std::vector<LayerMask>& gt) {
  if (pred.size() != gt.size()) throw ValidationError("prediction and ground-truth counts differ");
  SegmentationScore out;
  double dice_sum = 0.0, mp_sum = 0.0;
  int defined = 0;
  for (int cls : {static_cast<int>(Label::Rnfl), static_cast<int>(Label::Gcipl)}) {
    ClassSummary s;
    s.class_id = cls;
    double d = 0.0, mp = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const ClassScore cs = score_class(pred[i].labels(), gt[i].labels(), cls);
      if (cs.vacuous) continue;
      d += cs.dice;
      mp += cs.mask_precision;
      ++s.scans;
    }
    if (s.scans > 0) {
      s.dice = d / static_cast<double>(s.scans);
      s.mask_precision = mp / static_cast<double>(s.scans);
      dice_sum += *s.dice;
      mp_sum += *s.mask_precision;
      ++defined;
    }
    out.per_class.push_back(s);
  }
  if (defined > 0) {
    out.mean_dice = dice_sum / defined;
    out.mean_mask_precision = mp_sum / defined;
  }
  return out;
}

RocCurve roc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("score and label counts differ");
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw ValidationError("ROC needs both positive and negative samples");
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("ROC scores must be finite");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] ? tp : fp) += 1.0;
    const RocPoint prev = curve.points.back();
    RocPoint p{fp / neg, tp / pos, t};
    curve.auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
    curve.points.push_back(p);
  }
  return curve;
}

double student_t_two_tailed(double t, double df) {
  if (!(df > 0.0)) throw ValidationError("degrees of freedom must be positive");
  if (std::isnan(t)) throw ValidationError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  // P(|T| > t) = I_{df/(df+t²)}(df/2, 1/2)
  const double x = df / (df + t * t);
  return boost::math::ibeta(df / 2.0, 0.5, x);
}

CorrelationResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("pearson: inputs differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw ValidationError("pearson needs at least 3 samples");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw ValidationError("pearson is undefined when an input has zero variance");
  }
  CorrelationResult c;
  c.n = n;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n) - 2.0;
  const double one_minus = 1.0 - c.r * c.r;
  c.p_value = one_minus <= 0.0 ? 0.0 : student_t_two_tailed(c.r * std::sqrt(df / one_minus), df);
  return c;
}

std::string report_json(const MetricReport& r) {
  json j = json::object();
  if (r.confusion) {
    const auto& m = *r.confusion;
    j["confusion"] = {{"tp", m.counts.tp},          {"tn", m.counts.tn},
                      {"fp", m.counts.fp},          {"fn", m.counts.fn},
                      {"acc", optional_json(m.accuracy)}, {"tpr", optional_json(m.tpr)},
                      {"tnr", optional_json(m.tnr)},      {"fpr", optional_json(m.fpr)},
                      {"ppv", optional_json(m.ppv)},      {"f1", optional_json(m.f1)}};
  }
  if (r.segmentation) {
    json per = json::object();
    for (const auto& c : r.segmentation->per_class) {
      const std::string name = c.class_id == static_cast<int>(Label::Rnfl) ? "rnfl" : "gcipl";
      per[name] = {{"dice", optional_json(c.dice)},
                   {"mask_precision", optional_json(c.mask_precision)},
                   {"scans", c.scans}};
    }
    j["seg"] = {{"per_class", per},
                {"mean_dice", optional_json(r.segmentation->mean_dice)},
                {"mean_mask_precision", optional_json(r.segmentation->mean_mask_precision)}};
  }
  if (r.roc) {
    json pts = json::array();
    for (const auto& p : r.roc->points) pts.push_back({p.fpr, p.tpr});
    j["roc"] = {{"auc", r.roc->auc}, {"points", pts}};
  }
  if (r.correlation) {
    j["correlation"] = {{"r", r.correlation->r}, {"p", r.correlation->p_value}, {"n", r.correlation->n}};
  }
  for (const auto& [k, v] : r.extra) j[k] = v;
  return j.dump(2) + "\n";
}

}  // namespace rgc::metrics
