#include "rgc/grading.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"
#include "rgc/error.hpp"

namespace rgc::grading {

using nlohmann::json;

namespace {

constexpr double kStdFloor = 1e-9;

double sign_of(GradeLabel g) {
  switch (g) {
    case GradeLabel::AdvancedGlaucoma:
      return 1.0;
    case GradeLabel::EarlyGlaucoma:
      return -1.0;
    default:
      throw ValidationError("SVM grading labels must be early or advanced glaucoma");
  }
}

std::array<double, 3> standardize(const SvmModel& m, const GradeFeatures& f) {
  auto x = feature_vector(f);
  for (std::size_t k = 0; k < 3; ++k) x[k] = (x[k] - m.feature_mean[k]) / m.feature_std[k];
  return x;
}

double decision(const SvmModel& m, const std::array<double, 3>& z) {
  return m.weights[0] * z[0] + m.weights[1] * z[1] + m.weights[2] * z[2] + m.bias;
}

double objective_z(const std::array<double, 3>& w, double b, double lambda,
                   const std::vector<std::array<double, 3>>& z, const std::vector<double>& y) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double m = y[i] * (w[0] * z[i][0] + w[1] * z[i][1] + w[2] * z[i][2] + b);
    hinge += std::max(0.0, 1.0 - m);
  }
  return lambda * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]) + hinge / static_cast<double>(z.size());
}

}  // namespace

std::array<double, 3> feature_vector(const GradeFeatures& f) {
  return {f.mean_rnfl, f.mean_gcip, f.mean_gcc};
}

void SvmConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("SVM lambda must be positive");
  if (epochs < 1) throw ValidationError("SVM epochs must be positive");
}

SvmModel svm_train(const std::vector<GradeFeatures>& features, const std::vector<GradeLabel>& labels,
                   const SvmConfig& cfg) {
  cfg.validate();
  if (features.size() != labels.size()) throw ValidationError("feature and label counts differ");
  if (features.size() < 2) throw ValidationError("SVM training needs at least two samples");
  std::vector<double> y;
  for (GradeLabel g : labels) y.push_back(sign_of(g));
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); })) {
    throw ValidationError("SVM training needs both early and advanced samples");
  }

  SvmModel m;
  m.lambda = cfg.lambda;
  m.epochs = cfg.epochs;
  m.seed = cfg.seed;
  const double n = static_cast<double>(features.size());
  for (std::size_t k = 0; k < 3; ++k) {
    double sum = 0.0;
    for (const auto& f : features) sum += feature_vector(f)[k];
    const double mean = sum / n;
    double sq = 0.0;
    for (const auto& f : features) sq += (feature_vector(f)[k] - mean) * (feature_vector(f)[k] - mean);
    double sd = std::sqrt(sq / n);
    if (sd < kStdFloor) {
      static constexpr const char* kNames[3] = {"mean_rnfl", "mean_gcip", "mean_gcc"};
      m.warnings.push_back(std::string("feature ") + kNames[k] + " has zero variance; std floored at 1e-9");
      sd = kStdFloor;
    }
    m.feature_mean[k] = mean;
    m.feature_std[k] = sd;
  }
  std::vector<std::array<double, 3>> z;
  for (const auto& f : features) z.push_back(standardize(m, f));

  std::array<double, 3> w{};
  double b = 0.0;
  std::array<double, 3> best_w = w;
  double best_b = b;
  double best = objective_z(w, b, cfg.lambda, z, y);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  long t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (2.0 * cfg.lambda * static_cast<double>(t));
      const double margin = y[i] * (w[0] * z[i][0] + w[1] * z[i][1] + w[2] * z[i][2] + b);
      for (std::size_t k = 0; k < 3; ++k) w[k] *= 1.0 - eta * 2.0 * cfg.lambda;
      if (margin < 1.0) {
        for (std::size_t k = 0; k < 3; ++k) w[k] += eta * y[i] * z[i][k];
        b += eta * y[i];
      }
    }
    const double obj = objective_z(w, b, cfg.lambda, z, y);
    if (obj < best) {
      best = obj;
      best_w = w;
      best_b = b;
    }
    m.objective.push_back(best);
  }
  m.weights = best_w;
  m.bias = best_b;
  return m;
}

double svm_objective(const SvmModel& model, const std::vector<GradeFeatures>& features,
                     const std::vector<GradeLabel>& labels) {
  if (features.size() != labels.size() || features.empty()) {
    throw ValidationError("feature and label counts differ or are empty");
  }
  std::vector<std::array<double, 3>> z;
  std::vector<double> y;
  for (std::size_t i = 0; i < features.size(); ++i) {
    z.push_back(standardize(model, features[i]));
    y.push_back(sign_of(labels[i]));
  }
  return objective_z(model.weights, model.bias, model.lambda, z, y);
}

SvmPrediction svm_predict(const SvmModel& model, const GradeFeatures& f) {
  SvmPrediction p;
  p.margin = decision(model, standardize(model, f));
  p.label = p.margin >= 0.0 ? GradeLabel::AdvancedGlaucoma : GradeLabel::EarlyGlaucoma;
  return p;
}

std::string svm_to_json(const SvmModel& m) {
  json j = {{"weights", m.weights},
            {"bias", m.bias},
            {"feature_mean", m.feature_mean},
            {"feature_std", m.feature_std},
            {"lambda", m.lambda},
            {"epochs", m.epochs},
            {"seed", m.seed},
            {"objective", m.objective},
            {"warnings", m.warnings}};
  return j.dump(2) + "\n";
}

SvmModel svm_from_json(std::string_view text) {
  SvmModel m;
  try {
    const json j = json::parse(text);
    m.weights = j.at("weights").get<std::array<double, 3>>();
    m.bias = j.at("bias").get<double>();
    m.feature_mean = j.at("feature_mean").get<std::array<double, 3>>();
    m.feature_std = j.at("feature_std").get<std::array<double, 3>>();
    m.lambda = j.at("lambda").get<double>();
    m.epochs = j.value("epochs", 0);
    m.seed = j.value("seed", std::uint64_t{0});
    m.objective = j.value("objective", std::vector<double>{});
    m.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad SVM model JSON: ") + e.what());
  }
  for (double s : m.feature_std) {
    if (!(s > 0.0)) throw FormatError("SVM model has a non-positive feature std");
  }
  return m;
}

void ThresholdGrader::validate() const {
  if (!(rnfl_threshold_um > 0.0)) throw ValidationError("RNFL threshold must be positive");
}

GradeLabel threshold_grade(const GradeFeatures& f, const ThresholdGrader& g) {
  g.validate();
  return f.mean_rnfl < g.rnfl_threshold_um ? GradeLabel::AdvancedGlaucoma : GradeLabel::EarlyGlaucoma;
}

}  // namespace rgc::grading
