#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rgc/profiles.hpp"
#include "rgc/scan.hpp"

namespace rgc::grading {

using profiles::GradeFeatures;

/// Feature vector [mean_rnfl, mean_gcip, mean_gcc].
std::array<double, 3> feature_vector(const GradeFeatures& f);

struct SvmConfig {
  double lambda = 0.01;
  int epochs = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Linear SVM over z-scored features. Positive margins mean Advanced.
struct SvmModel {
  std::array<double, 3> weights{};
  double bias = 0.0;
  std::array<double, 3> feature_mean{};
  std::array<double, 3> feature_std{1.0, 1.0, 1.0};
  double lambda = 0.01;
  int epochs = 0;
  std::uint64_t seed = 0;
  /// Objective λ‖w‖² + mean hinge of the returned iterate after each epoch.
  std::vector<double> objective;
  std::vector<std::string> warnings;
};

/// Pegasos-style subgradient descent on λ‖w‖² + mean hinge loss with step
/// 1/(2λt); the bias is unregularised. Returns the iterate with the lowest
/// objective seen at an epoch boundary. Labels must be Early or Advanced and
/// both must occur.
SvmModel svm_train(const std::vector<GradeFeatures>& features, const std::vector<GradeLabel>& labels,
                   const SvmConfig& cfg);

/// λ‖w‖² + mean hinge loss of a model on a labelled set.
double svm_objective(const SvmModel& model, const std::vector<GradeFeatures>& features,
                     const std::vector<GradeLabel>& labels);

struct SvmPrediction {
  GradeLabel label = GradeLabel::AdvancedGlaucoma;
  double margin = 0.0;
};

/// A zero margin resolves to Advanced.
SvmPrediction svm_predict(const SvmModel& model, const GradeFeatures& f);

std::string svm_to_json(const SvmModel& model);
SvmModel svm_from_json(std::string_view text);

struct ThresholdGrader {
  double rnfl_threshold_um = 81.48;

  void validate() const;
};

/// Advanced iff mean RNFL is strictly below the threshold.
GradeLabel threshold_grade(const GradeFeatures& f, const ThresholdGrader& g);

}  // namespace rgc::grading
