#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rgc/nn/network.hpp"
#include "rgc/scan.hpp"

namespace rgc::train {

using nn::Tensor4;

// Batches are N × C × H × W tensors; every (n, y, x) position is one sample
// and the channel axis holds the classes. A per-scan batch is N × C × 1 × 1.

struct LossConfig {
  double alpha1 = 1.0;  // dice weight
  double alpha2 = 1.0;  // cross-entropy weight
  double epsilon = 1e-7;
  /// Require one-hot targets and probability rows summing to 1 (1e-9).
  bool check_inputs = true;

  void validate() const;
};

/// Mean over samples of 1 − 2 Σ_j t·p / (Σ_j t² + Σ_j p² + ε).
double dice_loss(const Tensor4& t, const Tensor4& p, double epsilon = 1e-7);
/// −(1/N) Σ_i Σ_j t log(p + ε).
double cross_entropy_loss(const Tensor4& t, const Tensor4& p, double epsilon = 1e-7);

struct LossValue {
  double dice = 0.0;
  double entropy = 0.0;
  double total = 0.0;  // α1·dice + α2·entropy
  Tensor4 grad;        // d total / d p
};

LossValue dice_entropy_loss(const Tensor4& t, const Tensor4& p, const LossConfig& cfg);

struct AdadeltaConfig {
  double rho = 0.95;
  double eps = 1e-6;
  double lr = 1.0;

  void validate() const;
};

/// Running averages E[g²] and E[Δx²] for one parameter vector.
struct AdadeltaState {
  std::vector<double> mean_sq_grad;
  std::vector<double> mean_sq_step;

  static AdadeltaState zeros(std::size_t n);
};

/// One update in place. Throws StageError("train") without touching anything
/// if a gradient is not finite.
void adadelta_step(AdadeltaState& state, const AdadeltaConfig& cfg, std::span<double> params,
                   std::span<const double> grads);

struct AugmentConfig {
  bool horizontal_flip = true;
  double rotation_deg = 5.0;  // angles drawn from [−rotation_deg, rotation_deg]
  double noise_variance = 0.01;
  int copies_per_scan = 44;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AugmentedPair {
  Scan scan;
  LayerMask mask;
};

// Geometric primitives, exposed for tests.
RealGrid flip_horizontal(const RealGrid& g);
LabelGrid flip_horizontal(const LabelGrid& g);
/// Rotation about the image centre; bilinear for intensities, nearest for
/// labels, zero outside.
RealGrid rotate(const RealGrid& g, double degrees);
LabelGrid rotate(const LabelGrid& g, double degrees);

/// `copies_per_scan` samples: the untouched original first, then variants.
/// Odd-numbered variants are mirrored when flipping is enabled; each variant
/// is rotated by a random angle and receives zero-mean Gaussian noise on the
/// scan only, clamped to [0,1].
std::vector<AugmentedPair> augment(const Scan& scan, const LayerMask& mask,
                                   const AugmentConfig& cfg);

struct TrainSample {
  Scan scan;  // network input (already preprocessed)
  LayerMask mask;
  GradeLabel grade = GradeLabel::Healthy;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded partition of [0, n). Both parts come back in ascending order. When
/// `strata` is given the fraction is applied within each label.
Split split_dataset(std::size_t n, double train_fraction, std::uint64_t seed,
                    const std::vector<int>* strata = nullptr);

struct TrainConfig {
  int epochs = 40;
  int iters_per_epoch = 512;
  int batch_size = 4;
  double train_fraction = 0.7;
  bool stratified = false;
  /// Oversample the minority of {healthy, glaucoma} in the training pool.
  bool balance_classes = false;
  LossConfig loss;
  double seg_weight = 1.0;
  double cls_weight = 1.0;
  AdadeltaConfig optimizer;
  AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double seg_loss = 0.0;
  double cls_loss = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  Split split;
};

/// Network-ready input batch N × 1 × H × W.
Tensor4 input_batch(std::span<const Scan* const> scans);
/// One-hot per-pixel targets laid out like the network's segmentation output.
Tensor4 seg_targets(std::span<const LayerMask* const> masks, const nn::Shape& seg_shape);
/// One-hot {healthy, glaucoma} targets, N × 2 × 1 × 1.
Tensor4 cls_targets(std::span<const GradeLabel> grades);

/// Optimiser state plus one joint update on a batch.
class Trainer {
 public:
  Trainer(nn::Network& net, const TrainConfig& cfg);

  /// Returns the losses measured on the forward pass before the update.
  EpochStats step(const Tensor4& x, const Tensor4& seg_target, const Tensor4& cls_target);

 private:
  nn::Network& net_;
  TrainConfig cfg_;
  std::vector<AdadeltaState> state_;
};

/// Augments `data[indices]` and optimises the joint loss. Augmentation seeds
/// depend on the index into `data`. Zero epochs leave the weights untouched.
std::vector<EpochStats> fit(nn::Network& net, const std::vector<TrainSample>& data,
                            const std::vector<std::size_t>& indices, const TrainConfig& cfg);

/// Splits `data` by `train_fraction` and fits on the training part.
TrainResult train(nn::Network& net, const std::vector<TrainSample>& data, const TrainConfig& cfg);

std::string history_csv(const std::vector<EpochStats>& history);

}  // namespace rgc::train
