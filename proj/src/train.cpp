#include "rgc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <string>

#include "rgc/error.hpp"
#include "rgc/random.hpp"

namespace rgc::train {
namespace {

void check_batch(const Tensor4& t, const Tensor4& p, bool strict) {
  if (t.shape() != p.shape()) {
    throw ValidationError("target shape " + nn::to_string(t.shape()) + " differs from prediction " +
                          nn::to_string(p.shape()));
  }
  if (t.size() == 0) throw ValidationError("empty batch");
  if (!strict) return;
  const std::size_t plane = t.shape().plane();
  for (int n = 0; n < t.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double st = 0.0, sp = 0.0;
      for (int c = 0; c < t.c(); ++c) {
        const double tv = t.plane(n, c)[i];
        const double pv = p.plane(n, c)[i];
        if (tv != 0.0 && tv != 1.0) throw ValidationError("targets must be one-hot");
        if (!(pv >= 0.0)) throw ValidationError("probabilities must be non-negative");
        st += tv;
        sp += pv;
      }
      if (st != 1.0) throw ValidationError("targets must be one-hot");
      if (std::abs(sp - 1.0) > 1e-9) throw ValidationError("probabilities must sum to 1");
    }
  }
}

double samples(const Tensor4& t) { return static_cast<double>(t.n()) * t.shape().plane(); }

}  // namespace

void LossConfig::validate() const {
  if (alpha1 < 0.0 || alpha2 < 0.0) throw ValidationError("loss weights must be non-negative");
  if (!(alpha1 + alpha2 > 0.0)) throw ValidationError("at least one loss weight must be positive");
  if (!(epsilon > 0.0)) throw ValidationError("loss epsilon must be positive");
}

double dice_loss(const Tensor4& t, const Tensor4& p, double epsilon) {
  LossConfig cfg;
  cfg.alpha1 = 1.0;
  cfg.alpha2 = 0.0;
  cfg.epsilon = epsilon;
  return dice_entropy_loss(t, p, cfg).dice;
}

double cross_entropy_loss(const Tensor4& t, const Tensor4& p, double epsilon) {
  LossConfig cfg;
  cfg.alpha1 = 0.0;
  cfg.alpha2 = 1.0;
  cfg.epsilon = epsilon;
  return dice_entropy_loss(t, p, cfg).entropy;
}

LossValue dice_entropy_loss(const Tensor4& t, const Tensor4& p, const LossConfig& cfg) {
  cfg.validate();
  check_batch(t, p, cfg.check_inputs);
  const std::size_t plane = t.shape().plane();
  const double inv_n = 1.0 / samples(t);
  const double eps = cfg.epsilon;
  LossValue out;
  out.grad = Tensor4(p.shape(), 0.0);
  double dice_sum = 0.0, ce_sum = 0.0;
  for (int n = 0; n < t.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double inter = 0.0, tt = 0.0, pp = 0.0;
      for (int c = 0; c < t.c(); ++c) {
        const double tv = t.plane(n, c)[i], pv = p.plane(n, c)[i];
        inter += tv * pv;
        tt += tv * tv;
        pp += pv * pv;
        if (tv != 0.0) ce_sum -= tv * std::log(pv + eps);
      }
      const double denom = tt + pp + eps;
      dice_sum += 1.0 - 2.0 * inter / denom;
      for (int c = 0; c < t.c(); ++c) {
        const double tv = t.plane(n, c)[i], pv = p.plane(n, c)[i];
        const double g_dice = -2.0 * tv / denom + 4.0 * inter * pv / (denom * denom);
        const double g_ce = -tv / (pv + eps);
        out.grad.plane(n, c)[i] = inv_n * (cfg.alpha1 * g_dice + cfg.alpha2 * g_ce);
      }
    }
  }
  out.dice = dice_sum * inv_n;
  out.entropy = ce_sum * inv_n;
  out.total = cfg.alpha1 * out.dice + cfg.alpha2 * out.entropy;
  return out;
}

void AdadeltaConfig::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("adadelta rho must lie in (0,1)");
  if (eps < 0.0) throw ValidationError("adadelta eps must be non-negative");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
}

AdadeltaState AdadeltaState::zeros(std::size_t n) {
  return AdadeltaState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
}

void adadelta_step(AdadeltaState& s, const AdadeltaConfig& cfg, std::span<double> params,
                   std::span<const double> grads) {
  if (params.size() != grads.size() || s.mean_sq_grad.size() != params.size() ||
      s.mean_sq_step.size() != params.size()) {
    throw ValidationError("adadelta: parameter, gradient and state sizes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw StageError("train", "non-finite gradient at parameter " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& eg = s.mean_sq_grad[i];
    double& ex = s.mean_sq_step[i];
    eg = cfg.rho * eg + (1.0 - cfg.rho) * g * g;
    const double rms_g = std::sqrt(eg + cfg.eps);
    const double dx = rms_g > 0.0 ? -(std::sqrt(ex + cfg.eps) / rms_g) * g : 0.0;
    ex = cfg.rho * ex + (1.0 - cfg.rho) * dx * dx;
    params[i] += cfg.lr * dx;
  }
}

void AugmentConfig::validate() const {
  if (rotation_deg < 0.0) throw ValidationError("rotation range must be non-negative");
  if (noise_variance < 0.0) throw ValidationError("noise variance must be non-negative");
  if (copies_per_scan < 1) throw ValidationError("copies_per_scan must be positive");
}

namespace {

template <typename T>
Grid<T> flip_impl(const Grid<T>& g) {
  Grid<T> out(g.height(), g.width());
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) out(r, c) = g(r, g.width() - 1 - c);
  }
  return out;
}

// Maps an output pixel to its source position under rotation about the centre.
struct Rotation {
  double cy, cx, cos_a, sin_a;
  Rotation(int h, int w, double degrees)
      : cy((h - 1) / 2.0), cx((w - 1) / 2.0),
        cos_a(std::cos(degrees * std::numbers::pi / 180.0)),
        sin_a(std::sin(degrees * std::numbers::pi / 180.0)) {}
  std::pair<double, double> source(int r, int c) const {
    const double dy = r - cy, dx = c - cx;
    return {cy + cos_a * dy - sin_a * dx, cx + sin_a * dy + cos_a * dx};
  }
};

}  // namespace

RealGrid flip_horizontal(const RealGrid& g) { return flip_impl(g); }
LabelGrid flip_horizontal(const LabelGrid& g) { return flip_impl(g); }

RealGrid rotate(const RealGrid& g, double degrees) {
  const Rotation rot(g.height(), g.width(), degrees);
  RealGrid out(g.height(), g.width(), 0.0);
  const auto [lo_it, hi_it] = std::minmax_element(g.values().begin(), g.values().end());
  const double lo = std::min(0.0, *lo_it), hi = std::max(0.0, *hi_it);
  auto at = [&](int r, int c) {
    return r < 0 || c < 0 || r >= g.height() || c >= g.width() ? 0.0 : g(r, c);
  };
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      const auto [sy, sx] = rot.source(r, c);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      if (y0 < -1 || x0 < -1 || y0 >= g.height() || x0 >= g.width()) continue;
      const double fy = sy - y0, fx = sx - x0;
      const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                       fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      // Rounding can push a convex combination a hair past the input range.
      out(r, c) = std::clamp(v, lo, hi);
    }
  }
  return out;
}

LabelGrid rotate(const LabelGrid& g, double degrees) {
  const Rotation rot(g.height(), g.width(), degrees);
  LabelGrid out(g.height(), g.width(), 0);
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      const auto [sy, sx] = rot.source(r, c);
      const int y = static_cast<int>(std::lround(sy)), x = static_cast<int>(std::lround(sx));
      if (y >= 0 && x >= 0 && y < g.height() && x < g.width()) out(r, c) = g(y, x);
    }
  }
  return out;
}

std::vector<AugmentedPair> augment(const Scan& scan, const LayerMask& mask,
                                   const AugmentConfig& cfg) {
  cfg.validate();
  if (scan.height() != mask.height() || scan.width() != mask.width()) {
    throw ValidationError("scan and mask sizes differ");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> angle(-cfg.rotation_deg, cfg.rotation_deg);
  std::normal_distribution<double> noise(0.0, std::sqrt(cfg.noise_variance));
  std::vector<AugmentedPair> out;
  out.reserve(static_cast<std::size_t>(cfg.copies_per_scan));
  out.push_back({scan, mask});
  for (int k = 1; k < cfg.copies_per_scan; ++k) {
    const bool flip = cfg.horizontal_flip && k % 2 == 1;
    RealGrid px = flip ? flip_horizontal(scan.pixels()) : scan.pixels();
    LabelGrid lb = flip ? flip_horizontal(mask.labels()) : mask.labels();
    const double a = cfg.rotation_deg > 0.0 ? angle(rng) : 0.0;
    if (a != 0.0) {
      px = rotate(px, a);
      lb = rotate(lb, a);
    }
    if (cfg.noise_variance > 0.0) {
      for (double& v : px.values()) v = std::clamp(v + noise(rng), 0.0, 1.0);
    }
    out.push_back({Scan(std::move(px), scan.axial_scale(), scan.id()), LayerMask(std::move(lb))});
  }
  return out;
}

Split split_dataset(std::size_t n, double train_fraction, std::uint64_t seed,
                    const std::vector<int>* strata) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train fraction must lie in (0,1)");
  }
  if (strata && strata->size() != n) throw ValidationError("strata size differs from dataset");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[strata ? (*strata)[i] : 0].push_back(i);
  std::mt19937_64 rng(derive_seed(seed, 3));
  Split s;
  for (auto& [label, idx] : groups) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto k = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(idx.size())));
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  }
  if (s.train.empty() || s.test.empty()) {
    throw ValidationError("split leaves an empty partition (" + std::to_string(n) + " scans)");
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("epochs must be non-negative");
  if (iters_per_epoch < 1) throw ValidationError("iterations per epoch must be positive");
  if (batch_size < 1) throw ValidationError("batch size must be positive");
  if (seg_weight < 0.0 || cls_weight < 0.0 || !(seg_weight + cls_weight > 0.0)) {
    throw ValidationError("head weights must be non-negative and not both zero");
  }
  loss.validate();
  optimizer.validate();
  augment.validate();
}

Tensor4 input_batch(std::span<const Scan* const> scans) {
  if (scans.empty()) throw ValidationError("empty batch");
  const int h = scans.front()->height(), w = scans.front()->width();
  Tensor4 x(nn::Shape{static_cast<int>(scans.size()), 1, h, w});
  for (std::size_t n = 0; n < scans.size(); ++n) {
    const Scan& s = *scans[n];
    if (s.height() != h || s.width() != w) throw ValidationError("scans in a batch differ in size");
    std::copy(s.pixels().values().begin(), s.pixels().values().end(), x.plane(static_cast<int>(n), 0));
  }
  return x;
}

Tensor4 seg_targets(std::span<const LayerMask* const> masks, const nn::Shape& seg_shape) {
  if (masks.empty()) throw ValidationError("empty batch");
  nn::Shape s = seg_shape;
  s.n = static_cast<int>(masks.size());
  Tensor4 t(s, 0.0);
  for (std::size_t n = 0; n < masks.size(); ++n) {
    const auto labels = masks[n]->labels().values();
    if (labels.size() != s.plane()) throw ValidationError("mask size does not match network output");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= s.c) throw ValidationError("mask label exceeds network classes");
      t.plane(static_cast<int>(n), labels[i])[i] = 1.0;
    }
  }
  return t;
}

Tensor4 cls_targets(std::span<const GradeLabel> grades) {
  if (grades.empty()) throw ValidationError("empty batch");
  Tensor4 t(nn::Shape{static_cast<int>(grades.size()), nn::kClsClasses, 1, 1}, 0.0);
  for (std::size_t n = 0; n < grades.size(); ++n) {
    t.at(static_cast<int>(n), is_glaucomatous(grades[n]) ? 1 : 0, 0, 0) = 1.0;
  }
  return t;
}

Trainer::Trainer(nn::Network& net, const TrainConfig& cfg) : net_(net), cfg_(cfg) {
  cfg_.validate();
  for (const auto& l : net_.weights().layers) state_.push_back(AdadeltaState::zeros(l.learnable.size()));
}

EpochStats Trainer::step(const Tensor4& x, const Tensor4& seg_target, const Tensor4& cls_target) {
  nn::ForwardCache cache;
  const auto out = net_.forward(x, nn::Mode::Training, &cache);
  EpochStats stats;
  LossValue seg = dice_entropy_loss(seg_target, out.seg, cfg_.loss);
  stats.seg_loss = seg.total;
  Tensor4 cls_grad;
  if (out.cls.size() > 0 && cfg_.cls_weight > 0.0) {
    LossValue cls = dice_entropy_loss(cls_target, out.cls, cfg_.loss);
    stats.cls_loss = cls.total;
    cls_grad = std::move(cls.grad);
    for (double& v : cls_grad.values()) v *= cfg_.cls_weight;
  }
  for (double& v : seg.grad.values()) v *= cfg_.seg_weight;
  stats.total = cfg_.seg_weight * stats.seg_loss + cfg_.cls_weight * stats.cls_loss;
  if (!std::isfinite(stats.total)) throw StageError("train", "loss became non-finite");
  const auto grads = net_.backward(cache, seg.grad, cls_grad);
  auto& layers = net_.weights().layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].learnable.empty()) continue;
    adadelta_step(state_[i], cfg_.optimizer, layers[i].learnable, grads.layers[i]);
  }
  return stats;
}

TrainResult train(nn::Network& net, const std::vector<TrainSample>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ValidationError("training dataset is empty");
  std::vector<int> strata;
  for (const auto& d : data) strata.push_back(ordinal(d.grade));
  TrainResult result;
  result.split = split_dataset(data.size(), cfg.train_fraction, cfg.seed,
                               cfg.stratified ? &strata : nullptr);
  result.history = fit(net, data, result.split.train, cfg);
  return result;
}

std::vector<EpochStats> fit(nn::Network& net, const std::vector<TrainSample>& data,
                            const std::vector<std::size_t>& indices, const TrainConfig& cfg) {
  cfg.validate();
  if (indices.empty()) throw ValidationError("no training samples selected");
  for (std::size_t idx : indices) {
    if (idx >= data.size()) throw ValidationError("training index out of range");
  }
  std::vector<EpochStats> history;
  if (cfg.epochs == 0) return history;

  struct PoolItem {
    Scan scan;
    LayerMask mask;
    GradeLabel grade;
  };
  std::vector<PoolItem> pool;
  for (std::size_t idx : indices) {
    AugmentConfig ac = cfg.augment;
    ac.seed = derive_seed(cfg.seed, 1000 + idx);
    for (auto& p : augment(data[idx].scan, data[idx].mask, ac)) {
      pool.push_back({std::move(p.scan), std::move(p.mask), data[idx].grade});
    }
  }

  Trainer trainer(net, cfg);
  const nn::Shape seg_shape = net.shapes()[static_cast<std::size_t>(net.spec().seg_output)];
  std::mt19937_64 rng(derive_seed(cfg.seed, 2));
  // Each pool item appears `reps` times per pass; with balancing the minority
  // screening class is repeated to roughly match the majority.
  std::vector<std::size_t> reps(pool.size(), 1);
  if (cfg.balance_classes) {
    std::size_t glaucoma = 0;
    for (const auto& p : pool) glaucoma += is_glaucomatous(p.grade) ? 1 : 0;
    const std::size_t healthy = pool.size() - glaucoma;
    if (healthy > 0 && glaucoma > 0) {
      const std::size_t majority = std::max(healthy, glaucoma);
      for (std::size_t i = 0; i < pool.size(); ++i) {
        const std::size_t own = is_glaucomatous(pool[i].grade) ? glaucoma : healthy;
        reps[i] = static_cast<std::size_t>(std::llround(static_cast<double>(majority) / own));
      }
    }
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < pool.size(); ++i) order.insert(order.end(), reps[i], i);
  std::size_t cursor = order.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochStats sum;
    for (int it = 0; it < cfg.iters_per_epoch; ++it) {
      std::vector<const Scan*> scans;
      std::vector<const LayerMask*> masks;
      std::vector<GradeLabel> grades;
      for (int b = 0; b < cfg.batch_size; ++b) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        const PoolItem& item = pool[order[cursor++]];
        scans.push_back(&item.scan);
        masks.push_back(&item.mask);
        grades.push_back(item.grade);
      }
      const EpochStats s = trainer.step(input_batch(scans), seg_targets(masks, seg_shape),
                                        cls_targets(grades));
      sum.seg_loss += s.seg_loss;
      sum.cls_loss += s.cls_loss;
      sum.total += s.total;
    }
    const double inv = 1.0 / cfg.iters_per_epoch;
    history.push_back({epoch, sum.seg_loss * inv, sum.cls_loss * inv, sum.total * inv});
  }
  return history;
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,seg_loss,cls_loss,total\n";
  char buf[128];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g\n", e.epoch, e.seg_loss, e.cls_loss, e.total);
    out += buf;
  }
  return out;
}

}  // namespace rgc::train
