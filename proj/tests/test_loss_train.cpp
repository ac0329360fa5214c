#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "rgc/error.hpp"
#include "rgc/train.hpp"
#include "test_support.hpp"

using namespace rgc;
using namespace rgc::train;
using rgc::testing::rel_error;
using nn::Shape;

namespace {

// N × 2 × 1 × 1 batch with one row per sample; an empty second row is ignored.
Tensor4 pair_batch(std::vector<double> first, std::vector<double> second) {
  const int n = second.empty() ? 1 : 2;
  Tensor4 t(Shape{n, 2, 1, 1});
  for (int c = 0; c < 2; ++c) {
    t.at(0, c, 0, 0) = first[static_cast<std::size_t>(c)];
    if (n == 2) t.at(1, c, 0, 0) = second[static_cast<std::size_t>(c)];
  }
  return t;
}

// Random one-hot targets and softmax-normalised probabilities.
std::pair<Tensor4, Tensor4> random_batch(Shape s, std::mt19937_64& rng) {
  Tensor4 t(s, 0.0), p(s, 0.0);
  std::uniform_int_distribution<int> cls(0, s.c - 1);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.plane(); ++i) {
      t.plane(n, cls(rng))[i] = 1.0;
      double sum = 0.0;
      for (int c = 0; c < s.c; ++c) sum += (p.plane(n, c)[i] = std::exp(z(rng)));
      for (int c = 0; c < s.c; ++c) p.plane(n, c)[i] /= sum;
    }
  }
  return {t, p};
}

nn::NetworkSpec tiny_net() {
  nn::ToyNetOptions o;
  o.height = 32;
  o.width = 32;
  o.stem_channels = 2;
  o.block_channels = 3;
  o.block_depth = 2;
  o.block_rate = 2;
  o.decoder_channels = 2;
  o.hidden_units = 4;
  return nn::toy_network(o);
}

// 32×32 scan with bright RNFL band rows [top, top+4) and GC-IPL [top+4, top+8).
TrainSample banded_sample(int top, GradeLabel grade, std::mt19937_64& rng) {
  RealGrid px(32, 32, 0.05);
  LabelGrid lb(32, 32, 0);
  std::normal_distribution<double> noise(0.0, 0.03);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      double v = r >= top + 8 ? 0.3 : 0.05;
      if (r >= top && r < top + 4) {
        v = 0.85;
        lb(r, c) = 1;
      } else if (r >= top + 4 && r < top + 8) {
        v = 0.5;
        lb(r, c) = 2;
      }
      px(r, c) = std::clamp(v + noise(rng), 0.0, 1.0);
    }
  }
  return {Scan(std::move(px), 2.6), LayerMask(std::move(lb)), grade};
}

}  // namespace

TEST_CASE("dice and cross-entropy on hand examples") {
  const Tensor4 t = pair_batch({1, 0}, {});
  CHECK(dice_loss(t, t) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(dice_loss(t, pair_batch({0.5, 0.5}, {})) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK(cross_entropy_loss(t, pair_batch({0.5, 0.5}, {})) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(cross_entropy_loss(t, pair_batch({0.9, 0.1}, {})) == doctest::Approx(0.1054).epsilon(1e-3));
  CHECK(cross_entropy_loss(t, t) < 1e-6);

  LossConfig cfg;
  const LossValue v = dice_entropy_loss(t, pair_batch({0.5, 0.5}, {}), cfg);
  CHECK(v.total == doctest::Approx(1.0265).epsilon(1e-4));
  CHECK(v.total == doctest::Approx(v.dice + v.entropy));
}

TEST_CASE("loss averages over samples") {
  const Tensor4 t = pair_batch({1, 0}, {0, 1});
  const Tensor4 p = pair_batch({0.5, 0.5}, {0.2, 0.8});
  const double a = dice_loss(pair_batch({1, 0}, {}), pair_batch({0.5, 0.5}, {}));
  const double b = dice_loss(pair_batch({0, 1}, {}), pair_batch({0.2, 0.8}, {}));
  CHECK(dice_loss(t, p) == doctest::Approx((a + b) / 2).epsilon(1e-14));
  CHECK(cross_entropy_loss(t, p) ==
        doctest::Approx(-(std::log(0.5 + 1e-7) + std::log(0.8 + 1e-7)) / 2).epsilon(1e-14));
}

TEST_CASE("weight reductions match the single losses") {
  std::mt19937_64 rng(4);
  auto [t, p] = random_batch(Shape{2, 3, 4, 5}, rng);
  LossConfig d;
  d.alpha2 = 0.0;
  LossConfig e;
  e.alpha1 = 0.0;
  CHECK(dice_entropy_loss(t, p, d).total == dice_loss(t, p));
  CHECK(dice_entropy_loss(t, p, e).total == cross_entropy_loss(t, p));
  const double ld = dice_loss(t, p), le = cross_entropy_loss(t, p);
  CHECK(ld >= 0.0);
  CHECK(ld <= 1.0);
  CHECK(le >= 0.0);
}

TEST_CASE("loss validation") {
  Tensor4 t = pair_batch({1, 0}, {});
  LossConfig none;
  none.alpha1 = 0.0;
  none.alpha2 = 0.0;
  CHECK_THROWS_AS(dice_entropy_loss(t, t, none), ValidationError);
  CHECK_THROWS_AS(dice_loss(t, pair_batch({1, 0}, {0, 1})), ValidationError);
  CHECK_THROWS_AS(dice_loss(pair_batch({0.5, 0.5}, {}), t), ValidationError);
  CHECK_THROWS_AS(dice_loss(t, pair_batch({0.7, 0.7}, {})), ValidationError);
}

TEST_CASE("dice-entropy gradient matches finite differences") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    auto [t, p] = random_batch(Shape{2, 3, 3, 2}, rng);
    LossConfig cfg;
    cfg.alpha1 = 0.7;
    cfg.alpha2 = 1.3;
    cfg.check_inputs = false;
    const LossValue v = dice_entropy_loss(t, p, cfg);
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.size(); ++i) {
      Tensor4 up = p, dn = p;
      up.values()[i] += h;
      dn.values()[i] -= h;
      const double fd = (dice_entropy_loss(t, up, cfg).total - dice_entropy_loss(t, dn, cfg).total) / (2 * h);
      CHECK(rel_error(fd, v.grad.values()[i]) < 1e-4);
    }
  }
}

TEST_CASE("adadelta first step") {
  AdadeltaConfig cfg;
  auto s = AdadeltaState::zeros(2);
  std::vector<double> x{1.0, -2.0};
  const std::vector<double> g{1.0, 0.0};
  adadelta_step(s, cfg, x, g);
  CHECK(s.mean_sq_grad[0] == doctest::Approx(0.05));
  CHECK(x[0] - 1.0 == doctest::Approx(-0.004471).epsilon(1e-3));
  CHECK(x[0] - 1.0 == doctest::Approx(-std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6)).epsilon(1e-12));
  CHECK(x[1] == -2.0);
  CHECK(s.mean_sq_step[1] == 0.0);
}

TEST_CASE("adadelta rejects non-finite gradients without updating") {
  AdadeltaConfig cfg;
  auto s = AdadeltaState::zeros(2);
  std::vector<double> x{1.0, 2.0};
  const std::vector<double> g{0.5, std::nan("")};
  CHECK_THROWS_AS(adadelta_step(s, cfg, x, g), StageError);
  CHECK(x == std::vector<double>{1.0, 2.0});
  CHECK(s.mean_sq_grad == std::vector<double>{0.0, 0.0});
  std::vector<double> short_g{1.0};
  CHECK_THROWS_AS(adadelta_step(s, cfg, x, short_g), ValidationError);
  AdadeltaConfig bad;
  bad.rho = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("adadelta without eps is invariant to gradient scale") {
  AdadeltaConfig cfg;
  cfg.eps = 0.0;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 1.0);
  for (double scale : {1e-3, 7.0, 250.0}) {
    AdadeltaState a = AdadeltaState::zeros(4), b = AdadeltaState::zeros(4);
    // With eps = 0 a zero step history never moves, so seed it.
    std::fill(a.mean_sq_step.begin(), a.mean_sq_step.end(), 1e-4);
    b.mean_sq_step = a.mean_sq_step;
    std::vector<double> xa(4, 0.0), xb(4, 0.0);
    for (int step = 0; step < 6; ++step) {
      std::vector<double> g(4), gs(4);
      for (int i = 0; i < 4; ++i) {
        g[i] = z(rng);
        gs[i] = scale * g[i];
      }
      adadelta_step(a, cfg, xa, g);
      adadelta_step(b, cfg, xb, gs);
    }
    for (int i = 0; i < 4; ++i) CHECK(rel_error(xa[i], xb[i]) < 1e-12);
  }
}

TEST_CASE("flip is an involution and rotation by zero is identity") {
  std::mt19937_64 rng(2);
  const TrainSample s = banded_sample(10, GradeLabel::Healthy, rng);
  CHECK(flip_horizontal(flip_horizontal(s.scan.pixels())) == s.scan.pixels());
  CHECK(flip_horizontal(flip_horizontal(s.mask.labels())) == s.mask.labels());
  CHECK(rotate(s.scan.pixels(), 0.0) == s.scan.pixels());
  CHECK(rotate(s.mask.labels(), 0.0) == s.mask.labels());
}

TEST_CASE("half-turn rotation of labels reverses both axes") {
  LabelGrid g(5, 7, 0);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 7; ++c) g(r, c) = static_cast<std::uint8_t>((r * 7 + c) % 3);
  }
  const LabelGrid rot = rotate(g, 180.0);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 7; ++c) CHECK(rot(r, c) == g(4 - r, 6 - c));
  }
}

TEST_CASE("augmentation keeps shapes and labels") {
  std::mt19937_64 rng(3);
  const TrainSample s = banded_sample(12, GradeLabel::EarlyGlaucoma, rng);
  AugmentConfig cfg;
  cfg.copies_per_scan = 7;
  cfg.seed = 11;
  const auto out = augment(s.scan, s.mask, cfg);
  REQUIRE(out.size() == 7);
  CHECK(out[0].scan.pixels() == s.scan.pixels());
  CHECK(out[0].mask.labels() == s.mask.labels());
  for (const auto& p : out) {
    CHECK(p.scan.height() == 32);
    CHECK(p.scan.width() == 32);
    CHECK(p.mask.height() == 32);
    for (auto v : p.mask.labels().values()) CHECK(v <= 2);
    for (double v : p.scan.pixels().values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  const auto again = augment(s.scan, s.mask, cfg);
  CHECK(again[5].scan.pixels() == out[5].scan.pixels());
}

TEST_CASE("augmentation without geometry only adds noise of the configured variance") {
  RealGrid flat(64, 64, 0.5);
  const Scan scan(flat, 2.6);
  const LayerMask mask(LabelGrid(64, 64, 0));
  AugmentConfig cfg;
  cfg.horizontal_flip = false;
  cfg.rotation_deg = 0.0;
  cfg.copies_per_scan = 3;
  const auto out = augment(scan, mask, cfg);
  for (std::size_t k = 1; k < out.size(); ++k) {
    CHECK(out[k].mask.labels() == mask.labels());
    double sum = 0.0, sq = 0.0;
    for (double v : out[k].scan.pixels().values()) {
      sum += v - 0.5;
      sq += (v - 0.5) * (v - 0.5);
    }
    const double n = 64.0 * 64.0;
    const double var = sq / n - (sum / n) * (sum / n);
    CHECK(var == doctest::Approx(0.01).epsilon(0.1));
  }
}

TEST_CASE("full-scale augmentation count") {
  AugmentConfig cfg;
  CHECK(cfg.copies_per_scan * 137 == 6028);
}

TEST_CASE("split is deterministic and partitions the indices") {
  const Split a = split_dataset(60, 0.7, 5);
  const Split b = split_dataset(60, 0.7, 5);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.train.size() == 42);
  CHECK(a.test.size() == 18);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  all.insert(a.test.begin(), a.test.end());
  CHECK(all.size() == 60);
  CHECK(std::is_sorted(a.train.begin(), a.train.end()));
  CHECK(split_dataset(60, 0.7, 6).train != a.train);

  std::vector<int> strata(60);
  for (int i = 0; i < 60; ++i) strata[static_cast<std::size_t>(i)] = i / 20;
  const Split s = split_dataset(60, 0.7, 5, &strata);
  int per[3] = {0, 0, 0};
  for (auto i : s.test) ++per[strata[i]];
  CHECK(per[0] == 6);
  CHECK(per[1] == 6);
  CHECK(per[2] == 6);

  CHECK_THROWS_AS(split_dataset(1, 0.7, 1), ValidationError);
  CHECK_THROWS_AS(split_dataset(10, 1.0, 1), ValidationError);
}

TEST_CASE("batch builders") {
  std::mt19937_64 rng(1);
  const TrainSample a = banded_sample(5, GradeLabel::Healthy, rng);
  const TrainSample b = banded_sample(9, GradeLabel::AdvancedGlaucoma, rng);
  const std::vector<const Scan*> scans{&a.scan, &b.scan};
  const Tensor4 x = input_batch(scans);
  CHECK(x.shape() == Shape{2, 1, 32, 32});
  CHECK(x.at(1, 0, 9, 3) == b.scan.pixels()(9, 3));

  const std::vector<const LayerMask*> masks{&a.mask, &b.mask};
  const Tensor4 t = seg_targets(masks, Shape{1, 3, 32 * 32, 1});
  CHECK(t.shape() == Shape{2, 3, 1024, 1});
  CHECK(t.at(0, 1, 5 * 32 + 7, 0) == 1.0);
  CHECK(t.at(1, 2, 13 * 32, 0) == 1.0);
  CHECK(t.at(1, 0, 13 * 32, 0) == 0.0);

  const std::vector<GradeLabel> g{GradeLabel::Healthy, GradeLabel::EarlyGlaucoma};
  const Tensor4 c = cls_targets(g);
  CHECK(c.at(0, 0, 0, 0) == 1.0);
  CHECK(c.at(1, 1, 0, 0) == 1.0);
  CHECK(c.at(1, 0, 0, 0) == 0.0);
}

TEST_CASE("zero epochs leave the initial weights") {
  std::mt19937_64 rng(8);
  std::vector<TrainSample> data;
  for (int i = 0; i < 6; ++i) data.push_back(banded_sample(6 + i, GradeLabel::Healthy, rng));
  nn::Network net(tiny_net(), 21);
  const nn::NetworkWeights init = net.weights();
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult r = train::train(net, data, cfg);
  CHECK(net.weights() == init);
  CHECK(r.history.empty());
  CHECK(r.split.train.size() + r.split.test.size() == 6);
  CHECK_THROWS_AS(train::train(net, {}, cfg), ValidationError);
}

TEST_CASE("training is deterministic and records history") {
  std::mt19937_64 rng(8);
  std::vector<TrainSample> data;
  for (int i = 0; i < 6; ++i) {
    data.push_back(banded_sample(6 + i, i % 2 ? GradeLabel::EarlyGlaucoma : GradeLabel::Healthy, rng));
  }
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.iters_per_epoch = 2;
  cfg.batch_size = 2;
  cfg.augment.copies_per_scan = 2;
  cfg.seed = 4;
  nn::Network a(tiny_net(), 3), b(tiny_net(), 3);
  const TrainResult ra = train::train(a, data, cfg);
  const TrainResult rb = train::train(b, data, cfg);
  CHECK(a.weights() == b.weights());
  REQUIRE(ra.history.size() == 2);
  CHECK(ra.history[1].epoch == 2);
  CHECK(ra.history[0].total == rb.history[0].total);
  CHECK(ra.history[0].total ==
        doctest::Approx(ra.history[0].seg_loss + ra.history[0].cls_loss).epsilon(1e-12));
  const std::string csv = history_csv(ra.history);
  CHECK(csv.rfind("epoch,seg_loss,cls_loss,total\n1,", 0) == 0);
}

TEST_CASE("loss on a fixed batch does not increase over ten epochs in most runs") {
  int monotone = 0;
  const int runs = 10;
  for (int seed = 0; seed < runs; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(100 + seed));
    std::vector<TrainSample> batch;
    for (int i = 0; i < 4; ++i) {
      batch.push_back(banded_sample(6 + 3 * i, i < 2 ? GradeLabel::Healthy : GradeLabel::AdvancedGlaucoma, rng));
    }
    std::vector<const Scan*> scans;
    std::vector<const LayerMask*> masks;
    std::vector<GradeLabel> grades;
    for (const auto& s : batch) {
      scans.push_back(&s.scan);
      masks.push_back(&s.mask);
      grades.push_back(s.grade);
    }
    nn::Network net(tiny_net(), static_cast<std::uint64_t>(seed));
    const Tensor4 x = input_batch(scans);
    const Tensor4 st = seg_targets(masks, net.shapes()[static_cast<std::size_t>(net.spec().seg_output)]);
    const Tensor4 ct = cls_targets(grades);
    Trainer trainer(net, TrainConfig{});
    double prev = trainer.step(x, st, ct).total;
    bool ok = true;
    for (int epoch = 1; epoch < 10; ++epoch) {
      const double cur = trainer.step(x, st, ct).total;
      ok = ok && cur <= prev;
      prev = cur;
    }
    monotone += ok ? 1 : 0;
  }
  CHECK(monotone >= 9);
}
