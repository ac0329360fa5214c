// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
// Usage: acceptance [criterion numbers...]   (default: all)
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgc/image_io.hpp"
#include "rgc/metrics.hpp"
#include "rgc/nn/layers.hpp"
#include "rgc/nn/network.hpp"
#include "rgc/nn/schedule.hpp"
#include "rgc/pipeline.hpp"
#include "rgc/preprocess.hpp"
#include "rgc/profiles.hpp"
#include "rgc/random.hpp"
#include "rgc/synth.hpp"
#include "rgc/train.hpp"
#include "test_support.hpp"

using namespace rgc;
using namespace rgc::nn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor4 random_tensor(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor4 t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

ConvKernel random_kernel(int out, int in, int k, int r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  ConvKernel kern = ConvKernel::zeros(out, in, k, k, r);
  for (double& v : kern.weights) v = u(rng);
  for (double& v : kern.bias) v = u(rng);
  return kern;
}

double dot(const Tensor4& a, const Tensor4& b) {
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

// ---- 1 ---------------------------------------------------------------------

Outcome schedules() {
  const auto a = make_schedule(5, 3).rates;
  const auto b = make_schedule(3, 3).rates;
  const bool ok = a == std::vector<int>{1, 2, 3, 4, 5} && b == std::vector<int>{2, 3, 4};
  std::string got = "(5,3) ->";
  for (int r : a) got += " " + std::to_string(r);
  got += "; (3,3) ->";
  for (int r : b) got += " " + std::to_string(r);
  return {ok, got};
}

// ---- 2 ---------------------------------------------------------------------

// Plain dense convolution (no dilation), flipped kernel, bias first.
Tensor4 dense_conv(const Tensor4& x, const ConvKernel& k, Padding pad) {
  const int a = pad == Padding::Same ? (k.kh - 1) / 2 : k.kh - 1;
  const int c = pad == Padding::Same ? (k.kw - 1) / 2 : k.kw - 1;
  const int oh = pad == Padding::Same ? x.h() : x.h() - k.kh + 1;
  const int ow = pad == Padding::Same ? x.w() : x.w() - k.kw + 1;
  Tensor4 out(Shape{x.n(), k.out_ch, oh, ow});
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < k.out_ch; ++o) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          double s = k.bias[static_cast<std::size_t>(o)];
          for (int ci = 0; ci < k.in_ch; ++ci) {
            for (int i = 0; i < k.kh; ++i) {
              for (int j = 0; j < k.kw; ++j) {
                const int sy = y + a - i, sx = xx + c - j;
                if (sy < 0 || sy >= x.h() || sx < 0 || sx >= x.w()) continue;
                s += k.w(o, ci, i, j) * x.at(n, ci, sy, sx);
              }
            }
          }
          out.at(n, o, y, xx) = s;
        }
      }
    }
  }
  return out;
}

// y[m] = b + Σ_k w[k] x[m + r·(a − k)] in each axis, zero outside.
Tensor4 dilated_conv(const Tensor4& x, const ConvKernel& k, Padding pad) {
  const int a = pad == Padding::Same ? (k.kh - 1) / 2 : k.kh - 1;
  const int c = pad == Padding::Same ? (k.kw - 1) / 2 : k.kw - 1;
  const int r = k.dilation;
  const int oh = pad == Padding::Same ? x.h() : x.h() - r * (k.kh - 1);
  const int ow = pad == Padding::Same ? x.w() : x.w() - r * (k.kw - 1);
  Tensor4 out(Shape{x.n(), k.out_ch, oh, ow});
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < k.out_ch; ++o) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          double s = k.bias[static_cast<std::size_t>(o)];
          for (int ci = 0; ci < k.in_ch; ++ci) {
            for (int i = 0; i < k.kh; ++i) {
              for (int j = 0; j < k.kw; ++j) {
                const int sy = y + r * (a - i), sx = xx + r * (c - j);
                if (sy >= 0 && sy < x.h() && sx >= 0 && sx < x.w()) s += k.w(o, ci, i, j) * x.at(n, ci, sy, sx);
              }
            }
          }
          out.at(n, o, y, xx) = s;
        }
      }
    }
  }
  return out;
}

Outcome atrous() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 12), ch(1, 3), ks(0, 2);
  int identical = 0;
  for (int t = 0; t < 50; ++t) {
    const int k = 2 * ks(rng) + 1;
    const Tensor4 x = random_tensor(Shape{1 + t % 2, ch(rng), k + dim(rng), k + dim(rng)}, rng);
    const ConvKernel kern = random_kernel(ch(rng), x.c(), k, 1, rng);
    const Padding pad = t % 3 == 0 ? Padding::Valid : Padding::Same;
    identical += atrous_conv_forward(x, kern, pad) == dense_conv(x, kern, pad);
  }
  double worst = 0.0;
  int dilated_cases = 0;
  for (int r = 2; r <= 4; ++r) {
    for (int t = 0; t < 20; ++t) {
      const int k = 1 + 2 * (t % 3);
      const int h = r * (k - 1) + 1 + dim(rng), w = r * (k - 1) + 1 + dim(rng);
      const Tensor4 x = random_tensor(Shape{1 + t % 2, ch(rng), h, w}, rng);
      const ConvKernel kern = random_kernel(ch(rng), x.c(), k, r, rng);
      const Padding pad = t % 2 ? Padding::Valid : Padding::Same;
      const auto fast = atrous_conv_forward(x, kern, pad);
      const auto slow = dilated_conv(x, kern, pad);
      if (fast.shape() != slow.shape()) return {false, "shape mismatch at r=" + std::to_string(r)};
      for (std::size_t i = 0; i < fast.size(); ++i) {
        worst = std::max(worst, std::abs(fast.values()[i] - slow.values()[i]));
      }
      ++dilated_cases;
    }
  }
  return {identical == 50 && worst <= 1e-10,
          fmt("r=1 bit-identical %d/50; r=2..4 max |diff| %.2e over %d cases", identical, worst, dilated_cases)};
}

// ---- 3 ---------------------------------------------------------------------

struct GradCheck {
  double worst = 0.0;
  std::size_t checked = 0;

  void run(std::vector<double>& params, const std::vector<double>& analytic, const std::function<double()>& f,
           double h = 1e-5) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i];
      params[i] = keep + h;
      const double up = f();
      params[i] = keep - h;
      const double down = f();
      params[i] = keep;
      worst = std::max(worst, rgc::testing::rel_error(analytic[i], (up - down) / (2 * h)));
      ++checked;
    }
  }
};

std::vector<double> as_vector(const Tensor4& t) { return {t.values().begin(), t.values().end()}; }

Outcome gradients() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> dim(4, 9), ch(1, 3), batch(1, 3);
  GradCheck conv, bn, dense, loss;
  for (int t = 0; t < 6; ++t) {
    const int r = 1 + t % 3;
    const Padding pad = t % 2 ? Padding::Valid : Padding::Same;
    Tensor4 x = random_tensor(Shape{batch(rng), ch(rng), dim(rng) + 2 * r, dim(rng) + 2 * r}, rng);
    ConvKernel k = random_kernel(ch(rng), x.c(), 3, r, rng);
    const Tensor4 probe = random_tensor(atrous_conv_forward(x, k, pad).shape(), rng);
    const auto f = [&] { return dot(atrous_conv_forward(x, k, pad), probe); };
    const auto g = atrous_conv_backward(probe, x, k, pad);
    conv.run(k.weights, g.grad_weights, f);
    conv.run(k.bias, g.grad_bias, f);
    conv.run(x.storage(), as_vector(g.grad_x), f);
  }
  std::normal_distribution<double> z(0.0, 1.0);
  for (int t = 0; t < 4; ++t) {
    const bool training = t % 2 == 0;
    Tensor4 x = random_tensor(Shape{batch(rng) + 1, ch(rng), dim(rng), dim(rng)}, rng);
    BatchNormParams p = BatchNormParams::identity(x.c());
    for (int c = 0; c < x.c(); ++c) {
      p.gamma[c] = z(rng);
      p.beta[c] = z(rng);
      p.running_mean[c] = 0.1 * z(rng);
      p.running_var[c] = 0.5 + std::abs(z(rng));
    }
    const Tensor4 probe = random_tensor(x.shape(), rng);
    const auto f = [&] {
      BatchNormParams q = p;
      return dot(batch_norm_forward(x, q, training, nullptr), probe);
    };
    BatchNormParams q = p;
    BatchNormCache cache;
    batch_norm_forward(x, q, training, &cache);
    const auto g = batch_norm_backward(probe, cache, p);
    bn.run(p.gamma, g.grad_gamma, f);
    bn.run(p.beta, g.grad_beta, f);
    bn.run(x.storage(), as_vector(g.grad_x), f);
  }
  for (int t = 0; t < 4; ++t) {
    Tensor4 x = random_tensor(Shape{batch(rng), ch(rng), dim(rng) / 2, dim(rng) / 2}, rng);
    DenseParams p;
    p.units = 1 + t;
    p.in_features = x.c() * x.h() * x.w();
    p.weights = as_vector(random_tensor(Shape{1, 1, p.units, p.in_features}, rng));
    p.bias = as_vector(random_tensor(Shape{1, 1, 1, p.units}, rng));
    const Tensor4 probe = random_tensor(Shape{x.n(), p.units, 1, 1}, rng);
    const auto f = [&] { return dot(dense_forward(x, p), probe); };
    const auto g = dense_backward(probe, x, p);
    dense.run(p.weights, g.grad_weights, f);
    dense.run(p.bias, g.grad_bias, f);
    dense.run(x.storage(), as_vector(g.grad_x), f);
  }
  for (int t = 0; t < 4; ++t) {
    const Shape s{batch(rng), 2 + t % 2, dim(rng) / 2, dim(rng) / 2};
    Tensor4 target(s, 0.0), p(s, 0.0);
    std::uniform_int_distribution<int> cls(0, s.c - 1);
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t i = 0; i < s.plane(); ++i) {
        target.plane(n, cls(rng))[i] = 1.0;
        double sum = 0.0;
        for (int c = 0; c < s.c; ++c) sum += (p.plane(n, c)[i] = std::exp(z(rng)));
        for (int c = 0; c < s.c; ++c) p.plane(n, c)[i] /= sum;
      }
    }
    train::LossConfig cfg;
    cfg.alpha1 = 0.5 + t * 0.25;
    cfg.alpha2 = 1.5 - t * 0.25;
    cfg.check_inputs = false;
    const auto v = train::dice_entropy_loss(target, p, cfg);
    loss.run(p.storage(), as_vector(v.grad), [&] { return train::dice_entropy_loss(target, p, cfg).total; }, 1e-6);
  }
  const double worst = std::max({conv.worst, bn.worst, dense.worst, loss.worst});
  return {worst < 1e-4, fmt("max rel err conv %.1e, batch-norm %.1e, dense %.1e, dice-entropy %.1e (%zu entries)",
                            conv.worst, bn.worst, dense.worst, loss.worst,
                            conv.checked + bn.checked + dense.checked + loss.checked)};
}

// ---- 4 ---------------------------------------------------------------------

Outcome metric_fixtures() {
  const auto m = metrics::confusion_metrics({34, 22, 2, 1});
  const std::vector<std::pair<std::optional<double>, double>> pairs{
      {m.accuracy, 0.9491}, {m.tpr, 0.9714}, {m.tnr, 0.9166}, {m.fpr, 0.0834}, {m.ppv, 0.9444}, {m.f1, 0.9577}};
  bool ok = true;
  double worst = 0.0;
  for (const auto& [got, want] : pairs) {
    if (!got) return {false, "undefined rate"};
    worst = std::max(worst, std::abs(*got - want));
    ok = ok && std::abs(*got - want) <= 1e-4;
  }
  const auto grading = metrics::confusion_metrics({31, 0, 0, 3});
  const double g = grading.accuracy.value_or(-1.0);
  ok = ok && std::abs(g - 0.9117) <= 1e-4;
  return {ok, fmt("acc %.4f tpr %.4f tnr %.4f fpr %.4f ppv %.4f f1 %.4f (max dev %.1e); grading %.4f", *m.accuracy,
                  *m.tpr, *m.tnr, *m.fpr, *m.ppv, *m.f1, worst, g)};
}

// ---- 5 ---------------------------------------------------------------------

// Conv/BN chains whose batch-norm channel counts sum to 4480.
NetworkSpec bn_spec(const std::vector<int>& channels, int in_ch) {
  NetworkSpec s;
  LayerSpec in;
  in.kind = LayerKind::Input;
  in.channels = in_ch;
  in.out_h = 4;
  in.out_w = 4;
  int prev = s.add(in);
  for (int c : channels) {
    LayerSpec conv;
    conv.kind = LayerKind::Conv;
    conv.inputs = {prev};
    conv.channels = c;
    conv.kernel = 1;
    prev = s.add(conv);
    LayerSpec bn;
    bn.kind = LayerKind::BatchNorm;
    bn.inputs = {prev};
    prev = s.add(bn);
  }
  s.seg_output = prev;
  LayerSpec flat;
  flat.kind = LayerKind::Flatten;
  flat.inputs = {prev};
  const int f = s.add(flat);
  LayerSpec head;
  head.kind = LayerKind::Dense;
  head.inputs = {f};
  head.units = 2;
  head.classification_head = true;
  s.cls_output = s.add(head);
  return s;
}

Outcome bn_accounting() {
  std::mt19937_64 rng(55);
  std::vector<std::vector<int>> partitions{{4480}, {64, 128, 256, 512, 1024, 2496}, {2240, 2240}};
  for (int t = 0; t < 5; ++t) {
    std::uniform_int_distribution<int> cut(1, 4479);
    std::set<int> cuts;
    while (static_cast<int>(cuts.size()) < 2 + t) cuts.insert(cut(rng));
    std::vector<int> parts;
    int last = 0;
    for (int c : cuts) {
      parts.push_back(c - last);
      last = c;
    }
    parts.push_back(4480 - last);
    partitions.push_back(parts);
  }
  int ok = 0;
  std::string seen;
  for (const auto& parts : partitions) {
    const NetworkSpec spec = bn_spec(parts, 3);
    const auto pc = count_parameters(spec);
    // Batch-norm share of the learnable count: total minus conv and dense.
    std::size_t conv_dense = 0;
    int in = 3;
    for (int c : parts) {
      conv_dense += static_cast<std::size_t>(in * c + c);
      in = c;
    }
    conv_dense += static_cast<std::size_t>(parts.back() * 16 * 2 + 2);
    const std::size_t bn_total = pc.learnable - conv_dense + pc.non_learnable;
    const auto w = init_weights(spec, 1);
    const bool good = bn_total == 17920 && pc.non_learnable == 8960 && w.state_count() == 8960;
    ok += good;
    if (!good) seen += fmt(" [bn %zu, non-learnable %zu]", bn_total, pc.non_learnable);
  }
  return {ok == static_cast<int>(partitions.size()),
          fmt("%d/%zu specs with 17920 batch-norm parameters report 8960 non-learnable%s", ok, partitions.size(),
              seen.c_str())};
}

// ---- 6 ---------------------------------------------------------------------

Outcome end_to_end() {
  rgc::testing::TempDir tmp("acceptance");
  pipeline::SynthDatasetOptions data;
  data.healthy = 20;
  data.early = 20;
  data.advanced = 20;
  data.cohort.height = 256;
  data.cohort.width = 128;
  data.cohort.seed = 1;
  pipeline::write_synthetic_dataset(tmp / "data", data);
  const auto cfg = pipeline::load_config(
      std::nullopt, {"train.epochs=10", "train.iters_per_epoch=30", "augment.copies_per_scan=4", "seed=1"});
  const auto report = pipeline::run({tmp / "data" / "manifest.csv", tmp / "run", std::nullopt}, cfg);

  double rnfl = 0.0, gcipl = 0.0;
  if (report.segmentation) {
    for (const auto& c : report.segmentation->per_class) {
      (c.class_id == 1 ? rnfl : gcipl) = c.dice.value_or(0.0);
    }
  }
  const double screening = report.confusion ? report.confusion->accuracy.value_or(0.0) : 0.0;

  // Grading over every glaucomatous test scan; a missed screen counts as wrong.
  const auto manifest = pipeline::load_manifest(tmp / "data" / "manifest.csv");
  std::map<std::string, GradeLabel> truth;
  for (const auto& r : manifest.records) truth[r.id()] = *r.grade;
  std::map<std::string, GradeLabel> final_grade;
  for (const auto& [id, g] : pipeline::read_final_grades(tmp / "run" / "grade" / "grades.csv")) final_grade[id] = g;
  const auto split = nlohmann::json::parse(io::read_text(tmp / "run" / "split.json"));
  int glaucoma = 0, correct = 0;
  for (const std::string id : split.at("test")) {
    const GradeLabel g = truth.at(id);
    if (!is_glaucomatous(g)) continue;
    ++glaucoma;
    const auto it = final_grade.find(id);
    correct += it != final_grade.end() && it->second == g;
  }
  const double grading = glaucoma ? static_cast<double>(correct) / glaucoma : 0.0;
  const bool ok = rnfl >= 0.90 && gcipl >= 0.90 && screening >= 0.95 && grading >= 0.90;
  return {ok, fmt("dice rnfl %.4f gc-ipl %.4f, screening %.4f, grading %d/%d = %.4f", rnfl, gcipl, screening, correct,
                  glaucoma, grading)};
}

// ---- 7 ---------------------------------------------------------------------

// Brute force: grow the set of input offsets reaching one output pixel, layer
// by layer from the output back.
double brute_coverage(const std::vector<int>& rates) {
  std::set<std::pair<int, int>> reach{{0, 0}};
  for (auto it = rates.rbegin(); it != rates.rend(); ++it) {
    std::set<std::pair<int, int>> next;
    for (const auto& [y, x] : reach) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) next.insert({y + dy * *it, x + dx * *it});
      }
    }
    reach = std::move(next);
  }
  int lo = 0, hi = 0;
  for (const auto& p : reach) {
    lo = std::min(lo, p.first);
    hi = std::max(hi, p.first);
  }
  const double side = hi - lo + 1;
  return static_cast<double>(reach.size()) / (side * side);
}

Outcome gridding() {
  bool ok = true;
  int cases = 0;
  double strict_var = 0, strict_fix = 0;
  double lib_diff = 0;
  for (int n = 1; n <= 5; ++n) {
    for (int r = 2; r <= 4; ++r) {
      const auto var = make_schedule(n, r).rates;
      const auto fix = fixed_schedule(n, r).rates;
      const double cv = brute_coverage(var), cf = brute_coverage(fix);
      lib_diff = std::max({lib_diff, std::abs(cv - gridding_coverage(var, 3)), std::abs(cf - gridding_coverage(fix, 3))});
      ok = ok && cv >= cf;
      if (n == 5 && r == 3) {
        strict_var = cv;
        strict_fix = cf;
      }
      ++cases;
    }
  }
  ok = ok && strict_var > strict_fix && lib_diff < 1e-12;
  return {ok, fmt("variable >= fixed in all %d cases; (5,3): %.4f vs %.4f; library vs brute force %.1e", cases,
                  strict_var, strict_fix, lib_diff)};
}

// ---- 8 ---------------------------------------------------------------------

Outcome thickness() {
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> hdist(16, 96), wdist(4, 48);
  std::uniform_real_distribution<double> sdist(0.5, 8.0);
  int columns = 0, mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const int h = hdist(rng), w = wdist(rng);
    std::uniform_int_distribution<int> row(0, h);
    LabelGrid g(h, w, 0);
    for (int c = 0; c < w; ++c) {
      std::array<int, 3> cut{row(rng), row(rng), row(rng)};
      std::sort(cut.begin(), cut.end());
      for (int r = cut[0]; r < cut[1]; ++r) g(r, c) = 1;
      for (int r = cut[1]; r < cut[2]; ++r) g(r, c) = 2;
    }
    const double scale = sdist(rng);
    const auto p = profiles::thickness(LayerMask(g), scale);
    for (int c = 0; c < w; ++c) {
      int n1 = 0, n2 = 0;
      for (int r = 0; r < h; ++r) {
        n1 += g(r, c) == 1;
        n2 += g(r, c) == 2;
      }
      ++columns;
      const bool valid = n1 > 0 && n2 > 0;
      bool good = p.valid[c] == valid;
      if (valid) {
        good = good && p.rnfl_um[c] == n1 * scale && p.gcip_um[c] == n2 * scale &&
               p.gcc_um[c] == p.rnfl_um[c] + p.gcip_um[c];
      }
      mismatches += !good;
    }
  }
  return {mismatches == 0, fmt("%d columns over 100 masks, %d mismatches", columns, mismatches)};
}

// ---- 9 ---------------------------------------------------------------------

double pair_count_auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return num / pairs;
}

// Two-tailed Student-t tail by Simpson integration of the density after the
// substitution x = sqrt(df)·tan(theta).
double t_tail(double t, double df) {
  const double k = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(std::numbers::pi);
  const double a = std::atan(std::abs(t) / std::sqrt(df)), b = std::numbers::pi / 2;
  const int steps = 20000;
  const double h = (b - a) / steps;
  auto f = [&](double th) { return k * std::pow(std::cos(th), df - 1.0); };
  double sum = f(a) + f(b);
  for (int i = 1; i < steps; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return 2.0 * sum * h / 3.0;
}

Outcome roc_pearson() {
  std::mt19937_64 rng(909);
  double auc_dev = 0.0;
  std::uniform_int_distribution<int> size(2, 500), coarse(0, 30);
  std::bernoulli_distribution coin(0.5);
  for (int inst = 0; inst < 50; ++inst) {
    const int n = size(rng);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<bool> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      y[i] = i < 2 ? i == 0 : coin(rng);
      s[i] = coarse(rng) / 30.0 + (y[i] ? 0.15 : 0.0);
    }
    auc_dev = std::max(auc_dev, std::abs(metrics::roc(s, y).auc - pair_count_auc(s, y)));
  }
  double r_dev = 0.0, p_dev = 0.0;
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> pn(3, 80);
  std::uniform_real_distribution<double> mix(-1.0, 1.0);
  for (int inst = 0; inst < 50; ++inst) {
    const int n = pn(rng);
    const double rho = mix(rng);
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      x[i] = z(rng);
      y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * z(rng);
    }
    const auto c = metrics::pearson(x, y);
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    const double r = sxy / std::sqrt(sxx * syy);
    const double df = n - 2.0;
    r_dev = std::max(r_dev, std::abs(c.r - r));
    p_dev = std::max(p_dev, std::abs(c.p_value - t_tail(r * std::sqrt(df / (1 - r * r)), df)));
  }
  return {auc_dev <= 1e-10 && r_dev <= 1e-8 && p_dev <= 1e-8,
          fmt("AUC max dev %.1e; pearson r max dev %.1e, p max dev %.1e", auc_dev, r_dev, p_dev)};
}

// ---- 10 --------------------------------------------------------------------

Outcome preprocessing() {
  CohortOptions opts;
  opts.noise_std = 0.0;
  opts.seed = 10;
  double worst_ilm = 1.0, worst_choroid = 1.0;
  bool outlier_rejected = true;
  for (int i = 0; i < 20; ++i) {
    const auto grade = static_cast<GradeLabel>(i % 3);
    const auto s = generate_synthetic(sample_cohort_config(grade, opts, derive_seed(opts.seed, 500 + i)));
    const preprocess::PreprocessConfig pc;
    const auto ex = preprocess::extract_retina(s.scan, pc);
    const int w = s.scan.width();
    int ilm = 0, choroid = 0;
    for (int c = 0; c < w; ++c) {
      ilm += std::abs(ex.smoothed_traces.ilm.rows[c] - s.boundaries.ilm[c]) <= 2.0;
      choroid += std::abs(ex.smoothed_traces.choroid.rows[c] - s.boundaries.choroid[c]) <= 2.0;
    }
    worst_ilm = std::min(worst_ilm, static_cast<double>(ilm) / w);
    worst_choroid = std::min(worst_choroid, static_cast<double>(choroid) / w);

    // One ILM candidate pushed 50 px away must be the only column dropped.
    const auto tensor = preprocess::coherent_tensor_image(preprocess::structure_tensor(s.scan, pc));
    auto cand = preprocess::find_transitions(tensor, pc).first;
    const auto clean = preprocess::track_with_distance_check(cand, 20);
    const int col = w / 2 + i;
    if (cand[col] < 0 || !clean.valid[col]) continue;
    cand[col] += 50;
    const auto hit = preprocess::track_with_distance_check(cand, 20);
    for (int c = 0; c < w; ++c) {
      if (hit.valid[c] != (c == col ? false : clean.valid[c])) outlier_rejected = false;
    }
  }
  return {worst_ilm >= 0.95 && worst_choroid >= 0.95 && outlier_rejected,
          fmt("worst scan within 2 px: ILM %.3f, choroid %.3f; injected outlier %s", worst_ilm, worst_choroid,
              outlier_rejected ? "rejected" : "NOT rejected")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "dilation schedules", 0.001, schedules},
      {2, "atrous convolution vs dense and direct oracles", 5, atrous},
      {3, "backward passes vs central differences", 60, gradients},
      {4, "confusion and grading metric fixtures", 1, metric_fixtures},
      {5, "batch-norm parameter accounting", 10, bn_accounting},
      {6, "desk-scale end-to-end run", 600, end_to_end},
      {7, "gridding coverage", 10, gridding},
      {8, "thickness oracle", 5, thickness},
      {9, "ROC AUC and Pearson oracles", 10, roc_pearson},
      {10, "preprocessing traces and tau rejection", 30, preprocessing},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("[%s] %2d %s: %s; %.3f s (limit %g s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.budget_s, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
