#pragma once

#include <cstdint>
#include <set>
#include <utility>
#include <vector>

namespace rgc::nn {

/// Dilation rates for a block of `depth` stacked atrous convolutions with
/// nominal rate `rate`: rates[i] = max(1, round(rate − depth/2 + i)), rounding
/// half away from zero.
struct DilationSchedule {
  int depth = 0;
  int rate = 0;
  std::vector<int> rates;
};

DilationSchedule make_schedule(int depth, int rate);

/// Constant-rate stack, the gridding-prone baseline.
DilationSchedule fixed_schedule(int depth, int rate);

/// Receptive field of a stride-1 stack of k×k kernels: 1 + Σ (k−1)·r.
int receptive_field(const std::vector<int>& rates, int kernel);
int receptive_field(const DilationSchedule& schedule, int kernel);

/// Offsets of input positions that influence output position 0 in 1-D.
std::set<int> influence_set_1d(const std::vector<int>& rates, int kernel);
/// Same in 2-D, found by walking the stack backwards from one output pixel.
std::set<std::pair<int, int>> influence_set_2d(const std::vector<int>& rates, int kernel);

/// |influence set| / |receptive-field bounding box| in 2-D.
double gridding_coverage(const std::vector<int>& rates, int kernel);
double gridding_coverage(const DilationSchedule& schedule, int kernel);
double gridding_coverage_1d(const std::vector<int>& rates, int kernel);

}  // namespace rgc::nn
