#include "rgc/nn/schedule.hpp"

#include <cmath>

#include "rgc/error.hpp"

namespace rgc::nn {
namespace {

void check_kernel(int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ValidationError("kernel size must be a positive odd integer");
}

void check_rates(const std::vector<int>& rates) {
  for (int r : rates) {
    if (r < 1) throw ValidationError("dilation rates must be positive integers");
  }
}

}  // namespace

DilationSchedule make_schedule(int depth, int rate) {
  if (depth < 1) throw ValidationError("schedule depth must be at least 1");
  if (rate < 1) throw ValidationError("schedule rate must be at least 1");
  DilationSchedule s{depth, rate, {}};
  const double start = rate - depth / 2.0;
  for (int i = 0; i < depth; ++i) {
    s.rates.push_back(std::max(1, static_cast<int>(std::round(start + i))));
  }
  return s;
}

DilationSchedule fixed_schedule(int depth, int rate) {
  if (depth < 1) throw ValidationError("schedule depth must be at least 1");
  if (rate < 1) throw ValidationError("schedule rate must be at least 1");
  return DilationSchedule{depth, rate, std::vector<int>(static_cast<std::size_t>(depth), rate)};
}

int receptive_field(const std::vector<int>& rates, int kernel) {
  check_kernel(kernel);
  check_rates(rates);
  int rf = 1;
  for (int r : rates) rf += (kernel - 1) * r;
  return rf;
}

int receptive_field(const DilationSchedule& schedule, int kernel) {
  return receptive_field(schedule.rates, kernel);
}

std::set<int> influence_set_1d(const std::vector<int>& rates, int kernel) {
  check_kernel(kernel);
  check_rates(rates);
  const int a = (kernel - 1) / 2;
  std::set<int> cur{0};
  for (auto it = rates.rbegin(); it != rates.rend(); ++it) {
    std::set<int> next;
    for (int p : cur) {
      for (int i = 0; i < kernel; ++i) next.insert(p + *it * (a - i));
    }
    cur = std::move(next);
  }
  return cur;
}

std::set<std::pair<int, int>> influence_set_2d(const std::vector<int>& rates, int kernel) {
  check_kernel(kernel);
  check_rates(rates);
  const int a = (kernel - 1) / 2;
  std::set<std::pair<int, int>> cur{{0, 0}};
  for (auto it = rates.rbegin(); it != rates.rend(); ++it) {
    std::set<std::pair<int, int>> next;
    for (const auto& [y, x] : cur) {
      for (int i = 0; i < kernel; ++i) {
        for (int j = 0; j < kernel; ++j) next.emplace(y + *it * (a - i), x + *it * (a - j));
      }
    }
    cur = std::move(next);
  }
  return cur;
}

double gridding_coverage(const std::vector<int>& rates, int kernel) {
  const double rf = receptive_field(rates, kernel);
  return static_cast<double>(influence_set_2d(rates, kernel).size()) / (rf * rf);
}

double gridding_coverage(const DilationSchedule& schedule, int kernel) {
  return gridding_coverage(schedule.rates, kernel);
}

double gridding_coverage_1d(const std::vector<int>& rates, int kernel) {
  const double rf = receptive_field(rates, kernel);
  return static_cast<double>(influence_set_1d(rates, kernel).size()) / rf;
}

}  // namespace rgc::nn
