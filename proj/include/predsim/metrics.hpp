#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "predsim/vec3.hpp"

namespace predsim {

struct ErrorSample {
  double t_ms{0.0};
  double error_mm{0.0};
};

using ErrorSeries = std::vector<ErrorSample>;

/// Population statistics.
struct SummaryStats {
  double mean_mm{0.0};
  double std_mm{0.0};
  std::size_t n{0};
};

/// Mean over i of |displayed[i] - live[i]|.
double frame_error(std::span<const Vec3> displayed, std::span<const Vec3> live);

struct MinDistError {
  double sum_mm{0.0};
  double mean_mm{0.0};
};

/// Directed: for each predicted point, distance to the nearest live point.
MinDistError min_dist_error(std::span<const Vec3> predicted, std::span<const Vec3> live);

SummaryStats aggregate(std::span<const ErrorSample> series);
SummaryStats aggregate(std::span<const double> values);

/// Trailing moving average; the first window-1 outputs average the
/// available prefix.
std::vector<double> moving_average(std::span<const double> values, std::size_t window = 50);

struct ReductionFactor {
  double mean_ratio{1.0};
  double std_ratio{1.0};
  /// Set when a denominator was zero and the ratio is reported as infinity.
  bool infinite{false};
};

ReductionFactor reduction_factor(const SummaryStats& base, const SummaryStats& pred);

std::vector<double> error_values(std::span<const ErrorSample> series);

}  // namespace predsim
