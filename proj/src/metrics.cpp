#include "predsim/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "predsim/errors.hpp"

namespace predsim {

double frame_error(std::span<const Vec3> displayed, std::span<const Vec3> live) {
  if (displayed.size() != live.size()) {
    throw ContractError("frame_error: point counts differ (" + std::to_string(displayed.size()) + " vs " +
                        std::to_string(live.size()) + ")");
  }
  if (displayed.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < displayed.size(); ++i) sum += distance(displayed[i], live[i]);
  return sum / static_cast<double>(displayed.size());
}

MinDistError min_dist_error(std::span<const Vec3> predicted, std::span<const Vec3> live) {
  if (predicted.empty() || live.empty()) throw ContractError("min_dist_error: empty point cloud");
  MinDistError out;
  for (const auto& p : predicted) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : live) {
      const Vec3 d = p - q;
      best = std::min(best, dot(d, d));
    }
    out.sum_mm += std::sqrt(best);
  }
  out.mean_mm = out.sum_mm / static_cast<double>(predicted.size());
  return out;
}

SummaryStats aggregate(std::span<const double> values) {
  if (values.empty()) throw ContractError("aggregate: empty series");
  SummaryStats s;
  s.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean_mm = sum / static_cast<double>(s.n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean_mm) * (v - s.mean_mm);
  s.std_mm = std::sqrt(ss / static_cast<double>(s.n));
  return s;
}

std::vector<double> error_values(std::span<const ErrorSample> series) {
  std::vector<double> v;
  v.reserve(series.size());
  for (const auto& e : series) v.push_back(e.error_mm);
  return v;
}

SummaryStats aggregate(std::span<const ErrorSample> series) {
  const auto v = error_values(series);
  return aggregate(std::span<const double>(v));
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) throw ContractError("moving_average: window must be >= 1");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

ReductionFactor reduction_factor(const SummaryStats& base, const SummaryStats& pred) {
  ReductionFactor r;
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (pred.mean_mm > 0.0) {
    r.mean_ratio = base.mean_mm / pred.mean_mm;
  } else {
    r.mean_ratio = base.mean_mm > 0.0 ? inf : 1.0;
    r.infinite = r.infinite || base.mean_mm > 0.0;
  }
  if (pred.std_mm > 0.0) {
    r.std_ratio = base.std_mm / pred.std_mm;
  } else {
    r.std_ratio = base.std_mm > 0.0 ? inf : 1.0;
    r.infinite = r.infinite || base.std_mm > 0.0;
  }
  return r;
}

}  // namespace predsim
