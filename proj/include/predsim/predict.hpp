#pragma once

#include <cstddef>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "predsim/trace.hpp"
#include "predsim/vec3.hpp"

namespace predsim {

struct RnnModel;

inline constexpr std::size_t kMinWindow = 2;
inline constexpr std::size_t kMaxWindow = 60;

/// Bounded FIFO of (t_ms, value) for one scalar channel.
class SampleWindow {
 public:
  explicit SampleWindow(std::size_t capacity);

  /// Appends a sample, evicting the oldest when full. t_ms must exceed the
  /// newest timestamp already held.
  void push(double t_ms, double value);

  std::size_t size() const { return t_ms_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return t_ms_.empty(); }
  double newest_t_ms() const { return t_ms_.back(); }
  double newest_value() const { return values_.back(); }

  /// Timestamps in seconds relative to the newest sample (newest is 0).
  std::vector<double> relative_times_s() const;
  std::vector<double> values() const { return {values_.begin(), values_.end()}; }

 private:
  std::size_t capacity_;
  std::deque<double> t_ms_;
  std::deque<double> values_;
};

struct RegressionSpec {
  int order{2};
  std::size_t window{20};
  double ridge{1e-9};

  void validate() const;
};

/// Polynomial coefficients beta_0..beta_order in seconds, origin at the
/// newest sample.
struct Coefficients {
  std::vector<double> beta;
};

struct NoPrediction {};
struct DeadReckoning {};
struct Lagrange {
  std::size_t points{3};
};
struct PolyRegression {
  RegressionSpec spec;
};
struct Recurrent {
  std::shared_ptr<const RnnModel> model;
};

using PredictorKind = std::variant<NoPrediction, DeadReckoning, Lagrange, PolyRegression, Recurrent>;

/// Samples of history a predictor needs before it stops warming up.
std::size_t required_history(const PredictorKind& kind);
std::string predictor_name(const PredictorKind& kind);
void validate_predictor(const PredictorKind& kind);

/// Least squares with ridge on the non-intercept terms. Throws
/// DegenerateWindowError when the normal equations are singular.
Coefficients fit_ols(std::span<const double> times_s, std::span<const double> values, int order,
                     double ridge);

/// Horner evaluation at h seconds past the newest sample.
double extrapolate(const Coefficients& coeffs, double h_s);

double dead_reckon(const SampleWindow& window, double h_s);
double lagrange_extrapolate(const SampleWindow& window, double h_s);

/// Weights w with prediction = sum_i w_i * y_i for the linear predictors
/// (everything except Recurrent). times_s are relative to the newest sample
/// and ordered oldest first; the last `required_history(kind)` are used.
std::vector<double> extrapolation_weights(const PredictorKind& kind, std::span<const double> times_s,
                                          double h_s);

enum class PredictionStatus { kOk, kWarmingUp, kDegenerate };

struct FramePrediction {
  std::vector<Vec3> points;
  PredictionStatus status{PredictionStatus::kOk};
};

/// Predicts all 150 scalar channels independently h_ms past the newest
/// frame. On warm-up or a degenerate window the newest frame is returned
/// unchanged and the status says why.
FramePrediction predict_frame(std::span<const TrackedFrame> history, const PredictorKind& kind,
                              double h_ms);

nlohmann::json predictor_to_json(const PredictorKind& kind);

}  // namespace predsim
