#include "predsim/predict.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "predsim/errors.hpp"
#include "predsim/rnn.hpp"

namespace predsim {

SampleWindow::SampleWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity < kMinWindow || capacity > kMaxWindow) {
    throw ContractError("SampleWindow capacity must be in [2, 60], got " + std::to_string(capacity));
  }
}

void SampleWindow::push(double t_ms, double value) {
  if (!t_ms_.empty() && !(t_ms > t_ms_.back())) {
    throw ContractError("SampleWindow: timestamps must be strictly increasing");
  }
  if (t_ms_.size() == capacity_) {
    t_ms_.pop_front();
    values_.pop_front();
  }
  t_ms_.push_back(t_ms);
  values_.push_back(value);
}

std::vector<double> SampleWindow::relative_times_s() const {
  std::vector<double> out;
  out.reserve(t_ms_.size());
  const double newest = t_ms_.back();
  for (double t : t_ms_) out.push_back((t - newest) / 1000.0);
  return out;
}

void RegressionSpec::validate() const {
  if (order < 1 || order > 3) throw ConfigError("predictor.order must be 1, 2 or 3");
  if (window < kMinWindow || window > kMaxWindow) throw ConfigError("predictor.window must be in [2, 60]");
  if (window < static_cast<std::size_t>(order) + 1) throw ConfigError("predictor.window must be >= order + 1");
  if (!(ridge >= 0.0)) throw ConfigError("predictor.ridge must be >= 0");
}

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr int kMaxTerms = 4;

/// Solves the symmetric k x k system in place with partial pivoting, after
/// scaling rows and columns to a unit diagonal. Singular when a pivot falls
/// below 1e-12 of the largest (scaled) diagonal entry.
void solve_small(double m[kMaxTerms][kMaxTerms], double* rhs, int k) {
  double d[kMaxTerms];
  for (int i = 0; i < k; ++i) {
    if (!(m[i][i] > 0.0)) throw DegenerateWindowError("normal equations are singular");
    d[i] = 1.0 / std::sqrt(m[i][i]);
  }
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) m[r][c] *= d[r] * d[c];
    rhs[r] *= d[r];
  }
  const double tiny = 1e-12;
  for (int col = 0; col < k; ++col) {
    int piv = col;
    for (int r = col + 1; r < k; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    }
    if (!(std::abs(m[piv][col]) > tiny)) throw DegenerateWindowError("normal equations are singular");
    if (piv != col) {
      for (int c = 0; c < k; ++c) std::swap(m[col][c], m[piv][c]);
      std::swap(rhs[col], rhs[piv]);
    }
    for (int r = col + 1; r < k; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < k; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  for (int r = k - 1; r >= 0; --r) {
    double s = rhs[r];
    for (int c = r + 1; c < k; ++c) s -= m[r][c] * rhs[c];
    rhs[r] = s / m[r][r];
  }
  for (int r = 0; r < k; ++r) rhs[r] *= d[r];
}

void assemble_normal_matrix(std::span<const double> times_s, int order, double ridge,
                            double m[kMaxTerms][kMaxTerms]) {
  const int k = order + 1;
  double moments[2 * kMaxTerms - 1] = {};
  for (double t : times_s) {
    double p = 1.0;
    for (int j = 0; j < 2 * k - 1; ++j) {
      moments[j] += p;
      p *= t;
    }
  }
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) m[r][c] = moments[r + c];
  }
  for (int j = 1; j < k; ++j) m[j][j] += ridge;
}

std::vector<double> regression_weights(std::span<const double> times_s, int order, double ridge,
                                       double h_s) {
  const int k = order + 1;
  double m[kMaxTerms][kMaxTerms];
  assemble_normal_matrix(times_s, order, ridge, m);
  double a[kMaxTerms];
  double p = 1.0;
  for (int j = 0; j < k; ++j) {
    a[j] = p;
    p *= h_s;
  }
  solve_small(m, a, k);
  std::vector<double> w(times_s.size());
  for (std::size_t i = 0; i < times_s.size(); ++i) {
    double s = 0.0;
    double tp = 1.0;
    for (int j = 0; j < k; ++j) {
      s += a[j] * tp;
      tp *= times_s[i];
    }
    w[i] = s;
  }
  return w;
}

std::vector<double> dead_reckoning_weights(std::span<const double> times_s, double h_s) {
  const std::size_t n = times_s.size();
  const double dt = times_s[n - 1] - times_s[n - 2];
  if (!(dt > 0.0)) throw DegenerateWindowError("dead reckoning: duplicate timestamps");
  std::vector<double> w(n, 0.0);
  w[n - 1] = 1.0 + h_s / dt;
  w[n - 2] = -h_s / dt;
  return w;
}

std::vector<double> lagrange_weights(std::span<const double> times_s, double h_s) {
  const std::size_t n = times_s.size();
  std::vector<double> w(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double den = times_s[i] - times_s[j];
      if (den == 0.0) throw DegenerateWindowError("lagrange: duplicate timestamps");
      w[i] *= (h_s - times_s[j]) / den;
    }
  }
  return w;
}

void require_samples(std::size_t have, std::size_t need, const char* who) {
  if (have < need) {
    throw ContractError(std::string(who) + ": needs " + std::to_string(need) + " samples, has " +
                        std::to_string(have));
  }
}

}  // namespace

std::size_t required_history(const PredictorKind& kind) {
  return std::visit(Overloaded{
                        [](const NoPrediction&) -> std::size_t { return 1; },
                        [](const DeadReckoning&) -> std::size_t { return 2; },
                        [](const Lagrange& l) -> std::size_t { return l.points; },
                        [](const PolyRegression& p) -> std::size_t { return p.spec.window; },
                        [](const Recurrent& r) -> std::size_t {
                          return r.model ? static_cast<std::size_t>(r.model->spec.input_len) : 1;
                        },
                    },
                    kind);
}

std::string predictor_name(const PredictorKind& kind) {
  return std::visit(Overloaded{
                        [](const NoPrediction&) { return std::string("none"); },
                        [](const DeadReckoning&) { return std::string("dead_reckoning"); },
                        [](const Lagrange&) { return std::string("lagrange"); },
                        [](const PolyRegression&) { return std::string("poly"); },
                        [](const Recurrent& r) {
                          return std::string(r.model && r.model->spec.cell == CellType::kLstm ? "lstm" : "gru");
                        },
                    },
                    kind);
}

void validate_predictor(const PredictorKind& kind) {
  std::visit(Overloaded{
                 [](const NoPrediction&) {},
                 [](const DeadReckoning&) {},
                 [](const Lagrange& l) {
                   if (l.points < kMinWindow || l.points > kMaxWindow) {
                     throw ConfigError("predictor.window must be in [2, 60] for lagrange");
                   }
                 },
                 [](const PolyRegression& p) { p.spec.validate(); },
                 [](const Recurrent& r) {
                   if (!r.model) throw ConfigError("predictor.model is required for recurrent predictors");
                 },
             },
             kind);
}

Coefficients fit_ols(std::span<const double> times_s, std::span<const double> values, int order,
                     double ridge) {
  if (order < 0 || order >= kMaxTerms) throw ContractError("fit_ols: order must be in [0, 3]");
  if (times_s.size() != values.size()) throw ContractError("fit_ols: times and values differ in length");
  require_samples(times_s.size(), static_cast<std::size_t>(order) + 1, "fit_ols");
  if (!(ridge >= 0.0)) throw ContractError("fit_ols: ridge must be >= 0");
  const int k = order + 1;
  double m[kMaxTerms][kMaxTerms];
  assemble_normal_matrix(times_s, order, ridge, m);
  double rhs[kMaxTerms] = {};
  for (std::size_t i = 0; i < times_s.size(); ++i) {
    double p = 1.0;
    for (int j = 0; j < k; ++j) {
      rhs[j] += p * values[i];
      p *= times_s[i];
    }
  }
  solve_small(m, rhs, k);
  Coefficients c;
  c.beta.assign(rhs, rhs + k);
  return c;
}

double extrapolate(const Coefficients& coeffs, double h_s) {
  double acc = 0.0;
  for (auto it = coeffs.beta.rbegin(); it != coeffs.beta.rend(); ++it) acc = acc * h_s + *it;
  return acc;
}

double dead_reckon(const SampleWindow& window, double h_s) {
  require_samples(window.size(), 2, "dead_reckon");
  const auto t = window.relative_times_s();
  const auto v = window.values();
  const auto w = dead_reckoning_weights(t, h_s);
  return w[w.size() - 1] * v[v.size() - 1] + w[w.size() - 2] * v[v.size() - 2];
}

double lagrange_extrapolate(const SampleWindow& window, double h_s) {
  require_samples(window.size(), 1, "lagrange_extrapolate");
  const auto t = window.relative_times_s();
  const auto v = window.values();
  const auto w = lagrange_weights(t, h_s);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * v[i];
  return acc;
}

std::vector<double> extrapolation_weights(const PredictorKind& kind, std::span<const double> times_s,
                                          double h_s) {
  const std::size_t need = required_history(kind);
  require_samples(times_s.size(), need, "extrapolation_weights");
  const auto tail = times_s.subspan(times_s.size() - need);
  return std::visit(Overloaded{
                        [&](const NoPrediction&) { return std::vector<double>{1.0}; },
                        [&](const DeadReckoning&) { return dead_reckoning_weights(tail, h_s); },
                        [&](const Lagrange&) { return lagrange_weights(tail, h_s); },
                        [&](const PolyRegression& p) {
                          return regression_weights(tail, p.spec.order, p.spec.ridge, h_s);
                        },
                        [&](const Recurrent&) -> std::vector<double> {
                          throw ContractError("recurrent predictors have no linear weights");
                        },
                    },
                    kind);
}

FramePrediction predict_frame(std::span<const TrackedFrame> history, const PredictorKind& kind,
                              double h_ms) {
  if (history.empty()) throw ContractError("predict_frame: empty history");
  if (!(h_ms >= 0.0)) throw ContractError("predict_frame: horizon must be >= 0");
  const TrackedFrame& newest = history.back();
  FramePrediction out{newest.points, PredictionStatus::kOk};
  if (std::holds_alternative<NoPrediction>(kind)) return out;

  const std::size_t need = required_history(kind);
  if (history.size() < need) {
    out.status = PredictionStatus::kWarmingUp;
    return out;
  }
  const auto tail = history.subspan(history.size() - need);
  const std::size_t npts = newest.points.size();
  for (const auto& f : tail) {
    if (f.points.size() != npts) throw ContractError("predict_frame: frames differ in point count");
  }

  if (const auto* rec = std::get_if<Recurrent>(&kind)) {
    check_horizon(*rec->model, h_ms);
    std::vector<double> channel(need);
    for (std::size_t p = 0; p < npts; ++p) {
      for (int axis = 0; axis < 3; ++axis) {
        for (std::size_t i = 0; i < need; ++i) channel[i] = tail[i].points[p][axis];
        out.points[p][axis] = channel.back() + predict_displacement(*rec->model, channel);
      }
    }
    return out;
  }

  std::vector<double> times(need);
  for (std::size_t i = 0; i < need; ++i) times[i] = (tail[i].t_ms - newest.t_ms) / 1000.0;
  std::vector<double> w;
  try {
    w = extrapolation_weights(kind, times, h_ms / 1000.0);
  } catch (const DegenerateWindowError&) {
    out.status = PredictionStatus::kDegenerate;
    return out;
  }
  for (std::size_t p = 0; p < npts; ++p) {
    Vec3 acc;
    for (std::size_t i = 0; i < need; ++i) acc += tail[i].points[p] * w[i];
    out.points[p] = acc;
  }
  return out;
}

nlohmann::json predictor_to_json(const PredictorKind& kind) {
  return std::visit(Overloaded{
                        [](const NoPrediction&) { return nlohmann::json{{"kind", "none"}}; },
                        [](const DeadReckoning&) { return nlohmann::json{{"kind", "dead_reckoning"}}; },
                        [](const Lagrange& l) { return nlohmann::json{{"kind", "lagrange"}, {"window", l.points}}; },
                        [](const PolyRegression& p) {
                          return nlohmann::json{{"kind", "poly"},
                                                {"order", p.spec.order},
                                                {"window", p.spec.window},
                                                {"ridge", p.spec.ridge}};
                        },
                        [](const Recurrent& r) {
                          nlohmann::json j{{"kind", r.model && r.model->spec.cell == CellType::kLstm ? "lstm" : "gru"}};
                          if (r.model) j["horizon_ms"] = r.model->horizon_ms;
                          return j;
                        },
                    },
                    kind);
}

}  // namespace predsim
