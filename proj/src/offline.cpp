#include "predsim/offline.hpp"

#include <algorithm>

#include "predsim/errors.hpp"

namespace predsim {

namespace {

std::vector<Vec3> points_at(std::span<const TrackedFrame> trace, double t_ms) {
  const auto it = std::upper_bound(trace.begin(), trace.end(), t_ms,
                                   [](double t, const TrackedFrame& f) { return t < f.t_ms; });
  if (it == trace.begin()) return trace.front().points;
  if (it == trace.end()) return trace.back().points;
  const TrackedFrame& a = *(it - 1);
  const TrackedFrame& b = *it;
  const double u = (t_ms - a.t_ms) / (b.t_ms - a.t_ms);
  std::vector<Vec3> out(a.points.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.points[i] * (1.0 - u) + b.points[i] * u;
  return out;
}

}  // namespace

OfflineResult offline_eval(std::span<const TrackedFrame> trace, const PredictorKind& kind, double h_ms,
                           std::size_t first_index, std::size_t stride, const MotionPath* path) {
  if (trace.empty()) throw ContractError("offline_eval: empty trace");
  if (stride == 0) throw ContractError("offline_eval: stride must be >= 1");
  OfflineResult out;
  std::vector<double> md, mt;
  const std::size_t need = std::max<std::size_t>(1, required_history(kind));
  const std::size_t start = std::max(first_index, need - 1);
  for (std::size_t k = start; k < trace.size(); k += stride) {
    const double target = trace[k].t_ms + h_ms;
    if (target > trace.back().t_ms) break;
    const auto hist = trace.subspan(k + 1 - need, need);
    const auto pred = predict_frame(hist, kind, h_ms);
    const auto live = points_at(trace, target);
    const MinDistError m = min_dist_error(pred.points, live);
    OfflineSample s{trace[k].t_ms, m.sum_mm, m.mean_mm, frame_error(pred.points, live), false};
    if (path) s.in_transition = path->in_transition(trace[k].t_ms) || path->in_transition(target);
    out.samples.push_back(s);
    md.push_back(s.min_dist_mean_mm);
    mt.push_back(s.matched_mm);
  }
  if (out.samples.empty()) throw ContractError("offline_eval: trace too short for the horizon");
  out.min_dist = aggregate(std::span<const double>(md));
  out.matched = aggregate(std::span<const double>(mt));
  return out;
}

}  // namespace predsim
