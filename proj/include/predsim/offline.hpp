#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "predsim/metrics.hpp"
#include "predsim/predict.hpp"
#include "predsim/trace.hpp"

namespace predsim {

/// Trace-only evaluation: from each frame, predict h_ms ahead and compare
/// with the trace interpolated at that time.
struct OfflineSample {
  double t_ms{0.0};
  double min_dist_sum_mm{0.0};
  double min_dist_mean_mm{0.0};
  double matched_mm{0.0};
  bool in_transition{false};
};

struct OfflineResult {
  std::vector<OfflineSample> samples;
  SummaryStats min_dist{};
  SummaryStats matched{};
};

/// `path`, when given, marks which samples start inside a turnaround.
/// Frames before `first_index` and those whose target time runs past the
/// trace are skipped; every `stride`-th frame is used.
OfflineResult offline_eval(std::span<const TrackedFrame> trace, const PredictorKind& kind, double h_ms,
                           std::size_t first_index, std::size_t stride = 1, const MotionPath* path = nullptr);

}  // namespace predsim
