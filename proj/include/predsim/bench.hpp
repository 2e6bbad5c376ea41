#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "predsim/netsim.hpp"

namespace predsim {

/// One sweep point. Infeasible cells (window too small for the order) are
/// kept so they show up as skipped rows.
struct BenchCell {
  std::string predictor;  // none, dead_reckoning, lagrange, poly
  int order{0};
  std::size_t window{1};

  bool feasible() const;
  PredictorKind kind() const;
};

struct BenchPlan {
  std::vector<BenchCell> cells;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  SessionConfig base{};
  /// 0 uses the hardware concurrency.
  unsigned threads{0};

  void validate() const;
};

struct BenchRow {
  BenchCell cell;
  /// Empty for the seed-averaged row.
  std::optional<std::uint64_t> seed;
  SummaryStats stats{};
  ReductionFactor reduction{};
  std::string status{"ok"};
};

/// Runs every (cell, seed) session plus a NoPrediction baseline per seed and
/// the seed-averaged rows. Rows come back in a fixed order.
std::vector<BenchRow> run_bench(const BenchPlan& plan);

/// Mean of per-seed means and pooled population std over all frames.
SummaryStats pool_stats(const std::vector<SummaryStats>& per_seed);

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

/// Linear n=2..60, quadratic n=3..60 and cubic n=4..60.
std::vector<BenchCell> window_sweep_cells();

}  // namespace predsim
