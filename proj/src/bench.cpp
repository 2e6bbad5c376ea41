#include "predsim/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <thread>

#include "predsim/errors.hpp"

namespace predsim {

bool BenchCell::feasible() const {
  if (predictor == "none") return true;
  if (predictor == "dead_reckoning") return window >= 2;
  if (predictor == "lagrange") return window >= kMinWindow && window <= kMaxWindow;
  if (predictor == "poly") {
    return order >= 1 && order <= 3 && window >= static_cast<std::size_t>(order + 1) && window >= kMinWindow &&
           window <= kMaxWindow;
  }
  return false;
}

PredictorKind BenchCell::kind() const {
  if (predictor == "none") return NoPrediction{};
  if (predictor == "dead_reckoning") return DeadReckoning{};
  if (predictor == "lagrange") return Lagrange{window};
  if (predictor == "poly") return PolyRegression{RegressionSpec{order, window, RegressionSpec{}.ridge}};
  throw ConfigError("bench: unknown predictor '" + predictor + "'");
}

void BenchPlan::validate() const {
  if (cells.empty()) throw ConfigError("bench.cells must not be empty");
  if (seeds.empty()) throw ConfigError("bench.seeds must not be empty");
  for (const auto& c : cells) {
    if (c.predictor != "none" && c.predictor != "dead_reckoning" && c.predictor != "lagrange" &&
        c.predictor != "poly") {
      throw ConfigError("bench.cells: unknown predictor '" + c.predictor + "'");
    }
  }
  base.validate();
}

SummaryStats pool_stats(const std::vector<SummaryStats>& per_seed) {
  if (per_seed.empty()) throw ContractError("pool_stats: no seeds");
  SummaryStats out;
  double n_total = 0.0;
  for (const auto& s : per_seed) {
    out.mean_mm += s.mean_mm;
    n_total += static_cast<double>(s.n);
  }
  out.mean_mm /= static_cast<double>(per_seed.size());
  // Pooled around the frame-weighted grand mean, so it equals the population
  // std of all frames together.
  double grand = 0.0;
  for (const auto& s : per_seed) grand += s.mean_mm * static_cast<double>(s.n);
  grand /= n_total;
  double ss = 0.0;
  for (const auto& s : per_seed) {
    const double d = s.mean_mm - grand;
    ss += static_cast<double>(s.n) * (s.std_mm * s.std_mm + d * d);
  }
  out.std_mm = std::sqrt(ss / n_total);
  out.n = static_cast<std::size_t>(n_total);
  return out;
}

namespace {

int predictor_rank(const std::string& p) {
  if (p == "none") return 0;
  if (p == "dead_reckoning") return 1;
  if (p == "lagrange") return 2;
  return 3;
}

bool row_less(const BenchRow& a, const BenchRow& b) {
  const auto ka = std::make_tuple(predictor_rank(a.cell.predictor), a.cell.order, a.cell.window);
  const auto kb = std::make_tuple(predictor_rank(b.cell.predictor), b.cell.order, b.cell.window);
  if (ka != kb) return ka < kb;
  // Per-seed rows ascending, averaged row last.
  if (a.seed.has_value() != b.seed.has_value()) return a.seed.has_value();
  return a.seed.value_or(0) < b.seed.value_or(0);
}

SessionConfig seeded(const SessionConfig& base, std::uint64_t seed, const PredictorKind& kind) {
  SessionConfig c = base;
  reseed(c, seed);
  c.predictor = kind;
  c.keep_points = false;
  return c;
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchPlan& plan) {
  plan.validate();

  std::vector<BenchCell> cells = plan.cells;
  const bool has_none =
      std::any_of(cells.begin(), cells.end(), [](const BenchCell& c) { return c.predictor == "none"; });
  if (!has_none) cells.insert(cells.begin(), BenchCell{"none", 0, 1});

  struct Job {
    std::size_t cell;
    std::size_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!cells[c].feasible()) continue;
    for (std::size_t s = 0; s < plan.seeds.size(); ++s) jobs.push_back({c, s});
  }
  std::vector<SummaryStats> results(cells.size() * plan.seeds.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const Job& job = jobs[j];
      const auto cfg = seeded(plan.base, plan.seeds[job.seed], cells[job.cell].kind());
      const SessionLog log = run_session(cfg);
      results[job.cell * plan.seeds.size() + job.seed] = aggregate(frame_errors(log));
    }
  };
  unsigned threads = plan.threads ? plan.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::size_t base_cell = 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (cells[c].predictor == "none") {
      base_cell = c;
      break;
    }
  }
  const auto stats_at = [&](std::size_t c, std::size_t s) { return results[c * plan.seeds.size() + s]; };
  std::vector<SummaryStats> base_seeds;
  for (std::size_t s = 0; s < plan.seeds.size(); ++s) base_seeds.push_back(stats_at(base_cell, s));
  const SummaryStats base_pooled = pool_stats(base_seeds);

  std::vector<BenchRow> rows;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!cells[c].feasible()) {
      BenchRow r;
      r.cell = cells[c];
      r.status = "skipped";
      rows.push_back(r);
      continue;
    }
    std::vector<SummaryStats> per;
    for (std::size_t s = 0; s < plan.seeds.size(); ++s) {
      BenchRow r;
      r.cell = cells[c];
      r.seed = plan.seeds[s];
      r.stats = stats_at(c, s);
      r.reduction = reduction_factor(base_seeds[s], r.stats);
      per.push_back(r.stats);
      rows.push_back(r);
    }
    BenchRow avg;
    avg.cell = cells[c];
    avg.stats = pool_stats(per);
    avg.reduction = reduction_factor(base_pooled, avg.stats);
    rows.push_back(avg);
  }
  std::stable_sort(rows.begin(), rows.end(), row_less);
  return rows;
}

namespace {

std::string fixed6(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "# seed=mean rows: mean_err_mm = mean over seeds of per-seed means; "
         "std_err_mm = sqrt(sum_s n_s*(std_s^2 + (mean_s - m)^2) / sum_s n_s), "
         "m = frame-weighted mean; reductions are none/predictor on the same seed or on the pooled rows\n";
  out << "predictor,order,window,seed,mean_err_mm,std_err_mm,reduction_mean,reduction_std,status\n";
  for (const auto& r : rows) {
    out << r.cell.predictor << ',' << r.cell.order << ',' << r.cell.window << ',';
    if (r.status == "skipped") {
      out << ",,,,," << r.status << '\n';
      continue;
    }
    out << (r.seed ? std::to_string(*r.seed) : std::string("mean")) << ',' << fixed6(r.stats.mean_mm) << ','
        << fixed6(r.stats.std_mm) << ',' << fixed6(r.reduction.mean_ratio) << ',' << fixed6(r.reduction.std_ratio)
        << ',' << r.status << '\n';
  }
}

std::vector<BenchCell> window_sweep_cells() {
  std::vector<BenchCell> cells{{"none", 0, 1}};
  for (int order = 1; order <= 3; ++order) {
    for (std::size_t n = static_cast<std::size_t>(order + 1); n <= kMaxWindow; ++n) {
      cells.push_back({"poly", order, n});
    }
  }
  return cells;
}

}  // namespace predsim
