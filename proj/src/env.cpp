#include "predsim/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "predsim/errors.hpp"
#include "predsim/rng.hpp"

namespace predsim {

void EnvConfig::validate() const {
  if (!(interaction_radius_mm > 0.0)) throw ConfigError("env.interaction_radius_mm must be > 0");
  if (!(stiffness >= 0.0)) throw ConfigError("env.stiffness must be >= 0");
  if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("env.damping must be in (0, 1]");
  if (!(dt_ms >= 0.0)) throw ConfigError("env.dt_ms must be >= 0");
  for (int a = 0; a < 3; ++a) {
    if (!(bounds.max[a] > bounds.min[a])) throw ConfigError("env.bounds max must exceed min on every axis");
  }
}

EnvState init_env(const EnvConfig& cfg) {
  cfg.validate();
  EnvState s;
  s.positions.reserve(cfg.particle_count);
  Rng rng(cfg.seed);
  for (std::size_t i = 0; i < cfg.particle_count; ++i) {
    s.positions.push_back({rng.uniform(cfg.bounds.min.x, cfg.bounds.max.x),
                           rng.uniform(cfg.bounds.min.y, cfg.bounds.max.y),
                           rng.uniform(cfg.bounds.min.z, cfg.bounds.max.z)});
  }
  s.velocities.assign(cfg.particle_count, Vec3{});
  return s;
}

std::uint64_t SpatialHashGrid::key(std::int64_t x, std::int64_t y, std::int64_t z) {
  // 21 bits per axis, offset so small negatives stay distinct.
  constexpr std::int64_t off = 1 << 20;
  constexpr std::uint64_t mask = (1u << 21) - 1;
  return (static_cast<std::uint64_t>(x + off) & mask) | ((static_cast<std::uint64_t>(y + off) & mask) << 21) |
         ((static_cast<std::uint64_t>(z + off) & mask) << 42);
}

SpatialHashGrid::Cell SpatialHashGrid::cell_of(const Vec3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x * inv_cell_)),
          static_cast<std::int64_t>(std::floor(p.y * inv_cell_)),
          static_cast<std::int64_t>(std::floor(p.z * inv_cell_))};
}

SpatialHashGrid::SpatialHashGrid(double cell_size, std::span<const Vec3> points) : inv_cell_(1.0 / cell_size) {
  if (!(cell_size > 0.0)) throw ContractError("SpatialHashGrid: cell size must be > 0");
  std::vector<std::uint64_t> keys(points.size());
  lo_ = hi_ = points.empty() ? Vec3{} : points[0];
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = cell_of(points[i]);
    keys[i] = key(c[0], c[1], c[2]);
    for (int a = 0; a < 3; ++a) {
      lo_[a] = std::min(lo_[a], points[i][a]);
      hi_[a] = std::max(hi_[a], points[i][a]);
    }
  }
  sorted_.resize(points.size());
  std::iota(sorted_.begin(), sorted_.end(), 0u);
  std::stable_sort(sorted_.begin(), sorted_.end(), [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });
  for (std::uint32_t i = 0; i < sorted_.size();) {
    std::uint32_t j = i;
    while (j < sorted_.size() && keys[sorted_[j]] == keys[sorted_[i]]) ++j;
    cells_.emplace(keys[sorted_[i]], std::make_pair(i, j));
    i = j;
  }
}

std::vector<Vec3> hand_forces(std::span<const Vec3> positions, std::span<const Vec3> hand, const EnvConfig& cfg,
                              StepStats* stats, std::span<const std::uint32_t> hand_of) {
  std::vector<Vec3> acc(positions.size());
  if (!hand_of.empty() && hand_of.size() != hand.size()) throw ContractError("hand_forces: one label per hand particle");
  std::size_t hands = 0;
  for (auto h : hand_of) hands = std::max<std::size_t>(hands, h + 1);
  if (hands > 64) throw ContractError("hand_forces: at most 64 hands");
  if (stats) {
    *stats = {};
    stats->hand_count.assign(hands, 0);
    stats->hand_centroid.assign(hands, Vec3{});
  }
  if (hand.empty() || positions.empty()) return acc;
  const double r = cfg.interaction_radius_mm;
  const double r2 = r * r;
  // mm/s^2 per mm -> mm/ms^2 per mm
  const double k = cfg.stiffness * 1e-6;
  const SpatialHashGrid grid(r, hand);
  Vec3 lo = grid.lo() - Vec3{r, r, r};
  Vec3 hi = grid.hi() + Vec3{r, r, r};
  Vec3 centroid_sum;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Vec3& p = positions[i];
    if (p.x < lo.x || p.y < lo.y || p.z < lo.z || p.x > hi.x || p.y > hi.y || p.z > hi.z) continue;
    Vec3 a;
    bool touched = false;
    std::uint64_t touched_by = 0;
    grid.for_each_near(p, [&](std::uint32_t j) {
      const Vec3 d = p - hand[j];
      const double dd = dot(d, d);
      if (dd >= r2 || dd == 0.0) return;
      const double dist = std::sqrt(dd);
      a += d * (k * (r - dist) / dist);
      touched = true;
      if (hands) touched_by |= std::uint64_t{1} << hand_of[j];
    });
    acc[i] = a;
    if (touched && stats) {
      ++stats->reacting_count;
      centroid_sum += p;
      for (std::size_t h = 0; h < hands; ++h) {
        if (touched_by >> h & 1u) {
          ++stats->hand_count[h];
          stats->hand_centroid[h] += p;
        }
      }
    }
  }
  if (stats && stats->reacting_count > 0) {
    stats->reacting_centroid = centroid_sum * (1.0 / static_cast<double>(stats->reacting_count));
    for (std::size_t h = 0; h < hands; ++h) {
      if (stats->hand_count[h]) stats->hand_centroid[h] = stats->hand_centroid[h] * (1.0 / stats->hand_count[h]);
    }
  }
  return acc;
}

void env_step_inplace(EnvState& state, std::span<const Vec3> hand, const EnvConfig& cfg, double dt_ms,
                      StepStats* stats, std::span<const std::uint32_t> hand_of) {
  if (state.positions.size() != state.velocities.size()) throw ContractError("env_step: state arrays differ");
  const auto acc = hand_forces(state.positions, hand, cfg, stats, hand_of);
  for (std::size_t i = 0; i < state.positions.size(); ++i) {
    Vec3& v = state.velocities[i];
    Vec3& p = state.positions[i];
    v = (v + acc[i] * dt_ms) * cfg.damping;
    p += v * dt_ms;
    // Walls absorb: a clamped axis loses its velocity.
    for (int a = 0; a < 3; ++a) {
      const double c = std::clamp(p[a], cfg.bounds.min[a], cfg.bounds.max[a]);
      if (c != p[a]) {
        p[a] = c;
        v[a] = 0.0;
      }
    }
  }
}

EnvState env_step(const EnvState& state, const HandMesh& hand, const EnvConfig& cfg, StepStats* stats) {
  if (!(cfg.dt_ms > 0.0)) throw ContractError("env_step: dt_ms must be > 0 when stepping directly");
  EnvState next = state;
  env_step_inplace(next, hand.particles, cfg, cfg.dt_ms, stats);
  return next;
}

double kinetic_energy(const EnvState& state) {
  double e = 0.0;
  for (const auto& v : state.velocities) e += 0.5 * dot(v, v);
  return e;
}

}  // namespace predsim
