#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "predsim/trace.hpp"
#include "predsim/vec3.hpp"

namespace predsim {

struct Bounds {
  Vec3 min{-400.0, -80.0, -25.0};
  Vec3 max{3400.0, 170.0, 35.0};
};

/// Free particles pushed by the hand with a linear repulsive spring.
struct EnvConfig {
  std::size_t particle_count{10000};
  double interaction_radius_mm{15.0};
  /// Acceleration per mm of overlap, in mm/s^2 per mm.
  double stiffness{50.0};
  /// Velocity multiplier applied each step, in (0, 1].
  double damping{0.98};
  /// Step length; 0 means one server frame.
  double dt_ms{0.0};
  Bounds bounds{};
  std::uint64_t seed{3};
  /// Session logs keep a full particle snapshot every k-th frame (0: never).
  std::size_t snapshot_every{10};

  void validate() const;
};

struct EnvState {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;  // mm/ms
};

EnvState init_env(const EnvConfig& cfg);

/// Uniform grid over points with cell edge = radius, keyed by a hash of the
/// integer cell coordinates. Points in a cell keep insertion order.
class SpatialHashGrid {
 public:
  SpatialHashGrid(double cell_size, std::span<const Vec3> points);

  /// Calls fn(index) for every point in the 27 cells around p, cells in
  /// fixed (dx, dy, dz) order.
  template <class Fn>
  void for_each_near(const Vec3& p, Fn&& fn) const {
    const auto c = cell_of(p);
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find(key(c[0] + dx, c[1] + dy, c[2] + dz));
          if (it == cells_.end()) continue;
          for (std::uint32_t i = it->second.first; i < it->second.second; ++i) fn(sorted_[i]);
        }
      }
    }
  }

  const Vec3& lo() const { return lo_; }
  const Vec3& hi() const { return hi_; }
  bool empty() const { return sorted_.empty(); }

 private:
  using Cell = std::array<std::int64_t, 3>;
  Cell cell_of(const Vec3& p) const;
  static std::uint64_t key(std::int64_t x, std::int64_t y, std::int64_t z);

  double inv_cell_;
  Vec3 lo_, hi_;
  std::vector<std::uint32_t> sorted_;
  std::unordered_map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>> cells_;
};

/// Per-step summary of which free particles felt the hand.
struct StepStats {
  std::size_t reacting_count{0};
  Vec3 reacting_centroid{};
  /// Same, split by hand when hand labels are given. A particle touched by
  /// both hands counts for both.
  std::vector<std::size_t> hand_count;
  std::vector<Vec3> hand_centroid;
};

/// Acceleration (mm/ms^2) on each free particle from the hand. Grid path.
/// `hand_of` optionally labels each hand particle with a hand index (< 64).
std::vector<Vec3> hand_forces(std::span<const Vec3> positions, std::span<const Vec3> hand,
                              const EnvConfig& cfg, StepStats* stats = nullptr,
                              std::span<const std::uint32_t> hand_of = {});

/// One semi-implicit Euler step: v' = damping * (v + a dt), x' = x + v' dt,
/// positions clamped to bounds (the clamped velocity component is zeroed).
EnvState env_step(const EnvState& state, const HandMesh& hand, const EnvConfig& cfg,
                  StepStats* stats = nullptr);
void env_step_inplace(EnvState& state, std::span<const Vec3> hand, const EnvConfig& cfg, double dt_ms,
                      StepStats* stats = nullptr, std::span<const std::uint32_t> hand_of = {});

double kinetic_energy(const EnvState& state);

}  // namespace predsim
