#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "predsim/rng.hpp"
#include "predsim/vec3.hpp"

namespace predsim {

/// Points transmitted per input sample (25 per hand, two hands).
inline constexpr std::size_t kTrackedPoints = 50;

/// One timestamped input sample.
struct TrackedFrame {
  std::uint64_t seq{0};
  double t_ms{0.0};
  std::vector<Vec3> points;

  friend bool operator==(const TrackedFrame&, const TrackedFrame&) = default;
};

/// Back-and-forth motion along one axis. Legs run at constant speed;
/// each turnaround blends the velocity as V*cos(pi*tau/T) over T.
struct MotionProfile {
  double speed_mm_s{1000.0};
  double leg_duration_s{2.9};
  double transition_duration_s{70.0 / 133.0};
  int direction_changes{7};
  Vec3 axis{1.0, 0.0, 0.0};
  double sample_interval_ms{11.0};

  void validate() const;
  double duration_ms() const;
};

struct NoiseModel {
  double sigma_mm{1.06};
  std::uint64_t seed{1};

  static constexpr double kIdealSigmaMm = 1.06;
  static constexpr double kNonidealSigmaMm = 1.87;
};

/// Continuous ground-truth motion described by a MotionProfile.
class MotionPath {
 public:
  explicit MotionPath(MotionProfile profile);

  const MotionProfile& profile() const { return profile_; }
  double duration_ms() const { return duration_ms_; }

  /// Signed travel along the axis at time t (mm). Held constant outside
  /// [0, duration].
  double offset_mm(double t_ms) const;
  /// Signed speed along the axis (mm/ms).
  double velocity_mm_per_ms(double t_ms) const;
  Vec3 displacement(double t_ms) const { return unit_axis_ * offset_mm(t_ms); }
  bool in_transition(double t_ms) const;

 private:
  MotionProfile profile_;
  Vec3 unit_axis_;
  double leg_ms_;
  double transition_ms_;
  double duration_ms_;
};

struct Anchor {
  std::vector<std::uint32_t> indices;
  std::vector<double> weights;

  friend bool operator==(const Anchor&, const Anchor&) = default;
};

/// Rest pose of the tracked points plus the interpolation recipe that fills
/// them in to a particle hand.
struct HandTemplate {
  std::vector<Vec3> rest_points;
  std::vector<Anchor> expansion_anchors;

  /// Throws ConfigError on bad indices, weights or counts.
  void validate() const;

  friend bool operator==(const HandTemplate&, const HandTemplate&) = default;
};

struct HandMesh {
  std::vector<Vec3> particles;
};

/// Built-in two-hand skeleton: per hand wrist, palm center, three palm
/// points and four joints per digit; 650 particles per hand.
const HandTemplate& default_template();

std::vector<TrackedFrame> gen_trace(const MotionProfile& profile, const HandTemplate& tmpl,
                                    const NoiseModel& noise);

TrackedFrame apply_noise(const TrackedFrame& frame, const NoiseModel& noise, Rng& rng);

HandMesh expand_hand(std::span<const Vec3> points, const HandTemplate& tmpl);

/// Hand index of each template point: connected components of the anchor
/// graph, numbered in order of first appearance.
std::vector<std::uint32_t> point_hands(const HandTemplate& tmpl);
/// Hand index of each mesh particle (that of its first anchor point).
std::vector<std::uint32_t> particle_hands(const HandTemplate& tmpl);

/// Rest pose translated along the path at time t, without noise.
std::vector<Vec3> true_points(const MotionPath& path, const HandTemplate& tmpl, double t_ms);

// JSON / JSONL forms.
nlohmann::json frame_to_json(const TrackedFrame& frame);
TrackedFrame frame_from_json(const nlohmann::json& j);
void write_trace(std::ostream& out, std::span<const TrackedFrame> frames);
std::vector<TrackedFrame> read_trace(std::istream& in);

nlohmann::json template_to_json(const HandTemplate& tmpl);
HandTemplate template_from_json(const nlohmann::json& j);

nlohmann::json points_to_json(std::span<const Vec3> points);
std::vector<Vec3> points_from_json(const nlohmann::json& j);

}  // namespace predsim
