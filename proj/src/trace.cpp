#include "predsim/trace.hpp"

#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include "predsim/errors.hpp"

namespace predsim {

void MotionProfile::validate() const {
  if (!(speed_mm_s >= 0.0)) throw ConfigError("trace.speed_mm_s must be >= 0");
  if (!(leg_duration_s >= 0.0)) throw ConfigError("trace.leg_duration_s must be >= 0");
  if (!(transition_duration_s > 0.0)) throw ConfigError("trace.transition_duration_s must be > 0");
  if (direction_changes < 0) throw ConfigError("trace.direction_changes must be >= 0");
  if (!(sample_interval_ms > 0.0)) throw ConfigError("trace.sample_interval_ms must be > 0");
  if (!is_finite(axis) || std::abs(norm(axis) - 1.0) > 1e-6) {
    throw ConfigError("trace.axis must be a unit vector");
  }
}

double MotionProfile::duration_ms() const {
  return 1000.0 * ((direction_changes + 1) * leg_duration_s + direction_changes * transition_duration_s);
}

MotionPath::MotionPath(MotionProfile profile)
    : profile_(profile),
      unit_axis_(profile.axis),
      leg_ms_(1000.0 * profile.leg_duration_s),
      transition_ms_(1000.0 * profile.transition_duration_s),
      duration_ms_(profile.duration_ms()) {
  profile_.validate();
}

namespace {

struct PathPhase {
  int leg{0};
  bool transition{false};
  double tau_ms{0.0};
};

PathPhase locate(double t_ms, double leg_ms, double transition_ms, int legs) {
  const double period = leg_ms + transition_ms;
  int leg = static_cast<int>(std::floor(t_ms / period));
  if (leg >= legs) return {legs - 1, false, leg_ms};
  const double r = t_ms - leg * period;
  if (r < leg_ms || leg == legs - 1) return {leg, false, std::min(r, leg_ms)};
  return {leg, true, r - leg_ms};
}

}  // namespace

double MotionPath::offset_mm(double t_ms) const {
  const double v = profile_.speed_mm_s / 1000.0;
  if (t_ms <= 0.0 || v == 0.0) return 0.0;
  const int legs = profile_.direction_changes + 1;
  const PathPhase ph = locate(std::min(t_ms, duration_ms_), leg_ms_, transition_ms_, legs);
  const double dir = (ph.leg % 2 == 0) ? 1.0 : -1.0;
  const double start = (ph.leg % 2 == 0) ? 0.0 : v * leg_ms_;
  if (!ph.transition) return start + dir * v * ph.tau_ms;
  const double end = start + dir * v * leg_ms_;
  const double w = std::numbers::pi / transition_ms_;
  return end + dir * v * std::sin(w * ph.tau_ms) / w;
}

double MotionPath::velocity_mm_per_ms(double t_ms) const {
  const double v = profile_.speed_mm_s / 1000.0;
  if (t_ms < 0.0 || t_ms > duration_ms_ || v == 0.0) return 0.0;
  const int legs = profile_.direction_changes + 1;
  const PathPhase ph = locate(t_ms, leg_ms_, transition_ms_, legs);
  const double dir = (ph.leg % 2 == 0) ? 1.0 : -1.0;
  if (!ph.transition) return dir * v;
  return dir * v * std::cos(std::numbers::pi * ph.tau_ms / transition_ms_);
}

bool MotionPath::in_transition(double t_ms) const {
  if (t_ms < 0.0 || t_ms > duration_ms_) return false;
  return locate(t_ms, leg_ms_, transition_ms_, profile_.direction_changes + 1).transition;
}

void HandTemplate::validate() const {
  if (rest_points.empty()) throw ConfigError("template.rest_points is empty");
  for (const auto& p : rest_points) {
    if (!is_finite(p)) throw ConfigError("template.rest_points contains a non-finite value");
  }
  for (std::size_t i = 0; i < expansion_anchors.size(); ++i) {
    const Anchor& a = expansion_anchors[i];
    if (a.indices.empty() || a.indices.size() != a.weights.size()) {
      throw ConfigError("template.expansion_anchors[" + std::to_string(i) + "] is malformed");
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < a.indices.size(); ++k) {
      if (a.indices[k] >= rest_points.size()) {
        throw ConfigError("template.expansion_anchors[" + std::to_string(i) +
                          "] index out of range: " + std::to_string(a.indices[k]));
      }
      if (!(a.weights[k] >= 0.0)) {
        throw ConfigError("template.expansion_anchors[" + std::to_string(i) + "] has a negative weight");
      }
      sum += a.weights[k];
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("template.expansion_anchors[" + std::to_string(i) + "] weights do not sum to 1");
    }
  }
}

namespace {

// Right hand, palm in the xy plane, fingers toward +y, palm center at origin.
// Layout: 0 wrist, 1 palm center, 2 radial palm base, 3 ulnar palm base,
// 4 upper palm, then MCP, PIP, DIP, tip for thumb..pinky (5 + 4*d + j).
constexpr std::size_t kPointsPerHand = 25;
constexpr std::size_t kBoneParticles = 20;
constexpr std::size_t kTriangleParticles = 35;

std::vector<Vec3> right_hand_rest() {
  return {
      {0, -45, 0},   {0, 0, 0},      {-30, -30, 0},  {32, -28, 0},   {0, 25, 0},
      {-40, -15, 5}, {-60, 5, 8},    {-72, 22, 10},  {-82, 38, 12},   // thumb
      {-25, 40, 0},  {-28, 80, 0},   {-29, 105, 0},  {-30, 125, 0},   // index
      {-5, 45, 0},   {-5, 90, 0},    {-5, 117, 0},   {-5, 140, 0},    // middle
      {15, 42, 0},   {16, 84, 0},    {17, 108, 0},   {18, 128, 0},    // ring
      {33, 35, 0},   {36, 65, 0},    {38, 83, 0},    {40, 100, 0},    // pinky
  };
}

std::uint32_t joint(std::uint32_t digit, std::uint32_t j) { return 5 + 4 * digit + j; }

void append_hand_anchors(std::vector<Anchor>& out, std::uint32_t base) {
  for (std::uint32_t d = 0; d < 5; ++d) {
    for (std::uint32_t j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < kBoneParticles; ++k) {
        const double u = (static_cast<double>(k) + 0.5) / kBoneParticles;
        out.push_back({{base + joint(d, j), base + joint(d, j + 1)}, {1.0 - u, u}});
      }
    }
  }
  const std::uint32_t t = joint(0, 0), i = joint(1, 0), m = joint(2, 0), r = joint(3, 0), p = joint(4, 0);
  const std::uint32_t tris[10][3] = {{1, 0, 2}, {1, 2, t}, {1, t, i}, {1, i, 4}, {4, i, m},
                                     {4, m, r}, {4, r, p}, {1, 4, p}, {1, p, 3}, {1, 3, 0}};
  // Additive recurrence with the plastic-number ratios, folded into the
  // triangle; deterministic and roughly uniform.
  constexpr double a1 = 0.7548776662466927;
  constexpr double a2 = 0.5698402909980532;
  for (const auto& tri : tris) {
    for (std::size_t k = 0; k < kTriangleParticles; ++k) {
      double s = std::fmod(0.5 + a1 * static_cast<double>(k + 1), 1.0);
      double q = std::fmod(0.5 + a2 * static_cast<double>(k + 1), 1.0);
      if (s + q > 1.0) {
        s = 1.0 - s;
        q = 1.0 - q;
      }
      out.push_back({{base + tri[0], base + tri[1], base + tri[2]}, {1.0 - s - q, s, q}});
    }
  }
}

HandTemplate build_default_template() {
  HandTemplate tmpl;
  const auto right = right_hand_rest();
  const Vec3 left_center{-120, 0, 0};
  const Vec3 right_center{120, 0, 0};
  for (const auto& p : right) tmpl.rest_points.push_back(Vec3{-p.x, p.y, p.z} + left_center);
  for (const auto& p : right) tmpl.rest_points.push_back(p + right_center);
  append_hand_anchors(tmpl.expansion_anchors, 0);
  append_hand_anchors(tmpl.expansion_anchors, kPointsPerHand);
  return tmpl;
}

}  // namespace

const HandTemplate& default_template() {
  static const HandTemplate tmpl = build_default_template();
  return tmpl;
}

TrackedFrame apply_noise(const TrackedFrame& frame, const NoiseModel& noise, Rng& rng) {
  TrackedFrame out = frame;
  if (noise.sigma_mm == 0.0) return out;
  for (auto& p : out.points) {
    p.x += noise.sigma_mm * rng.normal();
    p.y += noise.sigma_mm * rng.normal();
    p.z += noise.sigma_mm * rng.normal();
  }
  return out;
}

std::vector<Vec3> true_points(const MotionPath& path, const HandTemplate& tmpl, double t_ms) {
  const Vec3 d = path.displacement(t_ms);
  std::vector<Vec3> pts;
  pts.reserve(tmpl.rest_points.size());
  for (const auto& p : tmpl.rest_points) pts.push_back(p + d);
  return pts;
}

std::vector<TrackedFrame> gen_trace(const MotionProfile& profile, const HandTemplate& tmpl,
                                    const NoiseModel& noise) {
  if (!(noise.sigma_mm >= 0.0)) throw ConfigError("noise.sigma_mm must be >= 0");
  tmpl.validate();
  const MotionPath path(profile);
  Rng rng(noise.seed);
  std::vector<TrackedFrame> frames;
  const double dt = profile.sample_interval_ms;
  const auto count = static_cast<std::size_t>(std::floor(path.duration_ms() / dt + 1e-9)) + 1;
  frames.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    TrackedFrame f;
    f.seq = k;
    f.t_ms = static_cast<double>(k) * dt;
    f.points = true_points(path, tmpl, f.t_ms);
    frames.push_back(apply_noise(f, noise, rng));
  }
  return frames;
}

HandMesh expand_hand(std::span<const Vec3> points, const HandTemplate& tmpl) {
  if (points.size() != tmpl.rest_points.size()) {
    throw ContractError("expand_hand: expected " + std::to_string(tmpl.rest_points.size()) +
                        " points, got " + std::to_string(points.size()));
  }
  HandMesh mesh;
  mesh.particles.reserve(tmpl.expansion_anchors.size());
  for (const auto& a : tmpl.expansion_anchors) {
    Vec3 p;
    for (std::size_t k = 0; k < a.indices.size(); ++k) {
      if (a.indices[k] >= points.size()) throw ConfigError("expand_hand: anchor index out of range");
      p += points[a.indices[k]] * a.weights[k];
    }
    mesh.particles.push_back(p);
  }
  return mesh;
}

std::vector<std::uint32_t> point_hands(const HandTemplate& tmpl) {
  const std::size_t n = tmpl.rest_points.size();
  std::vector<std::uint32_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (const auto& a : tmpl.expansion_anchors) {
    for (std::size_t k = 1; k < a.indices.size(); ++k) {
      if (a.indices[0] >= n || a.indices[k] >= n) throw ConfigError("point_hands: anchor index out of range");
      parent[find(a.indices[k])] = find(a.indices[0]);
    }
  }
  std::vector<std::uint32_t> label(n, UINT32_MAX), out(n);
  std::uint32_t next = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& l = label[find(i)];
    if (l == UINT32_MAX) l = next++;
    out[i] = l;
  }
  return out;
}

std::vector<std::uint32_t> particle_hands(const HandTemplate& tmpl) {
  const auto ph = point_hands(tmpl);
  std::vector<std::uint32_t> out;
  out.reserve(tmpl.expansion_anchors.size());
  for (const auto& a : tmpl.expansion_anchors) out.push_back(a.indices.empty() ? 0u : ph.at(a.indices[0]));
  return out;
}

nlohmann::json points_to_json(std::span<const Vec3> points) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : points) arr.push_back({p.x, p.y, p.z});
  return arr;
}

std::vector<Vec3> points_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("points must be an array of [x,y,z]");
  std::vector<Vec3> pts;
  pts.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 3 || !e[0].is_number() || !e[1].is_number() || !e[2].is_number()) {
      throw ConfigError("point must be [x,y,z] numbers");
    }
    Vec3 p{e[0].get<double>(), e[1].get<double>(), e[2].get<double>()};
    if (!is_finite(p)) throw ConfigError("point is not finite");
    pts.push_back(p);
  }
  return pts;
}

nlohmann::json frame_to_json(const TrackedFrame& frame) {
  return {{"seq", frame.seq}, {"t_ms", frame.t_ms}, {"points", points_to_json(frame.points)}};
}

TrackedFrame frame_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("trace line is not an object");
  for (const char* key : {"seq", "t_ms", "points"}) {
    if (!j.contains(key)) throw ConfigError(std::string("trace line missing key '") + key + "'");
  }
  if (!j["seq"].is_number_unsigned() && !j["seq"].is_number_integer()) throw ConfigError("seq must be an integer");
  if (!j["t_ms"].is_number()) throw ConfigError("t_ms must be a number");
  TrackedFrame f;
  f.seq = j["seq"].get<std::uint64_t>();
  f.t_ms = j["t_ms"].get<double>();
  f.points = points_from_json(j["points"]);
  if (f.points.size() != kTrackedPoints) {
    throw ConfigError("frame must carry " + std::to_string(kTrackedPoints) + " points");
  }
  return f;
}

void write_trace(std::ostream& out, std::span<const TrackedFrame> frames) {
  for (const auto& f : frames) out << frame_to_json(f).dump() << '\n';
}

std::vector<TrackedFrame> read_trace(std::istream& in) {
  std::vector<TrackedFrame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("trace: bad JSON line: ") + e.what());
    }
    TrackedFrame f = frame_from_json(j);
    if (!frames.empty() && (f.t_ms <= frames.back().t_ms || f.seq <= frames.back().seq)) {
      throw ConfigError("trace: t_ms and seq must be strictly increasing");
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

nlohmann::json template_to_json(const HandTemplate& tmpl) {
  nlohmann::json anchors = nlohmann::json::array();
  for (const auto& a : tmpl.expansion_anchors) {
    anchors.push_back({{"indices", a.indices}, {"weights", a.weights}});
  }
  return {{"rest_points", points_to_json(tmpl.rest_points)}, {"expansion_anchors", anchors}};
}

HandTemplate template_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("rest_points") || !j.contains("expansion_anchors")) {
    throw ConfigError("template needs 'rest_points' and 'expansion_anchors'");
  }
  HandTemplate tmpl;
  tmpl.rest_points = points_from_json(j["rest_points"]);
  for (const auto& a : j["expansion_anchors"]) {
    if (!a.contains("indices") || !a.contains("weights")) {
      throw ConfigError("expansion anchor needs 'indices' and 'weights'");
    }
    tmpl.expansion_anchors.push_back(
        {a["indices"].get<std::vector<std::uint32_t>>(), a["weights"].get<std::vector<double>>()});
  }
  tmpl.validate();
  return tmpl;
}

}  // namespace predsim
