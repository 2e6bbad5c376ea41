#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "predsim/env.hpp"
#include "predsim/metrics.hpp"
#include "predsim/predict.hpp"
#include "predsim/trace.hpp"

namespace predsim {

/// Delay pipeline between the tracker and the photons. All values in ms.
struct LatencyModel {
  double input_min_ms{0.0};
  double input_max_ms{10.0};
  double render_min_ms{0.0};
  double render_max_ms{11.0};
  double net_oneway_ms{7.1};
  /// Half-width of uniform jitter added to each network hop.
  double jitter_ms{0.0};
  double loss_prob{0.0};
  /// Server tick period. 0 runs the server on packet arrival.
  double server_frame_ms{1000.0 / 133.0};
  /// Client display refresh period. Each refresh shows the newest state that
  /// has finished rendering. 0 presents as soon as rendering completes.
  double display_refresh_ms{11.0};
  std::uint64_t seed{1};

  void validate() const;

  double input_mean_ms() const { return 0.5 * (input_min_ms + input_max_ms); }
  double render_mean_ms() const { return 0.5 * (render_min_ms + render_max_ms); }
  /// Model-mean delay from state emission to presentation.
  double static_downstream_ms() const {
    return net_oneway_ms + render_mean_ms() + 0.5 * display_refresh_ms;
  }
};

/// Deterministic priority queue: nondecreasing time, ties by insertion.
template <class Payload>
class EventQueue {
 public:
  struct Event {
    double t_ms;
    std::uint64_t order;
    Payload payload;
  };

  void push(double t_ms, Payload payload) { heap_.push(Event{t_ms, next_++, std::move(payload)}); }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  const Event& top() const { return heap_.top(); }
  Event pop() {
    Event e = heap_.top();
    heap_.pop();
    return e;
  }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.t_ms != b.t_ms ? a.t_ms > b.t_ms : a.order > b.order;
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t next_{0};
};

/// Server-side horizon bookkeeping.
class HorizonEstimator {
 public:
  static constexpr double kAlpha = 0.1;
  static constexpr double kMaxHorizonMs = 200.0;

  /// `input_mean_ms` covers tracker-to-poll delay the server cannot observe;
  /// `static_downstream_ms` is used until the first ack.
  HorizonEstimator(double input_mean_ms, double static_downstream_ms);

  void observe_downstream(double delay_ms);
  void observe_arrival(double delay_ms);

  /// (now - capture) + input mean + downstream estimate, clamped to [0, 200].
  double horizon(double t_now_ms, double t_capture_ms) const;

  double downstream_ms() const { return downstream_; }
  double arrival_ms() const { return arrival_; }
  bool has_acks() const { return acks_ > 0; }

 private:
  double input_mean_;
  double downstream_;
  double arrival_{0.0};
  std::size_t acks_{0};
  std::size_t arrivals_{0};
};

double estimate_horizon(const HorizonEstimator& est, double t_now_ms, double t_capture_ms);

struct SessionConfig {
  MotionProfile profile{};
  NoiseModel noise{};
  /// Trace to replay instead of generating one from profile and noise. Live
  /// truth is then the trace interpolated at presentation time.
  std::optional<std::vector<TrackedFrame>> trace;
  HandTemplate hand{default_template()};
  PredictorKind predictor{NoPrediction{}};
  LatencyModel latency{};
  bool client_override{false};
  std::optional<EnvConfig> env;
  /// 0 means the whole trace.
  double duration_ms{0.0};
  std::uint64_t seed{1};
  /// Keep the 50 live and displayed points per frame. Benchmarks turn this
  /// off and read per-frame errors only.
  bool keep_points{true};

  void validate() const;
};

/// Sets the session seed and derives the noise, latency and env seeds from it.
void reseed(SessionConfig& config, std::uint64_t seed);

/// Reacting particles around one hand and that hand's live mesh centroid.
struct HandContact {
  std::size_t reacting_count{0};
  Vec3 reacting_centroid{};
  Vec3 live_centroid{};
};

struct PresentedFrame {
  double t_present_ms{0.0};
  std::vector<Vec3> live_points;
  std::vector<Vec3> displayed_points;
  double horizon_used_ms{0.0};
  std::size_t packet_loss_count{0};
  std::uint64_t ack_seq{0};
  /// Server time the displayed state was emitted, and the newest sample
  /// timestamp it used.
  double t_server_ms{0.0};
  double newest_sample_t_ms{0.0};
  PredictionStatus status{PredictionStatus::kOk};
  /// Tracked-point error, always filled.
  double error_mm{0.0};
  std::size_t reacting_count{0};
  Vec3 reacting_centroid{};
  Vec3 live_centroid{};
  std::vector<HandContact> hands;
  std::optional<std::vector<Vec3>> env_snapshot;
};

struct SessionLog {
  nlohmann::json metadata;
  std::vector<PresentedFrame> frames;
  std::size_t server_ticks{0};
  std::size_t samples_sent{0};
  std::size_t samples_delivered{0};
  bool truncated{false};
  std::vector<std::string> warnings;
};

SessionLog run_session(const SessionConfig& config);

enum class CompareSpace { kTracked, kMesh };

/// Per-frame frame_error between displayed and live points. kMesh expands
/// both with the template first. Needs a log with points kept.
ErrorSeries replay_compare(const SessionLog& log, CompareSpace space = CompareSpace::kTracked,
                           const HandTemplate& tmpl = default_template());

/// Errors stored in the log frames; works without kept points.
ErrorSeries frame_errors(const SessionLog& log);

/// Frames whose presentation time, and the window `lookback_ms` before it,
/// both fall inside constant-speed legs of the path.
std::vector<std::size_t> leg_frames(const SessionLog& log, const MotionPath& path, double lookback_ms = 100.0);

struct LagSummary {
  std::vector<ErrorSample> series;
  double mean_mm{0.0};
  std::size_t skipped{0};
};

/// Per frame, distance between the centroid of the particles reacting to a
/// hand and that hand's live centroid, averaged over the hands in contact.
/// Frames without per-hand data use the whole-mesh centroids. Frames with no
/// reacting particles are skipped, as are frames rejected by `keep`.
LagSummary interaction_lag(const SessionLog& log, const std::function<bool(std::size_t)>& keep = {});

nlohmann::json frame_to_json(const PresentedFrame& frame);
PresentedFrame presented_frame_from_json(const nlohmann::json& j);
/// JSONL: metadata header line, then one line per presented frame.
void write_session_log(std::ostream& out, const SessionLog& log);
SessionLog read_session_log(std::istream& in);

}  // namespace predsim
