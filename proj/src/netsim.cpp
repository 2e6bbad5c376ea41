#include "predsim/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "predsim/config.hpp"
#include "predsim/errors.hpp"
#include "predsim/rng.hpp"
#include "predsim/rnn.hpp"

namespace predsim {

void LatencyModel::validate() const {
  auto nonneg = [](double v, const char* key) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("latency.") + key + " must be >= 0");
  };
  nonneg(input_min_ms, "input_min_ms");
  nonneg(input_max_ms, "input_max_ms");
  nonneg(render_min_ms, "render_min_ms");
  nonneg(render_max_ms, "render_max_ms");
  nonneg(net_oneway_ms, "net_oneway_ms");
  nonneg(jitter_ms, "jitter_ms");
  nonneg(server_frame_ms, "server_frame_ms");
  nonneg(display_refresh_ms, "display_refresh_ms");
  if (input_max_ms < input_min_ms) throw ConfigError("latency.input_max_ms must be >= input_min_ms");
  if (render_max_ms < render_min_ms) throw ConfigError("latency.render_max_ms must be >= render_min_ms");
  if (!(loss_prob >= 0.0 && loss_prob < 1.0)) throw ConfigError("latency.loss_prob must be in [0, 1)");
}

HorizonEstimator::HorizonEstimator(double input_mean_ms, double static_downstream_ms)
    : input_mean_(input_mean_ms), downstream_(static_downstream_ms) {}

void HorizonEstimator::observe_downstream(double delay_ms) {
  if (!std::isfinite(delay_ms)) return;
  // First ack replaces the static prior.
  downstream_ = acks_ == 0 ? delay_ms : (1.0 - kAlpha) * downstream_ + kAlpha * delay_ms;
  ++acks_;
}

void HorizonEstimator::observe_arrival(double delay_ms) {
  if (!std::isfinite(delay_ms)) return;
  arrival_ = arrivals_ == 0 ? delay_ms : (1.0 - kAlpha) * arrival_ + kAlpha * delay_ms;
  ++arrivals_;
}

double HorizonEstimator::horizon(double t_now_ms, double t_capture_ms) const {
  const double h = (t_now_ms - t_capture_ms) + input_mean_ + downstream_;
  return std::clamp(h, 0.0, kMaxHorizonMs);
}

double estimate_horizon(const HorizonEstimator& est, double t_now_ms, double t_capture_ms) {
  return est.horizon(t_now_ms, t_capture_ms);
}

void SessionConfig::validate() const {
  profile.validate();
  if (!(noise.sigma_mm >= 0.0)) throw ConfigError("noise.sigma_mm must be >= 0");
  hand.validate();
  validate_predictor(predictor);
  latency.validate();
  if (env) env->validate();
  if (!(duration_ms >= 0.0)) throw ConfigError("duration_ms must be >= 0");
  if (trace) {
    if (trace->empty()) throw ConfigError("trace is empty");
    for (const auto& f : *trace) {
      if (f.points.size() != hand.rest_points.size()) throw ConfigError("trace point count does not match the hand");
    }
  }
}

void reseed(SessionConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.noise.seed = derive_seed(seed, 1);
  config.latency.seed = derive_seed(seed, 2);
  if (config.env) config.env->seed = derive_seed(seed, 3);
}

namespace {

enum class Ev { kSampleReady, kPacketAtServer, kServerTick, kPacketAtClient, kRenderDone, kRefresh, kAckAtServer };

struct Payload {
  Ev kind;
  std::size_t index{0};
  double value{0.0};
};

struct ServerState {
  std::uint64_t seq{0};
  double t_emit{0.0};
  std::vector<Vec3> points;
  double horizon{0.0};
  double newest_stamp{0.0};
  PredictionStatus status{PredictionStatus::kOk};
  StepStats env_stats{};
  std::optional<std::vector<Vec3>> snapshot;
};

// Independent random streams so changing one knob leaves the others'
// realizations alone.
enum Stream : std::uint64_t {
  kInput = 1,
  kUpDelay,
  kUpLoss,
  kDownDelay,
  kDownLoss,
  kRender,
  kPhase,
  kAckDelay,
  kLiveNoise,
};

// Weights a_p with centroid(expand(points)) = sum_p a_p * points[p].
std::vector<double> mesh_centroid_weights(const HandTemplate& tmpl) {
  std::vector<double> a(tmpl.rest_points.size(), 0.0);
  if (tmpl.expansion_anchors.empty()) {
    std::fill(a.begin(), a.end(), 1.0 / static_cast<double>(a.size()));
    return a;
  }
  const double inv = 1.0 / static_cast<double>(tmpl.expansion_anchors.size());
  for (const auto& anc : tmpl.expansion_anchors) {
    for (std::size_t k = 0; k < anc.indices.size(); ++k) a[anc.indices[k]] += anc.weights[k] * inv;
  }
  return a;
}

// The same weights restricted to each hand's particles.
std::vector<std::vector<double>> hand_centroid_weights(const HandTemplate& tmpl, std::span<const std::uint32_t> hand_of) {
  std::size_t hands = 0;
  for (auto h : hand_of) hands = std::max<std::size_t>(hands, h + 1);
  std::vector<std::vector<double>> w(hands, std::vector<double>(tmpl.rest_points.size(), 0.0));
  std::vector<std::size_t> count(hands, 0);
  for (auto h : hand_of) ++count[h];
  for (std::size_t i = 0; i < tmpl.expansion_anchors.size(); ++i) {
    const auto& anc = tmpl.expansion_anchors[i];
    const double inv = 1.0 / static_cast<double>(count[hand_of[i]]);
    for (std::size_t k = 0; k < anc.indices.size(); ++k) w[hand_of[i]][anc.indices[k]] += anc.weights[k] * inv;
  }
  return w;
}

Vec3 weighted_sum(const std::vector<double>& a, std::span<const Vec3> pts) {
  Vec3 c;
  for (std::size_t i = 0; i < pts.size(); ++i) c += pts[i] * a[i];
  return c;
}

std::vector<Vec3> interpolate_trace(const std::vector<TrackedFrame>& trace, double t_ms) {
  if (t_ms <= trace.front().t_ms) return trace.front().points;
  if (t_ms >= trace.back().t_ms) return trace.back().points;
  const auto it = std::upper_bound(trace.begin(), trace.end(), t_ms,
                                   [](double t, const TrackedFrame& f) { return t < f.t_ms; });
  const TrackedFrame& b = *it;
  const TrackedFrame& a = *(it - 1);
  const double u = (t_ms - a.t_ms) / (b.t_ms - a.t_ms);
  std::vector<Vec3> out(a.points.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.points[i] * (1.0 - u) + b.points[i] * u;
  return out;
}

class Session {
 public:
  explicit Session(const SessionConfig& cfg)
      : cfg_(cfg),
        lat_(cfg.latency),
        path_(cfg.profile),
        est_(lat_.input_mean_ms(), lat_.static_downstream_ms()),
        rng_input_(stream(kInput)),
        rng_up_(stream(kUpDelay)),
        rng_up_loss_(stream(kUpLoss)),
        rng_down_(stream(kDownDelay)),
        rng_down_loss_(stream(kDownLoss)),
        rng_render_(stream(kRender)),
        rng_phase_(stream(kPhase)),
        rng_ack_(stream(kAckDelay)),
        rng_live_(derive_seed(cfg.noise.seed, 1000 + kLiveNoise)) {}

  SessionLog run() {
    SessionLog log;
    log.metadata = nlohmann::json{{"type", "session"}, {"config", session_config_to_json(cfg_)}};

    if (cfg_.trace) {
      frames_ = *cfg_.trace;
    } else {
      frames_ = gen_trace(cfg_.profile, cfg_.hand, cfg_.noise);
    }
    const double trace_span = frames_.back().t_ms;
    duration_ = cfg_.duration_ms > 0.0 ? cfg_.duration_ms : trace_span;
    if (duration_ > trace_span) {
      log.truncated = true;
      log.warnings.push_back("trace exhausted at " + std::to_string(trace_span) + " ms before duration " +
                             std::to_string(duration_) + " ms");
      duration_ = trace_span;
    }
    history_cap_ = std::max<std::size_t>(1, required_history(cfg_.predictor));
    if (const auto* rec = std::get_if<Recurrent>(&cfg_.predictor)) fixed_horizon_ = rec->model->horizon_ms;
    if (cfg_.env) {
      env_ = init_env(*cfg_.env);
      centroid_w_ = mesh_centroid_weights(cfg_.hand);
      if (!cfg_.hand.expansion_anchors.empty()) {
        hand_of_ = particle_hands(cfg_.hand);
        hand_w_ = hand_centroid_weights(cfg_.hand, hand_of_);
      }
      env_dt_ = cfg_.env->dt_ms > 0.0                ? cfg_.env->dt_ms
                : lat_.server_frame_ms > 0.0         ? lat_.server_frame_ms
                                                     : cfg_.profile.sample_interval_ms;
    }

    for (std::size_t k = 0; k < frames_.size(); ++k) {
      const double delay = rng_input_.uniform(lat_.input_min_ms, lat_.input_max_ms);
      if (frames_[k].t_ms > duration_) break;
      events_.push(frames_[k].t_ms + delay, {Ev::kSampleReady, k});
    }
    if (lat_.server_frame_ms > 0.0) {
      events_.push(rng_phase_.uniform(0.0, lat_.server_frame_ms), {Ev::kServerTick});
    }
    if (lat_.display_refresh_ms > 0.0) {
      events_.push(rng_phase_.uniform(0.0, lat_.display_refresh_ms), {Ev::kRefresh});
    }

    sent_.reserve(frames_.size());
    while (!events_.empty()) {
      auto ev = events_.pop();
      now_ = ev.t_ms;
      switch (ev.payload.kind) {
        case Ev::kSampleReady: on_sample_ready(ev.payload.index); break;
        case Ev::kPacketAtServer: on_packet_at_server(ev.payload.index); break;
        case Ev::kServerTick: on_tick(); break;
        case Ev::kPacketAtClient: on_packet_at_client(ev.payload.index); break;
        case Ev::kRenderDone: on_render_done(ev.payload.index); break;
        case Ev::kRefresh: on_refresh(); break;
        case Ev::kAckAtServer: est_.observe_downstream(ev.payload.value); break;
      }
    }

    log.frames = std::move(presented_);
    log.server_ticks = ticks_;
    log.samples_sent = sent_.size();
    log.samples_delivered = delivered_;
    log.metadata["server_ticks"] = ticks_;
    log.metadata["samples_sent"] = sent_.size();
    log.metadata["samples_delivered"] = delivered_;
    log.metadata["packet_loss_count"] = losses_;
    log.metadata["reordered_samples"] = reordered_;
    log.metadata["truncated"] = log.truncated;
    log.metadata["warnings"] = log.warnings;
    return log;
  }

 private:
  std::uint64_t stream(std::uint64_t s) const { return derive_seed(derive_seed(cfg_.seed, lat_.seed), s); }

  double hop_delay(Rng& rng) {
    const double j = rng.uniform(-1.0, 1.0) * lat_.jitter_ms;
    return std::max(0.0, lat_.net_oneway_ms + j);
  }

  bool lost(Rng& rng) {
    // Always draw so loss sets are nested across loss_prob values.
    const double u = rng.uniform();
    return u < lat_.loss_prob;
  }

  void on_sample_ready(std::size_t k) {
    TrackedFrame f = frames_[k];
    f.t_ms = now_;  // stamped with the client's poll time
    const std::size_t id = sent_.size();
    sent_.push_back(std::move(f));
    const double d = hop_delay(rng_up_);
    if (lost(rng_up_loss_)) {
      ++losses_;
      return;
    }
    events_.push(now_ + d, {Ev::kPacketAtServer, id});
  }

  void on_packet_at_server(std::size_t id) {
    ++delivered_;
    est_.observe_arrival(now_ - sent_[id].t_ms);
    pending_.push_back(id);
    if (lat_.server_frame_ms == 0.0) on_tick();
  }

  void drain_pending() {
    for (std::size_t id : pending_) {
      TrackedFrame& f = sent_[id];
      if (!history_.empty() && f.t_ms <= history_.back().t_ms) {
        ++reordered_;
        continue;
      }
      history_.push_back(std::move(f));
      if (history_.size() > history_cap_) history_.erase(history_.begin());
    }
    pending_.clear();
  }

  void on_tick() {
    if (lat_.server_frame_ms > 0.0) {
      const double next = now_ + lat_.server_frame_ms;
      if (next <= duration_ + lat_.server_frame_ms) events_.push(next, {Ev::kServerTick});
    }
    ++ticks_;
    drain_pending();
    if (history_.empty()) return;

    const TrackedFrame& newest = history_.back();
    ServerState st;
    st.seq = next_state_seq_++;
    st.t_emit = now_;
    st.newest_stamp = newest.t_ms;
    st.horizon = fixed_horizon_ ? *fixed_horizon_ : est_.horizon(now_, newest.t_ms);
    auto pred = predict_frame(history_, cfg_.predictor, st.horizon);
    st.points = std::move(pred.points);
    st.status = pred.status;

    if (env_) {
      const HandMesh mesh = expand_hand(st.points, cfg_.hand);
      env_step_inplace(*env_, mesh.particles, *cfg_.env, env_dt_, &st.env_stats, hand_of_);
      if (cfg_.env->snapshot_every > 0 && ticks_ % cfg_.env->snapshot_every == 0) st.snapshot = env_->positions;
    }

    const std::size_t idx = states_.size();
    states_.push_back(std::move(st));
    const double d = hop_delay(rng_down_);
    if (lost(rng_down_loss_)) {
      ++losses_;
      states_[idx].points.clear();
      states_[idx].snapshot.reset();
      return;
    }
    events_.push(now_ + d, {Ev::kPacketAtClient, idx});
  }

  void on_packet_at_client(std::size_t idx) {
    const double r = rng_render_.uniform(lat_.render_min_ms, lat_.render_max_ms);
    events_.push(now_ + r, {Ev::kRenderDone, idx});
  }

  void on_render_done(std::size_t idx) {
    if (ready_ && states_[*ready_].seq >= states_[idx].seq) {
      release(idx);
      return;
    }
    if (ready_ && *ready_ != shown_) release(*ready_);
    ready_ = idx;
    if (lat_.display_refresh_ms == 0.0) present();
  }

  void on_refresh() {
    const double next = now_ + lat_.display_refresh_ms;
    if (next <= duration_) events_.push(next, {Ev::kRefresh});
    present();
  }

  void release(std::size_t idx) {
    states_[idx].points.clear();
    states_[idx].points.shrink_to_fit();
    states_[idx].snapshot.reset();
  }

  std::vector<Vec3> live_points(double t) {
    std::vector<Vec3> pts = cfg_.trace ? interpolate_trace(frames_, t) : true_points(path_, cfg_.hand, t);
    if (!cfg_.trace && cfg_.noise.sigma_mm > 0.0) {
      for (auto& p : pts) {
        p.x += rng_live_.normal(0.0, cfg_.noise.sigma_mm);
        p.y += rng_live_.normal(0.0, cfg_.noise.sigma_mm);
        p.z += rng_live_.normal(0.0, cfg_.noise.sigma_mm);
      }
    }
    return pts;
  }

  void present() {
    if (!ready_ || now_ > duration_) return;
    if (!presented_.empty() && now_ <= presented_.back().t_present_ms) return;
    ServerState& st = states_[*ready_];
    const bool first_showing = shown_ != *ready_;
    if (first_showing && shown_ != kNone) release(shown_);
    shown_ = *ready_;

    PresentedFrame fr;
    fr.t_present_ms = now_;
    fr.live_points = live_points(now_);
    fr.displayed_points = cfg_.client_override ? fr.live_points : st.points;
    fr.horizon_used_ms = st.horizon;
    fr.packet_loss_count = losses_;
    fr.ack_seq = st.seq;
    fr.t_server_ms = st.t_emit;
    fr.newest_sample_t_ms = st.newest_stamp;
    fr.status = st.status;
    fr.error_mm = frame_error(fr.displayed_points, fr.live_points);
    if (env_) {
      fr.reacting_count = st.env_stats.reacting_count;
      fr.reacting_centroid = st.env_stats.reacting_centroid;
      fr.live_centroid = weighted_sum(centroid_w_, fr.live_points);
      for (std::size_t h = 0; h < hand_w_.size(); ++h) {
        fr.hands.push_back({st.env_stats.hand_count[h], st.env_stats.hand_centroid[h],
                            weighted_sum(hand_w_[h], fr.live_points)});
      }
      if (first_showing && st.snapshot) fr.env_snapshot = std::move(st.snapshot);
    }
    if (!cfg_.keep_points) {
      fr.live_points.clear();
      fr.displayed_points.clear();
    }
    presented_.push_back(std::move(fr));

    if (first_showing) {
      const double ack_d = hop_delay(rng_ack_);
      events_.push(now_ + ack_d, {Ev::kAckAtServer, 0, now_ - st.t_emit});
    }
  }

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  const SessionConfig& cfg_;
  LatencyModel lat_;
  MotionPath path_;
  HorizonEstimator est_;
  Rng rng_input_, rng_up_, rng_up_loss_, rng_down_, rng_down_loss_, rng_render_, rng_phase_, rng_ack_, rng_live_;

  EventQueue<Payload> events_;
  double now_{0.0};
  double duration_{0.0};
  std::vector<TrackedFrame> frames_;
  std::vector<TrackedFrame> sent_;
  std::vector<std::size_t> pending_;
  std::vector<TrackedFrame> history_;
  std::size_t history_cap_{1};
  std::optional<double> fixed_horizon_;
  std::vector<ServerState> states_;
  std::uint64_t next_state_seq_{1};
  std::optional<std::size_t> ready_;
  std::size_t shown_{kNone};
  std::vector<PresentedFrame> presented_;

  std::optional<EnvState> env_;
  std::vector<double> centroid_w_;
  std::vector<std::uint32_t> hand_of_;
  std::vector<std::vector<double>> hand_w_;
  double env_dt_{0.0};

  std::size_t ticks_{0};
  std::size_t delivered_{0};
  std::size_t losses_{0};
  std::size_t reordered_{0};
};

}  // namespace

SessionLog run_session(const SessionConfig& config) {
  config.validate();
  Session s(config);
  return s.run();
}

ErrorSeries replay_compare(const SessionLog& log, CompareSpace space, const HandTemplate& tmpl) {
  ErrorSeries out;
  out.reserve(log.frames.size());
  for (const auto& f : log.frames) {
    if (f.live_points.empty() && f.displayed_points.empty()) {
      throw ContractError("replay_compare: log was recorded without points");
    }
    double e;
    if (space == CompareSpace::kMesh) {
      e = frame_error(expand_hand(f.displayed_points, tmpl).particles, expand_hand(f.live_points, tmpl).particles);
    } else {
      e = frame_error(f.displayed_points, f.live_points);
    }
    out.push_back({f.t_present_ms, e});
  }
  return out;
}

ErrorSeries frame_errors(const SessionLog& log) {
  ErrorSeries out;
  out.reserve(log.frames.size());
  for (const auto& f : log.frames) out.push_back({f.t_present_ms, f.error_mm});
  return out;
}

std::vector<std::size_t> leg_frames(const SessionLog& log, const MotionPath& path, double lookback_ms) {
  std::vector<std::size_t> out;
  const double step = 5.0;
  for (std::size_t i = 0; i < log.frames.size(); ++i) {
    const double t1 = log.frames[i].t_present_ms;
    const double t0 = t1 - lookback_ms;
    if (t0 < 0.0 || t1 > path.duration_ms()) continue;
    bool ok = true;
    for (double t = t0; t <= t1 + 1e-9 && ok; t += step) ok = !path.in_transition(t);
    if (ok && !path.in_transition(t1)) out.push_back(i);
  }
  return out;
}

LagSummary interaction_lag(const SessionLog& log, const std::function<bool(std::size_t)>& keep) {
  LagSummary s;
  double sum = 0.0;
  for (std::size_t i = 0; i < log.frames.size(); ++i) {
    const auto& f = log.frames[i];
    if (keep && !keep(i)) continue;
    if (f.reacting_count == 0) {
      ++s.skipped;
      continue;
    }
    double d = 0.0;
    if (f.hands.empty()) {
      d = distance(f.reacting_centroid, f.live_centroid);
    } else {
      std::size_t in_contact = 0;
      for (const auto& h : f.hands) {
        if (h.reacting_count == 0) continue;
        d += distance(h.reacting_centroid, h.live_centroid);
        ++in_contact;
      }
      d /= static_cast<double>(in_contact);
    }
    s.series.push_back({f.t_present_ms, d});
    sum += d;
  }
  if (!s.series.empty()) s.mean_mm = sum / static_cast<double>(s.series.size());
  return s;
}

namespace {

const char* status_name(PredictionStatus s) {
  switch (s) {
    case PredictionStatus::kOk: return "ok";
    case PredictionStatus::kWarmingUp: return "warming_up";
    case PredictionStatus::kDegenerate: return "degenerate";
  }
  return "ok";
}

PredictionStatus parse_status(const std::string& s) {
  if (s == "ok") return PredictionStatus::kOk;
  if (s == "warming_up") return PredictionStatus::kWarmingUp;
  if (s == "degenerate") return PredictionStatus::kDegenerate;
  throw ConfigError("unknown prediction status '" + s + "'");
}

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }
Vec3 vec_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

nlohmann::json frame_to_json(const PresentedFrame& f) {
  nlohmann::json j{
      {"t_present_ms", f.t_present_ms},
      {"live_points", points_to_json(f.live_points)},
      {"displayed_points", points_to_json(f.displayed_points)},
      {"horizon_used_ms", f.horizon_used_ms},
      {"packet_loss_count", f.packet_loss_count},
      {"ack_seq", f.ack_seq},
      {"t_server_ms", f.t_server_ms},
      {"newest_sample_t_ms", f.newest_sample_t_ms},
      {"status", status_name(f.status)},
      {"error_mm", f.error_mm},
      {"reacting_count", f.reacting_count},
      {"reacting_centroid", vec_json(f.reacting_centroid)},
      {"live_centroid", vec_json(f.live_centroid)},
  };
  if (!f.hands.empty()) {
    auto& hs = j["hands"] = nlohmann::json::array();
    for (const auto& h : f.hands) {
      hs.push_back({{"reacting_count", h.reacting_count},
                    {"reacting_centroid", vec_json(h.reacting_centroid)},
                    {"live_centroid", vec_json(h.live_centroid)}});
    }
  }
  if (f.env_snapshot) j["env_snapshot"] = points_to_json(*f.env_snapshot);
  return j;
}

PresentedFrame presented_frame_from_json(const nlohmann::json& j) {
  PresentedFrame f;
  f.t_present_ms = j.at("t_present_ms").get<double>();
  f.live_points = points_from_json(j.at("live_points"));
  f.displayed_points = points_from_json(j.at("displayed_points"));
  f.horizon_used_ms = j.at("horizon_used_ms").get<double>();
  f.packet_loss_count = j.at("packet_loss_count").get<std::size_t>();
  f.ack_seq = j.at("ack_seq").get<std::uint64_t>();
  f.t_server_ms = j.at("t_server_ms").get<double>();
  f.newest_sample_t_ms = j.at("newest_sample_t_ms").get<double>();
  f.status = parse_status(j.at("status").get<std::string>());
  f.error_mm = j.at("error_mm").get<double>();
  f.reacting_count = j.at("reacting_count").get<std::size_t>();
  f.reacting_centroid = vec_from(j.at("reacting_centroid"));
  f.live_centroid = vec_from(j.at("live_centroid"));
  if (j.contains("hands")) {
    for (const auto& h : j.at("hands")) {
      f.hands.push_back({h.at("reacting_count").get<std::size_t>(), vec_from(h.at("reacting_centroid")),
                         vec_from(h.at("live_centroid"))});
    }
  }
  if (j.contains("env_snapshot")) f.env_snapshot = points_from_json(j.at("env_snapshot"));
  return f;
}

void write_session_log(std::ostream& out, const SessionLog& log) {
  out << log.metadata.dump() << '\n';
  for (const auto& f : log.frames) out << frame_to_json(f).dump() << '\n';
}

SessionLog read_session_log(std::istream& in) {
  SessionLog log;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (header) {
      log.metadata = std::move(j);
      header = false;
      log.truncated = log.metadata.value("truncated", false);
      log.server_ticks = log.metadata.value("server_ticks", std::size_t{0});
      log.samples_sent = log.metadata.value("samples_sent", std::size_t{0});
      log.samples_delivered = log.metadata.value("samples_delivered", std::size_t{0});
      if (log.metadata.contains("warnings")) log.warnings = log.metadata["warnings"].get<std::vector<std::string>>();
      continue;
    }
    auto f = presented_frame_from_json(j);
    if (!log.frames.empty() && f.t_present_ms <= log.frames.back().t_present_ms) {
      throw ConfigError("session log: t_present_ms not strictly increasing");
    }
    log.frames.push_back(std::move(f));
  }
  if (header) throw ConfigError("session log: missing metadata header");
  return log;
}

}  // namespace predsim
