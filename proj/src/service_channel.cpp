#include <algorithm>
#include <cmath>
#include <limits>

#include "predsim/config.hpp"
#include "predsim/errors.hpp"
#include "predsim/rnn.hpp"
#include "predsim/service.hpp"

namespace predsim {

namespace {

using nlohmann::json;

std::string error_text(const std::string& code) { return json{{"type", "error"}, {"code", code}}.dump(); }

bool is_num(const json& j, const char* key) { return j.contains(key) && j[key].is_number(); }

// Schema check for the three client messages; throws on anything off.
void check_message(const json& m) {
  if (!m.is_object() || !m.contains("type") || !m["type"].is_string()) throw ConfigError("no type");
  const auto type = m["type"].get<std::string>();
  if (type == "input") {
    if (!m.contains("seq") || !m["seq"].is_number_unsigned()) throw ConfigError("seq");
    if (!is_num(m, "t_ms") || !std::isfinite(m["t_ms"].get<double>())) throw ConfigError("t_ms");
    if (!m.contains("points") || !m["points"].is_array() || m["points"].size() != kTrackedPoints) {
      throw ConfigError("points");
    }
    for (const auto& p : m["points"]) {
      if (!p.is_array() || p.size() != 3) throw ConfigError("point");
      for (const auto& c : p) {
        if (!c.is_number() || !std::isfinite(c.get<double>())) throw ConfigError("coord");
      }
    }
  } else if (type == "ping") {
    if (!is_num(m, "t_ms")) throw ConfigError("t_ms");
  } else if (type == "hello") {
    if (m.contains("predictor") && !m["predictor"].is_object()) throw ConfigError("predictor");
    if (m.contains("inject_oneway_ms") && (!m["inject_oneway_ms"].is_number() || m["inject_oneway_ms"].get<double>() < 0.0)) {
      throw ConfigError("inject_oneway_ms");
    }
    if (m.contains("seed") && !m["seed"].is_number_unsigned()) throw ConfigError("seed");
  } else {
    throw ConfigError("type");
  }
}

}  // namespace

SessionChannel::SessionChannel(std::string id, ChannelConfig cfg)
    : id_(std::move(id)), cfg_(std::move(cfg)), predictor_(cfg_.default_predictor), oneway_(cfg_.default_oneway_ms) {
  if (!(cfg_.tick_ms > 0.0)) throw ConfigError("service tick_ms must be > 0");
  if (cfg_.queue_limit == 0) throw ConfigError("service queue_limit must be >= 1");
  reset_session(predictor_, oneway_, 1);
}

void SessionChannel::reset_session(const PredictorKind& kind, double oneway, std::uint64_t seed) {
  predictor_ = kind;
  oneway_ = oneway;
  history_.clear();
  history_cap_ = std::max<std::size_t>(1, required_history(kind));
  inbound_.clear();
  have_seq_ = false;
  rtt_ewma_ = 0.0;
  rtt_samples_ = 0;
  last_pong_sent_.reset();
  next_tick_ = now_;
  if (cfg_.env) {
    EnvConfig e = *cfg_.env;
    e.seed = derive_seed(seed, 3);
    env_ = init_env(e);
  } else {
    env_.reset();
  }
}

void SessionChannel::handle_message(double t_ms, const std::string& text) {
  advance(t_ms);
  json m;
  try {
    m = json::parse(text);
    check_message(m);
  } catch (const std::exception&) {
    push_immediate(error_text("bad_input"), false);
    return;
  }
  const auto type = m["type"].get<std::string>();
  if (type == "hello") {
    PredictorKind kind = cfg_.default_predictor;
    try {
      if (m.contains("predictor")) {
        if (m["predictor"].value("kind", "") == "gru" || m["predictor"].value("kind", "") == "lstm") {
          throw ConfigError("model files are not loaded over the wire");
        }
        kind = parse_predictor(m["predictor"], "predictor");
      }
    } catch (const std::exception&) {
      push_immediate(error_text("bad_predictor"), false);
      return;
    }
    reset_session(kind, m.value("inject_oneway_ms", cfg_.default_oneway_ms), m.value("seed", std::uint64_t{1}));
    return;
  }
  if (type == "input") {
    const auto seq = m["seq"].get<std::uint64_t>();
    if (have_seq_ && seq <= last_seq_) {
      push_immediate(error_text("bad_input"), false);
      return;
    }
    have_seq_ = true;
    last_seq_ = seq;
  }
  inbound_.push_back({t_ms + oneway_, order_++, std::move(m)});
}

void SessionChannel::advance(double t_ms) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  while (true) {
    const double ti = inbound_.empty() ? inf : inbound_.front().t_due;
    const double to = in_flight_.empty() ? inf : in_flight_.front().t_due;
    const double tt = next_tick_;
    const double m = std::min({ti, to, tt});
    if (m > t_ms) break;
    if (ti == m) {
      Inbound in = std::move(inbound_.front());
      inbound_.pop_front();
      process(in.t_due, in.msg);
    } else if (to == m) {
      Outbound out = std::move(in_flight_.front());
      in_flight_.pop_front();
      push_immediate(std::move(out.text), out.is_state);
    } else {
      tick(tt);
      next_tick_ = tt + cfg_.tick_ms;
    }
  }
  now_ = std::max(now_, t_ms);
}

void SessionChannel::process(double t, const json& msg) {
  const auto type = msg["type"].get<std::string>();
  if (type == "ping") {
    if (last_pong_sent_) {
      const double rtt = t - *last_pong_sent_;
      rtt_ewma_ = rtt_samples_ == 0 ? rtt : (1.0 - HorizonEstimator::kAlpha) * rtt_ewma_ + HorizonEstimator::kAlpha * rtt;
      ++rtt_samples_;
    }
    json pong{{"type", "pong"}, {"t_ms", msg["t_ms"]}, {"t_server_ms", t}};
    last_pong_sent_ = t;
    send(t, pong.dump(), false);
    return;
  }
  // input
  TrackedFrame f;
  f.seq = msg["seq"].get<std::uint64_t>();
  f.t_ms = msg["t_ms"].get<double>();
  f.points = points_from_json(msg["points"]);
  if (!history_.empty() && f.t_ms <= history_.back().t_ms) return;  // client clock went backwards
  history_.push_back(std::move(f));
  if (history_.size() > history_cap_) history_.erase(history_.begin());
  newest_arrival_ = t;
}

double SessionChannel::horizon_ms(double t_now) const {
  if (const auto* rec = std::get_if<Recurrent>(&predictor_)) return rec->model->horizon_ms;
  const double rtt = rtt_samples_ > 0 ? rtt_ewma_ : 2.0 * oneway_;
  return std::clamp((t_now - newest_arrival_) + rtt, 0.0, HorizonEstimator::kMaxHorizonMs);
}

void SessionChannel::tick(double t) {
  if (history_.empty()) return;
  const TrackedFrame& newest = history_.back();
  const double h = horizon_ms(t);
  const FramePrediction pred = predict_frame(history_, predictor_, h);
  std::vector<Vec3> env_pts;
  if (env_) {
    const HandMesh mesh = expand_hand(pred.points, cfg_.hand);
    env_step_inplace(*env_, mesh.particles, *cfg_.env, cfg_.env->dt_ms > 0.0 ? cfg_.env->dt_ms : cfg_.tick_ms);
  }
  json state{{"type", "state"},
             {"ack_seq", newest.seq},
             {"t_server_ms", t},
             {"horizon_ms", h},
             {"hand_pred", points_to_json(pred.points)},
             {"hand_raw", points_to_json(newest.points)},
             {"env", env_ ? points_to_json(env_->positions) : json::array()}};
  send(t, state.dump(), true);
}

void SessionChannel::send(double t_now, std::string text, bool is_state) {
  in_flight_.push_back({t_now + oneway_, order_++, std::move(text), is_state});
}

void SessionChannel::push_immediate(std::string text, bool is_state) {
  if (outbox_.size() >= cfg_.queue_limit) {
    auto it = std::find_if(outbox_.begin(), outbox_.end(), [](const Outbound& o) { return o.is_state; });
    if (it == outbox_.end()) it = outbox_.begin();
    outbox_.erase(it);
    ++dropped_;
  }
  outbox_.push_back({now_, order_++, std::move(text), is_state});
}

std::vector<std::string> SessionChannel::take_outbox() {
  std::vector<std::string> out;
  out.reserve(outbox_.size());
  for (auto& o : outbox_) out.push_back(std::move(o.text));
  outbox_.clear();
  return out;
}

std::optional<std::string> SessionChannel::pop_outbox() {
  if (outbox_.empty()) return std::nullopt;
  std::string s = std::move(outbox_.front().text);
  outbox_.pop_front();
  return s;
}

}  // namespace predsim
