#include <doctest.h>

#include <cmath>
#include <sstream>

#include "predsim/errors.hpp"
#include "predsim/netsim.hpp"

using namespace predsim;

namespace {

LatencyModel zero_latency() {
  LatencyModel l;
  l.input_max_ms = 0.0;
  l.render_max_ms = 0.0;
  l.net_oneway_ms = 0.0;
  l.server_frame_ms = 0.0;
  l.display_refresh_ms = 0.0;
  return l;
}

// Fixed pipeline: input a, one-way n both directions, render r; the server
// runs on arrival and the client presents on render completion.
LatencyModel fixed_latency(double a, double n, double r) {
  LatencyModel l = zero_latency();
  l.input_min_ms = l.input_max_ms = a;
  l.net_oneway_ms = n;
  l.render_min_ms = l.render_max_ms = r;
  return l;
}

std::string serialized(const SessionLog& log) {
  std::ostringstream os;
  write_session_log(os, log);
  return os.str();
}

double mean_over(const SessionLog& log, const std::vector<std::size_t>& idx) {
  double s = 0.0;
  for (auto i : idx) s += log.frames[i].error_mm;
  return s / static_cast<double>(idx.size());
}

}  // namespace

TEST_CASE("event queue orders by time then insertion") {
  EventQueue<int> q;
  q.push(5.0, 1);
  q.push(1.0, 2);
  q.push(5.0, 3);
  q.push(0.5, 4);
  q.push(1.0, 5);
  std::vector<int> got;
  double last = -1.0;
  while (!q.empty()) {
    auto e = q.pop();
    CHECK(e.t_ms >= last);
    last = e.t_ms;
    got.push_back(e.payload);
  }
  CHECK(got == std::vector<int>{4, 2, 5, 1, 3});
}

TEST_CASE("zero latency, zero noise, no prediction shows the live hand") {
  SessionConfig c;
  c.noise.sigma_mm = 0.0;
  c.latency = zero_latency();
  c.duration_ms = 5000.0;
  const auto log = run_session(c);
  REQUIRE(log.frames.size() > 400);
  const auto s = aggregate(frame_errors(log));
  CHECK(s.mean_mm <= 1e-9);
  for (const auto& e : replay_compare(log)) CHECK(e.error_mm <= 1e-9);
  for (const auto& f : log.frames) CHECK(f.horizon_used_ms == 0.0);
}

TEST_CASE("staleness law on constant-velocity legs") {
  for (double L : {10.0, 20.0, 50.0}) {
    SessionConfig c;
    c.noise.sigma_mm = 0.0;
    c.latency = fixed_latency(L * 0.2, L * 0.3, L * 0.2);
    const auto log = run_session(c);
    const auto legs = leg_frames(log, MotionPath(c.profile), L + 20.0);
    REQUIRE(legs.size() > 1000);
    CHECK(mean_over(log, legs) == doctest::Approx(L).epsilon(0.02));
  }
}

TEST_CASE("horizon settles near the summed component means") {
  SessionConfig c;
  const auto log = run_session(c);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : log.frames) {
    if (f.t_present_ms < 1000.0) continue;
    sum += f.horizon_used_ms;
    ++n;
  }
  const double mean_h = sum / n;
  MESSAGE("mean horizon " << mean_h);
  CHECK(mean_h == doctest::Approx(34.0).epsilon(2.0 / 34.0));
}

TEST_CASE("horizon estimator") {
  HorizonEstimator e(5.0, 20.0);
  CHECK(!e.has_acks());
  CHECK(e.horizon(100.0, 90.0) == doctest::Approx(35.0));
  e.observe_downstream(10.0);
  CHECK(e.has_acks());
  CHECK(e.downstream_ms() == 10.0);
  e.observe_downstream(20.0);
  CHECK(e.downstream_ms() == doctest::Approx(11.0));
  CHECK(estimate_horizon(e, 100.0, 90.0) == doctest::Approx(26.0));
  CHECK(e.horizon(1000.0, 0.0) == HorizonEstimator::kMaxHorizonMs);
  CHECK(e.horizon(0.0, 100.0) == 0.0);
}

TEST_CASE("heavy loss keeps the horizon finite and bounded") {
  SessionConfig c;
  c.latency.loss_prob = 0.5;
  c.duration_ms = 8000.0;
  const auto log = run_session(c);
  REQUIRE(!log.frames.empty());
  CHECK(log.samples_delivered < log.samples_sent);
  for (const auto& f : log.frames) {
    CHECK(std::isfinite(f.horizon_used_ms));
    CHECK(f.horizon_used_ms >= 0.0);
    CHECK(f.horizon_used_ms <= HorizonEstimator::kMaxHorizonMs);
  }
  CHECK(log.frames.back().packet_loss_count > 0);
}

TEST_CASE("causality") {
  SessionConfig c;
  c.latency.jitter_ms = 3.0;
  c.predictor = PolyRegression{{2, 20, 1e-9}};
  const auto log = run_session(c);
  double prev = -1.0;
  for (const auto& f : log.frames) {
    CHECK(f.newest_sample_t_ms <= f.t_server_ms);
    CHECK(f.t_server_ms <= f.t_present_ms);
    CHECK(f.horizon_used_ms >= 0.0);
    CHECK(f.t_present_ms > prev);
    prev = f.t_present_ms;
  }
}

TEST_CASE("second-order regression beats no prediction") {
  SessionConfig c;
  const double none = aggregate(frame_errors(run_session(c))).mean_mm;
  c.predictor = PolyRegression{{2, 20, 1e-9}};
  const double poly = aggregate(frame_errors(run_session(c))).mean_mm;
  MESSAGE("none " << none << " poly " << poly);
  CHECK(poly < none);
}

TEST_CASE("sessions are deterministic") {
  SessionConfig c;
  c.duration_ms = 4000.0;
  c.latency.jitter_ms = 2.0;
  c.latency.loss_prob = 0.1;
  c.predictor = PolyRegression{{1, 7, 1e-9}};
  EnvConfig env;
  env.particle_count = 500;
  c.env = env;
  CHECK(serialized(run_session(c)) == serialized(run_session(c)));
  SessionConfig d = c;
  reseed(d, 2);
  CHECK(serialized(run_session(c)) != serialized(run_session(d)));
}

TEST_CASE("more loss never helps no prediction") {
  std::vector<double> probs{0.0, 0.2, 0.5};
  std::vector<double> means(probs.size(), 0.0);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    for (std::size_t i = 0; i < probs.size(); ++i) {
      SessionConfig c;
      reseed(c, seed);
      c.duration_ms = 6000.0;
      c.keep_points = false;
      c.latency.loss_prob = probs[i];
      means[i] += aggregate(frame_errors(run_session(c))).mean_mm / 30.0;
    }
  }
  MESSAGE("loss 0 / 0.2 / 0.5: " << means[0] << " " << means[1] << " " << means[2]);
  CHECK(means[1] >= means[0]);
  CHECK(means[2] >= means[1]);
}

TEST_CASE("client override shows the live hand") {
  SessionConfig c;
  c.client_override = true;
  c.duration_ms = 3000.0;
  const auto log = run_session(c);
  for (const auto& f : log.frames) {
    CHECK(f.displayed_points == f.live_points);
    CHECK(f.error_mm == 0.0);
  }
}

TEST_CASE("replay_compare on a shifted log") {
  SessionConfig c;
  c.duration_ms = 1000.0;
  auto log = run_session(c);
  for (auto& f : log.frames) {
    f.displayed_points = f.live_points;
    for (auto& p : f.displayed_points) p += Vec3{3.0, 4.0, 0.0};
  }
  for (auto space : {CompareSpace::kTracked, CompareSpace::kMesh}) {
    for (const auto& e : replay_compare(log, space)) CHECK(e.error_mm == doctest::Approx(5.0).epsilon(1e-12));
  }
  c.keep_points = false;
  CHECK_THROWS_AS(replay_compare(run_session(c)), ContractError);
}

TEST_CASE("trace replay") {
  MotionProfile p;
  p.direction_changes = 1;
  SessionConfig c;
  c.profile = p;
  c.noise.sigma_mm = 0.0;
  c.trace = gen_trace(p, default_template(), c.noise);
  c.latency = zero_latency();
  CHECK(aggregate(frame_errors(run_session(c))).mean_mm <= 1e-9);
  c.latency = fixed_latency(4.0, 6.0, 4.0);
  const auto log = run_session(c);
  const auto legs = leg_frames(log, MotionPath(p), 40.0);
  CHECK(mean_over(log, legs) == doctest::Approx(20.0).epsilon(0.02));
}

TEST_CASE("duration past the trace is truncated with a warning") {
  MotionProfile p;
  p.direction_changes = 0;
  p.leg_duration_s = 1.0;
  SessionConfig c;
  c.profile = p;
  c.duration_ms = 5000.0;
  const auto log = run_session(c);
  CHECK(log.truncated);
  REQUIRE(log.warnings.size() == 1);
  CHECK(log.metadata["truncated"] == true);
  CHECK(log.frames.back().t_present_ms <= 1000.0);
}

TEST_CASE("session log round trip") {
  SessionConfig c;
  c.duration_ms = 2000.0;
  EnvConfig env;
  env.particle_count = 200;
  env.snapshot_every = 5;
  c.env = env;
  const auto log = run_session(c);
  std::stringstream ss(serialized(log));
  const auto back = read_session_log(ss);
  CHECK(serialized(back) == serialized(log));
  CHECK(back.metadata["config"] == log.metadata["config"]);
  CHECK(back.server_ticks == log.server_ticks);
  bool any_snapshot = false;
  for (const auto& f : back.frames) any_snapshot = any_snapshot || f.env_snapshot.has_value();
  CHECK(any_snapshot);
  bool any_contact = false;
  for (const auto& f : back.frames) {
    REQUIRE(f.hands.size() == 2);
    std::size_t sum = 0;
    for (const auto& h : f.hands) sum += h.reacting_count;
    CHECK(sum >= f.reacting_count);
    any_contact = any_contact || sum > 0;
  }
  CHECK(any_contact);

  std::string text = serialized(log);
  const auto first_nl = text.find('\n');
  const auto second_nl = text.find('\n', first_nl + 1);
  const std::string frame_line = text.substr(first_nl + 1, second_nl - first_nl);
  std::stringstream dup(text.substr(0, first_nl + 1) + frame_line + frame_line);
  CHECK_THROWS_AS(read_session_log(dup), ConfigError);
  std::stringstream empty("");
  CHECK_THROWS_AS(read_session_log(empty), ConfigError);
}

TEST_CASE("interaction lag and leg selection") {
  SessionLog log;
  for (int i = 0; i < 4; ++i) {
    PresentedFrame f;
    f.t_present_ms = 10.0 * i;
    f.reacting_count = i == 2 ? 0 : 3;
    f.reacting_centroid = {3.0 * i, 0.0, 0.0};
    f.live_centroid = {0.0, 4.0 * i, 0.0};
    log.frames.push_back(f);
  }
  auto s = interaction_lag(log);
  CHECK(s.skipped == 1);
  REQUIRE(s.series.size() == 3);
  CHECK(s.mean_mm == doctest::Approx((0.0 + 5.0 + 15.0) / 3.0));
  s = interaction_lag(log, [](std::size_t i) { return i == 1; });
  CHECK(s.mean_mm == doctest::Approx(5.0));

  // Per-hand data takes over: mean over the hands in contact.
  SessionLog two;
  PresentedFrame f;
  f.reacting_count = 3;
  f.hands = {{2, {3.0, 4.0, 0.0}, {0.0, 0.0, 0.0}}, {0, {}, {100.0, 0.0, 0.0}}, {1, {10.0, 1.0, 0.0}, {10.0, 0.0, 0.0}}};
  two.frames.push_back(f);
  CHECK(interaction_lag(two).mean_mm == doctest::Approx((5.0 + 1.0) / 2.0));

  const MotionProfile p;
  const MotionPath path(p);
  SessionLog legs;
  for (double t : {50.0, 150.0, 2950.0, 3200.0, 3600.0}) {
    PresentedFrame f;
    f.t_present_ms = t;
    legs.frames.push_back(f);
  }
  // 50 lacks lookback, 2950 and 3200 touch the first turnaround.
  CHECK(leg_frames(legs, path, 100.0) == std::vector<std::size_t>{1, 4});
}

TEST_CASE("config validation") {
  SessionConfig c;
  c.latency.loss_prob = 1.0;
  CHECK_THROWS_AS(run_session(c), ConfigError);
  c = {};
  c.latency.input_max_ms = -1.0;
  CHECK_THROWS_AS(run_session(c), ConfigError);
  c = {};
  c.predictor = PolyRegression{{2, 2, 0.0}};
  CHECK_THROWS_AS(run_session(c), ConfigError);
  c = {};
  c.trace = std::vector<TrackedFrame>{};
  CHECK_THROWS_AS(run_session(c), ConfigError);
}
