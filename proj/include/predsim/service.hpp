#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "predsim/env.hpp"
#include "predsim/netsim.hpp"
#include "predsim/predict.hpp"
#include "predsim/trace.hpp"

namespace predsim {

struct ChannelConfig {
  double tick_ms{1000.0 / 133.0};
  std::size_t queue_limit{8};
  double default_oneway_ms{0.0};
  PredictorKind default_predictor{NoPrediction{}};
  std::optional<EnvConfig> env;
  HandTemplate hand{default_template()};
};

/// One client connection's server loop, driven by an explicit clock in
/// server milliseconds. Injected latency delays every inbound message and
/// every outbound message by the one-way value.
class SessionChannel {
 public:
  SessionChannel(std::string id, ChannelConfig cfg);

  /// Accepts one client text frame received at `t_ms`. Malformed frames get
  /// an immediate error message; the channel stays usable.
  void handle_message(double t_ms, const std::string& text);

  /// Runs ticks and delayed deliveries up to and including `t_ms`.
  void advance(double t_ms);

  /// Messages due at the client, oldest first. Holds at most queue_limit;
  /// older state messages are dropped first when full.
  std::vector<std::string> take_outbox();
  std::optional<std::string> pop_outbox();
  std::size_t outbox_size() const { return outbox_.size(); }
  std::size_t dropped_states() const { return dropped_; }

  const std::string& id() const { return id_; }
  double rtt_ewma_ms() const { return rtt_ewma_; }
  std::size_t rtt_samples() const { return rtt_samples_; }
  double now_ms() const { return now_; }
  const PredictorKind& predictor() const { return predictor_; }
  double inject_oneway_ms() const { return oneway_; }

 private:
  struct Inbound {
    double t_due;
    std::uint64_t order;
    nlohmann::json msg;
  };
  struct Outbound {
    double t_due;
    std::uint64_t order;
    std::string text;
    bool is_state;
  };

  void reset_session(const PredictorKind& kind, double oneway, std::uint64_t seed);
  void process(double t, const nlohmann::json& msg);
  void tick(double t);
  void send(double t_now, std::string text, bool is_state);
  void push_immediate(std::string text, bool is_state);
  double horizon_ms(double t_now) const;

  std::string id_;
  ChannelConfig cfg_;
  PredictorKind predictor_;
  double oneway_;
  double now_{0.0};
  double next_tick_{0.0};
  std::uint64_t order_{0};
  std::deque<Inbound> inbound_;
  std::deque<Outbound> in_flight_;
  std::deque<Outbound> outbox_;
  std::size_t dropped_{0};

  std::vector<TrackedFrame> history_;
  std::size_t history_cap_{1};
  double newest_arrival_{0.0};
  std::uint64_t last_seq_{0};
  bool have_seq_{false};

  double rtt_ewma_{0.0};
  std::size_t rtt_samples_{0};
  std::optional<double> last_pong_sent_;

  std::optional<EnvState> env_;
};

/// WebSocket front end: one SessionChannel per connection, ticked by a
/// timer on the server's steady clock.
class WsServer {
 public:
  WsServer(std::string host, std::uint16_t port, ChannelConfig channel);
  ~WsServer();
  WsServer(const WsServer&) = delete;
  WsServer& operator=(const WsServer&) = delete;

  /// Binds and starts accepting; returns the bound port (useful with 0).
  std::uint16_t start(unsigned threads = 1);
  /// Blocks until stop() is called.
  void wait();
  /// Blocks until SIGINT or SIGTERM, then stops.
  void wait_for_signal();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace predsim
