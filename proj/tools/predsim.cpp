// predsim command-line driver.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "predsim/bench.hpp"
#include "predsim/config.hpp"
#include "predsim/errors.hpp"
#include "predsim/netsim.hpp"
#include "predsim/offline.hpp"
#include "predsim/rnn.hpp"
#include "predsim/service.hpp"
#include "predsim/trace.hpp"

using namespace predsim;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet{false};
};

void add_common(CLI::App* cmd, Common& c, bool need_out) {
  cmd->add_option("--config", c.config, "config JSON")->required();
  auto* out = cmd->add_option("--out", c.out, "output path");
  if (need_out) out->required();
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_flag("--quiet", c.quiet, "no summary on stdout");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

int cmd_gen_trace(const Common& c) {
  const AppConfig app = load_config(c.config, c.seed);
  const auto frames = gen_trace(app.session.profile, app.session.hand, app.session.noise);
  auto out = open_out(c.out);
  write_trace(out, frames);
  if (!c.quiet) {
    std::cout << "frames " << frames.size() << " duration_ms " << fmt(app.session.profile.duration_ms()) << '\n';
  }
  return 0;
}

int cmd_bench(const Common& c) {
  const AppConfig app = load_config(c.config, c.seed);
  if (!app.bench) throw ConfigError("missing required key 'bench'");
  const auto rows = run_bench(*app.bench);
  auto out = open_out(c.out);
  write_bench_csv(out, rows);
  if (!c.quiet) {
    for (const auto& r : rows) {
      if (r.seed || r.status != "ok") continue;
      std::cout << r.cell.predictor << " order " << r.cell.order << " window " << r.cell.window << " mean "
                << fmt(r.stats.mean_mm) << " std " << fmt(r.stats.std_mm) << " reduction "
                << fmt(r.reduction.mean_ratio) << '/' << fmt(r.reduction.std_ratio) << '\n';
    }
  }
  return 0;
}

int cmd_simulate(const Common& c) {
  const AppConfig app = load_config(c.config, c.seed);
  const SessionLog log = run_session(app.session);
  auto out = open_out(c.out);
  write_session_log(out, log);
  if (!c.quiet) {
    const auto s = aggregate(frame_errors(log));
    std::cout << "frames " << s.n << " mean_err_mm " << fmt(s.mean_mm) << " std_err_mm " << fmt(s.std_mm) << '\n';
    for (const auto& w : log.warnings) std::cout << "warning: " << w << '\n';
  }
  return 0;
}

int cmd_train_rnn(const Common& c) {
  const AppConfig app = load_config(c.config, c.seed);
  const Dataset data = make_training_dataset(app.rnn.data);
  const TrainResult r = train(app.rnn.spec, data, app.rnn.train);
  auto out = open_out(c.out);
  out << model_to_json(r.model).dump(2) << '\n';
  if (!c.quiet) {
    std::cout << "samples " << data.samples.size() << " initial_loss " << fmt(r.loss_history.front())
              << " best_loss " << fmt(r.loss_history[r.best_epoch]) << " best_epoch " << r.best_epoch << '\n';
  }
  return 0;
}

int cmd_eval_rnn(const Common& c, const std::string& model_path, const std::string& trace_path) {
  const AppConfig app = load_config(c.config, c.seed);
  std::ifstream min(model_path);
  if (!min) throw ConfigError("cannot open model file '" + model_path + "'");
  auto model = std::make_shared<RnnModel>(model_from_json(nlohmann::json::parse(min)));
  check_horizon(*model, app.rnn.eval_horizon_ms);

  std::vector<TrackedFrame> trace;
  std::optional<MotionPath> path;
  if (!trace_path.empty()) {
    std::ifstream tin(trace_path);
    if (!tin) throw ConfigError("cannot open trace file '" + trace_path + "'");
    trace = read_trace(tin);
  } else {
    // Held out: a noise stream the training set never draws from.
    NoiseModel noise = app.session.noise;
    noise.seed = derive_seed(app.seed, 99);
    trace = gen_trace(app.session.profile, app.session.hand, noise);
    path.emplace(app.session.profile);
  }
  const std::size_t first = static_cast<std::size_t>(model->spec.input_len - 1);
  const double h = model->horizon_ms;
  const auto rnn = offline_eval(trace, Recurrent{model}, h, first, app.rnn.eval_stride, path ? &*path : nullptr);
  const auto base = offline_eval(trace, NoPrediction{}, h, first, app.rnn.eval_stride, path ? &*path : nullptr);

  auto out = open_out(c.out);
  out << "t_ms,min_dist_sum_mm,min_dist_mean_mm,matched_mm,baseline_min_dist_mean_mm,baseline_matched_mm,"
         "in_transition\n";
  for (std::size_t i = 0; i < rnn.samples.size(); ++i) {
    const auto& s = rnn.samples[i];
    const auto& b = base.samples[i];
    out << fmt(s.t_ms) << ',' << fmt(s.min_dist_sum_mm) << ',' << fmt(s.min_dist_mean_mm) << ','
        << fmt(s.matched_mm) << ',' << fmt(b.min_dist_mean_mm) << ',' << fmt(b.matched_mm) << ','
        << (s.in_transition ? 1 : 0) << '\n';
  }
  if (!c.quiet) {
    std::cout << "samples " << rnn.samples.size() << " min_dist_mean_mm " << fmt(rnn.min_dist.mean_mm)
              << " baseline " << fmt(base.min_dist.mean_mm) << " reduction "
              << fmt(base.min_dist.mean_mm / rnn.min_dist.mean_mm) << '\n';
  }
  return 0;
}

int cmd_serve(const Common& c, std::optional<std::uint16_t> port) {
  const AppConfig app = load_config(c.config, c.seed);
  ChannelConfig ch;
  ch.tick_ms = app.service.tick_ms;
  ch.queue_limit = app.service.queue_limit;
  ch.default_oneway_ms = app.service.default_oneway_ms;
  ch.default_predictor = app.session.predictor;
  ch.env = app.session.env;
  ch.hand = app.session.hand;
  WsServer server(app.service.host, port.value_or(app.service.port), ch);
  const auto bound = server.start();
  if (!c.quiet) std::cout << "listening on ws://" << app.service.host << ':' << bound << std::endl;
  server.wait_for_signal();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"predictive simulation toolkit"};
  app.require_subcommand(1);
  Common common;
  std::string model_path, trace_path;
  std::optional<std::uint16_t> port;

  auto* gen = app.add_subcommand("gen-trace", "write a synthetic hand trace (JSONL)");
  add_common(gen, common, true);
  auto* bench = app.add_subcommand("bench", "sweep predictors and write a CSV");
  add_common(bench, common, true);
  auto* sim = app.add_subcommand("simulate", "run one session and write its log (JSONL)");
  add_common(sim, common, true);
  auto* train = app.add_subcommand("train-rnn", "train a recurrent predictor");
  add_common(train, common, true);
  auto* eval = app.add_subcommand("eval-rnn", "evaluate a recurrent predictor on a trace");
  add_common(eval, common, true);
  eval->add_option("--model", model_path, "model JSON")->required();
  eval->add_option("--trace", trace_path, "trace JSONL (default: held-out generated trace)");
  auto* serve = app.add_subcommand("serve", "run the WebSocket demo server");
  add_common(serve, common, false);
  serve->add_option("--port", port, "listen port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }

  try {
    if (*gen) return cmd_gen_trace(common);
    if (*bench) return cmd_bench(common);
    if (*sim) return cmd_simulate(common);
    if (*train) return cmd_train_rnn(common);
    if (*eval) return cmd_eval_rnn(common, model_path, trace_path);
    if (*serve) return cmd_serve(common, port);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
