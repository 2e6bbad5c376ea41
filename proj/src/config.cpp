#include "predsim/config.hpp"

#include <fstream>
#include <set>

#include "predsim/errors.hpp"

namespace predsim {

namespace {

using nlohmann::json;

/// Reads one JSON object, remembering which keys were consumed so leftovers
/// can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + path_ + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  template <class T>
  T req(const std::string& key) {
    if (!has(key)) throw ConfigError("missing required key '" + name(key) + "'");
    return convert<T>(key);
  }

  template <class T>
  T get(const std::string& key, T def) {
    if (!has(key)) {
      used_.insert(key);
      return def;
    }
    return convert<T>(key);
  }

  template <class T>
  std::optional<T> opt(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return convert<T>(key);
  }

  Section sub(const std::string& key) {
    used_.insert(key);
    return Section(j_.at(key), name(key));
  }

  /// Throws on keys nobody asked for.
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown key '" + name(k) + "'");
    }
  }

 private:
  template <class T>
  T convert(const std::string& key) {
    used_.insert(key);
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          throw ConfigError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("key '" + name(key) + "' has the wrong type");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

Vec3 parse_vec(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
    throw ConfigError("key '" + where + "' must be [x, y, z]");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

json read_json_file(const std::filesystem::path& p, const std::string& what) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + what + " '" + p.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + " '" + p.string() + "' is not valid JSON: " + e.what());
  }
}

void parse_trace(Section s, MotionProfile& p, AppConfig& app, const std::filesystem::path& base) {
  p.speed_mm_s = s.get("speed_mm_s", p.speed_mm_s);
  p.leg_duration_s = s.get("leg_duration_s", p.leg_duration_s);
  p.transition_duration_s = s.get("transition_duration_s", p.transition_duration_s);
  p.direction_changes = s.get("direction_changes", p.direction_changes);
  if (s.has("axis")) p.axis = parse_vec(s.raw("axis"), s.name("axis"));
  p.sample_interval_ms = s.get("sample_interval_ms", p.sample_interval_ms);
  if (auto f = s.opt<std::string>("file")) app.trace_file = resolve(base, *f).string();
  if (auto t = s.opt<std::string>("template")) {
    app.session.hand = template_from_json(read_json_file(resolve(base, *t), "template file"));
  }
  s.finish();
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("trace: ") + e.what());
  }
}

void parse_latency(Section s, LatencyModel& l) {
  l.input_min_ms = s.get("input_min_ms", l.input_min_ms);
  l.input_max_ms = s.get("input_max_ms", l.input_max_ms);
  l.render_min_ms = s.get("render_min_ms", l.render_min_ms);
  l.render_max_ms = s.get("render_max_ms", l.render_max_ms);
  l.net_oneway_ms = s.get("net_oneway_ms", l.net_oneway_ms);
  l.jitter_ms = s.get("jitter_ms", l.jitter_ms);
  l.loss_prob = s.get("loss_prob", l.loss_prob);
  l.server_frame_ms = s.get("server_frame_ms", l.server_frame_ms);
  l.display_refresh_ms = s.get("display_refresh_ms", l.display_refresh_ms);
  l.seed = s.get("seed", l.seed);
  s.finish();
  l.validate();
}

std::optional<EnvConfig> parse_env(Section s, std::uint64_t seed) {
  EnvConfig e;
  e.seed = seed;
  const bool enabled = s.get("enabled", true);
  e.particle_count = s.get("particle_count", e.particle_count);
  e.interaction_radius_mm = s.get("interaction_radius_mm", e.interaction_radius_mm);
  e.stiffness = s.get("stiffness", e.stiffness);
  e.damping = s.get("damping", e.damping);
  e.dt_ms = s.get("dt_ms", e.dt_ms);
  e.seed = s.get("seed", e.seed);
  e.snapshot_every = s.get("snapshot_every", e.snapshot_every);
  if (s.has("bounds")) {
    Section b = s.sub("bounds");
    if (b.has("min")) e.bounds.min = parse_vec(b.raw("min"), b.name("min"));
    if (b.has("max")) e.bounds.max = parse_vec(b.raw("max"), b.name("max"));
    b.finish();
  }
  s.finish();
  e.validate();
  return enabled ? std::optional<EnvConfig>(e) : std::nullopt;
}

bool is_count(const json& x) {
  return x.is_number_unsigned() || (x.is_number_integer() && x.get<std::int64_t>() >= 0);
}

BenchCell parse_bench_cell(const json& j, const std::string& where, std::vector<BenchCell>& out) {
  Section s(j, where);
  const auto kind = s.req<std::string>("kind");
  BenchCell c;
  c.predictor = kind;
  c.order = s.get("order", kind == "poly" ? 2 : 0);
  std::vector<std::size_t> windows;
  if (s.has("windows")) {
    const json& w = s.raw("windows");
    if (w.is_array()) {
      for (const auto& x : w) {
        if (!is_count(x)) throw ConfigError("key '" + s.name("windows") + "' must hold integers");
        windows.push_back(x.get<std::size_t>());
      }
    } else {
      Section r(w, s.name("windows"));
      const auto from = r.req<std::size_t>("from");
      const auto to = r.req<std::size_t>("to");
      r.finish();
      for (std::size_t n = from; n <= to; ++n) windows.push_back(n);
    }
  } else if (s.has("window")) {
    windows.push_back(s.req<std::size_t>("window"));
  } else {
    windows.push_back(kind == "none" ? 1 : kind == "dead_reckoning" ? 2 : 20);
  }
  s.finish();
  if (kind == "dead_reckoning") c.order = 1;
  for (std::size_t n : windows) {
    BenchCell x = c;
    x.window = n;
    if (kind == "lagrange") x.order = static_cast<int>(n) - 1;
    out.push_back(x);
  }
  return c;
}

BenchPlan parse_bench(Section s, const SessionConfig& base) {
  BenchPlan plan;
  plan.base = base;
  if (s.has("cells")) {
    const json& cells = s.raw("cells");
    if (!cells.is_array()) throw ConfigError("key '" + s.name("cells") + "' must be an array");
    plan.cells.clear();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      parse_bench_cell(cells[i], s.name("cells") + "[" + std::to_string(i) + "]", plan.cells);
    }
  } else if (s.get("window_sweep", false)) {
    plan.cells = window_sweep_cells();
  }
  if (s.has("seeds")) {
    const json& seeds = s.raw("seeds");
    if (!seeds.is_array()) throw ConfigError("key '" + s.name("seeds") + "' must be an array");
    plan.seeds.clear();
    for (const auto& x : seeds) {
      if (!is_count(x)) throw ConfigError("key '" + s.name("seeds") + "' must hold integers");
      plan.seeds.push_back(x.get<std::uint64_t>());
    }
  } else if (s.has("repetitions")) {
    const auto reps = s.req<std::size_t>("repetitions");
    plan.seeds.clear();
    for (std::size_t i = 1; i <= reps; ++i) plan.seeds.push_back(i);
  }
  s.get("window_sweep", false);
  plan.threads = s.get("threads", plan.threads);
  s.finish();
  plan.validate();
  return plan;
}

void parse_rnn(Section s, RnnJob& job, std::uint64_t seed) {
  job.spec.cell = parse_cell(s.get<std::string>("cell", cell_name(job.spec.cell)));
  job.spec.input_len = s.get("input_len", job.spec.input_len);
  job.spec.hidden_units = s.get("hidden_units", job.spec.hidden_units);
  job.data.horizon_ms = s.get("horizon_ms", job.data.horizon_ms);
  job.eval_horizon_ms = s.get("eval_horizon_ms", job.data.horizon_ms);
  job.eval_stride = s.get("eval_stride", job.eval_stride);
  job.data.scale_floor_mm = s.get("scale_floor_mm", job.data.scale_floor_mm);
  job.data.count = s.get("dataset_size", job.data.count);
  job.data.traces = s.get("traces", job.data.traces);
  job.data.seed = s.get("dataset_seed", derive_seed(seed, 11));
  job.train.learning_rate = s.get("learning_rate", job.train.learning_rate);
  job.train.epochs = s.get("epochs", job.train.epochs);
  job.train.batch_size = s.get("batch_size", job.train.batch_size);
  job.train.seed = s.get("train_seed", derive_seed(seed, 12));
  s.finish();
  job.data.input_len = job.spec.input_len;
  job.train.dataset_size = job.data.count;
  job.spec.validate();
  job.train.validate();
}

void parse_service(Section s, ServiceConfig& svc) {
  svc.host = s.get("host", svc.host);
  svc.port = s.get("port", svc.port);
  svc.queue_limit = s.get("queue_limit", svc.queue_limit);
  svc.tick_ms = s.get("tick_ms", svc.tick_ms);
  svc.default_oneway_ms = s.get("inject_oneway_ms", svc.default_oneway_ms);
  s.finish();
  if (svc.queue_limit == 0) throw ConfigError("service.queue_limit must be >= 1");
  if (!(svc.tick_ms > 0.0)) throw ConfigError("service.tick_ms must be > 0");
  if (!(svc.default_oneway_ms >= 0.0)) throw ConfigError("service.inject_oneway_ms must be >= 0");
}

}  // namespace

PredictorKind parse_predictor(const json& j, const std::string& where, const std::filesystem::path& base_dir) {
  Section s(j, where);
  const auto kind = s.req<std::string>("kind");
  PredictorKind out;
  if (kind == "none") {
    out = NoPrediction{};
  } else if (kind == "dead_reckoning") {
    out = DeadReckoning{};
  } else if (kind == "lagrange") {
    out = Lagrange{s.get<std::size_t>("window", 3)};
  } else if (kind == "poly") {
    RegressionSpec spec;
    spec.order = s.get("order", spec.order);
    spec.window = s.get("window", spec.window);
    spec.ridge = s.get("ridge", spec.ridge);
    out = PolyRegression{spec};
  } else if (kind == "gru" || kind == "lstm") {
    const auto path = resolve(base_dir, s.req<std::string>("model"));
    auto model = std::make_shared<RnnModel>(model_from_json(read_json_file(path, "model file")));
    if (cell_name(model->spec.cell) != kind) {
      throw ConfigError("key '" + s.name("model") + "' holds a " + cell_name(model->spec.cell) + " model, not " + kind);
    }
    out = Recurrent{model};
  } else {
    throw ConfigError("key '" + s.name("kind") + "' has unknown value '" + kind + "'");
  }
  s.finish();
  try {
    validate_predictor(out);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return out;
}

AppConfig parse_config(const json& doc, std::optional<std::uint64_t> seed_override,
                       const std::filesystem::path& base_dir) {
  Section top(doc, "");
  AppConfig app;
  if (seed_override) {
    top.get<std::uint64_t>("seed", 0);
    app.seed = *seed_override;
  } else {
    app.seed = top.req<std::uint64_t>("seed");
  }
  SessionConfig& sc = app.session;
  reseed(sc, app.seed);

  if (top.has("trace")) parse_trace(top.sub("trace"), sc.profile, app, base_dir);
  if (top.has("noise")) {
    Section s = top.sub("noise");
    sc.noise.sigma_mm = s.get("sigma_mm", sc.noise.sigma_mm);
    sc.noise.seed = s.get("seed", sc.noise.seed);
    s.finish();
    if (!(sc.noise.sigma_mm >= 0.0)) throw ConfigError("key 'noise.sigma_mm' must be >= 0");
  }
  if (top.has("latency")) parse_latency(top.sub("latency"), sc.latency);
  if (top.has("predictor")) sc.predictor = parse_predictor(top.raw("predictor"), "predictor", base_dir);
  if (top.has("env")) sc.env = parse_env(top.sub("env"), derive_seed(app.seed, 3));
  if (top.has("session")) {
    Section s = top.sub("session");
    sc.duration_ms = s.get("duration_ms", sc.duration_ms);
    sc.client_override = s.get("client_override", sc.client_override);
    sc.keep_points = s.get("keep_points", sc.keep_points);
    s.finish();
  }
  if (app.trace_file) {
    std::ifstream in(*app.trace_file);
    if (!in) throw ConfigError("cannot open trace file '" + *app.trace_file + "'");
    try {
      sc.trace = read_trace(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("trace file '" + *app.trace_file + "': " + e.what());
    }
  }
  if (top.has("rnn")) parse_rnn(top.sub("rnn"), app.rnn, app.seed);
  else {
    app.rnn.data.seed = derive_seed(app.seed, 11);
    app.rnn.train.seed = derive_seed(app.seed, 12);
  }
  app.rnn.data.base_profile = sc.profile;
  app.rnn.data.sigma_mm = sc.noise.sigma_mm;
  if (top.has("service")) parse_service(top.sub("service"), app.service);
  if (top.has("bench")) app.bench = parse_bench(top.sub("bench"), sc);
  top.finish();
  sc.validate();
  return app;
}

AppConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  const json doc = read_json_file(path, "config file");
  return parse_config(doc, seed_override, path.parent_path());
}

json profile_to_json(const MotionProfile& p) {
  return {{"speed_mm_s", p.speed_mm_s},
          {"leg_duration_s", p.leg_duration_s},
          {"transition_duration_s", p.transition_duration_s},
          {"direction_changes", p.direction_changes},
          {"axis", vec_json(p.axis)},
          {"sample_interval_ms", p.sample_interval_ms}};
}

json noise_to_json(const NoiseModel& n) { return {{"sigma_mm", n.sigma_mm}, {"seed", n.seed}}; }

json latency_to_json(const LatencyModel& l) {
  return {{"input_min_ms", l.input_min_ms},
          {"input_max_ms", l.input_max_ms},
          {"render_min_ms", l.render_min_ms},
          {"render_max_ms", l.render_max_ms},
          {"net_oneway_ms", l.net_oneway_ms},
          {"jitter_ms", l.jitter_ms},
          {"loss_prob", l.loss_prob},
          {"server_frame_ms", l.server_frame_ms},
          {"display_refresh_ms", l.display_refresh_ms},
          {"seed", l.seed}};
}

json env_to_json(const EnvConfig& e) {
  return {{"particle_count", e.particle_count},
          {"interaction_radius_mm", e.interaction_radius_mm},
          {"stiffness", e.stiffness},
          {"damping", e.damping},
          {"dt_ms", e.dt_ms},
          {"bounds", {{"min", vec_json(e.bounds.min)}, {"max", vec_json(e.bounds.max)}}},
          {"seed", e.seed},
          {"snapshot_every", e.snapshot_every}};
}

json session_config_to_json(const SessionConfig& c) {
  json j{{"trace", c.trace ? json{{"source", "file"}, {"frames", c.trace->size()}}
                           : json{{"source", "generated"}, {"profile", profile_to_json(c.profile)}}},
         {"noise", noise_to_json(c.noise)},
         {"hand", {{"points", c.hand.rest_points.size()}, {"particles", c.hand.expansion_anchors.size()}}},
         {"predictor", predictor_to_json(c.predictor)},
         {"latency", latency_to_json(c.latency)},
         {"client_override", c.client_override},
         {"env", c.env ? env_to_json(*c.env) : json(nullptr)},
         {"duration_ms", c.duration_ms},
         {"seed", c.seed},
         {"keep_points", c.keep_points}};
  return j;
}

}  // namespace predsim
