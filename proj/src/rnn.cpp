#include "predsim/rnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "predsim/errors.hpp"
#include "predsim/rng.hpp"

namespace predsim {

std::string cell_name(CellType cell) { return cell == CellType::kGru ? "gru" : "lstm"; }

CellType parse_cell(const std::string& name) {
  if (name == "gru") return CellType::kGru;
  if (name == "lstm") return CellType::kLstm;
  throw ConfigError("unknown cell type '" + name + "' (expected gru or lstm)");
}

void RnnSpec::validate() const {
  if (input_len < 1 || hidden_units < 1 || output_units != 1) {
    throw ConfigError("rnn spec: input_len and hidden_units must be >= 1, output_units must be 1");
  }
}

ParamLayout::ParamLayout(const RnnSpec& spec) {
  const std::size_t g = static_cast<std::size_t>(spec.gates());
  const std::size_t h = static_cast<std::size_t>(spec.hidden_units);
  w = 0;
  u = w + g * h;
  b = u + g * h * h;
  w_out = b + g * h;
  b_out = w_out + h;
  total = b_out + 1;
}

RnnModel zero_model(const RnnSpec& spec, double horizon_ms) {
  spec.validate();
  RnnModel m;
  m.spec = spec;
  m.horizon_ms = horizon_ms;
  m.params.assign(ParamLayout(spec).total, 0.0);
  return m;
}

RnnModel random_model(const RnnSpec& spec, double horizon_ms, std::uint64_t seed) {
  RnnModel m = zero_model(spec, horizon_ms);
  const ParamLayout lay(spec);
  const double k = 1.0 / std::sqrt(static_cast<double>(spec.hidden_units));
  Rng rng(seed);
  for (std::size_t i = 0; i < lay.b; ++i) m.params[i] = rng.uniform(-k, k);
  for (std::size_t i = lay.w_out; i < lay.b_out; ++i) m.params[i] = rng.uniform(-k, k);
  if (spec.cell == CellType::kLstm) {
    const std::size_t h = static_cast<std::size_t>(spec.hidden_units);
    for (std::size_t i = 0; i < h; ++i) m.params[lay.b + h + i] = 1.0;
  }
  return m;
}

namespace {

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

/// One cell update. `gates` receives the G*H activations for backprop.
void step_into(const RnnModel& m, const ParamLayout& lay, double x, const double* h_prev,
               const double* c_prev, double* gates, double* h_out, double* c_out) {
  const int hn = m.spec.hidden_units;
  const double* W = m.params.data() + lay.w;
  const double* U = m.params.data() + lay.u;
  const double* B = m.params.data() + lay.b;
  if (m.spec.cell == CellType::kGru) {
    double* z = gates;
    double* r = gates + hn;
    double* n = gates + 2 * hn;
    for (int k = 0; k < hn; ++k) {
      double az = W[k] * x + B[k];
      double ar = W[hn + k] * x + B[hn + k];
      const double* uz = U + static_cast<std::size_t>(k) * hn;
      const double* ur = U + static_cast<std::size_t>(hn + k) * hn;
      for (int j = 0; j < hn; ++j) {
        az += uz[j] * h_prev[j];
        ar += ur[j] * h_prev[j];
      }
      z[k] = sigmoid(az);
      r[k] = sigmoid(ar);
    }
    for (int k = 0; k < hn; ++k) {
      double an = W[2 * hn + k] * x + B[2 * hn + k];
      const double* un = U + static_cast<std::size_t>(2 * hn + k) * hn;
      for (int j = 0; j < hn; ++j) an += un[j] * (r[j] * h_prev[j]);
      n[k] = std::tanh(an);
    }
    for (int k = 0; k < hn; ++k) h_out[k] = (1.0 - z[k]) * h_prev[k] + z[k] * n[k];
    return;
  }
  double* ig = gates;
  double* fg = gates + hn;
  double* gg = gates + 2 * hn;
  double* og = gates + 3 * hn;
  for (int g = 0; g < 4; ++g) {
    for (int k = 0; k < hn; ++k) {
      const int row = g * hn + k;
      double a = W[row] * x + B[row];
      const double* ur = U + static_cast<std::size_t>(row) * hn;
      for (int j = 0; j < hn; ++j) a += ur[j] * h_prev[j];
      gates[row] = (g == 2) ? std::tanh(a) : sigmoid(a);
    }
  }
  for (int k = 0; k < hn; ++k) {
    c_out[k] = fg[k] * c_prev[k] + ig[k] * gg[k];
    h_out[k] = og[k] * std::tanh(c_out[k]);
  }
}

struct Tape {
  int steps{0};
  int hidden{0};
  int gates{0};
  std::vector<double> x;
  std::vector<double> h;  // (steps + 1) * hidden
  std::vector<double> c;
  std::vector<double> g;  // steps * gates * hidden
};

double run_forward(const RnnModel& m, const ParamLayout& lay, std::span<const double> input, Tape& tape) {
  const int hn = m.spec.hidden_units;
  const int gn = m.spec.gates();
  const int steps = static_cast<int>(input.size());
  tape.steps = steps;
  tape.hidden = hn;
  tape.gates = gn;
  tape.x.assign(input.begin(), input.end());
  tape.h.assign(static_cast<std::size_t>(steps + 1) * hn, 0.0);
  tape.c.assign(static_cast<std::size_t>(steps + 1) * hn, 0.0);
  tape.g.assign(static_cast<std::size_t>(steps) * gn * hn, 0.0);
  for (int t = 0; t < steps; ++t) {
    const std::size_t o = static_cast<std::size_t>(t) * hn;
    step_into(m, lay, input[t], tape.h.data() + o, tape.c.data() + o,
              tape.g.data() + static_cast<std::size_t>(t) * gn * hn, tape.h.data() + o + hn,
              tape.c.data() + o + hn);
  }
  const double* wo = m.params.data() + lay.w_out;
  const double* hl = tape.h.data() + static_cast<std::size_t>(steps) * hn;
  double y = m.params[lay.b_out];
  for (int k = 0; k < hn; ++k) y += wo[k] * hl[k];
  return y;
}

void run_backward(const RnnModel& m, const ParamLayout& lay, const Tape& tape, double dy,
                  std::vector<double>& grad) {
  const int hn = tape.hidden;
  const int gn = tape.gates;
  const double* U = m.params.data() + lay.u;
  const double* wo = m.params.data() + lay.w_out;
  double* gW = grad.data() + lay.w;
  double* gU = grad.data() + lay.u;
  double* gB = grad.data() + lay.b;

  const double* hl = tape.h.data() + static_cast<std::size_t>(tape.steps) * hn;
  for (int k = 0; k < hn; ++k) grad[lay.w_out + k] += dy * hl[k];
  grad[lay.b_out] += dy;

  std::vector<double> dh(hn), dc(hn, 0.0), dh_prev(hn), dc_prev(hn), da(static_cast<std::size_t>(gn) * hn);
  for (int k = 0; k < hn; ++k) dh[k] = dy * wo[k];

  for (int t = tape.steps - 1; t >= 0; --t) {
    const double x = tape.x[t];
    const double* hp = tape.h.data() + static_cast<std::size_t>(t) * hn;
    const double* gt = tape.g.data() + static_cast<std::size_t>(t) * gn * hn;
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);

    if (m.spec.cell == CellType::kGru) {
      const double* z = gt;
      const double* r = gt + hn;
      const double* n = gt + 2 * hn;
      double* daz = da.data();
      double* dar = da.data() + hn;
      double* dan = da.data() + 2 * hn;
      for (int k = 0; k < hn; ++k) {
        const double dz = dh[k] * (n[k] - hp[k]);
        const double dn = dh[k] * z[k];
        dh_prev[k] += dh[k] * (1.0 - z[k]);
        dan[k] = dn * (1.0 - n[k] * n[k]);
        daz[k] = dz * z[k] * (1.0 - z[k]);
      }
      // Candidate path goes through r (.) h_prev.
      std::vector<double> drh(hn, 0.0);
      for (int k = 0; k < hn; ++k) {
        const std::size_t row = static_cast<std::size_t>(2 * hn + k);
        const double* un = U + row * hn;
        double* gun = gU + row * hn;
        for (int j = 0; j < hn; ++j) {
          gun[j] += dan[k] * r[j] * hp[j];
          drh[j] += un[j] * dan[k];
        }
      }
      for (int j = 0; j < hn; ++j) {
        dar[j] = drh[j] * hp[j] * r[j] * (1.0 - r[j]);
        dh_prev[j] += drh[j] * r[j];
      }
      for (int g = 0; g < 3; ++g) {
        for (int k = 0; k < hn; ++k) {
          const std::size_t row = static_cast<std::size_t>(g * hn + k);
          gW[row] += da[row] * x;
          gB[row] += da[row];
        }
      }
      for (int g = 0; g < 2; ++g) {
        for (int k = 0; k < hn; ++k) {
          const std::size_t row = static_cast<std::size_t>(g * hn + k);
          const double* ur = U + row * hn;
          double* gur = gU + row * hn;
          for (int j = 0; j < hn; ++j) {
            gur[j] += da[row] * hp[j];
            dh_prev[j] += ur[j] * da[row];
          }
        }
      }
      std::swap(dh, dh_prev);
      continue;
    }

    const double* cp = tape.c.data() + static_cast<std::size_t>(t) * hn;
    const double* cn = tape.c.data() + static_cast<std::size_t>(t + 1) * hn;
    const double* ig = gt;
    const double* fg = gt + hn;
    const double* gg = gt + 2 * hn;
    const double* og = gt + 3 * hn;
    for (int k = 0; k < hn; ++k) {
      const double tc = std::tanh(cn[k]);
      const double d_o = dh[k] * tc;
      const double dct = dc[k] + dh[k] * og[k] * (1.0 - tc * tc);
      da[k] = dct * gg[k] * ig[k] * (1.0 - ig[k]);
      da[hn + k] = dct * cp[k] * fg[k] * (1.0 - fg[k]);
      da[2 * hn + k] = dct * ig[k] * (1.0 - gg[k] * gg[k]);
      da[3 * hn + k] = d_o * og[k] * (1.0 - og[k]);
      dc_prev[k] = dct * fg[k];
    }
    for (int row = 0; row < 4 * hn; ++row) {
      gW[row] += da[row] * x;
      gB[row] += da[row];
      const double* ur = U + static_cast<std::size_t>(row) * hn;
      double* gur = gU + static_cast<std::size_t>(row) * hn;
      for (int j = 0; j < hn; ++j) {
        gur[j] += da[row] * hp[j];
        dh_prev[j] += ur[j] * da[row];
      }
    }
    std::swap(dh, dh_prev);
    std::swap(dc, dc_prev);
  }
}

void check_input(const RnnModel& m, std::span<const double> input) {
  if (static_cast<int>(input.size()) != m.spec.input_len) {
    throw ContractError("rnn: window length " + std::to_string(input.size()) + " != input_len " +
                        std::to_string(m.spec.input_len));
  }
  if (m.params.size() != ParamLayout(m.spec).total) {
    throw ContractError("rnn: parameter count does not match the spec");
  }
}

}  // namespace

CellState initial_state(const RnnSpec& spec) {
  CellState s;
  s.h.assign(static_cast<std::size_t>(spec.hidden_units), 0.0);
  if (spec.cell == CellType::kLstm) s.c.assign(static_cast<std::size_t>(spec.hidden_units), 0.0);
  return s;
}

CellState cell_step(const RnnModel& model, const CellState& state, double x) {
  const std::size_t hn = static_cast<std::size_t>(model.spec.hidden_units);
  if (state.h.size() != hn || (model.spec.cell == CellType::kLstm && state.c.size() != hn)) {
    throw ContractError("cell_step: state shape does not match the spec");
  }
  const ParamLayout lay(model.spec);
  CellState out = initial_state(model.spec);
  std::vector<double> gates(static_cast<std::size_t>(model.spec.gates()) * hn);
  std::vector<double> c_scratch(hn, 0.0);
  const double* c_prev = model.spec.cell == CellType::kLstm ? state.c.data() : c_scratch.data();
  double* c_out = model.spec.cell == CellType::kLstm ? out.c.data() : c_scratch.data();
  step_into(model, lay, x, state.h.data(), c_prev, gates.data(), out.h.data(), c_out);
  return out;
}

double forward(const RnnModel& model, std::span<const double> normalized_window) {
  check_input(model, normalized_window);
  Tape tape;
  return run_forward(model, ParamLayout(model.spec), normalized_window, tape);
}

NormalizedWindow normalize_window(std::span<const double> raw, double scale_floor_mm) {
  if (raw.empty()) throw ContractError("normalize_window: empty window");
  if (!(scale_floor_mm > 0.0)) throw ContractError("normalize_window: scale floor must be > 0");
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  NormalizedWindow out;
  out.scale = std::max(*hi - *lo, scale_floor_mm);
  const double last = raw.back();
  out.values.reserve(raw.size());
  for (double v : raw) out.values.push_back((v - last) / out.scale);
  return out;
}

double predict_displacement(const RnnModel& model, std::span<const double> raw_window) {
  const NormalizedWindow nw = normalize_window(raw_window, model.scale_floor_mm);
  return forward(model, nw.values) * nw.scale;
}

void check_horizon(const RnnModel& model, double h_ms) {
  if (std::abs(h_ms - model.horizon_ms) > 1e-6) {
    throw ContractError("rnn model trained for " + std::to_string(model.horizon_ms) +
                        " ms queried at " + std::to_string(h_ms) + " ms");
  }
}

double sample_loss(const RnnModel& model, const Sample& sample) {
  const double e = forward(model, sample.input) - sample.target;
  return e * e;
}

double dataset_loss(const RnnModel& model, const Dataset& data) {
  if (data.samples.empty()) throw ContractError("dataset_loss: empty dataset");
  const ParamLayout lay(model.spec);
  Tape tape;
  double sum = 0.0;
  for (const auto& s : data.samples) {
    check_input(model, s.input);
    const double e = run_forward(model, lay, s.input, tape) - s.target;
    sum += e * e;
  }
  return sum / static_cast<double>(data.samples.size());
}

double sample_gradient(const RnnModel& model, const Sample& sample, std::vector<double>& grad) {
  check_input(model, sample.input);
  const ParamLayout lay(model.spec);
  grad.assign(lay.total, 0.0);
  Tape tape;
  const double e = run_forward(model, lay, sample.input, tape) - sample.target;
  run_backward(model, lay, tape, 2.0 * e, grad);
  return e * e;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("rnn.learning_rate must be finite and >= 0");
  }
  if (epochs < 0) throw ConfigError("rnn.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("rnn.batch_size must be >= 1");
}

TrainResult train(const RnnSpec& spec, const Dataset& data, const TrainConfig& config) {
  return train_from(random_model(spec, data.horizon_ms, derive_seed(config.seed, 0)), data, config);
}

TrainResult train_from(RnnModel init, const Dataset& data, const TrainConfig& config) {
  config.validate();
  init.spec.validate();
  if (data.samples.empty()) throw ContractError("train: empty dataset");
  init.horizon_ms = data.horizon_ms;
  init.scale_floor_mm = data.scale_floor_mm;

  const ParamLayout lay(init.spec);
  TrainResult result;
  result.model = init;
  RnnModel model = std::move(init);

  const double initial = dataset_loss(model, data);
  if (!std::isfinite(initial)) throw TrainingDivergedError("train: initial loss is not finite");
  result.loss_history.push_back(initial);
  double best = initial;

  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(config.seed, 1));
  std::vector<double> batch_grad(lay.total), one(lay.total);
  Tape tape;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const Sample& s = data.samples[order[b]];
        check_input(model, s.input);
        const double e = run_forward(model, lay, s.input, tape) - s.target;
        run_backward(model, lay, tape, 2.0 * e, batch_grad);
      }
      const double step = config.learning_rate / static_cast<double>(end - start);
      for (std::size_t p = 0; p < lay.total; ++p) model.params[p] -= step * batch_grad[p];
    }
    const double loss = dataset_loss(model, data);
    if (!std::isfinite(loss)) {
      throw TrainingDivergedError("train: loss became non-finite at epoch " + std::to_string(epoch) +
                                  "; lower rnn.learning_rate");
    }
    result.loss_history.push_back(loss);
    if (loss < best) {
      best = loss;
      result.model = model;
      result.best_epoch = static_cast<std::size_t>(epoch);
    }
  }
  return result;
}

GradCheckResult grad_check(const RnnModel& model, const Sample& sample, double eps) {
  GradCheckResult r;
  sample_gradient(model, sample, r.analytic);
  r.numeric.assign(r.analytic.size(), 0.0);
  RnnModel probe = model;
  for (std::size_t p = 0; p < probe.params.size(); ++p) {
    const double orig = probe.params[p];
    probe.params[p] = orig + eps;
    const double up = sample_loss(probe, sample);
    probe.params[p] = orig - eps;
    const double down = sample_loss(probe, sample);
    probe.params[p] = orig;
    r.numeric[p] = (up - down) / (2.0 * eps);
    const double a = r.analytic[p];
    const double n = r.numeric[p];
    const double denom = std::max({std::abs(a), std::abs(n), 1e-6});
    r.max_relative_error = std::max(r.max_relative_error, std::abs(a - n) / denom);
  }
  return r;
}

Dataset make_training_dataset(const DatasetConfig& config) {
  if (config.count == 0 || config.traces == 0) throw ConfigError("rnn dataset: count and traces must be > 0");
  Dataset data;
  data.horizon_ms = config.horizon_ms;
  data.scale_floor_mm = config.scale_floor_mm;
  data.samples.reserve(config.count);
  Rng rng(config.seed);
  const HandTemplate& tmpl = default_template();
  std::vector<double> raw(static_cast<std::size_t>(config.input_len));

  for (std::size_t tr = 0; tr < config.traces; ++tr) {
    MotionProfile prof = config.base_profile;
    prof.speed_mm_s *= rng.uniform(0.6, 1.4);
    prof.leg_duration_s *= rng.uniform(0.4, 1.2);
    prof.transition_duration_s *= rng.uniform(0.6, 1.5);
    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    axis *= 1.0 / norm(axis);
    prof.axis = axis;
    const NoiseModel noise{config.sigma_mm, derive_seed(config.seed, 100 + tr)};
    const auto frames = gen_trace(prof, tmpl, noise);
    const MotionPath path(prof);

    const std::size_t want = config.count / config.traces + (tr < config.count % config.traces ? 1 : 0);
    const std::size_t first = static_cast<std::size_t>(config.input_len - 1);
    std::size_t last = frames.size() - 1;
    while (last > first && frames[last].t_ms + config.horizon_ms > path.duration_ms()) --last;
    if (last <= first) throw ConfigError("rnn dataset: trace too short for input_len and horizon");

    for (std::size_t w = 0; w < want; ++w) {
      const std::size_t i = first + rng.below(last - first + 1);
      const std::size_t p = rng.below(tmpl.rest_points.size());
      const int axis_idx = static_cast<int>(rng.below(3));
      for (int k = 0; k < config.input_len; ++k) {
        raw[static_cast<std::size_t>(k)] = frames[i + 1 - config.input_len + k].points[p][axis_idx];
      }
      const double truth =
          tmpl.rest_points[p][axis_idx] + path.displacement(frames[i].t_ms + config.horizon_ms)[axis_idx];
      NormalizedWindow nw = normalize_window(raw, config.scale_floor_mm);
      data.samples.push_back({std::move(nw.values), (truth - raw.back()) / nw.scale});
    }
  }
  return data;
}

Dataset make_signal_dataset(std::span<const double> signal, int input_len, int horizon_steps,
                            double horizon_ms, double scale_floor_mm, std::size_t stride) {
  if (input_len < 1 || horizon_steps < 0 || stride == 0) throw ContractError("make_signal_dataset: bad shape");
  Dataset data;
  data.horizon_ms = horizon_ms;
  data.scale_floor_mm = scale_floor_mm;
  const std::size_t need = static_cast<std::size_t>(input_len + horizon_steps);
  for (std::size_t s = 0; s + need <= signal.size(); s += stride) {
    const auto win = signal.subspan(s, static_cast<std::size_t>(input_len));
    NormalizedWindow nw = normalize_window(win, scale_floor_mm);
    const double target = signal[s + static_cast<std::size_t>(input_len - 1 + horizon_steps)] - win.back();
    data.samples.push_back({std::move(nw.values), target / nw.scale});
  }
  return data;
}

nlohmann::json model_to_json(const RnnModel& model) {
  const ParamLayout lay(model.spec);
  auto block = [&](std::size_t from, std::size_t to) {
    return std::vector<double>(model.params.begin() + static_cast<std::ptrdiff_t>(from),
                               model.params.begin() + static_cast<std::ptrdiff_t>(to));
  };
  return {
      {"spec",
       {{"cell", cell_name(model.spec.cell)},
        {"input_len", model.spec.input_len},
        {"hidden_units", model.spec.hidden_units},
        {"output_units", model.spec.output_units}}},
      {"horizon_ms", model.horizon_ms},
      {"normalization", {{"scale_floor_mm", model.scale_floor_mm}}},
      {"weights",
       {{"W", block(lay.w, lay.u)},
        {"U", block(lay.u, lay.b)},
        {"b", block(lay.b, lay.w_out)},
        {"w_out", block(lay.w_out, lay.b_out)},
        {"b_out", block(lay.b_out, lay.total)}}},
  };
}

RnnModel model_from_json(const nlohmann::json& j) {
  try {
    RnnModel m;
    const auto& s = j.at("spec");
    m.spec.cell = parse_cell(s.at("cell").get<std::string>());
    m.spec.input_len = s.at("input_len").get<int>();
    m.spec.hidden_units = s.at("hidden_units").get<int>();
    m.spec.output_units = s.at("output_units").get<int>();
    m.spec.validate();
    m.horizon_ms = j.at("horizon_ms").get<double>();
    m.scale_floor_mm = j.at("normalization").at("scale_floor_mm").get<double>();
    const ParamLayout lay(m.spec);
    const auto& w = j.at("weights");
    const std::pair<const char*, std::size_t> blocks[] = {{"W", lay.u - lay.w},
                                                          {"U", lay.b - lay.u},
                                                          {"b", lay.w_out - lay.b},
                                                          {"w_out", lay.b_out - lay.w_out},
                                                          {"b_out", 1}};
    for (const auto& [name, size] : blocks) {
      auto v = w.at(name).get<std::vector<double>>();
      if (v.size() != size) throw ConfigError(std::string("model weights '") + name + "' has wrong size");
      for (double x : v) {
        if (!std::isfinite(x)) throw ConfigError(std::string("model weights '") + name + "' not finite");
      }
      m.params.insert(m.params.end(), v.begin(), v.end());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model file: ") + e.what());
  }
}

}  // namespace predsim
