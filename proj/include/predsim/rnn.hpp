#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "predsim/trace.hpp"

namespace predsim {

enum class CellType { kGru, kLstm };

std::string cell_name(CellType cell);
CellType parse_cell(const std::string& name);

/// Single-layer recurrent regressor: input_len scalar steps, hidden_units,
/// one linear output.
struct RnnSpec {
  CellType cell{CellType::kGru};
  int input_len{60};
  int hidden_units{10};
  int output_units{1};

  void validate() const;
  int gates() const { return cell == CellType::kGru ? 3 : 4; }
  friend bool operator==(const RnnSpec&, const RnnSpec&) = default;
};

/// Offsets of each parameter block inside RnnModel::params.
///  W: gates*H input weights      U: gates*H*H recurrent weights (row-major,
///  b: gates*H biases                row = gate unit, col = hidden unit)
///  w_out: H readout weights       b_out: readout bias
/// GRU gate order is update, reset, candidate; LSTM is input, forget,
/// cell candidate, output.
struct ParamLayout {
  std::size_t w{0}, u{0}, b{0}, w_out{0}, b_out{0}, total{0};
  explicit ParamLayout(const RnnSpec& spec);
};

struct RnnModel {
  RnnSpec spec;
  double horizon_ms{40.0};
  /// Per-window scale is max(max - min, scale_floor_mm).
  double scale_floor_mm{10.0};
  std::vector<double> params;

  ParamLayout layout() const { return ParamLayout(spec); }
  friend bool operator==(const RnnModel&, const RnnModel&) = default;
};

RnnModel zero_model(const RnnSpec& spec, double horizon_ms);
/// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases (LSTM forget bias 1).
RnnModel random_model(const RnnSpec& spec, double horizon_ms, std::uint64_t seed);

struct CellState {
  std::vector<double> h;
  std::vector<double> c;  // LSTM only
};

CellState initial_state(const RnnSpec& spec);
CellState cell_step(const RnnModel& model, const CellState& state, double x);

/// Runs the window through the cell and applies the readout. Input and
/// output are in normalized units.
double forward(const RnnModel& model, std::span<const double> normalized_window);

struct NormalizedWindow {
  std::vector<double> values;
  double scale{1.0};
};

/// (x_i - x_last) / scale, scale = max(range, floor).
NormalizedWindow normalize_window(std::span<const double> raw, double scale_floor_mm);

/// Predicted displacement (mm) of the newest value at the model's horizon.
double predict_displacement(const RnnModel& model, std::span<const double> raw_window);

/// Throws ContractError unless h_ms matches the horizon the model was
/// trained for.
void check_horizon(const RnnModel& model, double h_ms);

struct Sample {
  std::vector<double> input;  // normalized, length input_len
  double target{0.0};         // normalized displacement
};

struct Dataset {
  double horizon_ms{40.0};
  double scale_floor_mm{10.0};
  std::vector<Sample> samples;
};

/// Squared error of one sample.
double sample_loss(const RnnModel& model, const Sample& sample);
double dataset_loss(const RnnModel& model, const Dataset& data);

/// Analytic gradient of sample_loss by backpropagation through time.
/// `grad` is resized to the parameter count; returns the loss.
double sample_gradient(const RnnModel& model, const Sample& sample, std::vector<double>& grad);

struct TrainConfig {
  double learning_rate{0.05};
  int epochs{30};
  std::size_t batch_size{32};
  std::uint64_t seed{1};
  std::size_t dataset_size{20000};

  void validate() const;
};

struct TrainResult {
  RnnModel model;
  /// Full-dataset mean loss before training and after each epoch.
  std::vector<double> loss_history;
  std::size_t best_epoch{0};
};

/// Mini-batch gradient descent on mean squared error. Returns the
/// lowest-loss model seen; throws TrainingDivergedError on non-finite loss.
TrainResult train(const RnnSpec& spec, const Dataset& data, const TrainConfig& config);
/// Same, starting from the given weights.
TrainResult train_from(RnnModel init, const Dataset& data, const TrainConfig& config);

struct GradCheckResult {
  double max_relative_error{0.0};
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Compares sample_gradient with central differences (eps = 1e-5) over
/// every parameter.
GradCheckResult grad_check(const RnnModel& model, const Sample& sample, double eps = 1e-5);

struct DatasetConfig {
  std::size_t count{20000};
  double horizon_ms{40.0};
  std::uint64_t seed{7};
  double sigma_mm{NoiseModel::kIdealSigmaMm};
  int input_len{60};
  double scale_floor_mm{10.0};
  MotionProfile base_profile{};
  std::size_t traces{24};
};

/// Windows drawn from traces with randomized speed, leg length, turnaround
/// time and travel axis around the base profile. Targets come from the
/// noiseless path.
Dataset make_training_dataset(const DatasetConfig& config);

/// Windows of one scalar signal sampled on a uniform grid; target is the
/// exact signal value `horizon_steps` samples ahead.
Dataset make_signal_dataset(std::span<const double> signal, int input_len, int horizon_steps,
                            double horizon_ms, double scale_floor_mm, std::size_t stride = 1);

nlohmann::json model_to_json(const RnnModel& model);
RnnModel model_from_json(const nlohmann::json& j);

}  // namespace predsim
