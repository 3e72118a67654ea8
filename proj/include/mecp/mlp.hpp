#pragma once

#include "mecp/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mecp {

struct Dataset;

struct DenseLayer {
  Matrix W;  // out x in
  Vector b;
};

/// Per-feature affine maps: normalized = (raw - shift) / scale.
struct Normalization {
  Vector in_shift, in_scale;
  Vector out_shift, out_scale;
};

/// Fully connected regression network, tanh hidden layers and a linear output layer.
struct MlpModel {
  std::vector<int> arch;  // [inputs, hidden..., outputs]
  std::string activation = "tanh";
  Normalization norm;
  std::vector<DenseLayer> layers;

  int inputs() const { return arch.front(); }
  int outputs() const { return arch.back(); }
  void validate() const;
};

/// LeCun-uniform weights U(-sqrt(3 / fan_in), sqrt(3 / fan_in)), zero biases, identity normalization.
MlpModel init_model(const std::vector<int>& arch, std::uint64_t seed);

/// Raw inputs (columns) to raw outputs. Rejects non-finite input.
Matrix infer_batch(const MlpModel& model, const Matrix& inputs);
Vector infer(const MlpModel& model, const Vector& input);
/// Feedback query: input is [t_g, x].
Vector infer(const MlpModel& model, double time_to_go, const Vector& x);

/// Allocation-free single-query evaluation for the guidance loop.
class MlpEvaluator {
 public:
  explicit MlpEvaluator(const MlpModel& model);
  const Vector& operator()(double time_to_go, const Vector& x);

 private:
  const MlpModel& model_;
  std::vector<Vector> act_;
  Vector out_;
};

/// Column-major training pairs in raw units.
struct TrainingData {
  Matrix inputs;   // (1 + n) x N
  Matrix targets;  // m x N
};

TrainingData training_data(const Dataset& ds);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 1000;
  double target_mse = 1e-6;
  double validation_split = 0.1;
  std::uint64_t seed = 0;
  /// Learning rate multiplier applied after every epoch.
  double lr_decay = 1.0;
  /// Epochs without validation improvement before the log flags a stall (advisory only).
  std::size_t patience = 50;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_mse = 0.0;       // normalized targets, mean over samples and outputs
  double validation_mse = 0.0;  // NaN without a validation split
  double learning_rate = 0.0;
  double seconds = 0.0;
  bool validation_stalled = false;
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochLog> log;
  bool reached_target = false;
};

/// Adam on minibatches. Normalization statistics come from the training split; zero-variance
/// features keep scale 1. The output layer starts at zero. Stops at target_mse or max_epochs.
TrainResult train(const TrainingData& data, const std::vector<int>& hidden, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Mean squared error on normalized targets for raw (inputs, targets).
double normalized_mse(const MlpModel& model, const TrainingData& data);

/// Parameters flattened layer by layer as [vec(W), b].
Vector flatten_parameters(const MlpModel& model);
void assign_parameters(MlpModel& model, const Vector& theta);

/// Backprop gradient of normalized_mse with respect to flatten_parameters.
Vector loss_gradient(const MlpModel& model, const TrainingData& batch);

/// Max over parameters of |g_bp - g_fd| / max(|g_bp|, |g_fd|, 1e-3), central differences, step 1e-6.
double gradient_check(const MlpModel& model, const TrainingData& batch);

nlohmann::json to_json(const MlpModel& model);
MlpModel mlp_from_json(const nlohmann::json& j);
void write_model(const MlpModel& model, const std::string& path);
MlpModel read_model(const std::string& path);

/// Parses "20,20,20" into hidden layer widths. An empty string means no hidden layer.
std::vector<int> parse_hidden_layers(const std::string& spec);

}  // namespace mecp
