#include "mecp/mlp.hpp"

#include "mecp/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace mecp {

void MlpModel::validate() const {
  if (arch.size() < 2) throw ConfigError("model arch needs at least input and output sizes");
  for (int w : arch)
    if (w < 1) throw ConfigError("model arch entries must be positive");
  if (activation != "tanh") throw ConfigError("unsupported activation '" + activation + "'");
  if (layers.size() != arch.size() - 1) throw ConfigError("model has " + std::to_string(layers.size()) + " layers, arch implies " + std::to_string(arch.size() - 1));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].W.rows() != arch[l + 1] || layers[l].W.cols() != arch[l] || layers[l].b.size() != arch[l + 1])
      throw ConfigError("layer " + std::to_string(l) + " shape does not match arch");
  }
  if (norm.in_shift.size() != inputs() || norm.in_scale.size() != inputs() || norm.out_shift.size() != outputs() ||
      norm.out_scale.size() != outputs())
    throw ConfigError("normalization statistics do not match arch");
}

MlpModel init_model(const std::vector<int>& arch, std::uint64_t seed) {
  MlpModel model;
  model.arch = arch;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t l = 0; l + 1 < arch.size(); ++l) {
    const double bound = std::sqrt(3.0 / arch[l]);
    DenseLayer layer{Matrix(arch[l + 1], arch[l]), Vector::Zero(arch[l + 1])};
    for (Eigen::Index j = 0; j < layer.W.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.W.rows(); ++i) layer.W(i, j) = bound * unit(rng);
    model.layers.push_back(std::move(layer));
  }
  model.norm = {Vector::Zero(arch.front()), Vector::Ones(arch.front()), Vector::Zero(arch.back()),
                Vector::Ones(arch.back())};
  model.validate();
  return model;
}

namespace {

// tanh(z) = 1 - 2 / (exp(2z) + 1); Eigen vectorizes exp for doubles but not tanh
template <class Derived>
void tanh_inplace(Eigen::MatrixBase<Derived>& z) {
  z = (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
}

// Forward pass in normalized space; acts[0] is the input, acts.back() the output.
void forward(const MlpModel& model, const Matrix& input, std::vector<Matrix>& acts) {
  const std::size_t L = model.layers.size();
  acts.resize(L + 1);
  acts[0] = input;
  for (std::size_t l = 0; l < L; ++l) {
    acts[l + 1].noalias() = model.layers[l].W * acts[l];
    acts[l + 1].colwise() += model.layers[l].b;
    if (l + 1 < L) tanh_inplace(acts[l + 1]);
  }
}

Matrix normalize_inputs(const MlpModel& model, const Matrix& raw) {
  return (raw.colwise() - model.norm.in_shift).array().colwise() / model.norm.in_scale.array();
}

Matrix normalize_targets(const MlpModel& model, const Matrix& raw) {
  return (raw.colwise() - model.norm.out_shift).array().colwise() / model.norm.out_scale.array();
}

struct Gradient {
  std::vector<Matrix> W;
  std::vector<Vector> b;
};

// Gradient of mean((y - t)^2) over the batch in normalized space. Returns the batch loss.
double backward(const MlpModel& model, const Matrix& x, const Matrix& t, std::vector<Matrix>& acts, Gradient& g) {
  forward(model, x, acts);
  const std::size_t L = model.layers.size();
  g.W.resize(L);
  g.b.resize(L);
  Matrix delta = acts[L] - t;
  const double loss = delta.squaredNorm() / static_cast<double>(delta.size());
  delta *= 2.0 / static_cast<double>(delta.size());
  for (std::size_t l = L; l-- > 0;) {
    g.W[l].noalias() = delta * acts[l].transpose();
    g.b[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = model.layers[l].W.transpose() * delta;
      delta = back.array() * (1.0 - acts[l].array().square());
    }
  }
  return loss;
}

double mse_normalized_space(const MlpModel& model, const Matrix& x, const Matrix& t) {
  std::vector<Matrix> acts;
  double sum = 0.0;
  const Eigen::Index chunk = 4096;
  for (Eigen::Index c = 0; c < x.cols(); c += chunk) {
    const Eigen::Index w = std::min(chunk, x.cols() - c);
    forward(model, x.middleCols(c, w), acts);
    sum += (acts.back() - t.middleCols(c, w)).squaredNorm();
  }
  return sum / static_cast<double>(t.size());
}

void feature_stats(const Matrix& data, Vector& mean, Vector& scale) {
  const double count = static_cast<double>(data.cols());
  mean = data.rowwise().mean();
  scale.resize(data.rows());
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const double var = (data.row(i).array() - mean(i)).square().sum() / count;
    const double sd = std::sqrt(var);
    scale(i) = sd > 1e-12 * std::max(1.0, std::abs(mean(i))) ? sd : 1.0;
  }
}

}  // namespace

Matrix infer_batch(const MlpModel& model, const Matrix& inputs) {
  if (inputs.rows() != model.inputs()) throw ContractViolation("inference input has the wrong size");
  if (!inputs.allFinite()) throw DomainError("non-finite network input");
  std::vector<Matrix> acts;
  forward(model, normalize_inputs(model, inputs), acts);
  return (acts.back().array().colwise() * model.norm.out_scale.array()).colwise() + model.norm.out_shift.array();
}

Vector infer(const MlpModel& model, const Vector& input) { return infer_batch(model, input); }

Vector infer(const MlpModel& model, double time_to_go, const Vector& x) {
  Vector in(x.size() + 1);
  in << time_to_go, x;
  return infer(model, in);
}

MlpEvaluator::MlpEvaluator(const MlpModel& model) : model_(model) {
  model.validate();
  act_.resize(model.arch.size());
  for (std::size_t l = 0; l < model.arch.size(); ++l) act_[l].resize(model.arch[l]);
  out_.resize(model.outputs());
}

const Vector& MlpEvaluator::operator()(double time_to_go, const Vector& x) {
  if (x.size() + 1 != model_.inputs()) throw ContractViolation("inference input has the wrong size");
  if (!std::isfinite(time_to_go) || !x.allFinite()) throw DomainError("non-finite network input");
  act_[0](0) = time_to_go;
  act_[0].tail(x.size()) = x;
  act_[0] = (act_[0] - model_.norm.in_shift).cwiseQuotient(model_.norm.in_scale);
  const std::size_t L = model_.layers.size();
  for (std::size_t l = 0; l < L; ++l) {
    act_[l + 1].noalias() = model_.layers[l].W * act_[l];
    act_[l + 1] += model_.layers[l].b;
    if (l + 1 < L) tanh_inplace(act_[l + 1]);
  }
  out_ = act_[L].cwiseProduct(model_.norm.out_scale) + model_.norm.out_shift;
  return out_;
}

TrainingData training_data(const Dataset& ds) {
  const int n = ds.meta.state_dim, m = ds.meta.control_dim;
  const auto N = static_cast<Eigen::Index>(ds.records.size());
  TrainingData d{Matrix(n + 1, N), Matrix(m, N)};
  for (Eigen::Index i = 0; i < N; ++i) {
    const Record& r = ds.records[i];
    if (r.x.size() != n || r.u.size() != m)
      throw ContractViolation("record " + std::to_string(i) + " does not match the dataset dimensions");
    d.inputs(0, i) = r.time_to_go;
    d.inputs.col(i).tail(n) = r.x;
    d.targets.col(i) = r.u;
  }
  return d;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("training.learning_rate: must be positive");
  if (batch_size < 1) throw ConfigError("training.batch_size: must be at least 1");
  if (!(target_mse > 0.0)) throw ConfigError("training.target_mse: must be positive");
  if (!(validation_split >= 0.0 && validation_split < 1.0))
    throw ConfigError("training.validation_split: must lie in [0, 1)");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("training.lr_decay: must lie in (0, 1]");
}

double normalized_mse(const MlpModel& model, const TrainingData& data) {
  return mse_normalized_space(model, normalize_inputs(model, data.inputs), normalize_targets(model, data.targets));
}

TrainResult train(const TrainingData& data, const std::vector<int>& hidden, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  const Eigen::Index N = data.inputs.cols();
  if (N == 0) throw EmptyDatasetError("cannot train on an empty dataset");
  if (data.targets.cols() != N) throw ContractViolation("inputs and targets disagree in count");
  if (!data.inputs.allFinite() || !data.targets.allFinite()) throw DomainError("training data is not finite");

  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<Eigen::Index>(std::floor(cfg.validation_split * static_cast<double>(N)));
  if (n_val >= N) n_val = N - 1;
  const Eigen::Index n_train = N - n_val;

  std::vector<int> arch{static_cast<int>(data.inputs.rows())};
  arch.insert(arch.end(), hidden.begin(), hidden.end());
  arch.push_back(static_cast<int>(data.targets.rows()));

  TrainResult result;
  result.model = init_model(arch, cfg.seed);
  MlpModel& model = result.model;
  // start from the target mean; a constant target is then fitted exactly
  model.layers.back().W.setZero();

  Matrix x_train(data.inputs.rows(), n_train), t_train(data.targets.rows(), n_train);
  Matrix x_val(data.inputs.rows(), n_val), t_val(data.targets.rows(), n_val);
  for (Eigen::Index i = 0; i < n_train; ++i) {
    x_train.col(i) = data.inputs.col(order[i]);
    t_train.col(i) = data.targets.col(order[i]);
  }
  for (Eigen::Index i = 0; i < n_val; ++i) {
    x_val.col(i) = data.inputs.col(order[n_train + i]);
    t_val.col(i) = data.targets.col(order[n_train + i]);
  }
  feature_stats(x_train, model.norm.in_shift, model.norm.in_scale);
  feature_stats(t_train, model.norm.out_shift, model.norm.out_scale);
  x_train = normalize_inputs(model, x_train);
  t_train = normalize_targets(model, t_train);
  x_val = normalize_inputs(model, x_val);
  t_val = normalize_targets(model, t_val);

  const std::size_t L = model.layers.size();
  std::vector<Matrix> mW(L), vW(L);
  std::vector<Vector> mb(L), vb(L);
  for (std::size_t l = 0; l < L; ++l) {
    mW[l] = vW[l] = Matrix::Zero(model.layers[l].W.rows(), model.layers[l].W.cols());
    mb[l] = vb[l] = Vector::Zero(model.layers[l].b.size());
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double lr = cfg.learning_rate;
  long step = 0;
  const auto batch = static_cast<Eigen::Index>(std::min<std::size_t>(cfg.batch_size, n_train));

  std::vector<Eigen::Index> perm(n_train);
  std::iota(perm.begin(), perm.end(), 0);
  Matrix xb, tb;
  std::vector<Matrix> acts;
  Gradient g;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index start = 0; start < n_train; start += batch) {
      const Eigen::Index w = std::min(batch, n_train - start);
      xb.resize(x_train.rows(), w);
      tb.resize(t_train.rows(), w);
      for (Eigen::Index j = 0; j < w; ++j) {
        xb.col(j) = x_train.col(perm[start + j]);
        tb.col(j) = t_train.col(perm[start + j]);
      }
      backward(model, xb, tb, acts, g);
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      const double a = lr * std::sqrt(c2) / c1;
      for (std::size_t l = 0; l < L; ++l) {
        mW[l] = beta1 * mW[l] + (1.0 - beta1) * g.W[l];
        vW[l] = beta2 * vW[l] + (1.0 - beta2) * g.W[l].cwiseAbs2();
        model.layers[l].W.array() -= a * mW[l].array() / (vW[l].array().sqrt() + eps);
        mb[l] = beta1 * mb[l] + (1.0 - beta1) * g.b[l];
        vb[l] = beta2 * vb[l] + (1.0 - beta2) * g.b[l].cwiseAbs2();
        model.layers[l].b.array() -= a * mb[l].array() / (vb[l].array().sqrt() + eps);
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.learning_rate = lr;
    entry.train_mse = mse_normalized_space(model, x_train, t_train);
    entry.validation_mse =
        n_val > 0 ? mse_normalized_space(model, x_val, t_val) : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(entry.train_mse)) throw TrainingError("training loss is not finite", epoch);
    if (n_val > 0) {
      if (entry.validation_mse < best_val) {
        best_val = entry.validation_mse;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        entry.validation_stalled = true;
      }
    }
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (entry.train_mse < cfg.target_mse) {
      result.reached_target = true;
      break;
    }
    lr *= cfg.lr_decay;
  }
  return result;
}

Vector flatten_parameters(const MlpModel& model) {
  Eigen::Index size = 0;
  for (const DenseLayer& l : model.layers) size += l.W.size() + l.b.size();
  Vector theta(size);
  Eigen::Index k = 0;
  for (const DenseLayer& l : model.layers) {
    theta.segment(k, l.W.size()) = l.W.reshaped();
    k += l.W.size();
    theta.segment(k, l.b.size()) = l.b;
    k += l.b.size();
  }
  return theta;
}

void assign_parameters(MlpModel& model, const Vector& theta) {
  Eigen::Index k = 0;
  for (DenseLayer& l : model.layers) {
    l.W.reshaped() = theta.segment(k, l.W.size());
    k += l.W.size();
    l.b = theta.segment(k, l.b.size());
    k += l.b.size();
  }
  if (k != theta.size()) throw ContractViolation("parameter vector has the wrong length");
}

Vector loss_gradient(const MlpModel& model, const TrainingData& batch) {
  std::vector<Matrix> acts;
  Gradient g;
  backward(model, normalize_inputs(model, batch.inputs), normalize_targets(model, batch.targets), acts, g);
  MlpModel shaped = model;
  for (std::size_t l = 0; l < model.layers.size(); ++l) shaped.layers[l] = {g.W[l], g.b[l]};
  return flatten_parameters(shaped);
}

double gradient_check(const MlpModel& model, const TrainingData& batch) {
  const Vector analytic = loss_gradient(model, batch);
  const Vector theta = flatten_parameters(model);
  MlpModel probe = model;
  constexpr double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector t = theta;
    t(i) += h;
    assign_parameters(probe, t);
    const double up = normalized_mse(probe, batch);
    t(i) = theta(i) - h;
    assign_parameters(probe, t);
    const double down = normalized_mse(probe, batch);
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-3});
    worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
  }
  return worst;
}

// --- serialization ----------------------------------------------------------------------------

namespace {

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const MlpModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const DenseLayer& l : model.layers) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < l.W.rows(); ++i) rows.push_back(vec_json(l.W.row(i).transpose()));
    layers.push_back({{"W", rows}, {"b", vec_json(l.b)}});
  }
  return {{"arch", model.arch},
          {"activation", model.activation},
          {"norm_stats",
           {{"in_shift", vec_json(model.norm.in_shift)},
            {"in_scale", vec_json(model.norm.in_scale)},
            {"out_shift", vec_json(model.norm.out_shift)},
            {"out_scale", vec_json(model.norm.out_scale)}}},
          {"layers", layers}};
}

MlpModel mlp_from_json(const nlohmann::json& j) {
  MlpModel model;
  try {
    model.arch = j.at("arch").get<std::vector<int>>();
    model.activation = j.at("activation").get<std::string>();
    const auto& ns = j.at("norm_stats");
    model.norm = {json_vec(ns.at("in_shift")), json_vec(ns.at("in_scale")), json_vec(ns.at("out_shift")),
                  json_vec(ns.at("out_scale"))};
    for (const auto& lj : j.at("layers")) {
      const auto rows = lj.at("W").get<std::vector<std::vector<double>>>();
      DenseLayer l;
      l.W.resize(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != l.W.cols()) throw ConfigError("ragged weight matrix");
        for (std::size_t k = 0; k < rows[i].size(); ++k) l.W(i, k) = rows[i][k];
      }
      l.b = json_vec(lj.at("b"));
      model.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model: ") + e.what());
  }
  model.validate();
  return model;
}

void write_model(const MlpModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << to_json(model).dump(1) << '\n';
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

MlpModel read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open model '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model '" + path + "': " + e.what());
  }
  return mlp_from_json(j);
}

std::vector<int> parse_hidden_layers(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    int w = 0;
    try {
      w = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("arch: '" + item + "' is not an integer");
    }
    if (w < 1) throw ConfigError("arch: layer widths must be positive");
    out.push_back(w);
  }
  return out;
}

}  // namespace mecp
