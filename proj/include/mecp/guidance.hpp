#pragma once

#include "mecp/dataset.hpp"
#include "mecp/mlp.hpp"
#include "mecp/problems.hpp"
#include "mecp/shooting.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mecp {

/// Feedback law queried with (t_g, x). May keep state between calls (warm starts).
using Controller = std::function<Vector(double time_to_go, const Vector& x)>;

Controller mlp_controller(std::shared_ptr<const MlpModel> model);
Controller double_integrator_controller();
Controller zero_controller(int control_dim);
/// Re-solves the two-point problem at every query, warm-started from the previous costate.
/// Throws Error when shooting fails to converge.
Controller shooting_controller(ProblemPtr nominal, const Vector& initial_guess, const ShootingOptions& options = {});

struct SimConfig {
  double guidance_step = 0.0;
  double plant_step = 0.0;
  Vector x0;
  double time_to_go = 0.0;

  /// Number of guidance updates, t_g0 / guidance_step rounded.
  std::size_t updates() const;
  void validate(int state_dim) const;
};

struct SimSample {
  double time = 0.0;
  double time_to_go = 0.0;
  Vector x;
  Vector u;
};

struct LatencyStats {
  double median = 0.0;  // seconds per controller query
  double mean = 0.0;
  double max = 0.0;
};

struct SimResult {
  std::vector<SimSample> samples;  // one per guidance update, state before the hold
  Vector terminal_state;
  Vector terminal_error;  // phi(x(t_f))
  double terminal_error_norm = 0.0;
  double effort = 0.0;  // integral of w |u|^2
  bool aborted = false;
  std::string abort_reason;
  LatencyStats latency;
};

/// Zero-order-hold closed loop. `plant` may carry perturbed parameters; the controller is
/// expected to use nominal ones.
SimResult simulate(const Problem& plant, const SimConfig& cfg, const Controller& controller);

struct Dispersion {
  std::vector<Range> x0;  // per state component, absolute bounds
  std::optional<Range> cd0;
  std::optional<Range> km;
};

struct MonteCarloConfig {
  SimConfig base;
  Dispersion dispersion;
  std::size_t runs = 0;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

struct MonteCarloRun {
  std::size_t run = 0;
  Vector x0;
  ProblemConfig plant;
  SimResult result;
};

struct MonteCarloSummary {
  std::size_t runs = 0;
  std::size_t aborted = 0;
  Vector max_abs_error;  // per terminal-constraint component, over completed runs
  Vector mean_abs_error;
  double max_error_norm = 0.0;
  double mean_effort = 0.0;
};

struct MonteCarloResult {
  std::vector<MonteCarloRun> runs;
  MonteCarloSummary summary;
};

/// Draws every run's initial state and plant parameters up front from a seeded generator, then
/// simulates them (possibly concurrently). `make_controller` is called once per run.
MonteCarloResult monte_carlo(const ProblemConfig& nominal, const MonteCarloConfig& cfg,
                             const std::function<Controller()>& make_controller);

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  std::size_t count = 0;
};

std::vector<HistogramBin> histogram(const std::vector<double>& values, std::size_t bins);

void write_trajectory_csv(const Problem& prob, const SimResult& result, const std::string& path);
void write_summary_csv(const Problem& prob, const MonteCarloResult& mc, const std::string& path);
void write_histogram_csv(const std::vector<HistogramBin>& bins, const std::string& path);

}  // namespace mecp
