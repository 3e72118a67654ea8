#pragma once

#include "mecp/dataset.hpp"
#include "mecp/guidance.hpp"
#include "mecp/mlp.hpp"
#include "mecp/problems.hpp"
#include "mecp/shooting.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace mecp {

struct TrainingSection {
  std::vector<int> hidden{20, 20, 20};
  TrainConfig train;
};

struct SimulationSection {
  SimConfig sim;
  std::string controller = "mlp";  // mlp | analytic | shooting | zero
  /// Plant parameter overrides (glider only); the controller keeps the nominal problem.
  std::optional<double> plant_cd0;
  std::optional<double> plant_km;
};

struct MonteCarloSection {
  std::size_t runs = 0;
  std::uint64_t seed = 0;
  Dispersion dispersion;
  std::size_t bins = 20;
};

struct VerifySection {
  double fraction = 0.01;
  std::uint64_t seed = 0;
  double tolerance = 1e-6;
};

/// Everything a CLI run can be configured with. Sections are optional; each subcommand
/// requires the ones it uses.
struct RunConfig {
  ProblemConfig problem;
  std::optional<SamplingSpec> sampling;
  ExtremalConfig extremal;  // integrator inside is used for extremal building
  ShootingOptions shooting;
  std::optional<TrainingSection> training;
  std::optional<SimulationSection> simulation;
  std::optional<MonteCarloSection> monte_carlo;
  VerifySection verify;
};

/// Unknown keys and type mismatches are reported as ConfigError with the dotted field path.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Default guidance step per problem: glider 0.1 s, proximity 0.005, double integrator 0.01.
double default_guidance_step(const std::string& problem_id);

}  // namespace mecp
