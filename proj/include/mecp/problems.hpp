#pragma once

#include "mecp/problem.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace mecp {

/// Planar glider aerodynamics. Drag D = k1 V^2 + k2 a^2 / V^2 with k1 = rho S CD0 / 2 and
/// k2 = 2 km m^2 / (rho S).
struct GliderParams {
  double mass = 100.0;
  double gravity = 9.8;
  double ref_area = 0.0324;
  double cd0 = 0.2;
  double km = 0.1;
  double rho = 1.225;

  double k1() const { return 0.5 * rho * ref_area * cd0; }
  double k2() const { return 2.0 * km * mass * mass / (rho * ref_area); }
  void validate() const;
};

/// State (V, gamma, x, h), control normal acceleration a, target phi = (x, h).
class GlidingVehicle final : public Problem {
 public:
  GlidingVehicle(const GliderParams& params, double final_time);

  const GliderParams& params() const { return params_; }

  std::string id() const override { return "glider"; }
  std::vector<std::string> state_names() const override { return {"V", "gamma", "x", "h"}; }
  Vector dynamics(const Vector& x, const Vector& u) const override;
  Matrix state_jacobian(const Vector& x, const Vector& u) const override;
  Vector terminal_constraint(const Vector& x) const override;
  Matrix terminal_gradient(const Vector& x) const override;
  Matrix terminal_hessian_contraction(const Vector& nu, const Vector& x) const override;
  Vector maximizing_control(const Vector& x, const Vector& p) const override;
  Matrix control_hessian(const Vector& x, const Vector& p, const Vector& u) const override;
  bool in_domain(const Vector& x) const override;
  Vector terminal_state(const Vector& free_coordinates) const override;
  std::vector<std::string> free_coordinate_names() const override { return {"V", "gamma"}; }
  double defect_tolerance() const override { return 1e-6; }

 private:
  GliderParams params_;
  double k1_;
  double k2_;
};

/// Normalized planar relative motion about a circular orbit (mu = 1, radius 1).
/// State (x, y, vx, vy), control (ux, uy), target phi = (x, y), running cost (|u|^2) / 2.
class SpacecraftProximity final : public Problem {
 public:
  explicit SpacecraftProximity(double final_time);

  std::string id() const override { return "proximity"; }
  std::vector<std::string> state_names() const override { return {"x", "y", "vx", "vy"}; }
  Vector dynamics(const Vector& x, const Vector& u) const override;
  Matrix state_jacobian(const Vector& x, const Vector& u) const override;
  Vector terminal_constraint(const Vector& x) const override;
  Matrix terminal_gradient(const Vector& x) const override;
  Matrix terminal_hessian_contraction(const Vector& nu, const Vector& x) const override;
  Vector maximizing_control(const Vector& x, const Vector& p) const override;
  Matrix control_hessian(const Vector& x, const Vector& p, const Vector& u) const override;
  bool in_domain(const Vector& x) const override;
  Vector terminal_state(const Vector& free_coordinates) const override;
  std::vector<std::string> free_coordinate_names() const override { return {"vx", "vy"}; }

  static double radius(const Vector& x);
};

/// xdot = v, vdot = u, phi(x) = (x, v): the whole state is pinned so s = n = 2.
class DoubleIntegrator final : public Problem {
 public:
  explicit DoubleIntegrator(double final_time);

  std::string id() const override { return "double_integrator"; }
  std::vector<std::string> state_names() const override { return {"x", "v"}; }
  Vector dynamics(const Vector& x, const Vector& u) const override;
  Matrix state_jacobian(const Vector& x, const Vector& u) const override;
  Vector terminal_constraint(const Vector& x) const override;
  Matrix terminal_gradient(const Vector& x) const override;
  Matrix terminal_hessian_contraction(const Vector& nu, const Vector& x) const override;
  Vector maximizing_control(const Vector& x, const Vector& p) const override;
  Matrix control_hessian(const Vector& x, const Vector& p, const Vector& u) const override;
  Vector terminal_state(const Vector& free_coordinates) const override;
  std::vector<std::string> free_coordinate_names() const override { return {}; }
  std::optional<SecondDerivatives> analytic_second_derivatives(const PhasePoint& pt) const override;
};

ProblemPtr glider_problem(const GliderParams& params, double final_time);
ProblemPtr proximity_problem(double final_time);
ProblemPtr double_integrator_problem(double final_time);

/// Serializable description of a problem instance.
struct ProblemConfig {
  std::string id;
  double final_time = 0.0;
  GliderParams glider;
};

ProblemPtr make_problem(const ProblemConfig& config);

/// Reads {"id": ..., "t_f": ..., "mass": ..., ...}. Missing glider keys keep their defaults.
ProblemConfig problem_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProblemConfig& config);

/// Named initial conditions shipped with the library.
struct Scenario {
  std::string name;
  std::string problem;
  Vector x0;
  double time_to_go = 0.0;
};

/// glider_vehicle1, glider_vehicle2, proximity_spacecraft1, proximity_spacecraft2,
/// double_integrator_unit.
std::vector<Scenario> scenario_presets();
Scenario scenario_preset(const std::string& name);

}  // namespace mecp
