#include "mecp/problems.hpp"

#include <cmath>
#include <numbers>

namespace mecp {

void GliderParams::validate() const {
  const auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("problem.") + name + ": must be positive");
  };
  positive(mass, "mass");
  positive(gravity, "gravity");
  positive(ref_area, "ref_area");
  positive(cd0, "cd0");
  positive(km, "km");
  positive(rho, "rho");
}

// --- gliding vehicle ------------------------------------------------------------------------

GlidingVehicle::GlidingVehicle(const GliderParams& params, double final_time)
    : Problem({4, 1, 2}, 1.0, final_time), params_(params), k1_(params.k1()), k2_(params.k2()) {
  params_.validate();
}

Vector GlidingVehicle::dynamics(const Vector& x, const Vector& u) const {
  const double V = x(0), gamma = x(1), a = u(0);
  const double drag = k1_ * V * V + k2_ * a * a / (V * V);
  Vector f(4);
  f << -drag / params_.mass - params_.gravity * std::sin(gamma),
      (a - params_.gravity * std::cos(gamma)) / V, V * std::cos(gamma), V * std::sin(gamma);
  return f;
}

Matrix GlidingVehicle::state_jacobian(const Vector& x, const Vector& u) const {
  const double V = x(0), gamma = x(1), a = u(0);
  const double m = params_.mass, g = params_.gravity;
  const double c = std::cos(gamma), s = std::sin(gamma);
  Matrix J = Matrix::Zero(4, 4);
  J(0, 0) = -(2.0 * k1_ * V - 2.0 * k2_ * a * a / (V * V * V)) / m;
  J(0, 1) = -g * c;
  J(1, 0) = -(a - g * c) / (V * V);
  J(1, 1) = g * s / V;
  J(2, 0) = c;
  J(2, 1) = -V * s;
  J(3, 0) = s;
  J(3, 1) = V * c;
  return J;
}

Vector GlidingVehicle::terminal_constraint(const Vector& x) const { return Eigen::Vector2d(x(2), x(3)); }

Matrix GlidingVehicle::terminal_gradient(const Vector&) const {
  Matrix G = Matrix::Zero(2, 4);
  G(0, 2) = 1.0;
  G(1, 3) = 1.0;
  return G;
}

Matrix GlidingVehicle::terminal_hessian_contraction(const Vector&, const Vector&) const {
  return Matrix::Zero(4, 4);
}

Vector GlidingVehicle::maximizing_control(const Vector& x, const Vector& p) const {
  const double V = x(0);
  const double denom = params_.mass * V * V + k2_ * p(0);
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw SingularControlError("glider: m V^2 + k2 p_V <= 0, no maximizing normal acceleration");
  Vector a(1);
  a(0) = p(1) * params_.mass * V / (2.0 * denom);
  return a;
}

Matrix GlidingVehicle::control_hessian(const Vector& x, const Vector& p, const Vector&) const {
  const double V = x(0);
  Matrix h(1, 1);
  h(0, 0) = -2.0 * cost_weight() - 2.0 * k2_ * p(0) / (params_.mass * V * V);
  return h;
}

bool GlidingVehicle::in_domain(const Vector& x) const { return x.allFinite() && x(0) > 0.0; }

Vector GlidingVehicle::terminal_state(const Vector& free_coordinates) const {
  Vector x = Vector::Zero(4);
  x(0) = free_coordinates(0);
  x(1) = free_coordinates(1);
  return x;
}

// --- spacecraft proximity -------------------------------------------------------------------

SpacecraftProximity::SpacecraftProximity(double final_time) : Problem({4, 2, 2}, 0.5, final_time) {}

double SpacecraftProximity::radius(const Vector& x) { return std::hypot(x(0) + 1.0, x(1)); }

Vector SpacecraftProximity::dynamics(const Vector& x, const Vector& u) const {
  const double r = radius(x);
  if (!(r > 0.0)) throw DomainError("proximity: r = 0");
  const double drift = 1.0 / (r * r * r) - 1.0;
  Vector f(4);
  f << x(2), x(3), 2.0 * x(3) - (1.0 - x(0)) * drift + u(0), -2.0 * x(2) - x(1) * drift + u(1);
  return f;
}

Matrix SpacecraftProximity::state_jacobian(const Vector& x, const Vector&) const {
  const double r = radius(x);
  if (!(r > 0.0)) throw DomainError("proximity: r = 0");
  const double r3 = 1.0 / (r * r * r);
  const double r5 = r3 / (r * r);
  const double drift = r3 - 1.0;
  const double X = x(0), Y = x(1);
  Matrix J = Matrix::Zero(4, 4);
  J(0, 2) = 1.0;
  J(1, 3) = 1.0;
  J(2, 0) = drift + 3.0 * (1.0 - X) * (1.0 + X) * r5;
  J(2, 1) = 3.0 * (1.0 - X) * Y * r5;
  J(2, 3) = 2.0;
  J(3, 0) = 3.0 * Y * (1.0 + X) * r5;
  J(3, 1) = -drift + 3.0 * Y * Y * r5;
  J(3, 2) = -2.0;
  return J;
}

Vector SpacecraftProximity::terminal_constraint(const Vector& x) const {
  return Eigen::Vector2d(x(0), x(1));
}

Matrix SpacecraftProximity::terminal_gradient(const Vector&) const {
  Matrix G = Matrix::Zero(2, 4);
  G(0, 0) = 1.0;
  G(1, 1) = 1.0;
  return G;
}

Matrix SpacecraftProximity::terminal_hessian_contraction(const Vector&, const Vector&) const {
  return Matrix::Zero(4, 4);
}

Vector SpacecraftProximity::maximizing_control(const Vector&, const Vector& p) const {
  return p.tail<2>() / (2.0 * cost_weight());
}

Matrix SpacecraftProximity::control_hessian(const Vector&, const Vector&, const Vector&) const {
  return -2.0 * cost_weight() * Matrix::Identity(2, 2);
}

bool SpacecraftProximity::in_domain(const Vector& x) const {
  return x.allFinite() && radius(x) > 1e-6;
}

Vector SpacecraftProximity::terminal_state(const Vector& free_coordinates) const {
  Vector x = Vector::Zero(4);
  x(2) = free_coordinates(0);
  x(3) = free_coordinates(1);
  return x;
}

// --- double integrator ----------------------------------------------------------------------

DoubleIntegrator::DoubleIntegrator(double final_time) : Problem({2, 1, 2}, 1.0, final_time) {}

Vector DoubleIntegrator::dynamics(const Vector& x, const Vector& u) const {
  return Eigen::Vector2d(x(1), u(0));
}

Matrix DoubleIntegrator::state_jacobian(const Vector&, const Vector&) const {
  Matrix J = Matrix::Zero(2, 2);
  J(0, 1) = 1.0;
  return J;
}

Vector DoubleIntegrator::terminal_constraint(const Vector& x) const { return x; }

Matrix DoubleIntegrator::terminal_gradient(const Vector&) const { return Matrix::Identity(2, 2); }

Matrix DoubleIntegrator::terminal_hessian_contraction(const Vector&, const Vector&) const {
  return Matrix::Zero(2, 2);
}

Vector DoubleIntegrator::maximizing_control(const Vector&, const Vector& p) const {
  Vector u(1);
  u(0) = p(1) / (2.0 * cost_weight());
  return u;
}

Matrix DoubleIntegrator::control_hessian(const Vector&, const Vector&, const Vector&) const {
  return Matrix::Constant(1, 1, -2.0 * cost_weight());
}

Vector DoubleIntegrator::terminal_state(const Vector&) const { return Vector::Zero(2); }

std::optional<SecondDerivatives> DoubleIntegrator::analytic_second_derivatives(const PhasePoint&) const {
  // h = p_x v + p_v^2 / 4
  SecondDerivatives d{Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  d.px(0, 1) = 1.0;
  d.xp(1, 0) = 1.0;
  d.pp(1, 1) = 1.0 / (2.0 * cost_weight());
  return d;
}

// --- factories ------------------------------------------------------------------------------

ProblemPtr glider_problem(const GliderParams& params, double final_time) {
  return std::make_shared<GlidingVehicle>(params, final_time);
}

ProblemPtr proximity_problem(double final_time) { return std::make_shared<SpacecraftProximity>(final_time); }

ProblemPtr double_integrator_problem(double final_time) {
  return std::make_shared<DoubleIntegrator>(final_time);
}

ProblemPtr make_problem(const ProblemConfig& config) {
  if (!(config.final_time > 0.0)) throw ConfigError("problem.t_f: must be positive");
  if (config.id == "glider") return glider_problem(config.glider, config.final_time);
  if (config.id == "proximity") return proximity_problem(config.final_time);
  if (config.id == "double_integrator") return double_integrator_problem(config.final_time);
  throw ConfigError("problem.id: unknown problem '" + config.id + "'");
}

ProblemConfig problem_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("problem: expected an object");
  ProblemConfig c;
  const auto number = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number()) throw ConfigError(std::string("problem.") + key + ": expected a number");
    out = j.at(key).get<double>();
  };
  if (!j.contains("id") || !j.at("id").is_string()) throw ConfigError("problem.id: required string");
  c.id = j.at("id").get<std::string>();
  if (!j.contains("t_f")) throw ConfigError("problem.t_f: required");
  number("t_f", c.final_time);
  number("mass", c.glider.mass);
  number("gravity", c.glider.gravity);
  number("ref_area", c.glider.ref_area);
  number("cd0", c.glider.cd0);
  number("km", c.glider.km);
  number("rho", c.glider.rho);
  if (!(c.final_time > 0.0)) throw ConfigError("problem.t_f: must be positive");
  if (c.id == "glider") c.glider.validate();
  return c;
}

nlohmann::json to_json(const ProblemConfig& config) {
  nlohmann::json j{{"id", config.id}, {"t_f", config.final_time}};
  if (config.id == "glider") {
    j["mass"] = config.glider.mass;
    j["gravity"] = config.glider.gravity;
    j["ref_area"] = config.glider.ref_area;
    j["cd0"] = config.glider.cd0;
    j["km"] = config.glider.km;
    j["rho"] = config.glider.rho;
  }
  return j;
}

std::vector<Scenario> scenario_presets() {
  constexpr double deg = std::numbers::pi / 180.0;
  std::vector<Scenario> out;
  out.push_back({"glider_vehicle1", "glider", Eigen::Vector4d(1500.0, 45.0 * deg, -20000.0, 3500.0), 20.0});
  out.push_back({"glider_vehicle2", "glider", Eigen::Vector4d(1200.0, 0.0, -20000.0, 3500.0), 20.0});
  out.push_back({"proximity_spacecraft1", "proximity", Eigen::Vector4d(0.2, 0.2, -0.1, -0.1), 1.0});
  out.push_back({"proximity_spacecraft2", "proximity", Eigen::Vector4d(0.2, 0.2, 0.1, 0.1), 1.0});
  out.push_back({"double_integrator_unit", "double_integrator", Eigen::Vector2d(1.0, 0.0), 1.0});
  return out;
}

Scenario scenario_preset(const std::string& name) {
  for (auto& s : scenario_presets())
    if (s.name == name) return s;
  throw ConfigError("unknown scenario preset '" + name + "'");
}

}  // namespace mecp
