#pragma once

#include "mecp/extremal.hpp"

#include <string>
#include <vector>

namespace mecp {

struct ShootingOptions {
  IntegratorConfig integrator{Method::rk45_adaptive, 0.0, 1e-12, 1e-12};
  int max_iterations = 50;
  /// 0 uses the problem's defect tolerance.
  double tolerance = 0.0;
  /// Output spacing of the returned solution trajectory (0: endpoints only).
  double output_spacing = 0.0;
};

/// One forward sample of a shooting solution; `time` runs from 0 at the current state to t_g.
struct ShootingPoint {
  double time = 0.0;
  Vector x;
  Vector p;
  Vector u;
  double cost = 0.0;  // effort accumulated since time 0
};

struct ShootingResult {
  bool converged = false;
  Vector initial_costate;
  int iterations = 0;
  double terminal_defect = 0.0;
  double transversality_defect = 0.0;
  double cost = 0.0;
  std::vector<ShootingPoint> trajectory;
  std::string message;
};

/// Indirect single shooting: damped Newton on the initial costate so that the forward extremal
/// from (x_c, p0) ends on phi = 0 with a costate normal to the manifold. Non-convergence is
/// reported in the result, never thrown.
ShootingResult shoot(const Problem& prob, const Vector& x_c, double time_to_go, const Vector& p_guess,
                     const ShootingOptions& options = {});

/// Closed-form minimum-energy feedback for the double integrator: u = -6 x / t_g^2 - 4 v / t_g.
Vector double_integrator_law(const Vector& x, double time_to_go);

}  // namespace mecp
