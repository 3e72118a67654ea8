#pragma once

#include "mecp/types.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mecp {

/// A point (x, p) of the cotangent bundle. The costate is stored as a column vector.
struct PhasePoint {
  Vector x;
  Vector p;
};

/// Second partials of the maximized Hamiltonian h(x, p) = H(x, p, u*(x, p)).
/// px(i, j) = d2h / dp_i dx_j and xp(i, j) = d2h / dx_i dp_j, so xp == px^T up to rounding.
struct SecondDerivatives {
  Matrix xx;
  Matrix xp;
  Matrix px;
  Matrix pp;
};

/// First partials of the maximized Hamiltonian together with the control that realizes it.
struct ReducedGradient {
  Vector x;  // dh/dx = (df/dx)^T p, valid because dH/du vanishes at u*
  Vector p;  // dh/dp = f(x, u*)
  Vector u;
};

/// Fixed-final-time minimum-effort problem: steer xdot = f(x, u) onto {phi(x) = 0} while
/// minimizing the integral of w |u|^2. Instances are immutable after construction.
class Problem {
 public:
  struct Dimensions {
    int state = 0;
    int control = 0;
    int constraint = 0;
  };

  Problem(Dimensions dims, double cost_weight, double final_time);
  virtual ~Problem() = default;

  Problem(const Problem&) = delete;
  Problem& operator=(const Problem&) = delete;

  int state_dim() const { return dims_.state; }
  int control_dim() const { return dims_.control; }
  int constraint_dim() const { return dims_.constraint; }
  double cost_weight() const { return cost_weight_; }
  double final_time() const { return final_time_; }

  virtual std::string id() const = 0;
  virtual std::vector<std::string> state_names() const;

  virtual Vector dynamics(const Vector& x, const Vector& u) const = 0;
  /// df/dx, n x n.
  virtual Matrix state_jacobian(const Vector& x, const Vector& u) const = 0;

  virtual Vector terminal_constraint(const Vector& x) const = 0;
  /// s x n.
  virtual Matrix terminal_gradient(const Vector& x) const = 0;
  /// sum_i nu_i * Hess(phi_i)(x), n x n.
  virtual Matrix terminal_hessian_contraction(const Vector& nu, const Vector& x) const = 0;

  /// Closed-form stationary control of H. Throws SingularControlError where it does not exist.
  virtual Vector maximizing_control(const Vector& x, const Vector& p) const = 0;
  /// d2H/du2 at (x, p, u), m x m.
  virtual Matrix control_hessian(const Vector& x, const Vector& p, const Vector& u) const = 0;

  virtual bool in_domain(const Vector& x) const { return x.allFinite(); }

  /// Chart of the terminal manifold: maps the n - s free coordinates to a point with phi = 0.
  virtual Vector terminal_state(const Vector& free_coordinates) const = 0;
  virtual std::vector<std::string> free_coordinate_names() const = 0;

  virtual std::optional<SecondDerivatives> analytic_second_derivatives(const PhasePoint&) const {
    return std::nullopt;
  }

  /// Terminal and transversality defect accepted as converged by the shooting oracle.
  virtual double defect_tolerance() const { return 1e-9; }

 private:
  Dimensions dims_;
  double cost_weight_;
  double final_time_;
};

using ProblemPtr = std::shared_ptr<const Problem>;

void require_in_domain(const Problem& prob, const Vector& x);

/// H(x, p, u) = p . f(x, u) - w |u|^2.
double hamiltonian(const Problem& prob, const PhasePoint& pt, const Vector& u);

/// h(x, p) = H(x, p, u*(x, p)).
double maximized_hamiltonian(const Problem& prob, const PhasePoint& pt);

ReducedGradient reduced_gradient(const Problem& prob, const PhasePoint& pt);

/// Central differences of the analytic first derivatives of h, step 1e-5 * max(1, |component|).
SecondDerivatives finite_difference_second_derivatives(const Problem& prob, const PhasePoint& pt);

/// Problem-supplied formulas when available, finite differences otherwise.
SecondDerivatives reduced_second_derivatives(const Problem& prob, const PhasePoint& pt);

/// Strengthened Legendre condition: d2H/du2 negative definite at u*(x, p).
bool legendre_condition(const Problem& prob, const PhasePoint& pt);

}  // namespace mecp
