#include "mecp/problem.hpp"

#include <algorithm>
#include <cmath>

namespace mecp {

Problem::Problem(Dimensions dims, double cost_weight, double final_time)
    : dims_(dims), cost_weight_(cost_weight), final_time_(final_time) {
  if (dims.state <= 0 || dims.control <= 0 || dims.constraint <= 0 || dims.constraint > dims.state)
    throw ContractViolation("problem dimensions must satisfy n, m, s > 0 and s <= n");
  if (!(cost_weight > 0.0)) throw ContractViolation("cost weight must be positive");
  if (!(final_time > 0.0)) throw ContractViolation("final time must be positive");
}

std::vector<std::string> Problem::state_names() const {
  std::vector<std::string> names;
  for (int i = 0; i < state_dim(); ++i) names.push_back("x" + std::to_string(i + 1));
  return names;
}

void require_in_domain(const Problem& prob, const Vector& x) {
  if (x.size() != prob.state_dim()) throw ContractViolation("state has wrong dimension");
  if (!prob.in_domain(x)) throw DomainError(prob.id() + ": state outside the admissible domain");
}

double hamiltonian(const Problem& prob, const PhasePoint& pt, const Vector& u) {
  require_in_domain(prob, pt.x);
  if (!u.allFinite()) throw DomainError("control has non-finite entries");
  return pt.p.dot(prob.dynamics(pt.x, u)) - prob.cost_weight() * u.squaredNorm();
}

double maximized_hamiltonian(const Problem& prob, const PhasePoint& pt) {
  require_in_domain(prob, pt.x);
  const Vector u = prob.maximizing_control(pt.x, pt.p);
  return pt.p.dot(prob.dynamics(pt.x, u)) - prob.cost_weight() * u.squaredNorm();
}

ReducedGradient reduced_gradient(const Problem& prob, const PhasePoint& pt) {
  ReducedGradient g;
  g.u = prob.maximizing_control(pt.x, pt.p);
  g.p = prob.dynamics(pt.x, g.u);
  g.x = prob.state_jacobian(pt.x, g.u).transpose() * pt.p;
  return g;
}

SecondDerivatives finite_difference_second_derivatives(const Problem& prob, const PhasePoint& pt) {
  const Eigen::Index n = pt.x.size();
  SecondDerivatives d{Matrix(n, n), Matrix(n, n), Matrix(n, n), Matrix(n, n)};

  PhasePoint probe = pt;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double step = 1e-5 * std::max(1.0, std::abs(pt.x(j)));
    probe.x(j) = pt.x(j) + step;
    const ReducedGradient plus = reduced_gradient(prob, probe);
    probe.x(j) = pt.x(j) - step;
    const ReducedGradient minus = reduced_gradient(prob, probe);
    probe.x(j) = pt.x(j);
    d.xx.col(j) = (plus.x - minus.x) / (2.0 * step);
    d.px.col(j) = (plus.p - minus.p) / (2.0 * step);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const double step = 1e-5 * std::max(1.0, std::abs(pt.p(j)));
    probe.p(j) = pt.p(j) + step;
    const ReducedGradient plus = reduced_gradient(prob, probe);
    probe.p(j) = pt.p(j) - step;
    const ReducedGradient minus = reduced_gradient(prob, probe);
    probe.p(j) = pt.p(j);
    d.xp.col(j) = (plus.x - minus.x) / (2.0 * step);
    d.pp.col(j) = (plus.p - minus.p) / (2.0 * step);
  }
  return d;
}

SecondDerivatives reduced_second_derivatives(const Problem& prob, const PhasePoint& pt) {
  if (auto analytic = prob.analytic_second_derivatives(pt)) return *analytic;
  return finite_difference_second_derivatives(prob, pt);
}

bool legendre_condition(const Problem& prob, const PhasePoint& pt) {
  const Vector u = prob.maximizing_control(pt.x, pt.p);
  const Matrix huu = prob.control_hessian(pt.x, pt.p, u);
  Eigen::LLT<Matrix> llt(-huu);
  return llt.info() == Eigen::Success;
}

}  // namespace mecp
