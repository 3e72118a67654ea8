#include "mecp/shooting.hpp"

#include <cmath>
#include <limits>

namespace mecp {

namespace {

struct ForwardSolution {
  Vector x_T, p_T;
  Matrix dX_T, dP_T;  // d(x_T, p_T) / d p0
  double cost = 0.0;
  Trajectory trajectory;
};

ForwardSolution integrate_forward(const Problem& prob, const Vector& x_c, const Vector& p0, double time_to_go,
                                  const IntegratorConfig& cfg, bool variational) {
  const Eigen::Index n = prob.state_dim();
  const double w = prob.cost_weight();
  const Eigen::Index size = variational ? 2 * n + 1 + 2 * n * n : 2 * n + 1;
  Vector y0 = Vector::Zero(size);
  y0.head(n) = x_c;
  y0.segment(n, n) = p0;
  if (variational) Eigen::Map<Matrix>(y0.data() + 2 * n + 1 + n * n, n, n).setIdentity();

  const Rhs rhs = [&](double, const Vector& y, Vector& dy) {
    const PhasePoint pt{y.head(n), y.segment(n, n)};
    require_in_domain(prob, pt.x);
    const ReducedGradient g = reduced_gradient(prob, pt);
    dy.head(n) = g.p;
    dy.segment(n, n) = -g.x;
    dy(2 * n) = w * g.u.squaredNorm();
    if (!variational) return;
    const SecondDerivatives d = reduced_second_derivatives(prob, pt);
    const Eigen::Map<const Matrix> dX(y.data() + 2 * n + 1, n, n);
    const Eigen::Map<const Matrix> dP(y.data() + 2 * n + 1 + n * n, n, n);
    Eigen::Map<Matrix>(dy.data() + 2 * n + 1, n, n) = d.px * dX + d.pp * dP;
    Eigen::Map<Matrix>(dy.data() + 2 * n + 1 + n * n, n, n) = -d.xx * dX - d.xp * dP;
  };

  ForwardSolution out;
  out.trajectory = propagate(rhs, y0, 0.0, time_to_go, cfg);
  const Vector& yT = out.trajectory.states.back();
  out.x_T = yT.head(n);
  out.p_T = yT.segment(n, n);
  out.cost = yT(2 * n);
  if (variational) {
    out.dX_T = Eigen::Map<const Matrix>(yT.data() + 2 * n + 1, n, n);
    out.dP_T = Eigen::Map<const Matrix>(yT.data() + 2 * n + 1 + n * n, n, n);
  }
  return out;
}

struct Residual {
  Vector value;
  double terminal = 0.0;
  double transversality = 0.0;
};

Residual residual_of(const Problem& prob, const Vector& x_T, const Vector& p_T) {
  const int n = prob.state_dim(), s = prob.constraint_dim();
  Residual r;
  r.value.resize(n);
  const Vector phi = prob.terminal_constraint(x_T);
  r.value.head(s) = phi;
  r.terminal = phi.lpNorm<Eigen::Infinity>();
  if (s < n) {
    const Matrix basis = tangent_basis(prob.terminal_gradient(x_T));
    const Vector tangential = basis.transpose() * p_T;
    r.value.tail(n - s) = tangential;
    r.transversality = tangential.lpNorm<Eigen::Infinity>();
  }
  return r;
}

Matrix jacobian_of(const Problem& prob, const ForwardSolution& sol) {
  const int n = prob.state_dim(), s = prob.constraint_dim();
  const Matrix G = prob.terminal_gradient(sol.x_T);
  Matrix J(n, n);
  J.topRows(s) = G * sol.dX_T;
  if (s < n) {
    // exact at a solution: the rotation of the tangent basis only sees nu Hess(phi) dX
    const Matrix basis = tangent_basis(G);
    const Vector nu = multipliers_from_costate(G, sol.p_T);
    const Matrix curvature = prob.terminal_hessian_contraction(nu, sol.x_T);
    J.bottomRows(n - s) = basis.transpose() * (sol.dP_T - curvature * sol.dX_T);
  }
  return J;
}

}  // namespace

ShootingResult shoot(const Problem& prob, const Vector& x_c, double time_to_go, const Vector& p_guess,
                     const ShootingOptions& options) {
  const int n = prob.state_dim();
  if (x_c.size() != n || p_guess.size() != n) throw ContractViolation("shooting inputs have wrong dimensions");
  const double tol = options.tolerance > 0.0 ? options.tolerance : prob.defect_tolerance();

  ShootingResult result;
  result.initial_costate = p_guess;

  const auto finish = [&](const Vector& p0, const Residual& r) {
    result.initial_costate = p0;
    result.terminal_defect = r.terminal;
    result.transversality_defect = r.transversality;
    result.converged = r.terminal < tol && r.transversality < tol;
  };

  if (!(time_to_go > 0.0)) {
    finish(p_guess, residual_of(prob, x_c, p_guess));
    result.message = result.converged ? "already on the target manifold" : "zero time-to-go off the manifold";
    return result;
  }

  IntegratorConfig cfg = options.integrator;
  cfg.output_spacing = 0.0;

  Vector p0 = p_guess;
  ForwardSolution sol;
  Residual r;
  try {
    sol = integrate_forward(prob, x_c, p0, time_to_go, cfg, true);
    r = residual_of(prob, sol.x_T, sol.p_T);
  } catch (const Error& e) {
    result.message = std::string("initial guess is infeasible: ") + e.what();
    return result;
  }

  for (int it = 0;; ++it) {
    result.iterations = it;
    if (r.terminal < tol && r.transversality < tol) break;
    if (it >= options.max_iterations) {
      result.message = "iteration limit reached";
      finish(p0, r);
      return result;
    }
    const Matrix J = jacobian_of(prob, sol);
    const Vector step = J.colPivHouseholderQr().solve(-r.value);
    if (!step.allFinite()) {
      result.message = "singular shooting Jacobian";
      finish(p0, r);
      return result;
    }

    const double current = r.value.norm();
    bool accepted = false;
    for (double alpha = 1.0; alpha >= 1.0 / 1024.0; alpha *= 0.5) {
      const Vector trial = p0 + alpha * step;
      try {
        ForwardSolution s = integrate_forward(prob, x_c, trial, time_to_go, cfg, true);
        Residual rt = residual_of(prob, s.x_T, s.p_T);
        if (rt.value.allFinite() && rt.value.norm() < current) {
          p0 = trial;
          sol = std::move(s);
          r = std::move(rt);
          accepted = true;
          break;
        }
      } catch (const Error&) {
        // infeasible trial; halve
      }
    }
    if (!accepted) {
      result.message = "line search failed";
      finish(p0, r);
      return result;
    }
  }

  finish(p0, r);
  result.message = "converged";
  IntegratorConfig out_cfg = cfg;
  out_cfg.output_spacing = options.output_spacing;
  const ForwardSolution final_sol = integrate_forward(prob, x_c, p0, time_to_go, out_cfg, false);
  result.cost = final_sol.cost;
  for (std::size_t i = 0; i < final_sol.trajectory.times.size(); ++i) {
    const Vector& y = final_sol.trajectory.states[i];
    ShootingPoint pt{final_sol.trajectory.times[i], y.head(n), y.segment(n, n), Vector(), y(2 * n)};
    pt.u = prob.maximizing_control(pt.x, pt.p);
    result.trajectory.push_back(std::move(pt));
  }
  return result;
}

Vector double_integrator_law(const Vector& x, double time_to_go) {
  if (!(time_to_go > 0.0)) throw DomainError("double integrator law is undefined at zero time-to-go");
  Vector u(1);
  u(0) = -6.0 * x(0) / (time_to_go * time_to_go) - 4.0 * x(1) / time_to_go;
  return u;
}

}  // namespace mecp
