#include "mecp/extremal.hpp"

#include <algorithm>
#include <cmath>

namespace mecp {

namespace {

constexpr double kManifoldTolerance = 1e-12;
// scaled determinants are bounded by n^(n/2); below this they carry no sign information
constexpr double kDeterminantFloor = 1e-14;

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

// Augmented layout: [x (n), p (n), cost (1), vec(dX) (n*n), vec(dP) (n*n)], column-major blocks.
struct Layout {
  Eigen::Index n;
  Eigen::Index x() const { return 0; }
  Eigen::Index p() const { return n; }
  Eigen::Index cost() const { return 2 * n; }
  Eigen::Index dX() const { return 2 * n + 1; }
  Eigen::Index dP() const { return 2 * n + 1 + n * n; }
  Eigen::Index size(bool variational) const { return variational ? 2 * n + 1 + 2 * n * n : 2 * n + 1; }
};

}  // namespace

TerminalSample make_terminal_sample(const Problem& prob, const Vector& x_f, const Vector& nu) {
  if (x_f.size() != prob.state_dim() || nu.size() != prob.constraint_dim())
    throw ContractViolation("terminal sample has wrong dimensions");
  require_in_domain(prob, x_f);
  if (!nu.allFinite()) throw DomainError("terminal multipliers are not finite");
  const Vector phi = prob.terminal_constraint(x_f);
  if (phi.lpNorm<Eigen::Infinity>() >= kManifoldTolerance)
    throw AssumptionViolation("terminal state is off the target manifold");
  return {x_f, nu, prob.terminal_gradient(x_f).transpose() * nu};
}

Vector backward_rhs(const Problem& prob, const PhasePoint& pt) {
  require_in_domain(prob, pt.x);
  const ReducedGradient g = reduced_gradient(prob, pt);
  Vector out(2 * pt.x.size());
  out << -g.p, g.x;
  return out;
}

Vector forward_rhs(const Problem& prob, const PhasePoint& pt) { return -backward_rhs(prob, pt); }

VariationalState variational_rhs(const Problem& prob, const PhasePoint& pt, const VariationalState& v) {
  const SecondDerivatives d = reduced_second_derivatives(prob, pt);
  return {-d.px * v.dX - d.pp * v.dP, d.xx * v.dX + d.xp * v.dP};
}

Matrix tangent_basis(const Matrix& gradient) {
  const Eigen::Index s = gradient.rows(), n = gradient.cols();
  const Matrix gram = gradient * gradient.transpose();
  Eigen::FullPivLU<Matrix> lu(gram);
  if (lu.rank() < s) throw AssumptionViolation("terminal gradient is rank deficient");
  const Matrix projector = Matrix::Identity(n, n) - gradient.transpose() * lu.solve(gradient);

  Matrix basis(n, n - s);
  Eigen::Index found = 0;
  for (Eigen::Index j = 0; j < n && found < n - s; ++j) {
    Vector v = projector.col(j);
    for (Eigen::Index k = 0; k < found; ++k) v -= basis.col(k).dot(v) * basis.col(k);
    const double norm = v.norm();
    if (norm > 1e-10) basis.col(found++) = v / norm;
  }
  if (found < n - s) throw AssumptionViolation("could not span the tangent space of the target manifold");
  return basis;
}

Vector multipliers_from_costate(const Matrix& gradient, const Vector& p) {
  const Matrix gram = gradient * gradient.transpose();
  Eigen::FullPivLU<Matrix> lu(gram);
  if (lu.rank() < gradient.rows()) throw AssumptionViolation("terminal gradient is rank deficient");
  return lu.solve(gradient * p);
}

VariationalState initial_conditions_full(const Problem& prob, const TerminalSample&) {
  const int n = prob.state_dim();
  if (prob.constraint_dim() != n) throw ContractViolation("initial_conditions_full requires s == n");
  return {Matrix::Zero(n, n), Matrix::Identity(n, n)};
}

VariationalState initial_conditions_partial(const Problem& prob, const TerminalSample& sample) {
  const int n = prob.state_dim(), s = prob.constraint_dim();
  if (s >= n) throw ContractViolation("initial_conditions_partial requires s < n");
  const Matrix G = prob.terminal_gradient(sample.x_f);
  const Matrix basis = tangent_basis(G);
  const Vector nu_bar = multipliers_from_costate(G, sample.p_f);

  VariationalState v{Matrix::Zero(n, n), Matrix::Zero(n, n)};
  v.dX.leftCols(n - s) = basis;
  v.dP.leftCols(n - s) = prob.terminal_hessian_contraction(nu_bar, sample.x_f) * basis;
  v.dP.rightCols(s) = G.transpose();
  return v;
}

VariationalState initial_conditions(const Problem& prob, const TerminalSample& sample) {
  return prob.constraint_dim() == prob.state_dim() ? initial_conditions_full(prob, sample)
                                                   : initial_conditions_partial(prob, sample);
}

double scaled_determinant(const Matrix& dX) {
  Matrix scaled = dX;
  for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
    const double m = scaled.col(j).cwiseAbs().maxCoeff();
    if (m > 0.0) scaled.col(j) /= m;
  }
  return scaled.determinant();
}

// --- conjugate time -------------------------------------------------------------------------

ConjugateMonitor::ConjugateMonitor(double exclusion, double rank_threshold)
    : exclusion_(exclusion), threshold_(rank_threshold) {}

bool ConjugateMonitor::crossed(double scaled_det) const {
  return sign_of(scaled_det) != reference_sign_ || std::abs(scaled_det) <= threshold_ * running_max_;
}

std::optional<std::pair<double, double>> ConjugateMonitor::update(double time_to_go, double scaled_det) {
  running_max_ = std::max(running_max_, std::abs(scaled_det));
  if (time_to_go <= exclusion_) return std::nullopt;
  past_exclusion_ = true;
  if (reference_sign_ == 0) {
    if (std::abs(scaled_det) > threshold_ * running_max_ && std::abs(scaled_det) > kDeterminantFloor) {
      reference_sign_ = sign_of(scaled_det);
      last_good_ = time_to_go;
    }
    return std::nullopt;
  }
  if (crossed(scaled_det)) return std::make_pair(last_good_, time_to_go);
  last_good_ = time_to_go;
  return std::nullopt;
}

namespace {

double bisect(const ConjugateMonitor& monitor, const std::function<double(double)>& scaled_det, double lo,
              double hi, double tolerance) {
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (monitor.crossed(scaled_det(mid)))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace

std::optional<double> detect_conjugate_time(std::span<const DetSample> trace, double exclusion,
                                            double rank_threshold, const std::function<double(double)>& refine,
                                            double tolerance) {
  ConjugateMonitor monitor(exclusion, rank_threshold);
  double last_value = 0.0;
  for (const DetSample& sample : trace) {
    const auto bracket = monitor.update(sample.time_to_go, sample.scaled_det);
    if (bracket) {
      if (refine) return bisect(monitor, refine, bracket->first, bracket->second, tolerance);
      if (sign_of(sample.scaled_det) != sign_of(last_value) && sample.scaled_det != 0.0) {
        const double w = last_value / (last_value - sample.scaled_det);
        return bracket->first + w * (bracket->second - bracket->first);
      }
      return bracket->second;
    }
    if (sample.time_to_go > exclusion) last_value = sample.scaled_det;
  }
  if (!monitor.established() && monitor.saw_samples_past_exclusion())
    throw DegenerateFamilyError("det(dX/dq) stays zero past the exclusion window");
  return std::nullopt;
}

// --- extremal construction ------------------------------------------------------------------

ExtremalTrajectory build_extremal(const Problem& prob, const TerminalSample& sample, const ExtremalConfig& cfg) {
  const Eigen::Index n = prob.state_dim();
  const Layout L{n};
  const double tf = prob.final_time();
  const double w = prob.cost_weight();

  const VariationalState v0 = initial_conditions(prob, sample);
  Vector y0(L.size(true));
  y0.segment(L.x(), n) = sample.x_f;
  y0.segment(L.p(), n) = sample.p_f;
  y0(L.cost()) = 0.0;
  Eigen::Map<Matrix>(y0.data() + L.dX(), n, n) = v0.dX;
  Eigen::Map<Matrix>(y0.data() + L.dP(), n, n) = v0.dP;

  const Rhs rhs = [&](double, const Vector& y, Vector& dy) {
    PhasePoint pt{y.segment(L.x(), n), y.segment(L.p(), n)};
    require_in_domain(prob, pt.x);
    const ReducedGradient g = reduced_gradient(prob, pt);
    dy.segment(L.x(), n) = -g.p;
    dy.segment(L.p(), n) = g.x;
    dy(L.cost()) = w * g.u.squaredNorm();
    const SecondDerivatives d = reduced_second_derivatives(prob, pt);
    const Eigen::Map<const Matrix> dX(y.data() + L.dX(), n, n);
    const Eigen::Map<const Matrix> dP(y.data() + L.dP(), n, n);
    Eigen::Map<Matrix>(dy.data() + L.dX(), n, n) = -d.px * dX - d.pp * dP;
    Eigen::Map<Matrix>(dy.data() + L.dP(), n, n) = d.xx * dX + d.xp * dP;
  };

  ExtremalTrajectory out;
  out.terminal = sample;
  const double exclusion = cfg.exclusion_fraction * tf;
  ConjugateMonitor monitor(exclusion, cfg.rank_threshold);
  const auto dX_of = [&](const Vector& y) { return Matrix(Eigen::Map<const Matrix>(y.data() + L.dX(), n, n)); };

  {
    const double scaled0 = scaled_determinant(v0.dX);
    out.det_trace.push_back({0.0, v0.dX.determinant(), scaled0});
    monitor.update(0.0, scaled0);
  }

  const Observer observer = [&](const StepView& step) -> std::optional<double> {
    const Matrix dX = dX_of(step.y1());
    const double scaled = scaled_determinant(dX);
    out.det_trace.push_back({step.t1(), dX.determinant(), scaled});
    const auto bracket = monitor.update(step.t1(), scaled);
    if (!bracket) return std::nullopt;
    const double lo = std::max(bracket->first, step.t0());
    const double tc = bisect(
        monitor, [&](double s) { return scaled_determinant(dX_of(step(s))); }, lo, step.t1(),
        cfg.bisection_tolerance);
    const Matrix dXc = dX_of(step(tc));
    out.det_trace.back() = {tc, dXc.determinant(), scaled_determinant(dXc)};
    out.conjugate_time = tc;
    return tc;
  };

  const Trajectory traj = propagate(rhs, y0, 0.0, tf, cfg.integrator, observer);
  if (!out.conjugate_time && !monitor.established() && monitor.saw_samples_past_exclusion())
    throw DegenerateFamilyError("det(dX/dq) stays zero past the exclusion window");

  out.horizon = out.conjugate_time.value_or(tf);
  out.samples.reserve(traj.times.size());
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    if (traj.times[i] <= 0.0) continue;
    const Vector& y = traj.states[i];
    ExtremalPoint pt;
    pt.time_to_go = traj.times[i];
    pt.x = y.segment(L.x(), n);
    pt.p = y.segment(L.p(), n);
    pt.u = prob.maximizing_control(pt.x, pt.p);
    pt.cost_to_go = y(L.cost());
    if (!legendre_condition(prob, {pt.x, pt.p}))
      throw AssumptionViolation("Legendre condition fails along the extremal");
    if (cfg.record_variational) {
      pt.variational.dX = dX_of(y);
      pt.variational.dP = Eigen::Map<const Matrix>(y.data() + L.dP(), n, n);
    }
    out.samples.push_back(std::move(pt));
  }
  return out;
}

}  // namespace mecp
