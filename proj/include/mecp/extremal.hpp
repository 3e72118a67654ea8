#pragma once

#include "mecp/integrator.hpp"
#include "mecp/problem.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace mecp {

/// A point of the terminal Lagrangian manifold. p_f is always derived as grad(phi)^T nu.
struct TerminalSample {
  Vector x_f;
  Vector nu;
  Vector p_f;
};

/// Validates phi(x_f) ~ 0 and the domain, then fills p_f from the multipliers.
TerminalSample make_terminal_sample(const Problem& prob, const Vector& x_f, const Vector& nu);

/// Sensitivities (dX/dq, dP/dq) of the extremal flow to the terminal parameters.
struct VariationalState {
  Matrix dX;
  Matrix dP;
};

struct ExtremalPoint {
  double time_to_go = 0.0;
  Vector x;
  Vector p;
  Vector u;
  double cost_to_go = 0.0;
  /// Only populated when ExtremalConfig::record_variational is set.
  VariationalState variational;
};

struct DetSample {
  double time_to_go = 0.0;
  double det = 0.0;         // det(dX/dq)
  double scaled_det = 0.0;  // det with every column divided by its sup-norm
};

struct ExtremalTrajectory {
  TerminalSample terminal;
  double horizon = 0.0;  // T = min(t_f, T_c)
  std::vector<ExtremalPoint> samples;  // time-to-go in (0, T]
  std::optional<double> conjugate_time;
  std::vector<DetSample> det_trace;
};

struct ExtremalConfig {
  IntegratorConfig integrator;
  double exclusion_fraction = 1e-3;  // exclusion window = fraction * t_f
  double rank_threshold = 1e-9;
  double bisection_tolerance = 1e-8;
  bool record_variational = false;
};

/// Time-reversed canonical flow (-dh/dp, dh/dx), stacked as [x'; p'].
Vector backward_rhs(const Problem& prob, const PhasePoint& pt);
/// Canonical flow (dh/dp, -dh/dx).
Vector forward_rhs(const Problem& prob, const PhasePoint& pt);

/// Linearization of backward_rhs applied to (dX, dP).
VariationalState variational_rhs(const Problem& prob, const PhasePoint& pt, const VariationalState& v);

/// Orthonormal basis of ker(G) for a full-row-rank s x n matrix, by Gram-Schmidt on the
/// columns of the projector I - G^T (G G^T)^-1 G.
Matrix tangent_basis(const Matrix& gradient);

/// Multipliers nu with p = G^T nu in the least-squares sense.
Vector multipliers_from_costate(const Matrix& gradient, const Vector& p);

/// s == n: (O_n, I_n).
VariationalState initial_conditions_full(const Problem& prob, const TerminalSample& sample);
/// s < n: dX = [tangent basis, O], dP = [nu Hess(phi) basis, grad(phi)^T].
VariationalState initial_conditions_partial(const Problem& prob, const TerminalSample& sample);
VariationalState initial_conditions(const Problem& prob, const TerminalSample& sample);

double scaled_determinant(const Matrix& dX);

/// Streaming focal-point detector over scaled determinants. Reference sign is taken from the
/// first sample past the exclusion window that is clearly nonzero; a crossing is a sign flip
/// or |det| <= rank_threshold * running max.
class ConjugateMonitor {
 public:
  ConjugateMonitor(double exclusion, double rank_threshold);

  /// Returns the bracketing interval [last good, current] when this sample crosses.
  std::optional<std::pair<double, double>> update(double time_to_go, double scaled_det);
  bool crossed(double scaled_det) const;
  bool established() const { return reference_sign_ != 0; }
  bool saw_samples_past_exclusion() const { return past_exclusion_; }

 private:
  double exclusion_;
  double threshold_;
  double running_max_ = 0.0;
  int reference_sign_ = 0;
  double last_good_ = 0.0;
  bool past_exclusion_ = false;
};

/// First time-to-go past `exclusion` where the scaled determinant loses rank. With `refine`
/// the bracket is bisected to `tolerance`; otherwise the sign change is linearly interpolated.
std::optional<double> detect_conjugate_time(std::span<const DetSample> trace, double exclusion,
                                            double rank_threshold = 1e-9,
                                            const std::function<double(double)>& refine = {},
                                            double tolerance = 1e-8);

/// Backward-propagates the augmented extremal + variational system from the terminal sample,
/// stopping at the first conjugate time. Samples follow integrator.output_spacing.
ExtremalTrajectory build_extremal(const Problem& prob, const TerminalSample& sample, const ExtremalConfig& cfg);

}  // namespace mecp
