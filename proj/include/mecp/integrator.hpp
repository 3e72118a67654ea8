#pragma once

#include "mecp/types.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace mecp {

enum class Method { rk4_fixed, rk45_adaptive };

struct IntegratorConfig {
  Method method = Method::rk45_adaptive;
  /// Fixed step for rk4_fixed; optional first trial step for rk45_adaptive (0 picks one).
  double step = 0.0;
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  std::size_t max_steps = 1'000'000;
  /// Spacing of the uniform output grid measured from the start time; 0 emits endpoints only.
  double output_spacing = 0.0;

  void validate() const;
};

/// dydt = rhs(t, y). The output vector is pre-sized by the caller.
using Rhs = std::function<void(double t, const Vector& y, Vector& dydt)>;

/// One accepted step together with its continuous extension.
class StepView {
 public:
  StepView(double t0, double t1, const Vector& y0, const Vector& y1, const Vector* coefficients)
      : t0_(t0), t1_(t1), y0_(y0), y1_(y1), c_(coefficients) {}

  double t0() const { return t0_; }
  double t1() const { return t1_; }
  const Vector& y0() const { return y0_; }
  const Vector& y1() const { return y1_; }

  /// Dense output at t in [t0, t1].
  Vector operator()(double t) const;

 private:
  double t0_, t1_;
  const Vector& y0_;
  const Vector& y1_;
  const Vector* c_;  // four correction vectors of the interpolant
};

/// Called once per accepted step. Returning a time inside [t0, t1] of that step ends the
/// propagation there.
using Observer = std::function<std::optional<double>(const StepView&)>;

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  std::size_t steps = 0;
  bool stopped_early = false;
};

/// Integrates from t0 to t1 (either direction). Samples land on the output grid and always
/// include both endpoints.
Trajectory propagate(const Rhs& rhs, const Vector& y0, double t0, double t1, const IntegratorConfig& cfg,
                     const Observer& observer = {});

}  // namespace mecp
