#include "mecp/integrator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace mecp {

void IntegratorConfig::validate() const {
  if (method == Method::rk4_fixed && !(step > 0.0)) throw ConfigError("integrator.step: must be positive");
  if (method == Method::rk45_adaptive && (!(rel_tol > 0.0) || !(abs_tol > 0.0)))
    throw ConfigError("integrator.rel_tol/abs_tol: must be positive");
  if (step < 0.0) throw ConfigError("integrator.step: must not be negative");
  if (max_steps == 0) throw ConfigError("integrator.max_steps: must be positive");
  if (output_spacing < 0.0) throw ConfigError("integrator.output_spacing: must not be negative");
}

Vector StepView::operator()(double t) const {
  const double h = t1_ - t0_;
  if (h == 0.0) return y0_;
  const double theta = (t - t0_) / h;
  const double theta1 = 1.0 - theta;
  return y0_ + theta * (c_[0] + theta1 * (c_[1] + theta * (c_[2] + theta1 * c_[3])));
}

namespace {

// Dormand-Prince 5(4) with the order-4 continuous extension of Hairer & Wanner.
namespace dp {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
}  // namespace dp

class GridEmitter {
 public:
  GridEmitter(double t0, double t1, double spacing, Trajectory& out)
      : t0_(t0), t1_(t1), spacing_(spacing), dir_(t1 >= t0 ? 1.0 : -1.0), out_(out) {
    tol_ = 1e-12 * std::max(1.0, std::abs(t1 - t0));
  }

  // Emits grid points in (t_a, t_b]; t_b itself is only emitted when it lies on the grid.
  void emit(const StepView& step, double t_b) {
    if (spacing_ <= 0.0) return;
    for (;;) {
      const double t = t0_ + dir_ * spacing_ * static_cast<double>(next_);
      if (dir_ * (t - t_b) > tol_ || dir_ * (t - t1_) > tol_) return;
      const bool at_end = std::abs(t - step.t1()) <= tol_;
      push(t, at_end ? step.y1() : step(t));
      ++next_;
    }
  }

  void push(double t, const Vector& y) {
    if (!out_.times.empty() && std::abs(out_.times.back() - t) <= tol_) return;
    out_.times.push_back(t);
    out_.states.push_back(y);
  }

  void start(const Vector& y0) {
    push(t0_, y0);
    next_ = 1;
  }

 private:
  double t0_, t1_, spacing_, dir_, tol_;
  long next_ = 0;
  Trajectory& out_;
};

bool finite(const Vector& v) { return v.allFinite(); }

}  // namespace

Trajectory propagate(const Rhs& rhs, const Vector& y0, double t0, double t1, const IntegratorConfig& cfg,
                     const Observer& observer) {
  cfg.validate();
  Trajectory out;
  GridEmitter grid(t0, t1, cfg.output_spacing, out);
  grid.start(y0);
  if (t0 == t1) return out;

  const Eigen::Index dim = y0.size();
  const double dir = t1 > t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);

  double t = t0;
  Vector y = y0;
  std::array<Vector, 7> k;
  for (auto& ki : k) ki.resize(dim);
  std::array<Vector, 4> dense;
  for (auto& di : dense) di.resize(dim);
  Vector ytmp(dim), ynew(dim), err(dim);

  rhs(t, y, k[0]);
  if (!finite(k[0])) throw PropagationError("non-finite derivative", t);

  const auto finish_step = [&](double tn, const Vector& yn) -> bool {
    StepView view(t, tn, y, yn, dense.data());
    std::optional<double> stop;
    if (observer) stop = observer(view);
    if (stop) {
      const double ts = std::clamp(*stop, std::min(t, tn), std::max(t, tn));
      const Vector ys = view(ts);
      grid.emit(view, ts);
      grid.push(ts, ys);
      out.stopped_early = true;
      return true;
    }
    grid.emit(view, tn);
    return false;
  };

  if (cfg.method == Method::rk4_fixed) {
    const double h_nominal = cfg.step;
    while (dir * (t1 - t) > 1e-14 * span) {
      if (out.steps >= cfg.max_steps) throw PropagationError("maximum step count exceeded", t);
      double h = std::min(h_nominal, std::abs(t1 - t));
      if (std::abs(t1 - t) - h < 1e-10 * h_nominal) h = std::abs(t1 - t);
      h *= dir;
      rhs(t + 0.5 * h, y + 0.5 * h * k[0], k[1]);
      rhs(t + 0.5 * h, y + 0.5 * h * k[1], k[2]);
      rhs(t + h, y + h * k[2], k[3]);
      ynew = y + (h / 6.0) * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3]);
      const double tn = (dir * (t1 - (t + h)) <= 1e-14 * span) ? t1 : t + h;
      rhs(tn, ynew, k[4]);
      if (!finite(ynew) || !finite(k[4])) throw PropagationError("non-finite derivative", t);
      // cubic Hermite in the same nested form as the Dormand-Prince extension
      dense[0] = ynew - y;
      dense[1] = h * k[0] - dense[0];
      dense[2] = dense[0] - h * k[4] - dense[1];
      dense[3].setZero();
      ++out.steps;
      if (finish_step(tn, ynew)) return out;
      t = tn;
      y = ynew;
      k[0] = k[4];
    }
    grid.push(t1, y);
    return out;
  }

  // adaptive Dormand-Prince
  const auto error_norm = [&](const Vector& ya, const Vector& yb, const Vector& e) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(ya(i)), std::abs(yb(i)));
      const double r = e(i) / sc;
      acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(dim));
  };

  double h = cfg.step;
  if (!(h > 0.0)) {
    // Hairer's starting step heuristic
    Vector sc = (cfg.abs_tol + cfg.rel_tol * y.array().abs()).matrix();
    const double d0 = std::sqrt((y.array() / sc.array()).square().mean());
    const double d1 = std::sqrt((k[0].array() / sc.array()).square().mean());
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    rhs(t + dir * h0, y + dir * h0 * k[0], k[1]);
    const double d2 = std::sqrt(((k[1] - k[0]).array() / sc.array()).square().mean()) / h0;
    const double h1 = (std::max(d1, d2) <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                   : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
    h = std::min(100.0 * h0, h1);
  }
  h = std::min(h, span);

  bool last_rejected = false;
  std::string failure;
  while (dir * (t1 - t) > 1e-14 * span) {
    if (out.steps >= cfg.max_steps) throw PropagationError("maximum step count exceeded", t);
    double hs = std::min(h, std::abs(t1 - t));
    if (std::abs(t1 - t) - hs < 1e-10 * span) hs = std::abs(t1 - t);
    const double hd = dir * hs;

    using namespace dp;
    const double tn = (hs == std::abs(t1 - t)) ? t1 : t + hd;
    double en = std::numeric_limits<double>::infinity();
    try {
    ytmp = y + hd * a21 * k[0];
    rhs(t + c2 * hd, ytmp, k[1]);
    ytmp = y + hd * (a31 * k[0] + a32 * k[1]);
    rhs(t + c3 * hd, ytmp, k[2]);
    ytmp = y + hd * (a41 * k[0] + a42 * k[1] + a43 * k[2]);
    rhs(t + c4 * hd, ytmp, k[3]);
    ytmp = y + hd * (a51 * k[0] + a52 * k[1] + a53 * k[2] + a54 * k[3]);
    rhs(t + c5 * hd, ytmp, k[4]);
    ytmp = y + hd * (a61 * k[0] + a62 * k[1] + a63 * k[2] + a64 * k[3] + a65 * k[4]);
    rhs(tn, ytmp, k[5]);
    ynew = y + hd * (a71 * k[0] + a73 * k[2] + a74 * k[3] + a75 * k[4] + a76 * k[5]);
    rhs(tn, ynew, k[6]);
    if (finite(ynew) && finite(k[6])) {
      err = hd * (e1 * k[0] + e3 * k[2] + e4 * k[3] + e5 * k[4] + e6 * k[5] + e7 * k[6]);
      en = error_norm(y, ynew, err);
    }
    } catch (const Error& e) {
      // a trial stage left the domain; retry with a smaller step
      failure = e.what();
    }

    if (en <= 1.0) {
      dense[0] = ynew - y;
      dense[1] = hd * k[0] - dense[0];
      dense[2] = dense[0] - hd * k[6] - dense[1];
      dense[3] = hd * (d1 * k[0] + d3 * k[2] + d4 * k[3] + d5 * k[4] + d6 * k[5] + d7 * k[6]);
      ++out.steps;
      if (finish_step(tn, ynew)) return out;
      t = tn;
      y = ynew;
      k[0] = k[6];
      double factor = en == 0.0 ? 10.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 10.0);
      if (last_rejected) factor = std::min(factor, 1.0);
      h = hs * factor;
      last_rejected = false;
    } else {
      const double factor = std::isfinite(en) ? std::max(0.2, 0.9 * std::pow(en, -0.2)) : 0.25;
      h = hs * factor;
      last_rejected = true;
      if (h < 1e-14 * std::max(1.0, std::abs(t)))
        throw PropagationError(failure.empty() ? "step size underflow" : "step size underflow: " + failure, t);
    }
  }
  grid.push(t1, y);
  return out;
}

}  // namespace mecp
