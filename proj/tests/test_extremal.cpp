#include "helpers.hpp"
#include "mecp/extremal.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mecp;
using mecp::testing::vec;

namespace {

ExtremalConfig tight(double spacing = 0.0) {
  ExtremalConfig cfg;
  cfg.integrator.rel_tol = 1e-12;
  cfg.integrator.abs_tol = 1e-14;
  cfg.integrator.output_spacing = spacing;
  return cfg;
}

}  // namespace

TEST_SUITE("extremal") {

TEST_CASE("backward rhs hand evaluations") {
  const auto di = double_integrator_problem(1.0);
  const double c = 2.5;
  const Vector v = backward_rhs(*di, {vec({0, 0}), vec({c, 0})});
  CHECK((v - vec({0, 0, 0, c})).lpNorm<Eigen::Infinity>() == 0.0);

  const auto prox = proximity_problem(1.0);
  CHECK(backward_rhs(*prox, {Vector::Zero(4), Vector::Zero(4)}).lpNorm<Eigen::Infinity>() == 0.0);

  std::mt19937_64 rng(5);
  const auto glider = glider_problem(testing::calibrated_glider(), 20.0);
  for (const ProblemPtr& prob : {ProblemPtr(di), prox, glider}) {
    for (int k = 0; k < 10; ++k) {
      const PhasePoint pt = testing::random_phase_point(*prob, rng);
      CHECK((backward_rhs(*prob, pt) + forward_rhs(*prob, pt)).lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
}

TEST_CASE("initial conditions for a fully pinned target") {
  const auto di = double_integrator_problem(1.0);
  const TerminalSample s = make_terminal_sample(*di, vec({0, 0}), vec({-24, 12}));
  CHECK((s.p_f - vec({-24, 12})).norm() == 0.0);
  const VariationalState v = initial_conditions_full(*di, s);
  CHECK(v.dX == Matrix::Zero(2, 2));
  CHECK(v.dP == Matrix::Identity(2, 2));
  CHECK_THROWS_AS(initial_conditions_partial(*di, s), ContractViolation);

  const auto prox = proximity_problem(1.0);
  const TerminalSample sp = make_terminal_sample(*prox, vec({0, 0, 0.1, 0}), vec({1, 2}));
  CHECK_THROWS_AS(initial_conditions_full(*prox, sp), ContractViolation);
}

TEST_CASE("initial conditions for a partially pinned target") {
  const auto prox = proximity_problem(1.0);
  const TerminalSample s = make_terminal_sample(*prox, Vector::Zero(4), vec({0.3, -0.7}));
  CHECK((s.p_f - vec({0.3, -0.7, 0, 0})).norm() == 0.0);
  const VariationalState v = initial_conditions_partial(*prox, s);
  Matrix dX = Matrix::Zero(4, 4), dP = Matrix::Zero(4, 4);
  dX(2, 0) = 1;
  dX(3, 1) = 1;
  dP(0, 2) = 1;
  dP(1, 3) = 1;
  CHECK((v.dX - dX).lpNorm<Eigen::Infinity>() < 1e-15);
  CHECK((v.dP - dP).lpNorm<Eigen::Infinity>() < 1e-15);
  Matrix stacked(8, 4);
  stacked << v.dX, v.dP;
  CHECK(stacked.fullPivLu().rank() == 4);

  const auto glider = glider_problem(GliderParams{}, 20.0);
  const Matrix G = glider->terminal_gradient(vec({1000, -0.8, 0, 0}));
  const Matrix basis = tangent_basis(G);
  CHECK((G * basis).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((basis.col(0) - vec({1, 0, 0, 0})).norm() < 1e-15);
  CHECK((basis.col(1) - vec({0, 1, 0, 0})).norm() < 1e-15);
  CHECK((multipliers_from_costate(G, vec({3, 4, -5, 6})) - vec({-5, 6})).norm() < 1e-14);

  Matrix rank_deficient(2, 4);
  rank_deficient << 1, 0, 0, 0, 2, 0, 0, 0;
  CHECK_THROWS_AS(tangent_basis(rank_deficient), AssumptionViolation);
}

TEST_CASE("off-manifold terminal samples are rejected") {
  const auto prox = proximity_problem(1.0);
  CHECK_THROWS_AS(make_terminal_sample(*prox, vec({1e-6, 0, 0, 0}), vec({0, 0})), AssumptionViolation);
}

TEST_CASE("double integrator variational flow has the closed form") {
  const auto di = double_integrator_problem(1.0);
  const TerminalSample s = make_terminal_sample(*di, vec({0, 0}), vec({-24, 12}));
  ExtremalConfig cfg = tight(0.05);
  cfg.record_variational = true;
  const ExtremalTrajectory ex = build_extremal(*di, s, cfg);
  double worst = 0.0;
  for (const ExtremalPoint& pt : ex.samples) {
    const double o = pt.time_to_go;
    Matrix dX(2, 2), dP(2, 2);
    dX << o * o * o / 12, o * o / 4, -o * o / 4, -o / 2;
    dP << 1, 0, o, 1;
    worst = std::max(worst, (pt.variational.dX - dX).lpNorm<Eigen::Infinity>());
    worst = std::max(worst, (pt.variational.dP - dP).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst < 1e-12);

  // single-step check of the matrix right-hand side
  VariationalState v{Matrix::Zero(2, 2), Matrix::Identity(2, 2)};
  const VariationalState r = variational_rhs(*di, {vec({0, 0}), vec({-24, 12})}, v);
  Matrix dXdot(2, 2);
  dXdot << 0, 0, 0, -0.5;
  CHECK((r.dX - dXdot).lpNorm<Eigen::Infinity>() < 1e-15);
  Matrix dPdot(2, 2);
  dPdot << 0, 0, 1, 0;
  CHECK((r.dP - dPdot).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("double integrator extremal matches the analytic solution") {
  const auto di = double_integrator_problem(1.0);
  const ExtremalTrajectory ex = build_extremal(*di, make_terminal_sample(*di, vec({0, 0}), vec({-24, 12})), tight(0.01));
  CHECK_FALSE(ex.conjugate_time.has_value());
  CHECK(ex.horizon == 1.0);
  REQUIRE(ex.samples.size() == 100);
  const ExtremalPoint& last = ex.samples.back();
  CHECK(last.time_to_go == 1.0);
  CHECK(std::abs(last.x(0) - 1.0) < 1e-10);
  CHECK(std::abs(last.x(1)) < 1e-10);
  CHECK(std::abs(last.u(0) + 6.0) < 1e-10);
  CHECK(std::abs(last.cost_to_go - 12.0) < 1e-10);
  for (const ExtremalPoint& pt : ex.samples) {
    const double o = pt.time_to_go;
    CHECK(pt.p(1) == doctest::Approx(12 - 24 * o).epsilon(1e-10));
  }

  // det(dX) = sigma^4 / 48 on every accepted step
  double worst = 0.0;
  for (const DetSample& d : ex.det_trace) {
    if (d.time_to_go < 0.1) continue;
    const double expect = std::pow(d.time_to_go, 4) / 48.0;
    worst = std::max(worst, std::abs(d.det - expect) / expect);
  }
  CHECK(worst < 1e-9);
  CHECK(ex.det_trace.front().det == 0.0);
  CHECK_FALSE(detect_conjugate_time(ex.det_trace, 1e-3).has_value());
}

TEST_CASE("synthetic traces") {
  const auto f = [](double s) { return s * s * (1 - s); };
  std::vector<DetSample> trace;
  for (int k = 0; k <= 150; ++k) {
    const double s = k / 100.0;
    trace.push_back({s, f(s), f(s)});
  }
  const auto tc = detect_conjugate_time(trace, 0.05, 1e-9, f, 1e-8);
  REQUIRE(tc.has_value());
  CHECK(std::abs(*tc - 1.0) < 1e-8);
  CHECK_FALSE(detect_conjugate_time(trace, 2.0).has_value());

  std::vector<DetSample> flat;
  for (int k = 0; k <= 10; ++k) flat.push_back({k / 10.0, 0.0, 0.0});
  CHECK_THROWS_AS(detect_conjugate_time(flat, 0.05), DegenerateFamilyError);
}

TEST_CASE("the zero proximity extremal") {
  const auto prox = proximity_problem(1.0);
  const ExtremalTrajectory ex = build_extremal(*prox, make_terminal_sample(*prox, Vector::Zero(4), vec({0, 0})), tight(0.1));
  CHECK(ex.horizon == 1.0);
  CHECK_FALSE(ex.conjugate_time.has_value());
  for (const ExtremalPoint& pt : ex.samples) {
    CHECK(pt.x.norm() == 0.0);
    CHECK(pt.u.norm() == 0.0);
  }
}

TEST_CASE("glider determinant grows from its structural zero") {
  const auto glider = glider_problem(testing::calibrated_glider(), 20.0);
  const ExtremalTrajectory ex =
      build_extremal(*glider, make_terminal_sample(*glider, vec({997, -0.80, 0, 0}), vec({-3.39, -20.77})), tight(0.5));
  CHECK(ex.det_trace.front().det == 0.0);
  REQUIRE(ex.det_trace.size() > 2);
  CHECK(ex.det_trace[1].det != 0.0);
  CHECK_FALSE(ex.conjugate_time.has_value());
  CHECK(ex.samples.back().time_to_go == doctest::Approx(20.0));
}

TEST_CASE("hamiltonian is conserved and Legendre holds on stored samples") {
  const auto prox = proximity_problem(1.0);
  const ExtremalTrajectory ex =
      build_extremal(*prox, make_terminal_sample(*prox, vec({0, 0, -0.4, 0.1}), vec({-1.0, -0.5})), tight(0.01));
  const double h0 = maximized_hamiltonian(*prox, {ex.terminal.x_f, ex.terminal.p_f});
  double drift = 0.0;
  for (const ExtremalPoint& pt : ex.samples) {
    drift = std::max(drift, std::abs(maximized_hamiltonian(*prox, {pt.x, pt.p}) - h0));
    CHECK(legendre_condition(*prox, {pt.x, pt.p}));
    CHECK((pt.u - prox->maximizing_control(pt.x, pt.p)).norm() == 0.0);
  }
  CHECK(drift < 1e-8);
}

TEST_CASE("variational state agrees with perturbed extremals") {
  const auto prox = proximity_problem(1.0);
  const Vector xf = vec({0, 0, -0.4, 0.1});
  const Vector nu = vec({-1.0, -0.5});
  ExtremalConfig cfg = tight(0.1);
  cfg.record_variational = true;
  const ExtremalTrajectory base = build_extremal(*prox, make_terminal_sample(*prox, xf, nu), cfg);
  const Matrix basis = tangent_basis(prox->terminal_gradient(xf));
  const double h = 1e-6;
  for (int j = 0; j < 4; ++j) {
    Vector xp = xf, xm = xf, np = nu, nm = nu;
    if (j < 2) {
      xp += h * basis.col(j);
      xm -= h * basis.col(j);
    } else {
      np(j - 2) += h;
      nm(j - 2) -= h;
    }
    const ExtremalTrajectory a = build_extremal(*prox, make_terminal_sample(*prox, xp, np), tight(0.1));
    const ExtremalTrajectory b = build_extremal(*prox, make_terminal_sample(*prox, xm, nm), tight(0.1));
    for (std::size_t k = 0; k < base.samples.size(); ++k) {
      const Vector fd = (a.samples[k].x - b.samples[k].x) / (2 * h);
      const Vector an = base.samples[k].variational.dX.col(j);
      CHECK((fd - an).norm() <= 1e-3 * std::max(an.norm(), 1e-3));
    }
  }
}

}  // TEST_SUITE
