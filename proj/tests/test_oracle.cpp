#include "helpers.hpp"
#include "mecp/dataset.hpp"
#include "mecp/shooting.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mecp;
using mecp::testing::vec;

namespace {

// Minimum-norm piecewise-constant control on K equal intervals that brings the double
// integrator from x0 to rest at the origin after t_g; returns the first interval's control.
double brute_force_first_control(const Vector& x0, double tg, int K) {
  const double h = tg / K;
  Matrix A(2, K);
  for (int k = 0; k < K; ++k) {
    const double remaining = tg - (k + 1) * h;  // time after the end of interval k
    A(0, k) = h * h / 2 + h * remaining;
    A(1, k) = h;
  }
  const Vector b = -vec({x0(0) + x0(1) * tg, x0(1)});
  const Vector u = A.transpose() * (A * A.transpose()).ldlt().solve(b);
  return u(0);
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("double integrator law examples") {
  CHECK(double_integrator_law(vec({1, 0}), 1.0)(0) == -6.0);
  CHECK(double_integrator_law(vec({0, 0}), 1.0)(0) == 0.0);
  CHECK(double_integrator_law(vec({0, 1}), 1.0)(0) == -4.0);
  CHECK_THROWS_AS(double_integrator_law(vec({1, 0}), 0.0), DomainError);
}

TEST_CASE("double integrator law agrees with a brute-force least-norm solution") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = testing::random_vector(rng, vec({-2, -2}), vec({2, 2}));
    const double tg = testing::uniform(rng, 0.2, 3.0);
    const double law = double_integrator_law(x, tg)(0);
    const double coarse = brute_force_first_control(x, tg, 500);
    const double fine = brute_force_first_control(x, tg, 2000);
    // the discretized first control converges at first order; the finer grid must be closer
    CHECK(std::abs(fine - law) < std::abs(coarse - law) + 1e-12);
    CHECK(std::abs(fine - law) < 20.0 * (std::abs(x(0)) / (tg * tg) + std::abs(x(1)) / tg) / 2000 + 1e-9);
  }
}

TEST_CASE("cold start on the double integrator") {
  const auto di = double_integrator_problem(1.0);
  const ShootingResult r = shoot(*di, vec({1, 0}), 1.0, Vector::Zero(2));
  REQUIRE(r.converged);
  CHECK((r.initial_costate - vec({-24, -12})).norm() < 1e-8);
  CHECK(r.terminal_defect < 1e-10);
  CHECK(r.cost == doctest::Approx(12.0).epsilon(1e-10));
}

TEST_CASE("shooting matches the closed-form law") {
  const auto di = double_integrator_problem(3.0);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 20; ++k) {
    const Vector x = testing::random_vector(rng, vec({-2, -2}), vec({2, 2}));
    const double tg = testing::uniform(rng, 0.1, 3.0);
    const ShootingResult r = shoot(*di, x, tg, Vector::Zero(2));
    REQUIRE(r.converged);
    const Vector u0 = di->maximizing_control(x, r.initial_costate);
    CHECK(std::abs(u0(0) - double_integrator_law(x, tg)(0)) < 1e-8 * std::max(1.0, std::abs(u0(0))));
  }
}

TEST_CASE("infeasible zero time-to-go") {
  const auto di = double_integrator_problem(1.0);
  const ShootingResult r = shoot(*di, vec({1, 0}), 0.0, Vector::Zero(2));
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 0);
  CHECK_FALSE(r.message.empty());
}

TEST_CASE("warm starts from dataset records") {
  const auto prox = proximity_problem(1.0);
  SamplingSpec spec;
  spec.count = 40;
  spec.dt = 0.05;
  spec.free_ranges = {{-0.7, -0.1}, {-0.4, 0.3}};
  spec.multiplier_ranges = {{-2, 0}, {-1.5, 0.5}};
  spec.seed = 17;
  GenerateOptions gen;
  gen.extremal.integrator.rel_tol = 1e-12;
  gen.extremal.integrator.abs_tol = 1e-14;
  const Dataset ds = generate(*prox, spec, gen);
  REQUIRE(ds.records.size() >= 100);

  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> pick(0, ds.records.size() - 1);
  ShootingOptions opts;
  opts.output_spacing = spec.dt;
  int worst_iterations = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Record& rec = ds.records[pick(rng)];
    const ShootingResult r = shoot(*prox, rec.x, rec.time_to_go, rec.p, opts);
    REQUIRE(r.converged);
    worst_iterations = std::max(worst_iterations, r.iterations);
    // compare the re-solved arc with the stored records of the same extremal
    for (const ShootingPoint& pt : r.trajectory) {
      const double tg = rec.time_to_go - pt.time;
      if (tg < spec.dt / 2) continue;
      for (const Record& other : ds.records) {
        if (other.extremal_id != rec.extremal_id || std::abs(other.time_to_go - tg) > 1e-9) continue;
        worst = std::max(worst, (other.x - pt.x).lpNorm<Eigen::Infinity>());
        worst = std::max(worst, (other.p - pt.p).lpNorm<Eigen::Infinity>());
        worst = std::max(worst, (other.u - pt.u).lpNorm<Eigen::Infinity>());
      }
    }
  }
  CHECK(worst_iterations <= 2);
  CHECK(worst < 1e-6);
}

TEST_CASE("glider warm start from a solved neighbour") {
  const auto glider = glider_problem(testing::calibrated_glider(), 20.0);
  const Scenario sc = scenario_preset("glider_vehicle1");
  ShootingOptions opts;
  opts.integrator.rel_tol = 1e-12;
  opts.integrator.abs_tol = 1e-10;
  // terminal parameters of the vehicle #1 extremal, propagated back to get a consistent guess
  ExtremalConfig ec;
  ec.integrator = opts.integrator;
  const ExtremalTrajectory ex =
      build_extremal(*glider, make_terminal_sample(*glider, vec({997, -0.80, 0, 0}), vec({-3.39, -20.77})), ec);
  const ExtremalPoint& start = ex.samples.back();
  const ShootingResult r = shoot(*glider, start.x, 20.0, start.p, opts);
  REQUIRE(r.converged);
  CHECK(r.iterations <= 2);
  CHECK(r.terminal_defect < 1e-6);
  CHECK(sc.time_to_go == 20.0);
}

}  // TEST_SUITE
