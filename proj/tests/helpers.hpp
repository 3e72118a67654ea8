#pragma once

#include "mecp/problems.hpp"

#include <cmath>
#include <random>

namespace mecp::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vector random_vector(std::mt19937_64& rng, const Vector& lo, const Vector& hi) {
  Vector v(lo.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = uniform(rng, lo(i), hi(i));
  return v;
}

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Random phase points in a box where every shipped problem has a regular maximizing control.
inline PhasePoint random_phase_point(const Problem& prob, std::mt19937_64& rng) {
  if (prob.id() == "glider")
    return {random_vector(rng, vec({500, -1, -2e4, 0}), vec({2000, 1, 2e4, 6000})),
            random_vector(rng, vec({-100, -1e3, -30, -30}), vec({100, 1e3, 30, 30}))};
  if (prob.id() == "proximity")
    return {random_vector(rng, vec({-0.3, -0.3, -0.2, -0.2}), vec({0.3, 0.3, 0.2, 0.2})),
            random_vector(rng, vec({-2, -2, -1, -1}), vec({2, 2, 1, 1}))};
  return {random_vector(rng, vec({-2, -2}), vec({2, 2})), random_vector(rng, vec({-30, -30}), vec({30, 30}))};
}

inline GliderParams calibrated_glider() {
  GliderParams gp;
  gp.rho = 0.369;
  return gp;
}

}  // namespace mecp::testing
