#include "mecp/verify.hpp"

#include "mecp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mecp {

std::vector<std::size_t> choose_records(std::size_t total, double fraction, std::uint64_t seed) {
  if (total == 0) return {};
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("verify.fraction: must lie in (0, 1]");
  const auto want = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * total)), 1, total);
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  // partial Fisher-Yates
  for (std::size_t i = 0; i < want; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(want);
  std::sort(all.begin(), all.end());
  return all;
}

VerifyReport verify_records(const Problem& prob, const Dataset& ds, const std::vector<std::size_t>& indices,
                            const ShootingOptions& options, double tolerance, unsigned workers) {
  if (ds.meta.state_dim != prob.state_dim() || ds.meta.control_dim != prob.control_dim())
    throw ConfigError("dataset dimensions do not match the problem");
  VerifyReport report;
  report.checks.resize(indices.size());
  parallel_for(indices.size(), workers, [&](std::size_t k) {
    RecordCheck& c = report.checks[k];
    c.index = indices[k];
    if (c.index >= ds.records.size()) throw ContractViolation("record index out of range");
    const Record& r = ds.records[c.index];
    const ShootingResult s = shoot(prob, r.x, r.time_to_go, r.p, options);
    c.converged = s.converged;
    c.iterations = s.iterations;
    c.message = s.message;
    if (!s.converged) return;
    const Vector u = prob.maximizing_control(r.x, s.initial_costate);
    c.control_error = (u - r.u).lpNorm<Eigen::Infinity>() / std::max(r.u.lpNorm<Eigen::Infinity>(), 1e-3);
    c.passed = c.control_error <= tolerance;
  });
  for (const RecordCheck& c : report.checks) report.passed += c.passed;
  return report;
}

}  // namespace mecp
