#pragma once

#include "mecp/dataset.hpp"
#include "mecp/shooting.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mecp {

struct RecordCheck {
  std::size_t index = 0;  // position in Dataset::records
  bool converged = false;
  int iterations = 0;
  double control_error = 0.0;  // |u_shoot - u_stored|_inf / max(|u_stored|_inf, 1e-3)
  bool passed = false;
  std::string message;
};

struct VerifyReport {
  std::vector<RecordCheck> checks;
  std::size_t passed = 0;
  double pass_rate() const { return checks.empty() ? 1.0 : static_cast<double>(passed) / checks.size(); }
};

/// Seeded subsample of max(1, round(fraction * total)) distinct record indices, sorted.
std::vector<std::size_t> choose_records(std::size_t total, double fraction, std::uint64_t seed);

/// Re-solves each chosen record by shooting from (t_g, x) warm-started at the stored costate and
/// compares the recovered initial control with the stored one.
VerifyReport verify_records(const Problem& prob, const Dataset& ds, const std::vector<std::size_t>& indices,
                            const ShootingOptions& options = {}, double tolerance = 1e-6, unsigned workers = 1);

}  // namespace mecp
