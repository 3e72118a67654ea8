#pragma once

#include "mecp/extremal.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mecp {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

enum class SamplingMode { uniform_grid, uniform_random };

std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& name);

/// How the terminal Lagrangian manifold is sampled. The n sampling dimensions are the n - s free
/// terminal coordinates followed by the s multipliers.
struct SamplingSpec {
  std::size_t count = 1;
  double dt = 0.0;
  std::vector<Range> free_ranges;
  std::vector<Range> multiplier_ranges;
  SamplingMode mode = SamplingMode::uniform_random;
  std::uint64_t seed = 0;

  void validate(const Problem& prob) const;
};

/// One training record. `p` is auxiliary (not a network input or target).
struct Record {
  double time_to_go = 0.0;
  Vector x;
  Vector u;
  Vector p;
  std::size_t extremal_id = 0;
};

struct DatasetMeta {
  std::string problem_id;
  nlohmann::json problem_config = nlohmann::json::object();
  int state_dim = 0;
  int control_dim = 0;
  double final_time = 0.0;
  std::size_t samples = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::string generator_version = kVersion;
  std::string mode = "uniform_random";
  std::size_t built = 0;
  std::size_t failed = 0;
  std::size_t truncated = 0;  // extremals stopped at a conjugate time before t_f
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Record> records;
};

std::vector<TerminalSample> sample_terminal_manifold(const Problem& prob, const SamplingSpec& spec);

struct GenerateOptions {
  ExtremalConfig extremal;
  unsigned workers = 1;
  /// Receives (sample index, reason) for every extremal that could not be built.
  std::function<void(std::size_t, const std::string&)> on_failure;
};

/// Builds one extremal per terminal sample and flattens each onto t_g = dt, 2 dt, ... <= T.
Dataset generate(const Problem& prob, const SamplingSpec& spec, const GenerateOptions& options = {});

/// Grid records of an already built extremal.
std::vector<Record> flatten_extremal(const ExtremalTrajectory& extremal, double dt, std::size_t extremal_id);

/// Record whose t_g is closest to `time_to_go` and, among those, whose state is nearest in
/// per-component standardized distance. Null for an empty dataset.
const Record* nearest_record(const Dataset& ds, double time_to_go, const Vector& x);

void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

nlohmann::json to_json(const DatasetMeta& meta);
DatasetMeta dataset_meta_from_json(const nlohmann::json& j);

}  // namespace mecp
