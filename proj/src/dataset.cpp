#include "mecp/dataset.hpp"

#include "mecp/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

namespace mecp {

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::uniform_grid ? "uniform_grid" : "uniform_random";
}

SamplingMode sampling_mode_from_string(const std::string& name) {
  if (name == "uniform_grid") return SamplingMode::uniform_grid;
  if (name == "uniform_random") return SamplingMode::uniform_random;
  throw ConfigError("unknown sampling mode '" + name + "' (expected uniform_grid or uniform_random)");
}

void SamplingSpec::validate(const Problem& prob) const {
  const int n = prob.state_dim(), s = prob.constraint_dim();
  if (count < 1) throw ConfigError("sampling.count: must be at least 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("sampling.dt: must be positive");
  if (static_cast<int>(free_ranges.size()) != n - s)
    throw ConfigError("sampling.free_ranges: expected " + std::to_string(n - s) + " ranges, got " +
                      std::to_string(free_ranges.size()));
  if (static_cast<int>(multiplier_ranges.size()) != s)
    throw ConfigError("sampling.multiplier_ranges: expected " + std::to_string(s) + " ranges, got " +
                      std::to_string(multiplier_ranges.size()));
  const auto check = [](const std::vector<Range>& ranges, const char* field) {
    for (std::size_t i = 0; i < ranges.size(); ++i) {
      const Range& r = ranges[i];
      if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi)
        throw ConfigError(std::string("sampling.") + field + "[" + std::to_string(i) +
                          "]: need finite lo <= hi");
    }
  };
  check(free_ranges, "free_ranges");
  check(multiplier_ranges, "multiplier_ranges");
}

namespace {

std::size_t grid_side(std::size_t count, std::size_t dims) {
  if (dims == 0) return 1;
  const auto k = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(count), 1.0 / dims)));
  std::size_t total = 1;
  for (std::size_t d = 0; d < dims; ++d) total *= k;
  if (total != count)
    throw ConfigError("sampling.count: uniform_grid needs a perfect power k^" + std::to_string(dims) + ", got " +
                      std::to_string(count));
  return k;
}

}  // namespace

std::vector<TerminalSample> sample_terminal_manifold(const Problem& prob, const SamplingSpec& spec) {
  spec.validate(prob);
  const int n = prob.state_dim(), s = prob.constraint_dim();
  std::vector<Range> ranges = spec.free_ranges;
  ranges.insert(ranges.end(), spec.multiplier_ranges.begin(), spec.multiplier_ranges.end());

  std::vector<Vector> points(spec.count, Vector(n));
  if (spec.mode == SamplingMode::uniform_grid) {
    const std::size_t k = grid_side(spec.count, ranges.size());
    for (std::size_t i = 0; i < spec.count; ++i) {
      std::size_t rest = i;
      for (std::size_t d = 0; d < ranges.size(); ++d) {
        const std::size_t j = rest % k;
        rest /= k;
        const Range& r = ranges[d];
        points[i](d) = k == 1 ? 0.5 * (r.lo + r.hi) : r.lo + (r.hi - r.lo) * static_cast<double>(j) / (k - 1);
      }
    }
  } else {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Vector& q : points)
      for (std::size_t d = 0; d < ranges.size(); ++d) q(d) = ranges[d].lo + (ranges[d].hi - ranges[d].lo) * unit(rng);
  }

  std::vector<TerminalSample> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    try {
      const Vector x_f = prob.terminal_state(points[i].head(n - s));
      out.push_back(make_terminal_sample(prob, x_f, points[i].tail(s)));
    } catch (const Error& e) {
      throw DomainError("terminal sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Record> flatten_extremal(const ExtremalTrajectory& extremal, double dt, std::size_t extremal_id) {
  std::vector<Record> out;
  const double limit = extremal.horizon * (1.0 + 1e-12);
  for (const ExtremalPoint& pt : extremal.samples) {
    const double k = std::round(pt.time_to_go / dt);
    if (k < 1.0 || std::abs(pt.time_to_go - k * dt) > 1e-9 * std::max(1.0, pt.time_to_go)) continue;
    if (pt.time_to_go > limit) continue;
    out.push_back({pt.time_to_go, pt.x, pt.u, pt.p, extremal_id});
  }
  return out;
}

Dataset generate(const Problem& prob, const SamplingSpec& spec, const GenerateOptions& options) {
  const std::vector<TerminalSample> samples = sample_terminal_manifold(prob, spec);
  ExtremalConfig cfg = options.extremal;
  cfg.integrator.output_spacing = spec.dt;
  cfg.record_variational = false;
  cfg.integrator.validate();

  struct Outcome {
    std::vector<Record> records;
    bool truncated = false;
    std::optional<std::string> failure;
  };
  std::vector<Outcome> outcomes(samples.size());
  parallel_for(samples.size(), options.workers, [&](std::size_t i) {
    try {
      const ExtremalTrajectory ex = build_extremal(prob, samples[i], cfg);
      outcomes[i].records = flatten_extremal(ex, spec.dt, i);
      outcomes[i].truncated = ex.conjugate_time.has_value();
    } catch (const Error& e) {
      outcomes[i].failure = e.what();
    }
  });

  Dataset ds;
  DatasetMeta& m = ds.meta;
  m.problem_id = prob.id();
  m.state_dim = prob.state_dim();
  m.control_dim = prob.control_dim();
  m.final_time = prob.final_time();
  m.samples = spec.count;
  m.dt = spec.dt;
  m.seed = spec.seed;
  m.mode = to_string(spec.mode);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    Outcome& o = outcomes[i];
    if (o.failure) {
      ++m.failed;
      if (options.on_failure) options.on_failure(i, *o.failure);
      continue;
    }
    ++m.built;
    if (o.truncated) ++m.truncated;
    for (Record& r : o.records) ds.records.push_back(std::move(r));
  }
  if (m.built == 0) throw EmptyDatasetError("no extremal could be built from " + std::to_string(spec.count) + " samples");
  return ds;
}

const Record* nearest_record(const Dataset& ds, double time_to_go, const Vector& x) {
  if (ds.records.empty()) return nullptr;
  double best_dt = std::numeric_limits<double>::infinity();
  for (const Record& r : ds.records) best_dt = std::min(best_dt, std::abs(r.time_to_go - time_to_go));
  const double slack = 1e-9 * std::max(1.0, std::abs(time_to_go));

  Vector mean = Vector::Zero(x.size()), sq = Vector::Zero(x.size());
  for (const Record& r : ds.records) mean += r.x, sq += r.x.cwiseAbs2();
  const double count = static_cast<double>(ds.records.size());
  mean /= count;
  Vector scale = (sq / count - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index i = 0; i < scale.size(); ++i)
    if (!(scale(i) > 0.0)) scale(i) = 1.0;

  const Record* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const Record& r : ds.records) {
    if (std::abs(r.time_to_go - time_to_go) > best_dt + slack) continue;
    const double d = (r.x - x).cwiseQuotient(scale).squaredNorm();
    if (d < best_d) best_d = d, best = &r;
  }
  return best;
}

// --- file format ------------------------------------------------------------------------------

nlohmann::json to_json(const DatasetMeta& m) {
  return {{"problem_id", m.problem_id},
          {"problem_config", m.problem_config},
          {"n", m.state_dim},
          {"m", m.control_dim},
          {"t_f", m.final_time},
          {"N", m.samples},
          {"dt", m.dt},
          {"seed", m.seed},
          {"generator_version", m.generator_version},
          {"mode", m.mode},
          {"built", m.built},
          {"failed", m.failed},
          {"truncated", m.truncated}};
}

DatasetMeta dataset_meta_from_json(const nlohmann::json& j) {
  DatasetMeta m;
  m.problem_id = j.at("problem_id").get<std::string>();
  m.problem_config = j.value("problem_config", nlohmann::json::object());
  m.state_dim = j.at("n").get<int>();
  m.control_dim = j.at("m").get<int>();
  m.final_time = j.at("t_f").get<double>();
  m.samples = j.at("N").get<std::size_t>();
  m.dt = j.at("dt").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.generator_version = j.value("generator_version", "");
  m.mode = j.value("mode", "uniform_random");
  m.built = j.value("built", std::size_t{0});
  m.failed = j.value("failed", std::size_t{0});
  m.truncated = j.value("truncated", std::size_t{0});
  if (m.state_dim < 1 || m.control_dim < 1) throw ConfigError("dataset metadata: n and m must be positive");
  return m;
}

namespace {

constexpr const char* kMagic = "# mecp-dataset v1";

void put(std::string& line, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  line += buf;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  const int n = ds.meta.state_dim, m = ds.meta.control_dim;
  out << kMagic << '\n' << to_json(ds.meta).dump() << '\n';
  std::string header = "t_g";
  for (int i = 1; i <= n; ++i) header += ",x" + std::to_string(i);
  for (int i = 1; i <= m; ++i) header += ",u" + std::to_string(i);
  for (int i = 1; i <= n; ++i) header += ",p" + std::to_string(i);
  out << header << ",extremal_id\n";

  std::string line;
  for (const Record& r : ds.records) {
    if (r.x.size() != n || r.u.size() != m || r.p.size() != n)
      throw ContractViolation("record dimensions disagree with dataset metadata");
    line.clear();
    put(line, r.time_to_go);
    for (int i = 0; i < n; ++i) line += ',', put(line, r.x(i));
    for (int i = 0; i < m; ++i) line += ',', put(line, r.u(i));
    for (int i = 0; i < n; ++i) line += ',', put(line, r.p(i));
    line += ',' + std::to_string(r.extremal_id) + '\n';
    out << line;
  }
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset '" + path + "'");
  Dataset ds;
  std::string line;
  long lineno = 0;
  const auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next() || line != kMagic) throw ParseError("missing '# mecp-dataset v1' header", lineno ? lineno : 1);
  if (!next()) throw ParseError("missing metadata line", lineno + 1);
  try {
    ds.meta = dataset_meta_from_json(nlohmann::json::parse(line));
  } catch (const std::exception& e) {
    throw ParseError(std::string("bad metadata: ") + e.what(), lineno);
  }
  const int n = ds.meta.state_dim, m = ds.meta.control_dim;
  const std::size_t columns = 1 + 2 * n + m + 1;
  if (!next()) throw ParseError("missing column header", lineno + 1);
  {
    std::size_t commas = 0;
    for (char c : line) commas += c == ',';
    if (commas + 1 != columns)
      throw ParseError("column header has " + std::to_string(commas + 1) + " columns, metadata implies " +
                           std::to_string(columns),
                       lineno);
  }

  std::vector<double> values(columns);
  while (next()) {
    if (line.empty()) continue;
    std::size_t col = 0;
    const char* p = line.c_str();
    for (;;) {
      if (col == columns) throw ParseError("too many columns (expected " + std::to_string(columns) + ")", lineno);
      char* end = nullptr;
      values[col] = std::strtod(p, &end);
      if (end == p) throw ParseError("column " + std::to_string(col + 1) + " is not a number", lineno);
      ++col;
      p = end;
      if (*p == '\0') break;
      if (*p != ',') throw ParseError("unexpected character in column " + std::to_string(col), lineno);
      ++p;
    }
    if (col != columns)
      throw ParseError("expected " + std::to_string(columns) + " columns, found " + std::to_string(col), lineno);
    Record r;
    r.time_to_go = values[0];
    r.x = Eigen::Map<const Vector>(values.data() + 1, n);
    r.u = Eigen::Map<const Vector>(values.data() + 1 + n, m);
    r.p = Eigen::Map<const Vector>(values.data() + 1 + n + m, n);
    const double id = values[columns - 1];
    if (id < 0.0 || id != std::floor(id)) throw ParseError("extremal_id must be a non-negative integer", lineno);
    r.extremal_id = static_cast<std::size_t>(id);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace mecp
