#include "mecp/guidance.hpp"

#include "mecp/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace mecp {

Controller mlp_controller(std::shared_ptr<const MlpModel> model) {
  auto eval = std::make_shared<MlpEvaluator>(*model);
  return [model, eval](double tg, const Vector& x) -> Vector { return (*eval)(tg, x); };
}

Controller double_integrator_controller() {
  return [](double tg, const Vector& x) { return double_integrator_law(x, tg); };
}

Controller zero_controller(int control_dim) {
  return [control_dim](double, const Vector&) -> Vector { return Vector::Zero(control_dim); };
}

Controller shooting_controller(ProblemPtr nominal, const Vector& initial_guess, const ShootingOptions& options) {
  auto guess = std::make_shared<Vector>(initial_guess);
  return [nominal, guess, options](double tg, const Vector& x) -> Vector {
    const ShootingResult r = shoot(*nominal, x, tg, *guess, options);
    if (!r.converged) throw Error("shooting controller: " + r.message);
    *guess = r.initial_costate;
    return nominal->maximizing_control(x, r.initial_costate);
  };
}

std::size_t SimConfig::updates() const {
  return static_cast<std::size_t>(std::llround(time_to_go / guidance_step));
}

void SimConfig::validate(int state_dim) const {
  if (!(guidance_step > 0.0)) throw ConfigError("simulation.guidance_step: must be positive");
  if (!(plant_step > 0.0)) throw ConfigError("simulation.plant_step: must be positive");
  const double ratio = guidance_step / plant_step;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || std::round(ratio) < 1.0)
    throw ConfigError("simulation.guidance_step: must be an integer multiple of plant_step");
  if (!(time_to_go > 0.0)) throw ConfigError("simulation.time_to_go: must be positive");
  if (x0.size() != state_dim)
    throw ConfigError("simulation.x0: expected " + std::to_string(state_dim) + " components");
  if (!x0.allFinite()) throw ConfigError("simulation.x0: must be finite");
}

SimResult simulate(const Problem& plant, const SimConfig& cfg, const Controller& controller) {
  const int n = plant.state_dim();
  cfg.validate(n);
  const std::size_t K = cfg.updates();
  const double w = plant.cost_weight();
  const double hold = cfg.time_to_go / static_cast<double>(K);

  IntegratorConfig ic;
  ic.method = Method::rk4_fixed;
  ic.step = hold / std::round(cfg.guidance_step / cfg.plant_step);

  SimResult res;
  res.samples.reserve(K);
  std::vector<double> latencies;
  latencies.reserve(K);
  Vector y(n + 1);
  y << cfg.x0, 0.0;

  for (std::size_t k = 0; k < K; ++k) {
    const double t = hold * static_cast<double>(k);
    const double tg = cfg.time_to_go - t;
    const Vector x = y.head(n);
    Vector u;
    try {
      const auto q0 = std::chrono::steady_clock::now();
      u = controller(tg, x);
      latencies.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - q0).count());
      if (u.size() != plant.control_dim() || !u.allFinite()) throw DomainError("controller returned an invalid control");
    } catch (const Error& e) {
      res.aborted = true;
      res.abort_reason = std::string("controller failed at t_g = ") + std::to_string(tg) + ": " + e.what();
      break;
    }
    res.samples.push_back({t, tg, x, u});
    const Rhs rhs = [&](double, const Vector& s, Vector& ds) {
      const Vector xs = s.head(n);
      require_in_domain(plant, xs);
      ds.head(n) = plant.dynamics(xs, u);
      ds(n) = w * u.squaredNorm();
    };
    try {
      y = propagate(rhs, y, t, t + hold, ic).states.back();
    } catch (const Error& e) {
      res.aborted = true;
      res.abort_reason = std::string("plant left its domain after t = ") + std::to_string(t) + ": " + e.what();
      break;
    }
  }

  res.terminal_state = y.head(n);
  res.effort = y(n);
  if (plant.in_domain(res.terminal_state)) {
    res.terminal_error = plant.terminal_constraint(res.terminal_state);
    res.terminal_error_norm = res.terminal_error.norm();
  } else {
    res.terminal_error = Vector::Constant(plant.constraint_dim(), std::numeric_limits<double>::quiet_NaN());
    res.terminal_error_norm = std::numeric_limits<double>::quiet_NaN();
  }
  if (!latencies.empty()) {
    std::vector<double> sorted = latencies;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    res.latency.median = sorted[sorted.size() / 2];
    double sum = 0.0;
    for (double l : latencies) sum += l, res.latency.max = std::max(res.latency.max, l);
    res.latency.mean = sum / static_cast<double>(latencies.size());
  }
  return res;
}

MonteCarloResult monte_carlo(const ProblemConfig& nominal, const MonteCarloConfig& cfg,
                             const std::function<Controller()>& make_controller) {
  const ProblemPtr nominal_problem = make_problem(nominal);
  const int n = nominal_problem->state_dim(), s = nominal_problem->constraint_dim();
  if (static_cast<int>(cfg.dispersion.x0.size()) != n)
    throw ConfigError("monte_carlo.x0_ranges: expected " + std::to_string(n) + " ranges");
  if ((cfg.dispersion.cd0 || cfg.dispersion.km) && nominal.id != "glider")
    throw ConfigError("monte_carlo: cd0/km dispersion only applies to the glider");

  MonteCarloResult mc;
  mc.runs.resize(cfg.runs);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto draw = [&](const Range& r) { return r.lo + (r.hi - r.lo) * unit(rng); };
  for (std::size_t i = 0; i < cfg.runs; ++i) {
    MonteCarloRun& run = mc.runs[i];
    run.run = i;
    run.x0.resize(n);
    for (int k = 0; k < n; ++k) run.x0(k) = draw(cfg.dispersion.x0[k]);
    run.plant = nominal;
    if (cfg.dispersion.cd0) run.plant.glider.cd0 = draw(*cfg.dispersion.cd0);
    if (cfg.dispersion.km) run.plant.glider.km = draw(*cfg.dispersion.km);
  }

  parallel_for(cfg.runs, cfg.workers, [&](std::size_t i) {
    MonteCarloRun& run = mc.runs[i];
    const ProblemPtr plant = make_problem(run.plant);
    SimConfig sc = cfg.base;
    sc.x0 = run.x0;
    run.result = simulate(*plant, sc, make_controller());
  });

  MonteCarloSummary& sum = mc.summary;
  sum.runs = cfg.runs;
  sum.max_abs_error = Vector::Zero(s);
  sum.mean_abs_error = Vector::Zero(s);
  std::size_t done = 0;
  for (const MonteCarloRun& run : mc.runs) {
    if (run.result.aborted || !run.result.terminal_error.allFinite()) {
      ++sum.aborted;
      continue;
    }
    ++done;
    sum.max_abs_error = sum.max_abs_error.cwiseMax(run.result.terminal_error.cwiseAbs());
    sum.mean_abs_error += run.result.terminal_error.cwiseAbs();
    sum.max_error_norm = std::max(sum.max_error_norm, run.result.terminal_error_norm);
    sum.mean_effort += run.result.effort;
  }
  if (done > 0) {
    sum.mean_abs_error /= static_cast<double>(done);
    sum.mean_effort /= static_cast<double>(done);
  }
  return mc;
}

std::vector<HistogramBin> histogram(const std::vector<double>& values, std::size_t bins) {
  std::vector<HistogramBin> out;
  if (values.empty() || bins == 0) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    const double pad = std::max(1e-12, 1e-6 * std::abs(lo));
    lo -= pad;
    hi += pad;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) out.push_back({lo + width * b, lo + width * (b + 1), 0});
  out.back().right = hi;
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    ++out[std::min(b, bins - 1)].count;
  }
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

void write_trajectory_csv(const Problem& prob, const SimResult& result, const std::string& path) {
  std::ofstream out = open_csv(path);
  const auto names = prob.state_names();
  out << "t,t_g";
  for (const auto& nm : names) out << ',' << nm;
  for (int i = 1; i <= prob.control_dim(); ++i) out << ",u" << i;
  out << '\n';
  for (const SimSample& s : result.samples) {
    out << fmt(s.time) << ',' << fmt(s.time_to_go);
    for (Eigen::Index i = 0; i < s.x.size(); ++i) out << ',' << fmt(s.x(i));
    for (Eigen::Index i = 0; i < s.u.size(); ++i) out << ',' << fmt(s.u(i));
    out << '\n';
  }
  // final row: terminal state, no control is applied at t_g = 0
  if (!result.aborted && !result.samples.empty()) {
    const SimSample& last = result.samples.back();
    const double tf = last.time + last.time_to_go;
    out << fmt(tf) << ",0";
    for (Eigen::Index i = 0; i < result.terminal_state.size(); ++i) out << ',' << fmt(result.terminal_state(i));
    for (int i = 0; i < prob.control_dim(); ++i) out << ",nan";
    out << '\n';
  }
}

void write_summary_csv(const Problem& prob, const MonteCarloResult& mc, const std::string& path) {
  std::ofstream out = open_csv(path);
  const auto names = prob.state_names();
  out << "run";
  for (const auto& nm : names) out << ",x0_" << nm;
  for (int i = 1; i <= prob.constraint_dim(); ++i) out << ",phi" << i;
  out << ",error_norm,effort,aborted\n";
  for (const MonteCarloRun& run : mc.runs) {
    out << run.run;
    for (Eigen::Index i = 0; i < run.x0.size(); ++i) out << ',' << fmt(run.x0(i));
    for (Eigen::Index i = 0; i < run.result.terminal_error.size(); ++i) out << ',' << fmt(run.result.terminal_error(i));
    out << ',' << fmt(run.result.terminal_error_norm) << ',' << fmt(run.result.effort) << ','
        << (run.result.aborted ? 1 : 0) << '\n';
  }
}

void write_histogram_csv(const std::vector<HistogramBin>& bins, const std::string& path) {
  std::ofstream out = open_csv(path);
  out << "bin_left,bin_right,count\n";
  for (const HistogramBin& b : bins) out << fmt(b.left) << ',' << fmt(b.right) << ',' << b.count << '\n';
}

}  // namespace mecp
