// mecp: dataset generation, training and closed-loop evaluation from the command line.
#include "mecp/config.hpp"
#include "mecp/dataset.hpp"
#include "mecp/extremal.hpp"
#include "mecp/guidance.hpp"
#include "mecp/mlp.hpp"
#include "mecp/parallel.hpp"
#include "mecp/verify.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mecp;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  RunManifest(std::string sub, std::string cfg, std::vector<std::string> in, std::vector<std::string> out)
      : subcommand(std::move(sub)), config(std::move(cfg)), inputs(std::move(in)), outputs(std::move(out)) {}

  std::string subcommand;
  std::string config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;
  std::string start = utc_now();

  // temp file + rename so readers never see a partial manifest
  void write(const std::string& path) const {
    nlohmann::json j{{"subcommand", subcommand}, {"config", config},   {"inputs", inputs},
                     {"outputs", outputs},       {"version", kVersion}, {"start", start},
                     {"end", utc_now()}};
    j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
    const std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw ConfigError("cannot write manifest '" + tmp + "'");
      out << j.dump(2) << '\n';
    }
    fs::rename(tmp, path);
  }
};

std::string manifest_path(const std::string& output) { return output + ".manifest.json"; }

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw ConfigError(std::string(what) + " '" + path + "' does not exist");
}

ProblemPtr problem_of(const Dataset& ds) {
  if (ds.meta.problem_config.is_object() && ds.meta.problem_config.contains("id"))
    return make_problem(problem_config_from_json(ds.meta.problem_config));
  ProblemConfig pc;
  pc.id = ds.meta.problem_id;
  pc.final_time = ds.meta.final_time;
  return make_problem(pc);
}

// --- generate ---------------------------------------------------------------------------------

struct GenerateArgs {
  std::string problem, config, out;
  unsigned workers = 0;
};

int run_generate(const GenerateArgs& a) {
  RunManifest manifest("generate", a.config, {a.config}, {a.out});
  const RunConfig rc = load_run_config(a.config);
  if (!a.problem.empty() && a.problem != rc.problem.id)
    throw ConfigError("--problem " + a.problem + " disagrees with problem.id '" + rc.problem.id + "' in the config");
  if (!rc.sampling) throw ConfigError("sampling: required section is missing");
  const ProblemPtr prob = make_problem(rc.problem);

  GenerateOptions opts;
  opts.extremal = rc.extremal;
  opts.workers = resolve_workers(a.workers);
  opts.on_failure = [](std::size_t i, const std::string& why) {
    std::cerr << "warning: extremal " << i << " skipped: " << why << '\n';
  };
  const auto t0 = std::chrono::steady_clock::now();
  Dataset ds = generate(*prob, *rc.sampling, opts);
  ds.meta.problem_config = to_json(rc.problem);
  write_dataset(ds, a.out);
  manifest.seed = rc.sampling->seed;
  manifest.write(manifest_path(a.out));

  std::printf("extremals built %zu, failed %zu, conjugate-truncated %zu, records %zu (%.1f s)\n", ds.meta.built,
              ds.meta.failed, ds.meta.truncated, ds.records.size(),
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return 0;
}

// --- train ------------------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset, arch, out, config, log;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  require_file(a.dataset, "dataset");
  RunManifest manifest("train", a.config, {a.dataset}, {a.out});
  TrainingSection ts;
  if (!a.config.empty()) {
    manifest.inputs.push_back(a.config);
    const RunConfig rc = load_run_config(a.config);
    if (rc.training) ts = *rc.training;
  }
  if (!a.arch.empty()) ts.hidden = parse_hidden_layers(a.arch);
  if (a.epochs) ts.train.max_epochs = *a.epochs;
  if (a.seed) ts.train.seed = *a.seed;
  const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
  manifest.outputs.push_back(log_path);
  manifest.seed = ts.train.seed;

  const Dataset ds = read_dataset(a.dataset);
  const TrainingData data = training_data(ds);
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw ConfigError("cannot open '" + log_path + "' for writing");
  log << "# mse on standardized targets, mean over samples and outputs; target " << ts.train.target_mse << '\n';
  log << "epoch,train_mse,validation_mse,learning_rate,seconds,validation_stalled\n";
  log.precision(17);
  const TrainResult result = train(data, ts.hidden, ts.train, [&](const EpochLog& e) {
    log << e.epoch << ',' << e.train_mse << ',' << e.validation_mse << ',' << e.learning_rate << ',' << e.seconds
        << ',' << (e.validation_stalled ? 1 : 0) << '\n';
    if (e.epoch % 10 == 0 || e.epoch == 1)
      std::fprintf(stderr, "epoch %zu  train %.3e  val %.3e\n", e.epoch, e.train_mse, e.validation_mse);
  });
  write_model(result.model, a.out);
  manifest.write(manifest_path(a.out));
  const double final_mse = result.log.empty() ? normalized_mse(result.model, data) : result.log.back().train_mse;
  std::printf("epochs %zu, train mse %.3e, target %s\n", result.log.size(), final_mse,
              result.reached_target ? "reached" : "not reached");
  return 0;
}

// --- simulate / monte-carlo -------------------------------------------------------------------

struct SimArgs {
  std::string config, model, controller, dataset, out;
  std::optional<std::size_t> runs;
  unsigned workers = 0;
};

std::function<Controller()> controller_factory(const RunConfig& rc, const ProblemPtr& nominal, const SimArgs& a,
                                               RunManifest& manifest) {
  std::string kind = a.controller.empty() ? (rc.simulation ? rc.simulation->controller : "mlp") : a.controller;
  if (kind == "mlp") {
    if (a.model.empty()) throw ConfigError("--model is required for the mlp controller");
    require_file(a.model, "model");
    manifest.inputs.push_back(a.model);
    auto model = std::make_shared<const MlpModel>(read_model(a.model));
    if (model->inputs() != nominal->state_dim() + 1 || model->outputs() != nominal->control_dim())
      throw ConfigError("model '" + a.model + "' does not match problem '" + nominal->id() + "'");
    return [model] { return mlp_controller(model); };
  }
  if (kind == "analytic") {
    if (nominal->id() != "double_integrator")
      throw ConfigError("the analytic controller exists only for the double integrator");
    return [] { return double_integrator_controller(); };
  }
  if (kind == "zero") {
    const int m = nominal->control_dim();
    return [m] { return zero_controller(m); };
  }
  if (kind == "shooting") {
    std::shared_ptr<const Dataset> ds;
    if (!a.dataset.empty()) {
      require_file(a.dataset, "dataset");
      manifest.inputs.push_back(a.dataset);
      ds = std::make_shared<const Dataset>(read_dataset(a.dataset));
    }
    const ShootingOptions opts = rc.shooting;
    // the factory cannot see x0, so the guess is resolved lazily on the first query
    return [nominal, ds, opts] {
      auto inner = std::make_shared<Controller>();
      return Controller([nominal, ds, opts, inner](double tg, const Vector& x) -> Vector {
        if (!*inner) {
          Vector guess = Vector::Zero(nominal->state_dim());
          if (ds)
            if (const Record* r = nearest_record(*ds, tg, x)) guess = r->p;
          *inner = shooting_controller(nominal, guess, opts);
        }
        return (*inner)(tg, x);
      });
    };
  }
  throw ConfigError("unknown controller '" + kind + "'");
}

ProblemPtr plant_problem(const RunConfig& rc) {
  ProblemConfig pc = rc.problem;
  if (rc.simulation && rc.simulation->plant_cd0) pc.glider.cd0 = *rc.simulation->plant_cd0;
  if (rc.simulation && rc.simulation->plant_km) pc.glider.km = *rc.simulation->plant_km;
  return make_problem(pc);
}

int run_simulate(const SimArgs& a) {
  RunManifest manifest("simulate", a.config, {a.config}, {a.out});
  const RunConfig rc = load_run_config(a.config);
  if (!rc.simulation) throw ConfigError("simulation: required section is missing");
  const ProblemPtr nominal = make_problem(rc.problem);
  const ProblemPtr plant = plant_problem(rc);
  const Controller controller = controller_factory(rc, nominal, a, manifest)();
  const SimResult res = simulate(*plant, rc.simulation->sim, controller);
  write_trajectory_csv(*plant, res, a.out);
  manifest.write(manifest_path(a.out));

  std::printf("terminal error |phi| = %.6e, effort J = %.10g, median query %.3g ms%s\n", res.terminal_error_norm,
              res.effort, 1e3 * res.latency.median, res.aborted ? ", ABORTED" : "");
  if (res.aborted) {
    std::fprintf(stderr, "run aborted: %s\n", res.abort_reason.c_str());
    return kExitNumerical;
  }
  return 0;
}

int run_monte_carlo(const SimArgs& a) {
  RunManifest manifest("monte-carlo", a.config, {a.config}, {});
  const RunConfig rc = load_run_config(a.config);
  if (!rc.monte_carlo) throw ConfigError("monte_carlo: required section is missing");
  if (!rc.simulation) throw ConfigError("simulation: required section is missing (base run settings)");
  const ProblemPtr nominal = make_problem(rc.problem);

  MonteCarloConfig mc;
  mc.base = rc.simulation->sim;
  mc.dispersion = rc.monte_carlo->dispersion;
  mc.runs = a.runs.value_or(rc.monte_carlo->runs);
  mc.seed = rc.monte_carlo->seed;
  mc.workers = resolve_workers(a.workers);
  manifest.seed = mc.seed;
  const auto factory = controller_factory(rc, nominal, a, manifest);
  const MonteCarloResult result = monte_carlo(rc.problem, mc, factory);

  const std::string summary = a.out + "_summary.csv";
  write_summary_csv(*nominal, result, summary);
  manifest.outputs.push_back(summary);
  const std::size_t bins = rc.monte_carlo->bins;
  std::vector<std::vector<double>> errors(nominal->constraint_dim());
  std::vector<double> effort;
  for (const MonteCarloRun& run : result.runs) {
    if (run.result.aborted || !run.result.terminal_error.allFinite()) continue;
    for (int k = 0; k < nominal->constraint_dim(); ++k) errors[k].push_back(std::abs(run.result.terminal_error(k)));
    effort.push_back(run.result.effort);
  }
  for (int k = 0; k < nominal->constraint_dim(); ++k) {
    const std::string path = a.out + "_hist_phi" + std::to_string(k + 1) + ".csv";
    write_histogram_csv(histogram(errors[k], bins), path);
    manifest.outputs.push_back(path);
  }
  const std::string hpath = a.out + "_hist_effort.csv";
  write_histogram_csv(histogram(effort, bins), hpath);
  manifest.outputs.push_back(hpath);
  manifest.write(manifest_path(a.out));

  const MonteCarloSummary& s = result.summary;
  std::printf("runs %zu, aborted %zu, max |phi| per component:", s.runs, s.aborted);
  for (Eigen::Index k = 0; k < s.max_abs_error.size(); ++k) std::printf(" %.4e", s.max_abs_error(k));
  std::printf(", mean effort %.6g\n", s.mean_effort);
  return s.aborted > 0 ? kExitNumerical : 0;
}

// --- conjugate-scan ---------------------------------------------------------------------------

struct ScanArgs {
  std::string config, out;
  std::size_t samples = 5;
};

int run_conjugate_scan(const ScanArgs& a) {
  RunManifest manifest("conjugate-scan", a.config, {a.config}, {a.out});
  const RunConfig rc = load_run_config(a.config);
  if (!rc.sampling) throw ConfigError("sampling: required section is missing");
  const ProblemPtr prob = make_problem(rc.problem);
  SamplingSpec spec = *rc.sampling;
  spec.count = std::min(spec.count, a.samples);
  if (spec.mode == SamplingMode::uniform_grid) spec.mode = SamplingMode::uniform_random;
  manifest.seed = spec.seed;
  const std::vector<TerminalSample> samples = sample_terminal_manifold(*prob, spec);

  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + a.out + "' for writing");
  out << "sample,sigma,det,scaled_det\n";
  out.precision(17);
  int failures = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      const ExtremalTrajectory ex = build_extremal(*prob, samples[i], rc.extremal);
      for (const DetSample& d : ex.det_trace)
        out << i << ',' << d.time_to_go << ',' << d.det << ',' << d.scaled_det << '\n';
      if (ex.conjugate_time)
        std::printf("sample %zu: conjugate time %.10g\n", i, *ex.conjugate_time);
      else
        std::printf("sample %zu: no conjugate time up to t_f = %g\n", i, prob->final_time());
    } catch (const Error& e) {
      ++failures;
      std::fprintf(stderr, "sample %zu: %s\n", i, e.what());
    }
  }
  out.close();
  manifest.write(manifest_path(a.out));
  return failures > 0 ? kExitNumerical : 0;
}

// --- verify -----------------------------------------------------------------------------------

struct VerifyArgs {
  std::string dataset, config, out;
  std::optional<double> fraction;
  std::optional<std::uint64_t> seed;
  unsigned workers = 0;
};

int run_verify(const VerifyArgs& a) {
  require_file(a.dataset, "dataset");
  RunManifest manifest("verify", a.config, {a.dataset}, {});
  const Dataset ds = read_dataset(a.dataset);
  const ProblemPtr prob = problem_of(ds);
  ShootingOptions opts;
  VerifySection vs;
  if (!a.config.empty()) {
    manifest.inputs.push_back(a.config);
    const RunConfig rc = load_run_config(a.config);
    opts = rc.shooting;
    vs = rc.verify;
  }
  if (a.fraction) vs.fraction = *a.fraction;
  if (a.seed) vs.seed = *a.seed;
  manifest.seed = vs.seed;

  const auto indices = choose_records(ds.records.size(), vs.fraction, vs.seed);
  const VerifyReport report = verify_records(*prob, ds, indices, opts, vs.tolerance, resolve_workers(a.workers));
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + a.out + "' for writing");
    out << "record,t_g,extremal_id,converged,iterations,control_error,passed\n";
    out.precision(17);
    for (const RecordCheck& c : report.checks) {
      const Record& r = ds.records[c.index];
      out << c.index << ',' << r.time_to_go << ',' << r.extremal_id << ',' << c.converged << ',' << c.iterations
          << ',' << c.control_error << ',' << c.passed << '\n';
    }
    manifest.outputs.push_back(a.out);
  }
  manifest.write(manifest_path(a.out.empty() ? a.dataset + ".verify" : a.out));
  std::printf("verified %zu records, pass rate %.2f%%\n", report.checks.size(), 100.0 * report.pass_rate());
  return report.passed == report.checks.size() ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimum-effort extremal field toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Sample the terminal manifold, build extremals, write a dataset");
  g->add_option("--problem", gen.problem, "Problem id (must match the config)");
  g->add_option("--config", gen.config, "Run configuration (JSON)")->required();
  g->add_option("--out", gen.out, "Dataset CSV to write")->required();
  g->add_option("--workers", gen.workers, "Worker threads (MECP_WORKERS overrides)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Fit the feedback network to a dataset");
  t->add_option("--dataset", tr.dataset, "Dataset CSV")->required();
  t->add_option("--arch", tr.arch, "Hidden layer widths, e.g. 20,20,20");
  t->add_option("--out", tr.out, "Model JSON to write")->required();
  t->add_option("--config", tr.config, "Run configuration with a training section");
  t->add_option("--log", tr.log, "Training log CSV (default <out>.log.csv)");
  t->add_option("--epochs", tr.epochs, "Override max epochs");
  t->add_option("--seed", tr.seed, "Override training seed");

  SimArgs sim;
  auto* s = app.add_subcommand("simulate", "Closed-loop guidance run");
  s->add_option("--config", sim.config, "Run configuration with a simulation section")->required();
  s->add_option("--model", sim.model, "Model JSON for the mlp controller");
  s->add_option("--controller", sim.controller, "mlp | analytic | shooting | zero (overrides config)");
  s->add_option("--dataset", sim.dataset, "Dataset used to warm-start the shooting controller");
  s->add_option("--out", sim.out, "Trajectory CSV to write")->required();

  SimArgs mcargs;
  auto* m = app.add_subcommand("monte-carlo", "Dispersed closed-loop runs with summary and histograms");
  m->add_option("--config", mcargs.config, "Run configuration with simulation and monte_carlo sections")->required();
  m->add_option("--model", mcargs.model, "Model JSON for the mlp controller");
  m->add_option("--controller", mcargs.controller, "mlp | analytic | shooting | zero (overrides config)");
  m->add_option("--dataset", mcargs.dataset, "Dataset used to warm-start the shooting controller");
  m->add_option("--out", mcargs.out, "Output prefix")->required();
  m->add_option("--runs", mcargs.runs, "Override number of runs");
  m->add_option("--workers", mcargs.workers, "Worker threads (MECP_WORKERS overrides)");

  ScanArgs scan;
  auto* c = app.add_subcommand("conjugate-scan", "Write det(dX/dq) traces for a few terminal samples");
  c->add_option("--config", scan.config, "Run configuration with a sampling section")->required();
  c->add_option("--out", scan.out, "Trace CSV to write")->required();
  c->add_option("--samples", scan.samples, "Number of terminal samples (default 5)");

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Re-solve sampled dataset records by shooting");
  v->add_option("--dataset", ver.dataset, "Dataset CSV")->required();
  v->add_option("--config", ver.config, "Run configuration (shooting and verify sections)");
  v->add_option("--fraction", ver.fraction, "Fraction of records to check (default 0.01)");
  v->add_option("--seed", ver.seed, "Subsample seed");
  v->add_option("--out", ver.out, "Per-record report CSV");
  v->add_option("--workers", ver.workers, "Worker threads (MECP_WORKERS overrides)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*g) return run_generate(gen);
    if (*t) return run_train(tr);
    if (*s) return run_simulate(sim);
    if (*m) return run_monte_carlo(mcargs);
    if (*c) return run_conjugate_scan(scan);
    if (*v) return run_verify(ver);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}
