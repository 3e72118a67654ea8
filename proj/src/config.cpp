#include "mecp/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

namespace mecp {

namespace {

using nlohmann::json;

// A JSON object together with its dotted path, for error messages.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError((path.empty() ? std::string("config") : path) + ": " + what);
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw() const { return j_; }

  void allow(std::initializer_list<const char*> keys) const {
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) fail(sub(k), "unknown key");
  }

  Node object(const std::string& key) const {
    if (!has(key)) fail(sub(key), "required section is missing");
    return Node(j_.at(key), sub(key));
  }

  double number(const std::string& key) const {
    if (!has(key)) fail(sub(key), "required");
    if (!j_.at(key).is_number()) fail(sub(key), "expected a number");
    return j_.at(key).get<double>();
  }
  void number(const std::string& key, double& out) const {
    if (has(key)) out = number(key);
  }

  template <class Int>
  void integer(const std::string& key, Int& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0))
      fail(sub(key), "expected a non-negative integer");
    out = v.get<Int>();
  }

  void string(const std::string& key, std::string& out) const {
    if (!has(key)) return;
    if (!j_.at(key).is_string()) fail(sub(key), "expected a string");
    out = j_.at(key).get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) const {
    const json& v = j_.at(key);
    if (!v.is_array()) fail(sub(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(sub(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  Range range(const std::string& key) const {
    const std::vector<double> v = numbers(key);
    if (v.size() != 2) fail(sub(key), "expected [lo, hi]");
    if (!(v[0] <= v[1])) fail(sub(key), "need lo <= hi");
    return {v[0], v[1]};
  }

  std::vector<Range> ranges(const std::string& key) const {
    if (!has(key)) fail(sub(key), "required");
    const json& v = j_.at(key);
    if (!v.is_array()) fail(sub(key), "expected an array of [lo, hi] pairs");
    std::vector<Range> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = sub(key) + "[" + std::to_string(i) + "]";
      if (!v[i].is_array() || v[i].size() != 2 || !v[i][0].is_number() || !v[i][1].is_number())
        fail(p, "expected [lo, hi]");
      const Range r{v[i][0].get<double>(), v[i][1].get<double>()};
      if (!(r.lo <= r.hi)) fail(p, "need lo <= hi");
      out.push_back(r);
    }
    return out;
  }

 private:
  const json& j_;
  std::string path_;
};

Method method_from(const Node& node, const std::string& key) {
  std::string m = "rk45";
  node.string(key, m);
  if (m == "rk45" || m == "rk45_adaptive") return Method::rk45_adaptive;
  if (m == "rk4" || m == "rk4_fixed") return Method::rk4_fixed;
  Node::fail(node.sub(key), "expected rk45 or rk4");
}

void read_integrator(const Node& node, IntegratorConfig& cfg) {
  node.allow({"method", "step", "rel_tol", "abs_tol", "max_steps"});
  cfg.method = method_from(node, "method");
  node.number("step", cfg.step);
  node.number("rel_tol", cfg.rel_tol);
  node.number("abs_tol", cfg.abs_tol);
  node.integer("max_steps", cfg.max_steps);
  cfg.validate();
}

}  // namespace

double default_guidance_step(const std::string& problem_id) {
  if (problem_id == "glider") return 0.1;
  if (problem_id == "proximity") return 0.005;
  return 0.01;
}

RunConfig run_config_from_json(const json& j) {
  const Node root(j, "");
  root.allow({"problem", "sampling", "integrator", "extremal", "shooting", "training", "simulation",
              "monte_carlo", "verify"});
  RunConfig rc;

  {
    const Node p = root.object("problem");
    p.allow({"id", "t_f", "mass", "gravity", "ref_area", "cd0", "km", "rho"});
    rc.problem = problem_config_from_json(p.raw());
  }
  const ProblemPtr prob = make_problem(rc.problem);

  if (root.has("integrator")) read_integrator(root.object("integrator"), rc.extremal.integrator);

  if (root.has("extremal")) {
    const Node e = root.object("extremal");
    e.allow({"exclusion_fraction", "rank_threshold", "bisection_tolerance"});
    e.number("exclusion_fraction", rc.extremal.exclusion_fraction);
    e.number("rank_threshold", rc.extremal.rank_threshold);
    e.number("bisection_tolerance", rc.extremal.bisection_tolerance);
    if (!(rc.extremal.exclusion_fraction >= 0.0 && rc.extremal.exclusion_fraction < 1.0))
      Node::fail("extremal.exclusion_fraction", "must lie in [0, 1)");
    if (!(rc.extremal.rank_threshold > 0.0)) Node::fail("extremal.rank_threshold", "must be positive");
    if (!(rc.extremal.bisection_tolerance > 0.0)) Node::fail("extremal.bisection_tolerance", "must be positive");
  }

  if (root.has("sampling")) {
    const Node s = root.object("sampling");
    s.allow({"count", "dt", "free_ranges", "multiplier_ranges", "mode", "seed"});
    SamplingSpec spec;
    s.integer("count", spec.count);
    spec.dt = s.number("dt");
    spec.free_ranges = s.has("free_ranges") ? s.ranges("free_ranges") : std::vector<Range>{};
    spec.multiplier_ranges = s.ranges("multiplier_ranges");
    std::string mode = "uniform_random";
    s.string("mode", mode);
    try {
      spec.mode = sampling_mode_from_string(mode);
    } catch (const ConfigError& e) {
      Node::fail("sampling.mode", e.what());
    }
    s.integer("seed", spec.seed);
    spec.validate(*prob);
    rc.sampling = spec;
  }

  if (root.has("shooting")) {
    const Node s = root.object("shooting");
    s.allow({"rel_tol", "abs_tol", "max_iterations", "tolerance"});
    s.number("rel_tol", rc.shooting.integrator.rel_tol);
    s.number("abs_tol", rc.shooting.integrator.abs_tol);
    s.integer("max_iterations", rc.shooting.max_iterations);
    s.number("tolerance", rc.shooting.tolerance);
    if (!(rc.shooting.integrator.rel_tol > 0.0) || !(rc.shooting.integrator.abs_tol > 0.0))
      Node::fail("shooting.rel_tol", "tolerances must be positive");
  }

  if (root.has("training")) {
    const Node t = root.object("training");
    t.allow({"hidden", "learning_rate", "batch_size", "max_epochs", "target_mse", "validation_split", "seed",
             "lr_decay", "patience"});
    TrainingSection ts;
    if (t.has("hidden")) {
      ts.hidden.clear();
      for (double w : t.numbers("hidden")) {
        if (w < 1 || w != static_cast<int>(w)) Node::fail("training.hidden", "widths must be positive integers");
        ts.hidden.push_back(static_cast<int>(w));
      }
    }
    t.number("learning_rate", ts.train.learning_rate);
    t.integer("batch_size", ts.train.batch_size);
    t.integer("max_epochs", ts.train.max_epochs);
    t.number("target_mse", ts.train.target_mse);
    t.number("validation_split", ts.train.validation_split);
    t.integer("seed", ts.train.seed);
    t.number("lr_decay", ts.train.lr_decay);
    t.integer("patience", ts.train.patience);
    ts.train.validate();
    rc.training = ts;
  }

  if (root.has("simulation")) {
    const Node s = root.object("simulation");
    s.allow({"scenario", "x0", "time_to_go", "guidance_step", "plant_step", "controller", "plant_cd0", "plant_km"});
    SimulationSection ss;
    if (s.has("scenario")) {
      std::string name;
      s.string("scenario", name);
      Scenario sc;
      try {
        sc = scenario_preset(name);
      } catch (const ConfigError& e) {
        Node::fail("simulation.scenario", e.what());
      }
      if (sc.problem != rc.problem.id)
        Node::fail("simulation.scenario", "preset '" + name + "' belongs to problem '" + sc.problem + "'");
      ss.sim.x0 = sc.x0;
      ss.sim.time_to_go = sc.time_to_go;
    }
    if (s.has("x0")) {
      const auto v = s.numbers("x0");
      ss.sim.x0 = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    s.number("time_to_go", ss.sim.time_to_go);
    if (ss.sim.x0.size() == 0) Node::fail("simulation.x0", "required (or give a scenario)");
    if (!(ss.sim.time_to_go > 0.0)) Node::fail("simulation.time_to_go", "required and positive (or give a scenario)");
    ss.sim.guidance_step = default_guidance_step(rc.problem.id);
    s.number("guidance_step", ss.sim.guidance_step);
    ss.sim.plant_step = ss.sim.guidance_step / 10.0;
    s.number("plant_step", ss.sim.plant_step);
    s.string("controller", ss.controller);
    if (ss.controller != "mlp" && ss.controller != "analytic" && ss.controller != "shooting" && ss.controller != "zero")
      Node::fail("simulation.controller", "expected mlp, analytic, shooting or zero");
    if (ss.controller == "analytic" && rc.problem.id != "double_integrator")
      Node::fail("simulation.controller", "the analytic law exists only for the double integrator");
    if (s.has("plant_cd0")) ss.plant_cd0 = s.number("plant_cd0");
    if (s.has("plant_km")) ss.plant_km = s.number("plant_km");
    if ((ss.plant_cd0 || ss.plant_km) && rc.problem.id != "glider")
      Node::fail("simulation.plant_cd0", "plant overrides apply to the glider only");
    ss.sim.validate(prob->state_dim());
    rc.simulation = ss;
  }

  if (root.has("monte_carlo")) {
    const Node m = root.object("monte_carlo");
    m.allow({"runs", "seed", "x0_ranges", "cd0", "km", "bins"});
    MonteCarloSection ms;
    m.integer("runs", ms.runs);
    m.integer("seed", ms.seed);
    m.integer("bins", ms.bins);
    ms.dispersion.x0 = m.ranges("x0_ranges");
    if (static_cast<int>(ms.dispersion.x0.size()) != prob->state_dim())
      Node::fail("monte_carlo.x0_ranges", "expected " + std::to_string(prob->state_dim()) + " ranges");
    if (m.has("cd0")) ms.dispersion.cd0 = m.range("cd0");
    if (m.has("km")) ms.dispersion.km = m.range("km");
    if ((ms.dispersion.cd0 || ms.dispersion.km) && rc.problem.id != "glider")
      Node::fail("monte_carlo.cd0", "parameter dispersion applies to the glider only");
    if (ms.dispersion.cd0 && !(ms.dispersion.cd0->lo > 0.0)) Node::fail("monte_carlo.cd0", "must be positive");
    if (ms.dispersion.km && !(ms.dispersion.km->lo > 0.0)) Node::fail("monte_carlo.km", "must be positive");
    rc.monte_carlo = ms;
  }

  if (root.has("verify")) {
    const Node v = root.object("verify");
    v.allow({"fraction", "seed", "tolerance"});
    v.number("fraction", rc.verify.fraction);
    v.integer("seed", rc.verify.seed);
    v.number("tolerance", rc.verify.tolerance);
    if (!(rc.verify.fraction > 0.0 && rc.verify.fraction <= 1.0)) Node::fail("verify.fraction", "must lie in (0, 1]");
    if (!(rc.verify.tolerance > 0.0)) Node::fail("verify.tolerance", "must be positive");
  }
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace mecp
