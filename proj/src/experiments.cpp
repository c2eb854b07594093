#include "pvsa/experiments.hpp"

#include "pvsa/parallel.hpp"
#include "pvsa/rng.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <yaml-cpp/yaml.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

namespace pvsa {

namespace fs = std::filesystem;

Variant parse_variant(std::string_view s) {
  if (s == "symmetric") return Variant::symmetric;
  if (s == "paper" || s == "paper_verbatim") return Variant::paper_verbatim;
  throw ConfigError("unknown variant '" + std::string(s) + "', expected paper or symmetric");
}

std::string_view variant_name(Variant v) { return v == Variant::symmetric ? "symmetric" : "paper"; }

namespace {

std::vector<NodeId> node_list(const YAML::Node& n) {
  std::vector<NodeId> out;
  for (const auto& x : n) out.push_back(NodeId{x.as<int>()});
  return out;
}

void reject_unknown(const YAML::Node& map, std::initializer_list<std::string_view> keys, std::string_view where) {
  if (!map.IsMap()) throw ConfigError(std::string(where) + " must be a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  const fs::path dir = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : dir / p; };

  ExperimentConfig c;
  try {
    const YAML::Node root = YAML::Load(in);
    reject_unknown(root,
                   {"feeder", "pack", "output", "seed", "variant", "cdf", "workers", "grid", "penetration", "limits",
                    "threshold", "loss", "validate", "montecarlo", "bench"},
                   path.string());
    if (!root["feeder"] || !root["pack"]) throw ConfigError(path.string() + ": 'feeder' and 'pack' are required");
    c.feeder = resolve(root["feeder"].as<std::string>());
    c.pack = resolve(root["pack"].as<std::string>());
    if (root["output"]) c.output = resolve(root["output"].as<std::string>());
    if (root["seed"]) c.seed = root["seed"].as<std::uint64_t>();
    if (root["variant"]) c.variant = parse_variant(root["variant"].as<std::string>());
    if (root["cdf"]) {
      const auto m = root["cdf"].as<std::string>();
      if (m == "rician") c.cdf_mode = CdfMode::rician;
      else if (m == "generalized") c.cdf_mode = CdfMode::generalized;
      else throw ConfigError("unknown cdf mode '" + m + "'");
    }
    if (root["workers"]) c.workers = root["workers"].as<unsigned>();
    if (const auto g = root["grid"]) {
      reject_unknown(g, {"start", "end", "step_minutes"}, "grid");
      if (g["start"]) c.grid.start = TimeOfDay::parse(g["start"].as<std::string>());
      if (g["end"]) c.grid.end = TimeOfDay::parse(g["end"].as<std::string>());
      if (g["step_minutes"]) c.grid.step_minutes = g["step_minutes"].as<int>();
    }
    if (const auto p = root["penetration"]) {
      reject_unknown(p, {"level", "actors", "actor_nodes", "profiles"}, "penetration");
      if (p["level"]) c.penetration_level = p["level"].as<double>();
      if (p["actors"]) c.n_actors = p["actors"].as<std::size_t>();
      if (p["actor_nodes"]) c.actor_nodes = node_list(p["actor_nodes"]);
      if (p["profiles"]) c.profiles = p["profiles"].as<std::vector<std::string>>();
    }
    if (const auto l = root["limits"]) {
      reject_unknown(l, {"lower", "upper"}, "limits");
      if (l["lower"]) c.limits.lower = l["lower"].as<double>();
      if (l["upper"]) c.limits.upper = l["upper"].as<double>();
    }
    if (root["threshold"]) c.threshold = root["threshold"].as<double>();
    if (const auto l = root["loss"]) {
      reject_unknown(l, {"time", "actors"}, "loss");
      if (!l["time"]) throw ConfigError("loss: 'time' is required");
      GenerationLossEvent e{TimeOfDay::parse(l["time"].as<std::string>()), {}};
      if (l["actors"]) e.affected_actors = node_list(l["actors"]);
      c.loss = e;
    }
    if (const auto v = root["validate"]) {
      reject_unknown(v, {"node", "phase", "actors", "level", "time", "samples", "bins", "js_bound"}, "validate");
      if (v["node"]) c.validate.node = NodeId{v["node"].as<int>()};
      if (v["phase"]) {
        const auto s = v["phase"].as<std::string>();
        if (s.size() != 1) throw ConfigError("validate: phase must be a, b or c");
        c.validate.phase = phase_from_char(s[0]);
      }
      if (v["actors"]) c.validate.actors = node_list(v["actors"]);
      if (v["level"]) c.validate.penetration_level = v["level"].as<double>();
      if (v["time"]) c.validate.time = TimeOfDay::parse(v["time"].as<std::string>());
      if (v["samples"]) c.validate.samples = v["samples"].as<std::size_t>();
      if (v["bins"]) c.validate.bins = v["bins"].as<std::size_t>();
      if (v["js_bound"]) c.validate.js_bound = v["js_bound"].as<double>();
    }
    if (const auto m = root["montecarlo"]) {
      reject_unknown(m, {"runs", "levels", "actors", "error_bound"}, "montecarlo");
      if (m["runs"]) c.montecarlo.runs = m["runs"].as<int>();
      if (m["levels"]) c.montecarlo.levels = m["levels"].as<std::vector<double>>();
      if (m["actors"]) c.montecarlo.actors = m["actors"].as<std::size_t>();
      if (m["error_bound"]) c.montecarlo.error_bound = m["error_bound"].as<double>();
    }
    if (const auto b = root["bench"]) {
      reject_unknown(b, {"repetitions", "observation", "actors", "chains"}, "bench");
      if (b["repetitions"]) c.bench.repetitions = b["repetitions"].as<int>();
      if (b["observation"]) c.bench.observation = NodeId{b["observation"].as<int>()};
      if (b["actors"]) c.bench.actors = node_list(b["actors"]);
      if (b["chains"]) c.bench.chain_sizes = b["chains"].as<std::vector<std::size_t>>();
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const ScenarioError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return c;
}

void ExperimentConfig::check() const {
  if (!fs::exists(feeder)) throw ConfigError("feeder file not found: " + feeder.string());
  if (!fs::exists(pack)) throw ConfigError("scenario pack not found: " + pack.string());
  try {
    grid.validate();
    if (loss) loss->validate(grid);
  } catch (const ScenarioError& e) {
    throw ConfigError(e.what());
  }
  if (!(limits.lower >= 0.0 && limits.lower < limits.upper)) throw ConfigError("voltage limits must satisfy 0 <= lower < upper");
  if (!(threshold >= 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in [0, 1)");
  if (validate.samples == 0) throw ConfigError("validate: samples must be positive");
  if (validate.bins == 0) throw ConfigError("validate: bins must be positive");
  if (montecarlo.runs < 1) throw ConfigError("montecarlo: runs must be at least 1");
  if (montecarlo.levels.empty()) throw ConfigError("montecarlo: no penetration levels");
  if (bench.repetitions < 30) throw ConfigError("bench: repetitions must be at least 30");
}

std::uint64_t ExperimentConfig::require_seed() const {
  if (!seed) throw ConfigError("an explicit seed is required (config 'seed' or --seed)");
  return *seed;
}

namespace {

struct Loaded {
  Feeder feeder;
  ScenarioPack pack;
  std::vector<PVProfile> profiles;
};

Loaded load_inputs(const ExperimentConfig& cfg) {
  cfg.check();
  Loaded in{load_feeder(cfg.feeder), load_pack(cfg.pack), {}};
  if (cfg.profiles.empty()) in.profiles.push_back(in.pack.profiles.front());
  for (const auto& name : cfg.profiles) in.profiles.push_back(in.pack.profile(name));
  return in;
}

AssessOptions assess_options(const ExperimentConfig& cfg) {
  AssessOptions o;
  o.limits = cfg.limits;
  o.threshold = cfg.threshold;
  o.variant = cfg.variant;
  o.mode = cfg.cdf_mode;
  o.workers = 1;
  return o;
}

double mean_of(const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

double std_of(const std::vector<double>& x, double mean) {
  if (x.size() < 2) return 0.0;
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

}  // namespace

ValidationOutcome run_validation(const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.require_seed();
  const Loaded in = load_inputs(cfg);
  const auto& v = cfg.validate;
  const PenetrationConfig pen = fixed_penetration(in.feeder, v.penetration_level, v.actors, in.profiles);
  const TimeOfDay t_prev{std::max(0, v.time.minutes - cfg.grid.step_minutes)};

  const InjectionSet present(InjectionSet::from_stacked(injection_level(in.feeder, pen, in.pack, t_prev, cfg.loss).mean));
  const SolveReport state = solve(in.feeder, present);
  if (!state.converged) throw NonConvergence(0, "present-state load flow did not converge at " + t_prev.str());
  const PowerChangeModel model = net_power_change(in.feeder, pen, in.pack, v.time, t_prev, cfg.loss);

  const auto sv = build_c_vectors(in.feeder, state.voltages, v.node, v.phase);
  const auto g = delta_v_distribution(sv, model);
  const Complex vp = state.voltages.at(in.feeder.index_of(v.node), v.phase);

  ValidationOutcome out;
  out.symmetric = predicted_voltage_distribution(vp, g, Variant::symmetric);
  out.paper_verbatim = predicted_voltage_distribution(vp, g, Variant::paper_verbatim);
  out.prediction = cfg.variant == Variant::symmetric ? out.symmetric : out.paper_verbatim;

  MonteCarloOptions mco;
  mco.workers = cfg.workers;
  out.samples = monte_carlo_voltage_samples(in.feeder, present, model, v.node, v.phase, v.samples, seed, mco);
  if (out.samples.magnitudes.empty()) throw NonConvergence(0, "every Monte Carlo load flow diverged");

  const auto& x = out.samples.magnitudes;
  out.histogram = make_histogram(x, validation_bin_edges(x, out.prediction, v.bins, cfg.cdf_mode));
  out.theoretical = bin_masses(out.prediction, out.histogram.bin_edges, cfg.cdf_mode);
  out.js = js_distance(out.histogram.probabilities(), out.theoretical);
  auto js_for = [&](const RicianPrediction& p) {
    const auto h = make_histogram(x, validation_bin_edges(x, p, v.bins, cfg.cdf_mode));
    return jensen_shannon_distance(h, p, cfg.cdf_mode);
  };
  out.js_symmetric = js_for(out.symmetric);
  out.js_paper_verbatim = js_for(out.paper_verbatim);
  out.degenerate = out.prediction.point_mass && out.histogram.counts.size() == 1;
  out.mc_mean = mean_of(x);
  out.mc_std = std_of(x, out.mc_mean);
  return out;
}

PredictionOutcome run_prediction(const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.require_seed();
  const Loaded in = load_inputs(cfg);
  PredictionOutcome out;
  out.penetration = cfg.actor_nodes.empty()
                        ? allocate_penetration(in.feeder, cfg.penetration_level, cfg.n_actors, derive_seed(seed, 1),
                                               in.profiles)
                        : fixed_penetration(in.feeder, cfg.penetration_level, cfg.actor_nodes, in.profiles);
  const auto series = run_timeseries(in.feeder, out.penetration, in.pack, cfg.grid, cfg.loss, derive_seed(seed, 2));
  out.trajectory = violation_trajectory(in.feeder, series, assess_options(cfg));
  out.error = violation_count_series(out.trajectory.predicted, out.trajectory.actual);
  out.error.penetration_level = cfg.penetration_level;
  out.error.seed = seed;
  out.error.pack = in.pack.name;
  out.net_power = net_power_curve(in.feeder, out.penetration, in.pack, cfg.grid, cfg.loss);
  return out;
}

MonteCarloOutcome run_montecarlo(const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.require_seed();
  const Loaded in = load_inputs(cfg);
  const auto options = assess_options(cfg);
  const auto runs = static_cast<std::size_t>(cfg.montecarlo.runs);
  MonteCarloOutcome out;
  for (std::size_t li = 0; li < cfg.montecarlo.levels.size(); ++li) {
    const double pl = cfg.montecarlo.levels[li];
    const std::uint64_t level_seed = derive_seed(seed, 100 + li);
    std::vector<MonteCarloRow> rows(runs);
    parallel_for(runs, cfg.workers, [&](std::size_t r) {
      const std::uint64_t run_seed = derive_seed(level_seed, r);
      const auto pen = allocate_penetration(in.feeder, pl, cfg.montecarlo.actors, derive_seed(run_seed, 1), in.profiles);
      std::vector<Instant> series;
      try {
        series = run_timeseries(in.feeder, pen, in.pack, cfg.grid, cfg.loss, derive_seed(run_seed, 2));
      } catch (const NonConvergence& e) {
        throw NonConvergence(e.instant(), fmt::format("run {} at PL {}: {}", r, pl, e.what()));
      }
      const auto tr = violation_trajectory(in.feeder, series, options);
      rows[r].run = static_cast<int>(r);
      rows[r].penetration_level = pl;
      rows[r].seed = run_seed;
      rows[r].error = violation_count_series(tr.predicted, tr.actual);
      rows[r].error.penetration_level = pl;
      rows[r].error.seed = run_seed;
      rows[r].error.pack = in.pack.name;
    });
    double total = 0.0;
    for (const auto& row : rows) total += row.error.error_pct;
    out.mean_error.emplace_back(pl, total / static_cast<double>(runs));
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
  }
  return out;
}

Feeder chain_like(const Feeder& like, std::size_t n_nodes) {
  if (n_nodes < 2) throw ConfigError("chain feeders need at least 2 nodes");
  const double scale = static_cast<double>(like.node_count()) / static_cast<double>(n_nodes);
  Matrix3c z = Matrix3c::Zero();
  for (const auto& l : like.lines()) z += l.impedance;
  z *= scale / static_cast<double>(like.lines().size());
  Vector3c s = Vector3c::Zero();
  for (std::size_t i = 0; i < like.node_count(); ++i) s += like.load_pu(i);
  s *= scale * like.base().phase_power() / static_cast<double>(like.node_count());
  return make_chain_feeder(n_nodes, z, s, like.base());
}

std::vector<BenchRow> run_bench(const ExperimentConfig& cfg) {
  cfg.check();
  const Feeder bundled = load_feeder(cfg.feeder);
  std::vector<BenchRow> out;
  auto bench_one = [&](const Feeder& f, std::string label, NodeId observation, const std::vector<NodeId>& actor_ids) {
    const InjectionSet base = InjectionSet::base_loads(f);
    const SolveReport state = solve(f, base);
    if (!state.converged) throw NonConvergence(0, "base load flow of " + label + " did not converge");
    std::vector<Actor> actors;
    for (NodeId a : actor_ids) {
      Actor act{a, {}};
      act.change.s = -0.1 * f.load_pu(f.index_of(a));
      if (act.change.s.cwiseAbs().maxCoeff() == 0.0) act.change.s.setConstant(Complex{-0.01, 0.0});
      actors.push_back(act);
    }
    out.push_back({std::move(label), f.node_count(),
                   benchmark_sensitivity_vs_loadflow(f, state.voltages, base, observation, actors, cfg.bench.repetitions)});
  };
  bench_one(bundled, bundled.name(), cfg.bench.observation, cfg.bench.actors);
  for (std::size_t n : cfg.bench.chain_sizes) {
    const Feeder chain = chain_like(bundled, n);
    std::vector<NodeId> ids;
    for (std::size_t k = 1; k <= 4; ++k) ids.push_back(chain.node(std::max<std::size_t>(1, k * (n - 1) / 4)).id);
    bench_one(chain, fmt::format("chain{}", n), chain.node(n - 1).id, ids);
  }
  return out;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

StagedOutput::StagedOutput(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  stage_ = dir_ / fmt::format(".staging-{}", ::getpid());
  fs::remove_all(stage_);
  fs::create_directories(stage_);
}

StagedOutput::~StagedOutput() {
  std::error_code ec;
  fs::remove_all(stage_, ec);
}

fs::path StagedOutput::path(const std::string& name) {
  names_.push_back(name);
  return stage_ / name;
}

void StagedOutput::commit() {
  for (const auto& n : names_) fs::rename(stage_ / n, dir_ / n);
  committed_ = true;
}

namespace {

std::ofstream open_csv(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

void close_csv(std::ofstream& out, const fs::path& p) {
  out.close();
  if (!out) throw std::runtime_error("failed writing " + p.string());
}

}  // namespace

int cmd_validate_node(const ExperimentConfig& cfg, std::ostream& diag) {
  const ValidationOutcome r = run_validation(cfg);
  const auto& v = cfg.validate;
  StagedOutput stage(cfg.output);
  const std::string stem = fmt::format("validate_{}", v.node.value);

  const auto data_path = stage.path(stem + ".csv");
  auto data = open_csv(data_path);
  fmt::print(data, "bin_lower,bin_upper,empirical_density,theoretical_density\n");
  const auto p = r.histogram.probabilities();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double lo = r.histogram.bin_edges[i], hi = r.histogram.bin_edges[i + 1];
    fmt::print(data, "{},{},{},{}\n", lo, hi, p[i] / (hi - lo), r.theoretical[i] / (hi - lo));
  }
  close_csv(data, data_path);

  const bool pass = r.js <= v.js_bound;
  const auto sum_path = stage.path(stem + ".summary.csv");
  auto sum = open_csv(sum_path);
  fmt::print(sum,
             "node,phase,variant,samples,excluded,bins,js_distance,js_symmetric,js_paper,js_bound,pass,degenerate,"
             "kappa,sigma,lambda,w,v,mc_mean,mc_std\n");
  fmt::print(sum, "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", v.node.value, to_char(v.phase),
             variant_name(cfg.variant), r.samples.magnitudes.size(), r.samples.excluded, r.histogram.counts.size(), r.js,
             r.js_symmetric, r.js_paper_verbatim, v.js_bound, pass ? 1 : 0, r.degenerate ? 1 : 0, r.prediction.kappa,
             r.prediction.sigma, r.prediction.lambda, r.prediction.w, r.prediction.v, r.mc_mean, r.mc_std);
  close_csv(sum, sum_path);
  stage.commit();

  if (r.degenerate)
    fmt::print(diag, "notice: zero-variance power change; prediction and samples are deterministic, JS = {}\n", r.js);
  fmt::print(diag, "node {} phase {}: JS distance {:.4f} (bound {})\n", v.node.value, to_char(v.phase), r.js, v.js_bound);
  return pass ? kExitOk : kExitBound;
}

int cmd_predict(const ExperimentConfig& cfg, std::ostream& diag) {
  const PredictionOutcome r = run_prediction(cfg);
  StagedOutput stage(cfg.output);
  const auto& tr = r.trajectory;

  const auto vp = stage.path("violations.csv");
  auto v = open_csv(vp);
  fmt::print(v, "time,predicted_count,actual_count,p_violation_file\n");
  for (std::size_t k = 0; k < tr.times.size(); ++k)
    fmt::print(v, "{},{},{},p_violation.csv\n", tr.times[k].str(), tr.predicted[k], tr.actual[k]);
  close_csv(v, vp);

  const auto pp = stage.path("p_violation.csv");
  auto pv = open_csv(pp);
  fmt::print(pv, "time");
  for (const auto& c : tr.columns) fmt::print(pv, ",{}", csv_field(c));
  fmt::print(pv, "\n");
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    fmt::print(pv, "{}", tr.times[k].str());
    for (double x : tr.p_violation[k]) fmt::print(pv, ",{}", x);
    fmt::print(pv, "\n");
  }
  close_csv(pv, pp);

  const auto np = stage.path("net_power.csv");
  auto n = open_csv(np);
  fmt::print(n, "time,net_active_pu\n");
  for (const auto& [t, x] : r.net_power) fmt::print(n, "{},{}\n", t.str(), x);
  close_csv(n, np);
  stage.commit();

  fmt::print(diag, "prediction error {:.2f}% over {} instants (mean actual count {:.2f})\n", r.error.error_pct,
             tr.times.size(), r.error.mean_actual);
  return kExitOk;
}

int cmd_montecarlo(const ExperimentConfig& cfg, std::ostream& diag) {
  const MonteCarloOutcome r = run_montecarlo(cfg);
  StagedOutput stage(cfg.output);
  const auto path = stage.path("mc_error.csv");
  auto out = open_csv(path);
  fmt::print(out, "run,pl,error_pct,mean_abs_diff,mean_actual,seed\n");
  for (const auto& row : r.rows)
    fmt::print(out, "{},{},{},{},{},{}\n", row.run, row.penetration_level, row.error.error_pct, row.error.mean_abs_diff,
               row.error.mean_actual, row.seed);
  bool within = true;
  for (const auto& [pl, err] : r.mean_error) {
    fmt::print(out, "mean,{},{},,,\n", pl, err);
    fmt::print(diag, "PL {}: mean prediction error {:.2f}% over {} runs\n", pl, err, cfg.montecarlo.runs);
    if (cfg.montecarlo.error_bound && err > *cfg.montecarlo.error_bound) within = false;
  }
  close_csv(out, path);
  stage.commit();
  return within ? kExitOk : kExitBound;
}

int cmd_bench(const ExperimentConfig& cfg, std::ostream& diag) {
  const auto rows = run_bench(cfg);
  StagedOutput stage(cfg.output);
  const auto path = stage.path("bench.csv");
  auto out = open_csv(path);
  fmt::print(out, "feeder,nodes,method,median_seconds,repetitions,ratio\n");
  for (const auto& r : rows) {
    fmt::print(out, "{},{},analytical,{},{},{}\n", csv_field(r.feeder), r.nodes, r.result.t_analytical,
               r.result.repetitions, r.result.ratio);
    fmt::print(out, "{},{},loadflow,{},{},{}\n", csv_field(r.feeder), r.nodes, r.result.t_loadflow,
               r.result.repetitions, r.result.ratio);
    fmt::print(diag, "{} ({} nodes): analytical {:.3g}s, load flow {:.3g}s, ratio {:.1f}\n", r.feeder, r.nodes,
               r.result.t_analytical, r.result.t_loadflow, r.result.ratio);
  }
  close_csv(out, path);
  stage.commit();
  return kExitOk;
}

int guarded(const std::function<int()>& body, std::ostream& diag) {
  try {
    return body();
  } catch (const NonConvergence& e) {
    fmt::print(diag, "error: {}\n", e.what());
    return kExitNumerical;
  } catch (const SingularConfiguration& e) {
    fmt::print(diag, "error: {}\n", e.what());
    return kExitNumerical;
  } catch (const SingularVoltage& e) {
    fmt::print(diag, "error: {}\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    fmt::print(diag, "error: {}\n", e.what());
    return kExitConfig;
  }
}

}  // namespace pvsa
