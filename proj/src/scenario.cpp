#include "pvsa/scenario.hpp"

#include "pvsa/rng.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace pvsa {

TimeOfDay TimeOfDay::parse(std::string_view hhmm) {
  const auto colon = hhmm.find(':');
  int h = -1, m = -1;
  const bool ok = colon != std::string_view::npos && colon > 0 && hhmm.size() - colon == 3 &&
                  std::from_chars(hhmm.data(), hhmm.data() + colon, h).ptr == hhmm.data() + colon &&
                  std::from_chars(hhmm.data() + colon + 1, hhmm.data() + hhmm.size(), m).ptr ==
                      hhmm.data() + hhmm.size();
  if (!ok || h < 0 || m < 0 || m > 59 || h * 60 + m > 24 * 60)
    throw ScenarioError("invalid time of day '" + std::string(hhmm) + "', expected HH:MM");
  return TimeOfDay{h * 60 + m};
}

std::string TimeOfDay::str() const {
  return fmt::format("{:02d}:{:02d}", minutes / 60, minutes % 60);
}

Trend::Trend(std::vector<std::pair<TimeOfDay, double>> points) : points_(std::move(points)) {
  if (points_.empty()) throw ScenarioError("trend needs at least one point");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i].second)) throw ScenarioError("non-finite trend value");
    if (i > 0 && !(points_[i - 1].first < points_[i].first))
      throw ScenarioError("trend times must be strictly increasing");
  }
}

double Trend::at(TimeOfDay t) const {
  if (points_.empty()) throw ScenarioError("empty trend");
  if (t <= points_.front().first) return points_.front().second;
  if (t >= points_.back().first) return points_.back().second;
  const auto hi = std::upper_bound(points_.begin(), points_.end(), t,
                                   [](TimeOfDay x, const auto& p) { return x < p.first; });
  const auto lo = hi - 1;
  const double f = static_cast<double>(t.minutes - lo->first.minutes) / (hi->first.minutes - lo->first.minutes);
  return lo->second + f * (hi->second - lo->second);
}

void PVProfile::validate() const {
  if (trend.points().empty()) throw ScenarioError("profile '" + name + "' has no trend");
  for (const auto& [t, s] : trend.points())
    if (s < 0.0) throw ScenarioError("profile '" + name + "' has a negative trend value at " + t.str());
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
    throw ScenarioError("profile '" + name + "' needs a finite noise_std >= 0");
}

void ScenarioPack::validate() const {
  if (profiles.empty()) throw ScenarioError("pack '" + name + "' defines no PV profile");
  std::set<std::string> seen;
  for (const auto& p : profiles) {
    p.validate();
    if (!seen.insert(p.name).second) throw ScenarioError("duplicate profile '" + p.name + "'");
  }
  for (const auto& [t, m] : load_trend.points())
    if (m < 0.0) throw ScenarioError("negative load multiplier at " + t.str());
  if (!(correlation >= -1.0 && correlation <= 1.0)) throw ScenarioError("correlation must lie in [-1, 1]");
  if (!(pv_power_factor > 0.0 && pv_power_factor <= 1.0)) throw ScenarioError("pv_power_factor must lie in (0, 1]");
  if (!(load_variability >= 0.0) || !std::isfinite(load_variability))
    throw ScenarioError("load_variability must be finite and >= 0");
}

const PVProfile& ScenarioPack::profile(std::string_view wanted) const {
  for (const auto& p : profiles)
    if (p.name == wanted) return p;
  throw ScenarioError("pack '" + name + "' has no profile '" + std::string(wanted) + "'");
}

namespace {

Trend parse_trend(const YAML::Node& node, const std::string& where) {
  if (!node.IsSequence()) throw ScenarioError(where + ": expected a list of [HH:MM, value] pairs");
  std::vector<std::pair<TimeOfDay, double>> pts;
  for (const auto& row : node) {
    if (!row.IsSequence() || row.size() != 2) throw ScenarioError(where + ": expected [HH:MM, value]");
    pts.emplace_back(TimeOfDay::parse(row[0].as<std::string>()), row[1].as<double>());
  }
  return Trend(std::move(pts));
}

void reject_unknown(const YAML::Node& map, std::initializer_list<std::string_view> keys, const std::string& where) {
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ScenarioError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace

ScenarioPack load_pack(std::istream& in, std::string_view origin) {
  const std::string where(origin);
  ScenarioPack pack;
  try {
    const YAML::Node root = YAML::Load(in);
    if (!root.IsMap()) throw ScenarioError(where + ": pack must be a mapping");
    reject_unknown(root, {"name", "version", "profiles", "load_trend", "correlation", "pv_power_factor",
                          "load_variability"},
                   where);
    if (!root["name"]) throw ScenarioError(where + ": missing 'name'");
    pack.name = root["name"].as<std::string>();
    if (root["version"]) pack.version = root["version"].as<int>();
    if (root["correlation"]) pack.correlation = root["correlation"].as<double>();
    if (root["pv_power_factor"]) pack.pv_power_factor = root["pv_power_factor"].as<double>();
    if (root["load_variability"]) pack.load_variability = root["load_variability"].as<double>();
    if (root["load_trend"]) pack.load_trend = parse_trend(root["load_trend"], where + ": load_trend");
    if (!root["profiles"] || !root["profiles"].IsSequence())
      throw ScenarioError(where + ": 'profiles' must be a list");
    for (const auto& p : root["profiles"]) {
      reject_unknown(p, {"name", "noise_std", "trend"}, where + ": profile");
      if (!p["name"] || !p["trend"]) throw ScenarioError(where + ": profile needs 'name' and 'trend'");
      PVProfile prof;
      prof.name = p["name"].as<std::string>();
      prof.noise_std = p["noise_std"] ? p["noise_std"].as<double>() : 0.0;
      prof.trend = parse_trend(p["trend"], where + ": profile " + prof.name);
      pack.profiles.push_back(std::move(prof));
    }
  } catch (const YAML::Exception& e) {
    throw ScenarioError(where + ": " + e.what());
  }
  try {
    pack.validate();
  } catch (const ScenarioError& e) {
    throw ScenarioError(where + ": " + e.what());
  }
  return pack;
}

ScenarioPack load_pack(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario pack " + path.string());
  return load_pack(in, path.string());
}

void PenetrationConfig::validate(const Feeder& feeder) const {
  if (!(penetration_level > 0.0 && penetration_level <= 1.0))
    throw ScenarioError("penetration level must lie in (0, 1]");
  if (actors.empty()) throw ScenarioError("no actor nodes");
  if (profiles.empty()) throw ScenarioError("no PV profiles");
  if (profile_of.size() != actors.size()) throw ScenarioError("every actor needs a profile");
  std::set<NodeId> seen;
  for (std::size_t i = 0; i < actors.size(); ++i) {
    if (!feeder.contains(actors[i])) throw UnknownNode(actors[i]);
    if (!seen.insert(actors[i]).second)
      throw ScenarioError("duplicate actor node " + std::to_string(actors[i].value));
    if (profile_of[i] >= profiles.size()) throw ScenarioError("profile index out of range");
  }
  for (const auto& p : profiles) p.validate();
  const double target = penetration_level * feeder.total_active_load_pu();
  if (std::abs(unit_rating * static_cast<double>(actors.size()) - target) > 1e-6)
    throw ScenarioError("actor ratings do not sum to the penetration level");
}

PenetrationConfig fixed_penetration(const Feeder& feeder, double pl, std::vector<NodeId> actors,
                                    std::vector<PVProfile> profiles) {
  if (!(pl > 0.0 && pl <= 1.0)) throw ScenarioError("penetration level must lie in (0, 1]");
  if (actors.empty()) throw ScenarioError("no actor nodes");
  if (profiles.empty()) throw ScenarioError("no PV profiles");
  std::sort(actors.begin(), actors.end());
  PenetrationConfig c;
  c.penetration_level = pl;
  c.unit_rating = pl * feeder.total_active_load_pu() / static_cast<double>(actors.size());
  c.profile_of.resize(actors.size());
  for (std::size_t i = 0; i < actors.size(); ++i) c.profile_of[i] = i % profiles.size();
  c.actors = std::move(actors);
  c.profiles = std::move(profiles);
  c.validate(feeder);
  return c;
}

PenetrationConfig allocate_penetration(const Feeder& feeder, double pl, std::size_t n_actors, std::uint64_t seed,
                                       std::vector<PVProfile> profiles) {
  std::vector<NodeId> eligible;
  for (const auto& n : feeder.nodes())
    if (n.id != feeder.source()) eligible.push_back(n.id);
  std::sort(eligible.begin(), eligible.end());
  if (n_actors == 0 || n_actors > eligible.size())
    throw ScenarioError("cannot place " + std::to_string(n_actors) + " actors on " + std::to_string(eligible.size()) +
                        " eligible nodes");
  Rng rng(seed);
  for (std::size_t i = 0; i < n_actors; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(n_actors);
  auto c = fixed_penetration(feeder, pl, std::move(eligible), std::move(profiles));
  c.allocation_seed = seed;
  return c;
}

void TimeGrid::validate() const {
  if (step_minutes <= 0) throw ScenarioError("time grid step must be positive");
  if (!(start < end)) throw ScenarioError("time grid is empty: start " + start.str() + " is not before end " + end.str());
}

std::vector<TimeOfDay> TimeGrid::instants() const {
  validate();
  std::vector<TimeOfDay> out;
  for (int m = start.minutes; m <= end.minutes; m += step_minutes) out.push_back(TimeOfDay{m});
  return out;
}

bool GenerationLossEvent::applies(NodeId actor, TimeOfDay t) const {
  if (t < event_time) return false;
  return affected_actors.empty() ||
         std::find(affected_actors.begin(), affected_actors.end(), actor) != affected_actors.end();
}

void GenerationLossEvent::validate(const TimeGrid& grid) const {
  if (event_time < grid.start || event_time > grid.end)
    throw ScenarioError("generation-loss time " + event_time.str() + " lies outside the time grid");
}

InjectionLevel injection_level(const Feeder& feeder, const PenetrationConfig& config, const ScenarioPack& pack,
                               TimeOfDay t, const std::optional<GenerationLossEvent>& loss) {
  const std::size_t n = feeder.node_count();
  const PowerLayout layout{n};
  const auto dim = static_cast<Eigen::Index>(layout.size());
  InjectionLevel level{Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)};
  auto at = [&](std::size_t i, Phase p, Component k) { return static_cast<Eigen::Index>(layout.at(i, p, k)); };

  std::vector<std::optional<std::size_t>> actor_of(n);
  for (std::size_t a = 0; a < config.actors.size(); ++a) actor_of[feeder.index_of(config.actors[a])] = a;

  const double multiplier = pack.load_trend.at(t);
  const double lv2 = pack.load_variability * pack.load_variability;
  for (std::size_t i = 0; i < n; ++i) {
    for (Phase p : kPhases) {
      const Complex s = feeder.load_pu(i)(static_cast<Eigen::Index>(index(p))) * multiplier;
      const auto ip = at(i, p, Component::active);
      const auto iq = at(i, p, Component::reactive);
      level.mean(ip) = s.real();
      level.mean(iq) = s.imag();
      if (actor_of[i]) continue;
      level.cov(ip, ip) = lv2 * s.real() * s.real();
      level.cov(iq, iq) = lv2 * s.imag() * s.imag();
      level.cov(ip, iq) = level.cov(iq, ip) = lv2 * s.real() * s.imag();
    }
  }

  // One noise source per actor, shared by its phases and by its active and reactive output.
  const double tan_phi = std::tan(std::acos(pack.pv_power_factor));
  const auto na = static_cast<Eigen::Index>(config.actors.size());
  Eigen::MatrixXd loading = Eigen::MatrixXd::Zero(dim, na);
  for (Eigen::Index a = 0; a < na; ++a) {
    const NodeId id = config.actors[static_cast<std::size_t>(a)];
    if (loss && loss->applies(id, t)) continue;
    const std::size_t i = feeder.index_of(id);
    const auto& prof = config.profile_for(static_cast<std::size_t>(a));
    int phases = 0;
    for (Phase p : kPhases) phases += feeder.node(i).phases.has(p) ? 1 : 0;
    const double share = config.unit_rating / phases;
    const double g = prof.trend.at(t) * share;
    const double sd = prof.noise_std * share;
    for (Phase p : kPhases) {
      if (!feeder.node(i).phases.has(p)) continue;
      level.mean(at(i, p, Component::active)) -= g;
      level.mean(at(i, p, Component::reactive)) -= g * tan_phi;
      loading(at(i, p, Component::active), a) = -sd;
      loading(at(i, p, Component::reactive), a) = -sd * tan_phi;
    }
  }
  if (na > 0) {
    Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(na, na, pack.correlation);
    corr.diagonal().setOnes();
    if (!psd_cholesky(corr))
      throw ScenarioError("correlation " + std::to_string(pack.correlation) + " is not positive semidefinite for " +
                          std::to_string(na) + " actors");
    level.cov += loading * corr * loading.transpose();
  }
  return level;
}

PowerChangeModel net_power_change(const Feeder& feeder, const PenetrationConfig& config, const ScenarioPack& pack,
                                  TimeOfDay t, TimeOfDay t_prev, const std::optional<GenerationLossEvent>& loss,
                                  const Eigen::VectorXd* present_deviation) {
  const InjectionLevel now = injection_level(feeder, config, pack, t, loss);
  const InjectionLevel before = injection_level(feeder, config, pack, t_prev, loss);
  PowerChangeModel m{now.mean - before.mean, now.cov};
  if (present_deviation) {
    if (present_deviation->size() != m.mu.size()) throw ScenarioError("present deviation has the wrong dimension");
    m.mu -= *present_deviation;
  }
  try {
    m.validate(feeder.node_count());
  } catch (const std::exception& e) {
    throw ScenarioError(std::string("power-change model rejected: ") + e.what());
  }
  return m;
}

std::vector<std::pair<TimeOfDay, double>> net_power_curve(const Feeder& feeder, const PenetrationConfig& config,
                                                          const ScenarioPack& pack, const TimeGrid& grid,
                                                          const std::optional<GenerationLossEvent>& loss) {
  const PowerLayout layout{feeder.node_count()};
  std::vector<std::pair<TimeOfDay, double>> out;
  for (TimeOfDay t : grid.instants()) {
    const auto level = injection_level(feeder, config, pack, t, loss);
    double total = 0.0;
    for (std::size_t i = 0; i < feeder.node_count(); ++i)
      for (Phase p : kPhases) total += level.mean(static_cast<Eigen::Index>(layout.at(i, p, Component::active)));
    out.emplace_back(t, total);
  }
  return out;
}

std::vector<Instant> run_timeseries(const Feeder& feeder, const PenetrationConfig& config, const ScenarioPack& pack,
                                    const TimeGrid& grid, const std::optional<GenerationLossEvent>& loss,
                                    std::uint64_t seed, const SolveOptions& solve_options) {
  config.validate(feeder);
  pack.validate();
  const auto times = grid.instants();
  if (loss) loss->validate(grid);

  std::vector<Instant> out;
  out.reserve(times.size());
  Eigen::VectorXd deviation;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const InjectionLevel level = injection_level(feeder, config, pack, times[k], loss);
    const GaussianSampler sampler(PowerChangeModel{level.mean, level.cov});
    Rng rng(derive_seed(seed, k));
    const Eigen::VectorXd realized = sampler.draw(rng);
    deviation = realized - level.mean;

    Instant inst;
    inst.time = times[k];
    inst.injections = InjectionSet::from_stacked(realized);
    inst.flow = solve(feeder, inst.injections, solve_options, out.empty() ? nullptr : &out.back().flow.voltages);
    if (!inst.flow.converged)
      throw NonConvergence(k, "load flow did not converge at " + times[k].str() + " (instant " + std::to_string(k) + ")");
    if (k + 1 < times.size())
      inst.next = net_power_change(feeder, config, pack, times[k + 1], times[k], loss, &deviation);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace pvsa
