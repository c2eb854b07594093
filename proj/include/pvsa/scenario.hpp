#pragma once

#include "pvsa/loadflow.hpp"
#include "pvsa/network.hpp"
#include "pvsa/power_change.hpp"

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pvsa {

/// Minutes after midnight, 00:00 to 24:00 inclusive.
struct TimeOfDay {
  int minutes = 0;

  static TimeOfDay parse(std::string_view hhmm);
  std::string str() const;
  auto operator<=>(const TimeOfDay&) const = default;
};

class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Piecewise-linear function of time of day, held constant beyond its first and last points.
class Trend {
 public:
  Trend() = default;
  explicit Trend(std::vector<std::pair<TimeOfDay, double>> points);
  static Trend constant(double value) { return Trend({{TimeOfDay{0}, value}}); }

  double at(TimeOfDay t) const;
  const std::vector<std::pair<TimeOfDay, double>>& points() const { return points_; }

 private:
  std::vector<std::pair<TimeOfDay, double>> points_;
};

/// G(t) = S(t) + R_s(t) per unit of the actor's rating; R_s ~ N(0, noise_std^2).
struct PVProfile {
  std::string name;
  Trend trend;
  double noise_std = 0.0;

  void validate() const;
};

/// Named, versioned set of scenario parameters.
struct ScenarioPack {
  std::string name;
  int version = 1;
  std::vector<PVProfile> profiles;
  Trend load_trend = Trend::constant(1.0);  // multiplier of the feeder's base loads
  double correlation = 0.0;                 // between the PV noise of distinct actors
  double pv_power_factor = 1.0;             // generating, reactive output has the sign of active output
  double load_variability = 0.0;            // std of non-actor load, fraction of the node's load

  void validate() const;
  const PVProfile& profile(std::string_view name) const;
};

ScenarioPack load_pack(const std::filesystem::path& path);
ScenarioPack load_pack(std::istream& in, std::string_view origin = "<stream>");

struct PenetrationConfig {
  double penetration_level = 0.0;
  std::vector<NodeId> actors;       // ascending
  double unit_rating = 0.0;         // per actor, per unit of the per-phase base, summed over phases
  std::vector<PVProfile> profiles;  // actor i follows profiles[profile_of[i]]
  std::vector<std::size_t> profile_of;
  std::uint64_t allocation_seed = 0;

  void validate(const Feeder& feeder) const;
  const PVProfile& profile_for(std::size_t actor) const { return profiles[profile_of[actor]]; }
};

/// Picks `n_actors` distinct non-source nodes uniformly without replacement. Each takes an equal
/// share of pl x total load; profiles are dealt round-robin over the sorted actors.
PenetrationConfig allocate_penetration(const Feeder& feeder, double pl, std::size_t n_actors, std::uint64_t seed,
                                       std::vector<PVProfile> profiles);

/// Same rating rule with an explicit actor set.
PenetrationConfig fixed_penetration(const Feeder& feeder, double pl, std::vector<NodeId> actors,
                                    std::vector<PVProfile> profiles);

struct TimeGrid {
  TimeOfDay start{12 * 60};
  TimeOfDay end{18 * 60};
  int step_minutes = 15;

  void validate() const;
  std::vector<TimeOfDay> instants() const;
};

struct GenerationLossEvent {
  TimeOfDay event_time;
  std::vector<NodeId> affected_actors;  // empty = all actors

  bool applies(NodeId actor, TimeOfDay t) const;
  void validate(const TimeGrid& grid) const;
};

/// Stacked consumption at one instant (PowerLayout order, per unit): mean and covariance.
struct InjectionLevel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

InjectionLevel injection_level(const Feeder& feeder, const PenetrationConfig& config, const ScenarioPack& pack,
                               TimeOfDay t, const std::optional<GenerationLossEvent>& loss = std::nullopt);

/// Forecast change from `t_prev` to `t`. Positive entries are increased consumption, so PV output
/// enters with a negative sign. With `present_deviation` (the realized minus the mean consumption at
/// `t_prev`) the mean is taken relative to the measured present state instead of the forecast one.
PowerChangeModel net_power_change(const Feeder& feeder, const PenetrationConfig& config, const ScenarioPack& pack,
                                  TimeOfDay t, TimeOfDay t_prev,
                                  const std::optional<GenerationLossEvent>& loss = std::nullopt,
                                  const Eigen::VectorXd* present_deviation = nullptr);

/// Mean net active consumption of the whole feeder (per unit); negative means reversed flow.
std::vector<std::pair<TimeOfDay, double>> net_power_curve(const Feeder& feeder, const PenetrationConfig& config,
                                                          const ScenarioPack& pack, const TimeGrid& grid,
                                                          const std::optional<GenerationLossEvent>& loss = std::nullopt);

struct Instant {
  TimeOfDay time;
  InjectionSet injections;  // realized consumption
  SolveReport flow;         // load flow of the realized state
  std::optional<PowerChangeModel> next;  // forecast to the following instant, absent at the last one
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(std::size_t instant, const std::string& what)
      : std::runtime_error(what), instant_(instant) {}
  std::size_t instant() const { return instant_; }

 private:
  std::size_t instant_;
};

/// Realizes the scenario over the grid, one derived seed per instant, and solves each state.
std::vector<Instant> run_timeseries(const Feeder& feeder, const PenetrationConfig& config, const ScenarioPack& pack,
                                    const TimeGrid& grid, const std::optional<GenerationLossEvent>& loss,
                                    std::uint64_t seed, const SolveOptions& solve_options = {});

}  // namespace pvsa
