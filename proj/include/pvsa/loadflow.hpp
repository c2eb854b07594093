#pragma once

#include "pvsa/network.hpp"
#include "pvsa/power_change.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace pvsa {

/// Complex power per (node, phase), per unit, positive = consumption. Indexed like Feeder::nodes().
class InjectionSet {
 public:
  InjectionSet() = default;
  explicit InjectionSet(std::size_t nodes) : s_(nodes, Vector3c::Zero()) {}
  explicit InjectionSet(std::vector<Vector3c> s) : s_(std::move(s)) {}
  static InjectionSet base_loads(const Feeder& feeder);

  std::size_t size() const { return s_.size(); }
  const Vector3c& node(std::size_t idx) const { return s_[idx]; }
  Vector3c& node(std::size_t idx) { return s_[idx]; }

  /// Adds a stacked power-change vector (PowerLayout order).
  InjectionSet& add(const Eigen::VectorXd& stacked);
  /// Stacked view in PowerLayout order.
  Eigen::VectorXd stacked() const;
  static InjectionSet from_stacked(const Eigen::VectorXd& stacked);

 private:
  std::vector<Vector3c> s_;
};

struct SolveOptions {
  double tolerance = 1e-8;  // max per-phase voltage update, p.u.
  int max_iterations = 100;
};

struct SolveReport {
  PhasorSet voltages;
  std::vector<Vector3c> feed_currents;  // current in the line feeding each node, p.u.
  int iterations = 0;
  double max_mismatch = 0.0;  // largest voltage update of the final sweep, p.u.
  bool converged = false;
  double wall_time = 0.0;  // seconds
};

class SingularConfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Forward-backward sweep (current summation) with constant-PQ loads. The source is held at its
/// base phasor. `initial` seeds the iteration; a flat profile is used when it is null.
SolveReport solve(const Feeder& feeder, const InjectionSet& injections, const SolveOptions& options = {},
                  const PhasorSet* initial = nullptr);

/// Complex power leaving the source, summed over phases.
Complex source_power(const Feeder& feeder, const SolveReport& report);
/// Series losses summed over all lines.
Complex line_losses(const Feeder& feeder, const SolveReport& report);

struct MonteCarloSamples {
  std::vector<double> magnitudes;  // ordered by draw index, excluded draws removed
  std::size_t excluded = 0;         // non-convergent draws
};

struct MonteCarloOptions {
  SolveOptions solve;
  unsigned workers = 0;  // 0 = hardware concurrency
};

/// Draws dS ~ N(mu, Sigma), re-solves the load flow for base + dS and records |V| at (node, phase).
/// Draws are processed in fixed-size chunks, each with its own seed derived from `seed` and the
/// chunk index, so the output does not depend on the worker count.
MonteCarloSamples monte_carlo_voltage_samples(const Feeder& feeder, const InjectionSet& base,
                                              const PowerChangeModel& model, NodeId node, Phase phase,
                                              std::size_t n_samples, std::uint64_t seed,
                                              const MonteCarloOptions& options = {});

}  // namespace pvsa
