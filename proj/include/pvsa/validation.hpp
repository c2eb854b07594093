#pragma once

#include "pvsa/loadflow.hpp"
#include "pvsa/network.hpp"
#include "pvsa/pvsa.hpp"
#include "pvsa/scenario.hpp"
#include "pvsa/sensitivity.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pvsa {

struct Histogram {
  std::vector<double> bin_edges;     // ascending
  std::vector<std::uint64_t> counts;  // one per bin

  void validate() const;
  std::uint64_t total() const;
  std::vector<double> probabilities() const;
};

/// Counts samples into the given bins; the last bin is closed on the right. Samples outside the
/// edges are rejected.
Histogram make_histogram(std::span<const double> samples, std::vector<double> edges);

/// `bins` equal-width bins over the union of the sample range and the prediction's 1e-6 and
/// 1 - 1e-6 quantiles. A degenerate range, or a point-mass prediction against constant samples,
/// collapses to a single bin.
std::vector<double> validation_bin_edges(std::span<const double> samples, const RicianPrediction& pred,
                                         std::size_t bins = 50, CdfMode mode = CdfMode::rician);

/// Predicted probability of each bin, renormalized over the bins.
std::vector<double> bin_masses(const RicianPrediction& pred, std::span<const double> edges,
                               CdfMode mode = CdfMode::rician);

/// Square root of the base-2 Jensen-Shannon divergence of two discrete distributions, each
/// normalized to unit sum first.
double js_distance(std::span<const double> p, std::span<const double> q);

double jensen_shannon_distance(const Histogram& empirical, const RicianPrediction& theoretical,
                               CdfMode mode = CdfMode::rician);

/// Number of energized (node, phase) pairs outside the open interval (lower, upper).
int count_violations(const Feeder& feeder, const PhasorSet& state, VoltageLimits limits = {});

struct ViolationTrajectory {
  std::vector<TimeOfDay> times;          // instants 1..N-1 of the series
  std::vector<int> predicted;            // vulnerable count forecast from the previous instant
  std::vector<int> actual;               // load-flow count at the instant
  std::vector<std::string> columns;      // "<node><phase>" labels of the p_violation matrix
  std::vector<std::vector<double>> p_violation;  // one row per time, one column per (node, phase)
};

ViolationTrajectory violation_trajectory(const Feeder& feeder, const std::vector<Instant>& series,
                                         const AssessOptions& options = {});

struct ErrorReport {
  std::vector<int> predicted;
  std::vector<int> actual;
  std::vector<int> abs_diff;
  double mean_abs_diff = 0.0;
  double mean_actual = 0.0;
  double error_pct = 0.0;  // mean |pred - actual| / max(1, mean actual) x 100
  double penetration_level = 0.0;
  std::uint64_t seed = 0;
  std::string pack;
};

ErrorReport violation_count_series(std::vector<int> predicted, std::vector<int> actual);

struct BenchmarkResult {
  double t_analytical = 0.0;  // seconds, median per call
  double t_loadflow = 0.0;    // seconds, median per solve
  double ratio = 0.0;         // t_loadflow / t_analytical
  int repetitions = 0;
};

/// Median wall time of delta_v_cumulative for one observation node against one flat-start
/// load-flow solve of base + actor changes. Each repetition times a batch sized so that the clock
/// resolution is negligible; five warm-up repetitions are discarded.
BenchmarkResult benchmark_sensitivity_vs_loadflow(const Feeder& feeder, const PhasorSet& state,
                                                  const InjectionSet& base, NodeId observation,
                                                  std::span<const Actor> actors, int repetitions);

}  // namespace pvsa
