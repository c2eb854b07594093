#include "pvsa/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pvsa {

void Histogram::validate() const {
  if (bin_edges.size() < 2 || counts.size() != bin_edges.size() - 1)
    throw std::invalid_argument("histogram needs one count per bin");
  for (std::size_t i = 1; i < bin_edges.size(); ++i)
    if (!(bin_edges[i - 1] < bin_edges[i])) throw std::invalid_argument("histogram edges must be ascending");
  if (total() == 0) throw std::invalid_argument("histogram is empty");
}

std::uint64_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

std::vector<double> Histogram::probabilities() const {
  const double n = static_cast<double>(total());
  std::vector<double> p(counts.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(counts[i]) / n;
  return p;
}

Histogram make_histogram(std::span<const double> samples, std::vector<double> edges) {
  Histogram h{std::move(edges), {}};
  if (h.bin_edges.size() < 2) throw std::invalid_argument("histogram needs at least one bin");
  h.counts.assign(h.bin_edges.size() - 1, 0);
  for (double x : samples) {
    if (!(x >= h.bin_edges.front() && x <= h.bin_edges.back()))
      throw std::invalid_argument("sample outside the histogram range");
    auto it = std::upper_bound(h.bin_edges.begin(), h.bin_edges.end(), x);
    auto bin = static_cast<std::size_t>(it - h.bin_edges.begin());
    bin = std::min(bin, h.counts.size()) - 1;
    ++h.counts[bin];
  }
  h.validate();
  return h;
}

std::vector<double> validation_bin_edges(std::span<const double> samples, const RicianPrediction& pred,
                                         std::size_t bins, CdfMode mode) {
  if (samples.empty()) throw std::invalid_argument("no samples to bin");
  if (bins == 0) throw std::invalid_argument("need at least one bin");
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  if (pred.point_mass && *mn == *mx) {
    const double lo = std::min(*mn, pred.kappa), hi = std::max(*mx, pred.kappa);
    const double pad = 1e-9 * std::max(1.0, std::abs(hi)) + (hi - lo);
    return {lo - pad, hi + pad};
  }
  double lo = std::min(*mn, rician_quantile(pred, 1e-6, mode));
  double hi = std::max(*mx, rician_quantile(pred, 1.0 - 1e-6, mode));
  const double scale = std::max(1.0, std::abs(hi));
  if (hi - lo <= 1e-9 * scale) {
    const double mid = 0.5 * (lo + hi);
    return {mid - 1e-9 * scale, mid + 1e-9 * scale};
  }
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  edges.back() = hi;
  return edges;
}

std::vector<double> bin_masses(const RicianPrediction& pred, std::span<const double> edges, CdfMode mode) {
  if (edges.size() < 2) throw std::invalid_argument("need at least one bin");
  std::vector<double> cdf(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) cdf[i] = rician_cdf(pred, edges[i], mode);
  std::vector<double> mass(edges.size() - 1);
  for (std::size_t i = 0; i < mass.size(); ++i) mass[i] = std::max(cdf[i + 1] - cdf[i], 0.0);
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (!(total > 0.0)) throw std::domain_error("prediction puts no mass on the histogram range");
  for (double& m : mass) m /= total;
  return mass;
}

double js_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw std::invalid_argument("distributions differ in size");
  const double sp = std::accumulate(p.begin(), p.end(), 0.0);
  const double sq = std::accumulate(q.begin(), q.end(), 0.0);
  if (!(sp > 0.0) || !(sq > 0.0)) throw std::invalid_argument("distribution has no mass");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw std::invalid_argument("negative probability");
    const double a = p[i] / sp;
    const double b = q[i] / sq;
    const double m = 0.5 * (a + b);
    if (a > 0.0) d += 0.5 * a * std::log2(a / m);
    if (b > 0.0) d += 0.5 * b * std::log2(b / m);
  }
  return std::sqrt(std::clamp(d, 0.0, 1.0));
}

double jensen_shannon_distance(const Histogram& empirical, const RicianPrediction& theoretical, CdfMode mode) {
  empirical.validate();
  const auto p = empirical.probabilities();
  const auto q = bin_masses(theoretical, empirical.bin_edges, mode);
  return js_distance(p, q);
}

int count_violations(const Feeder& feeder, const PhasorSet& state, VoltageLimits limits) {
  int count = 0;
  for (std::size_t i = 0; i < feeder.node_count(); ++i)
    for (Phase p : kPhases) {
      if (!feeder.node(i).phases.has(p)) continue;
      const double m = std::abs(state.at(i, p));
      if (!(m > limits.lower && m < limits.upper)) ++count;
    }
  return count;
}

ViolationTrajectory violation_trajectory(const Feeder& feeder, const std::vector<Instant>& series,
                                         const AssessOptions& options) {
  ViolationTrajectory out;
  for (std::size_t k = 1; k < series.size(); ++k) {
    const Instant& prev = series[k - 1];
    if (!prev.next) throw std::invalid_argument("series instant lacks a forecast model");
    const auto assessed = assess_network(feeder, prev.flow.voltages, *prev.next, options);
    if (out.columns.empty())
      for (const auto& a : assessed) out.columns.push_back(std::to_string(a.node.value) + to_char(a.phase));
    std::vector<double> row;
    row.reserve(assessed.size());
    int vulnerable = 0;
    for (const auto& a : assessed) {
      row.push_back(a.p_violation);
      vulnerable += a.vulnerable ? 1 : 0;
    }
    out.times.push_back(series[k].time);
    out.predicted.push_back(vulnerable);
    out.actual.push_back(count_violations(feeder, series[k].flow.voltages, options.limits));
    out.p_violation.push_back(std::move(row));
  }
  return out;
}

ErrorReport violation_count_series(std::vector<int> predicted, std::vector<int> actual) {
  if (predicted.size() != actual.size()) throw std::invalid_argument("predicted and actual series differ in length");
  if (predicted.empty()) throw std::invalid_argument("empty violation series");
  ErrorReport r;
  r.abs_diff.resize(predicted.size());
  double sum_diff = 0.0, sum_actual = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    r.abs_diff[i] = std::abs(predicted[i] - actual[i]);
    sum_diff += r.abs_diff[i];
    sum_actual += actual[i];
  }
  const double n = static_cast<double>(predicted.size());
  r.mean_abs_diff = sum_diff / n;
  r.mean_actual = sum_actual / n;
  r.error_pct = r.mean_abs_diff / std::max(1.0, r.mean_actual) * 100.0;
  r.predicted = std::move(predicted);
  r.actual = std::move(actual);
  return r;
}

namespace {

template <typename Op>
double median_seconds(Op&& op, int repetitions) {
  using clock = std::chrono::steady_clock;
  auto time_batch = [&](std::size_t batch) {
    const auto t0 = clock::now();
    for (std::size_t b = 0; b < batch; ++b) op();
    return std::chrono::duration<double>(clock::now() - t0).count();
  };
  std::size_t batch = 1;
  while (batch < (std::size_t{1} << 24) && time_batch(batch) < 2e-4) batch *= 2;
  for (int w = 0; w < 5; ++w) time_batch(batch);
  std::vector<double> t(static_cast<std::size_t>(repetitions));
  for (auto& x : t) x = time_batch(batch) / static_cast<double>(batch);
  std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2), t.end());
  double med = t[t.size() / 2];
  if (t.size() % 2 == 0) {
    const double lower = *std::max_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2));
    med = 0.5 * (med + lower);
  }
  return med;
}

}  // namespace

BenchmarkResult benchmark_sensitivity_vs_loadflow(const Feeder& feeder, const PhasorSet& state,
                                                  const InjectionSet& base, NodeId observation,
                                                  std::span<const Actor> actors, int repetitions) {
  if (repetitions < 30) throw std::invalid_argument("benchmark needs at least 30 repetitions");
  InjectionSet perturbed = base;
  for (const auto& a : actors) perturbed.node(feeder.index_of(a.node)) += a.change.s;

  volatile double sink = 0.0;
  BenchmarkResult r;
  r.repetitions = repetitions;
  r.t_analytical = median_seconds(
      [&] { sink = sink + std::abs(delta_v_cumulative(feeder, state, observation, actors).dv(0)); }, repetitions);
  r.t_loadflow = median_seconds(
      [&] {
        const auto rep = solve(feeder, perturbed);
        sink = sink + static_cast<double>(rep.iterations);
      },
      repetitions);
  r.ratio = r.t_loadflow / r.t_analytical;
  return r;
}

}  // namespace pvsa
