#include "pvsa/loadflow.hpp"

#include "pvsa/parallel.hpp"
#include "pvsa/rng.hpp"

#include <chrono>
#include <cmath>
#include <optional>

namespace pvsa {

InjectionSet InjectionSet::base_loads(const Feeder& feeder) {
  std::vector<Vector3c> s(feeder.node_count());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = feeder.load_pu(i);
  return InjectionSet(std::move(s));
}

InjectionSet& InjectionSet::add(const Eigen::VectorXd& stacked) {
  if (static_cast<std::size_t>(stacked.size()) != 6 * s_.size())
    throw std::invalid_argument("stacked power change does not match the injection set");
  for (std::size_t i = 0; i < s_.size(); ++i) s_[i] += PowerChangeModel::node_change(stacked, i);
  return *this;
}

Eigen::VectorXd InjectionSet::stacked() const {
  const PowerLayout layout{s_.size()};
  Eigen::VectorXd out(static_cast<Eigen::Index>(layout.size()));
  for (std::size_t i = 0; i < s_.size(); ++i) {
    for (Phase p : kPhases) {
      const Complex s = s_[i](static_cast<Eigen::Index>(index(p)));
      out(static_cast<Eigen::Index>(layout.at(i, p, Component::active))) = s.real();
      out(static_cast<Eigen::Index>(layout.at(i, p, Component::reactive))) = s.imag();
    }
  }
  return out;
}

InjectionSet InjectionSet::from_stacked(const Eigen::VectorXd& stacked) {
  InjectionSet s(static_cast<std::size_t>(stacked.size()) / 6);
  for (std::size_t i = 0; i < s.size(); ++i) s.node(i) = PowerChangeModel::node_change(stacked, i);
  return s;
}

namespace {

void load_currents(const Feeder& feeder, const InjectionSet& inj, const std::vector<Vector3c>& v,
                   std::vector<Vector3c>& current) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (Eigen::Index k = 0; k < 3; ++k) {
      const Complex s = inj.node(i)(k);
      if (s == Complex{}) {
        current[i](k) = 0.0;
        continue;
      }
      if (!feeder.node(i).phases.has(static_cast<Phase>(k)))
        throw SingularConfiguration("injection on absent phase at node " + std::to_string(feeder.node(i).id.value));
      if (v[i](k) == Complex{})
        throw SingularConfiguration("zero voltage under load at node " + std::to_string(feeder.node(i).id.value));
      current[i](k) = std::conj(s / v[i](k));
    }
  }
}

void sum_branch_currents(const Feeder& feeder, const std::vector<Vector3c>& load, std::vector<Vector3c>& branch) {
  const auto& order = feeder.sweep_order();
  for (std::size_t i = 0; i < load.size(); ++i) branch[i] = load[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (auto p = feeder.parent(*it)) branch[*p] += branch[*it];
}

}  // namespace

SolveReport solve(const Feeder& feeder, const InjectionSet& injections, const SolveOptions& options,
                  const PhasorSet* initial) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = feeder.node_count();
  if (injections.size() != n) throw std::invalid_argument("injection set does not match the feeder");
  for (std::size_t i = 0; i < n; ++i)
    if (!injections.node(i).allFinite()) throw std::invalid_argument("non-finite injection");

  std::vector<Vector3c> v = initial ? initial->values() : PhasorSet::flat(feeder).values();
  if (v.size() != n) throw std::invalid_argument("initial phasor set does not match the feeder");
  const std::size_t src = feeder.source_index();
  v[src] = feeder.base_phasor(src);

  std::vector<Vector3c> load(n), branch(n);
  SolveReport report;
  const auto& order = feeder.sweep_order();
  for (int it = 1; it <= options.max_iterations; ++it) {
    load_currents(feeder, injections, v, load);
    sum_branch_currents(feeder, load, branch);
    double delta = 0.0;
    for (std::size_t u : order) {
      const auto p = feeder.parent(u);
      if (!p) continue;
      Vector3c next = v[*p] - feeder.feed_impedance_pu(u) * branch[u];
      for (Phase ph : kPhases)
        if (!feeder.node(u).phases.has(ph)) next(static_cast<Eigen::Index>(index(ph))) = 0.0;
      delta = std::max(delta, (next - v[u]).cwiseAbs().maxCoeff());
      v[u] = next;
    }
    report.iterations = it;
    report.max_mismatch = delta;
    if (!std::isfinite(delta)) break;
    if (delta < options.tolerance) {
      report.converged = true;
      break;
    }
  }
  if (report.converged) {
    load_currents(feeder, injections, v, load);
    sum_branch_currents(feeder, load, branch);
  }
  report.voltages = PhasorSet(std::move(v));
  report.feed_currents = std::move(branch);
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

Complex source_power(const Feeder& feeder, const SolveReport& report) {
  const std::size_t src = feeder.source_index();
  const Vector3c& v = report.voltages.node(src);
  const Vector3c& j = report.feed_currents[src];
  return (v.array() * j.conjugate().array()).sum();
}

Complex line_losses(const Feeder& feeder, const SolveReport& report) {
  Complex total{};
  for (std::size_t u = 0; u < feeder.node_count(); ++u) {
    if (!feeder.parent(u)) continue;
    const Vector3c& j = report.feed_currents[u];
    const Vector3c drop = feeder.feed_impedance_pu(u) * j;
    total += (drop.array() * j.conjugate().array()).sum();
  }
  return total;
}

MonteCarloSamples monte_carlo_voltage_samples(const Feeder& feeder, const InjectionSet& base,
                                              const PowerChangeModel& model, NodeId node, Phase phase,
                                              std::size_t n_samples, std::uint64_t seed,
                                              const MonteCarloOptions& options) {
  if (n_samples == 0) throw std::invalid_argument("n_samples must be at least 1");
  model.validate(feeder.node_count());
  const std::size_t target = feeder.index_of(node);
  if (!feeder.node(target).phases.has(phase)) throw std::invalid_argument("phase not present at node");

  const GaussianSampler sampler(model);
  const SolveReport warm = solve(feeder, base, options.solve);
  const PhasorSet* start = warm.converged ? &warm.voltages : nullptr;

  constexpr std::size_t kChunk = 64;
  const std::size_t chunks = (n_samples + kChunk - 1) / kChunk;
  std::vector<std::optional<double>> out(n_samples);
  parallel_for(chunks, options.workers, [&](std::size_t c) {
    Rng rng(derive_seed(seed, c));
    const std::size_t end = std::min(n_samples, (c + 1) * kChunk);
    for (std::size_t d = c * kChunk; d < end; ++d) {
      InjectionSet inj = base;
      inj.add(sampler.draw(rng));
      const SolveReport r = solve(feeder, inj, options.solve, start);
      if (r.converged) out[d] = std::abs(r.voltages.at(target, phase));
    }
  });

  MonteCarloSamples result;
  result.magnitudes.reserve(n_samples);
  for (const auto& x : out) {
    if (x) result.magnitudes.push_back(*x);
    else ++result.excluded;
  }
  return result;
}

}  // namespace pvsa
