#include "fixtures.hpp"
#include "pvsa/loadflow.hpp"
#include "pvsa/rng.hpp"

#include <catch_amalgamated.hpp>

using namespace pvsa;
using pvsa::test::feeder_from;
using pvsa::test::ieee37;

TEST_CASE("two-node feeder matches the hand-iterated fixed point") {
  const auto f = feeder_from(test::kTwoNode);
  const Complex z = Complex(0.5, 1.0) / 23.04;
  const Complex s(0.27, 0.09);
  Complex v = 1.0;
  for (int k = 0; k < 200; ++k) v = 1.0 - z * std::conj(s / v);

  const auto r = solve(f, InjectionSet::base_loads(f), {1e-12, 100});
  REQUIRE(r.converged);
  CHECK(std::abs(r.voltages.at(1, Phase::a) - v) < 1e-10);
  CHECK(std::abs(r.voltages.at(1, Phase::b) - f.base_phasor(0)(1)) < 1e-15);
  CHECK(std::abs(r.voltages.at(1, Phase::c) - f.base_phasor(0)(2)) < 1e-15);
  CHECK(std::abs(r.feed_currents[1](0) - std::conj(s / v)) < 1e-9);
}

TEST_CASE("bundled base case converges within limits") {
  const auto& f = ieee37();
  const auto r = solve(f, InjectionSet::base_loads(f));
  REQUIRE(r.converged);
  CHECK(r.iterations <= 30);
  CHECK(r.iterations == 6);  // regression
  CHECK(r.max_mismatch <= 1e-8);
  double vmin = 2.0, vmax = 0.0;
  for (std::size_t i = 0; i < f.node_count(); ++i)
    for (Phase p : kPhases) {
      vmin = std::min(vmin, std::abs(r.voltages.at(i, p)));
      vmax = std::max(vmax, std::abs(r.voltages.at(i, p)));
    }
  CHECK(vmin == Catch::Approx(0.9692).margin(1e-4));
  CHECK(vmin > 0.95);
  CHECK(vmax < 1.05);
}

TEST_CASE("source phasor is held exactly") {
  const auto& f = ieee37();
  auto inj = InjectionSet::base_loads(f);
  for (double scale : {0.0, 0.5, 1.5}) {
    InjectionSet scaled = inj;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled.node(i) *= scale;
    const auto r = solve(f, scaled);
    CHECK(r.voltages.node(f.source_index()) == f.base_phasor(f.source_index()));
  }
}

TEST_CASE("power leaving the source equals load plus losses") {
  const auto& f = ieee37();
  const auto inj = InjectionSet::base_loads(f);
  const auto r = solve(f, inj, {1e-12, 100});
  REQUIRE(r.converged);
  Complex load = 0.0;
  for (std::size_t i = 0; i < f.node_count(); ++i) load += inj.node(i).sum();
  // Losses summed by hand from the feed currents.
  Complex losses = 0.0;
  for (std::size_t i = 0; i < f.node_count(); ++i) {
    if (i == f.source_index()) continue;
    const Vector3c drop = f.feed_impedance_pu(i) * r.feed_currents[i];
    for (int k = 0; k < 3; ++k) losses += drop(k) * std::conj(r.feed_currents[i](k));
  }
  CHECK(std::abs(line_losses(f, r) - losses) < 1e-12);
  CHECK(std::abs(source_power(f, r) - (load + losses)) < 1e-6);
}

TEST_CASE("warm start reaches the same solution") {
  const auto& f = ieee37();
  const auto inj = InjectionSet::base_loads(f);
  const auto cold = solve(f, inj, {1e-12, 100});
  InjectionSet bumped = inj;
  bumped.node(5) *= 1.05;
  const auto warm = solve(f, bumped, {1e-12, 100}, &cold.voltages);
  const auto flat = solve(f, bumped, {1e-12, 100});
  for (std::size_t i = 0; i < f.node_count(); ++i) CHECK((warm.voltages.node(i) - flat.voltages.node(i)).norm() < 1e-10);
  CHECK(warm.iterations <= flat.iterations);
}

TEST_CASE("overloaded feeder fails to converge and reports it") {
  const auto& f = ieee37();
  InjectionSet inj = InjectionSet::base_loads(f);
  for (std::size_t i = 0; i < inj.size(); ++i) inj.node(i) *= 40.0;
  SolveReport r;
  try {
    r = solve(f, inj, {1e-8, 50});
    CHECK_FALSE(r.converged);
  } catch (const SingularConfiguration&) {
    SUCCEED("collapse detected");
  }
  CHECK_THROWS_AS(solve(f, InjectionSet(3)), std::invalid_argument);
}

TEST_CASE("stacked injection round trip") {
  const auto& f = ieee37();
  const auto inj = InjectionSet::base_loads(f);
  const Eigen::VectorXd st = inj.stacked();
  REQUIRE(st.size() == static_cast<Eigen::Index>(6 * f.node_count()));
  const PowerLayout layout{f.node_count()};
  const std::size_t i = f.index_of(NodeId{2});
  CHECK(st(static_cast<Eigen::Index>(layout.at(i, Phase::c, Component::active))) == inj.node(i)(2).real());
  CHECK(st(static_cast<Eigen::Index>(layout.at(i, Phase::c, Component::reactive))) == inj.node(i)(2).imag());
  const auto back = InjectionSet::from_stacked(st);
  for (std::size_t k = 0; k < f.node_count(); ++k) CHECK(back.node(k) == inj.node(k));
  InjectionSet twice = inj;
  twice.add(st);
  CHECK(twice.node(i) == 2.0 * inj.node(i));
}

TEST_CASE("Monte Carlo sampling is independent of the worker count") {
  const auto& f = ieee37();
  const auto base = InjectionSet::base_loads(f);
  auto model = PowerChangeModel::zero(f.node_count());
  const PowerLayout layout{f.node_count()};
  for (int node : {5, 12, 30}) {
    const auto k = static_cast<Eigen::Index>(layout.at(static_cast<std::size_t>(node), Phase::a, Component::active));
    model.mu(k) = -0.01;
    model.sigma(k, k) = 1e-4;
  }
  MonteCarloOptions one, four;
  one.workers = 1;
  four.workers = 4;
  const auto a = monte_carlo_voltage_samples(f, base, model, NodeId{22}, Phase::a, 700, 9, one);
  const auto b = monte_carlo_voltage_samples(f, base, model, NodeId{22}, Phase::a, 700, 9, four);
  CHECK(a.magnitudes == b.magnitudes);
  CHECK(a.excluded == 0);
  const auto c = monte_carlo_voltage_samples(f, base, model, NodeId{22}, Phase::a, 700, 10, one);
  CHECK(a.magnitudes != c.magnitudes);

  const auto flat = monte_carlo_voltage_samples(f, base, PowerChangeModel::zero(f.node_count()), NodeId{22},
                                                Phase::a, 50, 1, one);
  const double v0 = std::abs(solve(f, base).voltages.at(f.index_of(NodeId{22}), Phase::a));
  for (double m : flat.magnitudes) CHECK(m == Catch::Approx(v0).margin(1e-8));
}

TEST_CASE("non-convergent draws are excluded, not replaced") {
  const auto f = feeder_from(test::kTwoNode);
  auto model = PowerChangeModel::zero(f.node_count());
  const PowerLayout layout{f.node_count()};
  const auto k = static_cast<Eigen::Index>(layout.at(1, Phase::a, Component::active));
  model.sigma(k, k) = 400.0;  // most draws push the node past voltage collapse
  MonteCarloOptions o;
  o.workers = 1;
  o.solve.max_iterations = 60;
  const auto mc = monte_carlo_voltage_samples(f, InjectionSet::base_loads(f), model, NodeId{2}, Phase::a, 200, 3, o);
  CHECK(mc.excluded > 0);
  CHECK(mc.magnitudes.size() + mc.excluded == 200);
}

TEST_CASE("random generator streams are fixed") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng r(7);
  double sum = 0.0, sq = 0.0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sq / n == Catch::Approx(1.0).margin(0.01));
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  // First draw of mt19937_64 seeded with 5489.
  CHECK(Rng(5489).next() == 14514284786278117030ULL);
}

TEST_CASE("zero injections give the flat profile") {
  const auto& f = ieee37();
  const auto r = solve(f, InjectionSet(f.node_count()));
  REQUIRE(r.converged);
  for (std::size_t i = 0; i < f.node_count(); ++i) CHECK((r.voltages.node(i) - f.base_phasor(i)).norm() < 1e-15);
}

TEST_CASE("deterministic power change gives identical samples") {
  const auto& f = ieee37();
  const auto base = InjectionSet::base_loads(f);
  auto model = PowerChangeModel::zero(f.node_count());
  const PowerLayout layout{f.node_count()};
  model.mu(static_cast<Eigen::Index>(layout.at(f.index_of(NodeId{29}), Phase::a, Component::active))) = -0.05;
  MonteCarloOptions o;
  o.workers = 1;
  const auto mc = monte_carlo_voltage_samples(f, base, model, NodeId{22}, Phase::a, 20, 4, o);
  InjectionSet perturbed = base;
  perturbed.add(model.mu);
  const double expected = std::abs(solve(f, perturbed).voltages.at(f.index_of(NodeId{22}), Phase::a));
  for (double m : mc.magnitudes) CHECK(m == Catch::Approx(expected).margin(1e-8));

  model.sigma(0, 0) = 0.0;
  const auto k = static_cast<Eigen::Index>(layout.at(f.index_of(NodeId{29}), Phase::b, Component::active));
  model.sigma(k, k) = 1e-4;
  const auto one = monte_carlo_voltage_samples(f, base, model, NodeId{22}, Phase::a, 1, 77, o);
  const auto again = monte_carlo_voltage_samples(f, base, model, NodeId{22}, Phase::a, 1, 77, o);
  REQUIRE(one.magnitudes.size() == 1);
  CHECK(one.magnitudes == again.magnitudes);
}
