#include "fixtures.hpp"
#include "pvsa/loadflow.hpp"
#include "pvsa/rng.hpp"
#include "pvsa/sensitivity.hpp"

#include <catch_amalgamated.hpp>

using namespace pvsa;
using pvsa::test::ieee37;

namespace {

const SolveReport& base_state() {
  static const SolveReport r = solve(ieee37(), InjectionSet::base_loads(ieee37()), {1e-12, 100});
  return r;
}

NodeId random_node(Rng& rng, bool allow_source = false) {
  const auto& f = ieee37();
  for (;;) {
    const auto i = static_cast<std::size_t>(rng.below(f.node_count()));
    if (allow_source || i != f.source_index()) return f.node(i).id;
  }
}

ComplexPowerChange random_change(Rng& rng, double scale) {
  ComplexPowerChange c;
  for (int k = 0; k < 3; ++k) c.s(k) = scale * Complex(2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0);
  return c;
}

Vector3c loadflow_delta(NodeId observation, const std::vector<Actor>& actors) {
  const auto& f = ieee37();
  InjectionSet inj = InjectionSet::base_loads(f);
  for (const auto& a : actors) inj.node(f.index_of(a.node)) += a.change.s;
  const auto r = solve(f, inj, {1e-12, 100}, &base_state().voltages);
  const auto o = f.index_of(observation);
  return r.voltages.node(o) - base_state().voltages.node(o);
}

}  // namespace

TEST_CASE("single-actor change follows the shared-path formula entry by entry") {
  const auto& f = ieee37();
  const auto& v = base_state().voltages;
  const NodeId o{22}, a{29};
  const Matrix3c z = shared_path_impedance(f, o, a) / f.base().impedance();
  const auto ia = f.index_of(a);
  const auto ds = ComplexPowerChange::on(Phase::b, Complex(0.01, -0.004));
  const auto dv = delta_v_single(f, v, o, a, ds);
  for (int u = 0; u < 3; ++u) {
    const Complex expected = -z(u, 1) * std::conj(ds.s(1)) / std::conj(v.node(ia)(1));
    CHECK(std::abs(dv.dv(u) - expected) < 1e-15);
  }
}

// The first-order form holds the actor's current-voltage coupling fixed; on one line the neglected
// term has relative size |z s| / |V|^2 however small the change.
TEST_CASE("sensitivity agrees with the load-flow oracle on the two-node feeder") {
  const auto f = test::feeder_from(test::kTwoNode);
  const auto inj = InjectionSet::base_loads(f);
  const auto base = solve(f, inj, {1e-13, 200});
  for (Complex ds : {Complex(0.003, 0.0), Complex(0.0, 0.003), Complex(-0.002, 0.001)}) {
    InjectionSet bumped = inj;
    bumped.node(1)(0) += ds;
    const Complex oracle = solve(f, bumped, {1e-13, 200}).voltages.at(1, Phase::a) - base.voltages.at(1, Phase::a);
    const auto pred = delta_v_single(f, base.voltages, NodeId{2}, NodeId{2}, ComplexPowerChange::on(Phase::a, ds));
    const double coupling = std::abs(f.feed_impedance_pu(1)(0, 0) * inj.node(1)(0)) / std::norm(base.voltages.at(1, Phase::a));
    CHECK(std::abs(pred[Phase::a] - oracle) / std::abs(oracle) < 1.1 * coupling);
    CHECK(std::abs(pred[Phase::a] - oracle) / std::abs(oracle) < 0.05);
  }
}

TEST_CASE("conjugating the power change is what the oracle requires") {
  // A pure reactive change: the unconjugated product -Z dS / conj(V) points the wrong way.
  const auto& f = ieee37();
  const auto& v = base_state().voltages;
  const NodeId o{22}, a{22};
  const auto ds = ComplexPowerChange::on(Phase::a, Complex(0.0, 0.02));
  const Vector3c oracle = loadflow_delta(o, {{a, ds}});
  const Vector3c conj_form = delta_v_single(f, v, o, a, ds).dv;
  const Matrix3c z = shared_path_impedance(f, o, a) / f.base().impedance();
  const Complex va = v.node(f.index_of(a))(0);
  const Vector3c plain_form = -z.col(0) * ds.s(0) / std::conj(va);
  CHECK((conj_form - oracle).norm() / oracle.norm() < 0.05);
  CHECK((plain_form - oracle).norm() / oracle.norm() > 0.5);
}

TEST_CASE("real and imaginary expansion reproduces the complex form") {
  const auto& f = ieee37();
  const auto& v = base_state().voltages;
  Rng rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const NodeId o = random_node(rng, true), a = random_node(rng);
    const auto ds = random_change(rng, 0.05);
    const auto dv = delta_v_single(f, v, o, a, ds);
    for (Phase p : kPhases) {
      const auto ri = delta_v_real_imag(f, v, o, a, ds, p);
      worst = std::max({worst, std::abs(ri.real - dv.real(p)), std::abs(ri.imag - dv.imag(p))});
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("cumulative change is linear and superposes") {
  const auto& f = ieee37();
  const auto& v = base_state().voltages;
  Rng rng(77);
  for (int t = 0; t < 200; ++t) {
    std::vector<Actor> first, second;
    for (int k = 0; k < 3; ++k) first.push_back({random_node(rng), random_change(rng, 0.02)});
    for (int k = 0; k < 4; ++k) second.push_back({random_node(rng), random_change(rng, 0.02)});
    const NodeId o = random_node(rng, true);
    const double alpha = 10.0 * rng.uniform() - 5.0;

    auto scaled = first;
    for (auto& a : scaled) a.change.s *= alpha;
    const Vector3c d1 = delta_v_cumulative(f, v, o, first).dv;
    CHECK((delta_v_cumulative(f, v, o, scaled).dv - alpha * d1).norm() <= 1e-14 * (1.0 + std::abs(alpha)));

    auto both = first;
    both.insert(both.end(), second.begin(), second.end());
    const Vector3c d2 = delta_v_cumulative(f, v, o, second).dv;
    CHECK((delta_v_cumulative(f, v, o, both).dv - (d1 + d2)).norm() <= 1e-14);
  }
  CHECK(delta_v_cumulative(f, v, NodeId{22}, {}).dv.norm() == 0.0);
}

TEST_CASE("first-order accuracy for ten-percent perturbations") {
  const auto& f = ieee37();
  const auto& v = base_state().voltages;
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    NodeId a = random_node(rng);
    while (f.load_pu(f.index_of(a)).norm() == 0.0) a = random_node(rng);
    ComplexPowerChange ds;
    const Vector3c load = f.load_pu(f.index_of(a));
    for (int k = 0; k < 3; ++k)
      ds.s(k) = 0.1 * std::abs(load(k)) * std::polar(rng.uniform(), 2.0 * std::numbers::pi * rng.uniform());
    const NodeId o = random_node(rng);
    const Vector3c oracle = loadflow_delta(o, {{a, ds}});
    const Vector3c pred = delta_v_single(f, v, o, a, ds).dv;
    CHECK((pred - oracle).norm() / oracle.norm() <= 0.05);
  }
}

TEST_CASE("denominators use the supplied present state") {
  const auto& f = ieee37();
  PhasorSet v = base_state().voltages;
  const auto ds = ComplexPowerChange::on(Phase::a, Complex(0.01, 0.0));
  const Complex before = delta_v_single(f, v, NodeId{22}, NodeId{29}, ds)[Phase::a];
  v.node(f.index_of(NodeId{29}))(0) *= 0.5;
  const Complex after = delta_v_single(f, v, NodeId{22}, NodeId{29}, ds)[Phase::a];
  CHECK(std::abs(after - 2.0 * before) < 1e-15);
  v.node(f.index_of(NodeId{29}))(0) = 0.0;
  CHECK_THROWS_AS(delta_v_single(f, v, NodeId{22}, NodeId{29}, ds), SingularVoltage);
  CHECK_THROWS_AS(delta_v_single(f, v, NodeId{22}, NodeId{99}, ds), UnknownNode);
}

TEST_CASE("actors off the observation path act only through the common trunk") {
  const auto& f = ieee37();
  const auto& v = base_state().voltages;
  // 37 (775) hangs below 24 (730) and 22 (728) below 21 (727); both branch off 4 (703).
  const auto ds = ComplexPowerChange::on(Phase::c, Complex(0.02, 0.01));
  const auto far = delta_v_single(f, v, NodeId{22}, NodeId{37}, ds);
  const auto trunk = delta_v_single(f, v, NodeId{4}, NodeId{37}, ds);
  CHECK((far.dv - trunk.dv).norm() < 1e-15);
  CHECK(delta_v_single(f, v, NodeId{1}, NodeId{37}, ds).dv.norm() == 0.0);
}

TEST_CASE("trivial sensitivity cases") {
  const auto& f = ieee37();
  const auto& v = base_state().voltages;
  CHECK(delta_v_single(f, v, NodeId{22}, NodeId{29}, {}).dv.norm() == 0.0);
  CHECK(delta_v_single(f, v, f.source(), NodeId{29}, ComplexPowerChange::on(Phase::a, 0.1)).dv.norm() == 0.0);
  const auto ds = ComplexPowerChange::on(Phase::b, Complex(0.02, 0.01));
  const Actor one{NodeId{11}, ds};
  CHECK(delta_v_cumulative(f, v, NodeId{22}, {&one, 1}).dv == delta_v_single(f, v, NodeId{22}, NodeId{11}, ds).dv);
  ComplexPowerChange neg;
  neg.s = -ds.s;
  const std::vector<Actor> cancel{{NodeId{11}, ds}, {NodeId{11}, neg}};
  CHECK(delta_v_cumulative(f, v, NodeId{22}, cancel).dv.norm() < 1e-18);
}

TEST_CASE("four-node fixture: leaf change seen at the mid node") {
  const auto f = test::feeder_from(test::kFourNode);
  const auto inj = InjectionSet::base_loads(f);
  const auto base = solve(f, inj, {1e-13, 200});
  InjectionSet bumped = inj;
  bumped.node(f.index_of(NodeId{3}))(0) += 0.01;
  const auto after = solve(f, bumped, {1e-13, 200}, &base.voltages);
  const auto mid = f.index_of(NodeId{2});
  const Vector3c oracle = after.voltages.node(mid) - base.voltages.node(mid);
  const Vector3c pred =
      delta_v_single(f, base.voltages, NodeId{2}, NodeId{3}, ComplexPowerChange::on(Phase::a, 0.01)).dv;
  CHECK((pred - oracle).norm() / oracle.norm() <= 0.05);
}

TEST_CASE("four-node fixture: expansion identity over random draws") {
  const auto f = test::feeder_from(test::kFourNode);
  const auto state = solve(f, InjectionSet::base_loads(f)).voltages;
  Rng rng(1000);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const NodeId o = f.node(rng.below(4)).id;
    const NodeId a = f.node(1 + rng.below(3)).id;
    auto ds = random_change(rng, 0.05);
    if (a == NodeId{4}) ds.s(2) = 0.0;
    const auto dv = delta_v_single(f, state, o, a, ds);
    for (Phase p : kPhases) {
      const auto ri = delta_v_real_imag(f, state, o, a, ds, p);
      worst = std::max(worst, std::abs(Complex(ri.real, ri.imag) - dv[p]));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("resistive line at zero angle collapses the expansion") {
  const auto f = test::feeder_from(R"(
[FEEDER]
source 1
[NODES]
1 abc 2771.281292 0
2 abc 2771.281292 0
[LINES]
1 2 0.4 0 0 0 0.4 0 0 0 0.4
)");
  const auto v = PhasorSet::flat(f);
  const double r = 0.4 / f.base().impedance();
  const auto ri = delta_v_real_imag(f, v, NodeId{2}, NodeId{2}, ComplexPowerChange::on(Phase::a, 0.03), Phase::a);
  CHECK(ri.real == Catch::Approx(-0.03 * r / std::abs(v.at(1, Phase::a))).epsilon(1e-12));
  CHECK(ri.imag == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("actors 2, 11, 20 and 29 with equal active changes match the oracle") {
  const auto& f = ieee37();
  const auto& v = base_state().voltages;
  std::vector<Actor> actors;
  for (int id : {2, 11, 20, 29}) {
    ComplexPowerChange c;
    c.s.setConstant(Complex(-0.01, 0.0));
    actors.push_back({NodeId{id}, c});
  }
  for (std::size_t o = 0; o < f.node_count(); ++o) {
    if (o == f.source_index()) continue;
    const NodeId id = f.node(o).id;
    const Vector3c oracle = loadflow_delta(id, actors);
    CHECK((delta_v_cumulative(f, v, id, actors).dv - oracle).norm() / oracle.norm() <= 0.05);
  }
}
