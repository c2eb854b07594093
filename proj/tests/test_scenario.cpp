#include "fixtures.hpp"
#include "pvsa/scenario.hpp"

#include <catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <sstream>

using namespace pvsa;
using pvsa::test::data_path;
using pvsa::test::ieee37;

namespace {

const ScenarioPack& default_pack() {
  static const ScenarioPack p = load_pack(data_path("packs/default.yaml"));
  return p;
}

ScenarioPack pack_from(const std::string& yaml) {
  std::istringstream in(yaml);
  return load_pack(in, "fixture");
}

double total_rating(const PenetrationConfig& c) { return c.unit_rating * static_cast<double>(c.actors.size()); }

bool is_psd(const Eigen::MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, m.norm());
}

}  // namespace

TEST_CASE("time of day parsing") {
  CHECK(TimeOfDay::parse("16:32").minutes == 16 * 60 + 32);
  CHECK(TimeOfDay::parse("24:00").minutes == 1440);
  CHECK(TimeOfDay::parse("7:05").str() == "07:05");
  for (const char* bad : {"", "12", "12:5", "12:60", "24:01", "-1:00", "ab:cd", "12:30x"})
    CHECK_THROWS_AS(TimeOfDay::parse(bad), ScenarioError);
}

TEST_CASE("trends interpolate and hold their end values") {
  const Trend t({{TimeOfDay{600}, 1.0}, {TimeOfDay{660}, 3.0}});
  CHECK(t.at(TimeOfDay{0}) == 1.0);
  CHECK(t.at(TimeOfDay{630}) == Catch::Approx(2.0));
  CHECK(t.at(TimeOfDay{1440}) == 3.0);
  CHECK(Trend::constant(0.4).at(TimeOfDay{777}) == 0.4);
  CHECK_THROWS_AS(Trend({{TimeOfDay{600}, 1.0}, {TimeOfDay{600}, 2.0}}), ScenarioError);
}

TEST_CASE("bundled packs load") {
  const auto& p = default_pack();
  CHECK(p.name == "default");
  CHECK(p.version == 1);
  REQUIRE(p.profiles.size() == 3);
  CHECK(p.profile("bell").noise_std == 0.05);
  CHECK(p.profile("bell").trend.at(TimeOfDay::parse("13:00")) == 1.0);
  CHECK(p.correlation == 0.3);
  CHECK(p.pv_power_factor == 1.0);
  CHECK_THROWS_AS(p.profile("missing"), ScenarioError);
  const auto z = load_pack(data_path("packs/zero-noise.yaml"));
  CHECK(z.profiles.at(0).noise_std == 0.0);
  CHECK(z.load_variability == 0.0);
}

TEST_CASE("malformed packs are rejected") {
  const std::string ok = "name: t\nprofiles:\n  - {name: a, noise_std: 0.1, trend: [[\"12:00\", 1.0]]}\n";
  CHECK_NOTHROW(pack_from(ok));
  CHECK_THROWS_AS(pack_from(ok + "colour: red\n"), ScenarioError);
  CHECK_THROWS_AS(pack_from(ok + "correlation: 1.5\n"), ScenarioError);
  CHECK_THROWS_AS(pack_from(ok + "pv_power_factor: 0\n"), ScenarioError);
  CHECK_THROWS_AS(pack_from(ok + "load_trend: [[\"13:00\", -1]]\n"), ScenarioError);
  CHECK_THROWS_AS(pack_from("name: t\nprofiles: []\n"), ScenarioError);
  CHECK_THROWS_AS(pack_from("name: t\nprofiles:\n  - {name: a, noise_std: -1, trend: [[\"12:00\", 1.0]]}\n"),
                  ScenarioError);
  CHECK_THROWS_AS(pack_from("name: t\nprofiles:\n  - {name: a, trend: [[\"12:00\", -0.5]]}\n"), ScenarioError);
  CHECK_THROWS_AS(pack_from("name: [unterminated\n"), ScenarioError);
  CHECK_THROWS_AS(load_pack(data_path("packs/nope.yaml")), ScenarioError);
}

TEST_CASE("random allocation meets the penetration level") {
  const auto& f = ieee37();
  const auto c = allocate_penetration(f, 0.3, 14, 7, default_pack().profiles);
  CHECK(c.actors.size() == 14);
  CHECK(std::is_sorted(c.actors.begin(), c.actors.end()));
  CHECK(std::adjacent_find(c.actors.begin(), c.actors.end()) == c.actors.end());
  CHECK(std::find(c.actors.begin(), c.actors.end(), f.source()) == c.actors.end());
  CHECK(std::abs(total_rating(c) - 0.3 * f.total_active_load_pu()) <= 1e-6);
  CHECK(c.profile_of[0] == 0);
  CHECK(c.profile_of[1] == 1);
  CHECK(c.profile_of[3] == 0);

  const auto same = allocate_penetration(f, 0.3, 14, 7, default_pack().profiles);
  CHECK(same.actors == c.actors);
  const auto other = allocate_penetration(f, 0.3, 14, 8, default_pack().profiles);
  CHECK(other.actors != c.actors);

  const auto single = allocate_penetration(f, 0.7, 1, 3, default_pack().profiles);
  CHECK(single.actors.size() == 1);
  CHECK(single.unit_rating == Catch::Approx(0.7 * f.total_active_load_pu()));

  CHECK_THROWS_AS(allocate_penetration(f, 0.3, 0, 1, default_pack().profiles), ScenarioError);
  CHECK_THROWS_AS(allocate_penetration(f, 0.3, 37, 1, default_pack().profiles), ScenarioError);
  CHECK_THROWS_AS(allocate_penetration(f, 1.2, 4, 1, default_pack().profiles), ScenarioError);
}

TEST_CASE("explicit actor sets") {
  const auto& f = ieee37();
  const auto c = fixed_penetration(f, 0.3, {NodeId{29}, NodeId{2}, NodeId{20}, NodeId{11}}, {default_pack().profiles[0]});
  CHECK(c.actors == std::vector<NodeId>{NodeId{2}, NodeId{11}, NodeId{20}, NodeId{29}});
  CHECK(std::abs(total_rating(c) - 0.3 * f.total_active_load_pu()) <= 1e-6);
  PenetrationConfig broken = c;
  broken.actors.push_back(NodeId{99});
  broken.profile_of.push_back(0);
  CHECK_THROWS(broken.validate(f));
  broken = c;
  broken.unit_rating *= 1.01;
  CHECK_THROWS_AS(broken.validate(f), ScenarioError);
}

TEST_CASE("identical instants give a zero mean change") {
  const auto& f = ieee37();
  const auto c = allocate_penetration(f, 0.3, 14, 1, default_pack().profiles);
  const TimeOfDay t = TimeOfDay::parse("14:10");
  const auto m = net_power_change(f, c, default_pack(), t, t);
  CHECK(m.mu.cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.sigma.norm() > 0.0);
}

TEST_CASE("PV output enters as reduced consumption") {
  const auto& f = ieee37();
  const auto c = fixed_penetration(f, 0.3, {NodeId{22}}, {default_pack().profile("bell")});
  const PowerLayout layout{f.node_count()};
  const auto i = f.index_of(NodeId{22});
  const auto level = injection_level(f, c, default_pack(), TimeOfDay::parse("13:00"));
  const double load = f.load_pu(i)(0).real() * default_pack().load_trend.at(TimeOfDay::parse("13:00"));
  const double gen = c.unit_rating / 3.0;
  CHECK(level.mean(static_cast<Eigen::Index>(layout.at(i, Phase::a, Component::active))) ==
        Catch::Approx(load - gen).epsilon(1e-12));
  const auto k = static_cast<Eigen::Index>(layout.at(i, Phase::b, Component::active));
  CHECK(level.cov(k, k) == Catch::Approx(std::pow(0.05 * c.unit_rating / 3.0, 2)).epsilon(1e-12));
  // The rise of the bell from 12:00 to 13:00 lowers consumption at the actor.
  const auto m = net_power_change(f, c, default_pack(), TimeOfDay::parse("13:00"), TimeOfDay::parse("12:00"));
  CHECK(m.mu(k) < 0.0);
}

TEST_CASE("zero correlation gives independent actors") {
  const auto& f = ieee37();
  ScenarioPack pack = default_pack();
  pack.correlation = 0.0;
  pack.load_variability = 0.0;
  const auto c = fixed_penetration(f, 0.3, {NodeId{5}, NodeId{9}}, {pack.profiles[0]});
  const auto level = injection_level(f, c, pack, TimeOfDay::parse("13:00"));
  const PowerLayout layout{f.node_count()};
  const auto a = static_cast<Eigen::Index>(layout.at(f.index_of(NodeId{5}), Phase::a, Component::active));
  const auto b = static_cast<Eigen::Index>(layout.at(f.index_of(NodeId{9}), Phase::a, Component::active));
  const auto a2 = static_cast<Eigen::Index>(layout.at(f.index_of(NodeId{5}), Phase::c, Component::active));
  CHECK(level.cov(a, b) == 0.0);
  CHECK(level.cov(a, a2) == Catch::Approx(level.cov(a, a)));  // phases of one actor share their noise
  pack.correlation = 0.3;
  const auto corr = injection_level(f, c, pack, TimeOfDay::parse("13:00"));
  CHECK(corr.cov(a, b) == Catch::Approx(0.3 * corr.cov(a, a)));
}

TEST_CASE("every emitted covariance is positive semidefinite") {
  const auto& f = ieee37();
  const auto c = allocate_penetration(f, 0.7, 20, 4, default_pack().profiles);
  for (TimeOfDay t : TimeGrid{}.instants()) {
    const auto m = net_power_change(f, c, default_pack(), t, TimeOfDay{t.minutes - 15});
    CHECK(is_psd(m.sigma));
    CHECK_NOTHROW(m.validate(f.node_count()));
  }
}

TEST_CASE("a correlation that is not positive semidefinite is rejected") {
  const auto& f = ieee37();
  ScenarioPack pack = default_pack();
  pack.correlation = -0.5;
  const auto c = allocate_penetration(f, 0.3, 4, 1, pack.profiles);
  CHECK_THROWS_AS(net_power_change(f, c, pack, TimeOfDay::parse("13:00"), TimeOfDay::parse("12:45")), ScenarioError);
  pack.correlation = -0.3;  // -1/(n-1) bound for three actors is -0.5
  const auto three = allocate_penetration(f, 0.3, 3, 1, pack.profiles);
  CHECK_NOTHROW(net_power_change(f, three, pack, TimeOfDay::parse("13:00"), TimeOfDay::parse("12:45")));
}

TEST_CASE("generation loss removes the affected output from the event onwards") {
  const auto& f = ieee37();
  const auto c = allocate_penetration(f, 0.7, 20, 2, default_pack().profiles);
  const GenerationLossEvent loss{TimeOfDay::parse("16:32"), {c.actors[0], c.actors[5]}};
  CHECK_FALSE(loss.applies(c.actors[0], TimeOfDay::parse("16:31")));
  CHECK(loss.applies(c.actors[0], TimeOfDay::parse("16:32")));
  CHECK_FALSE(loss.applies(c.actors[1], TimeOfDay::parse("18:00")));

  const PowerLayout layout{f.node_count()};
  for (const char* when : {"16:32", "16:45", "18:00"}) {
    const TimeOfDay t = TimeOfDay::parse(when);
    const auto with = injection_level(f, c, default_pack(), t, loss);
    const auto without = injection_level(f, c, default_pack(), t);
    const double mult = default_pack().load_trend.at(t);
    for (std::size_t a = 0; a < c.actors.size(); ++a) {
      const auto i = f.index_of(c.actors[a]);
      const auto k = static_cast<Eigen::Index>(layout.at(i, Phase::a, Component::active));
      const bool hit = a == 0 || a == 5;
      if (hit) {
        CHECK(with.mean(k) == Catch::Approx(f.load_pu(i)(0).real() * mult).margin(1e-15));
        CHECK(with.cov(k, k) == 0.0);
      } else {
        CHECK(with.mean(k) == without.mean(k));
      }
    }
  }
  const GenerationLossEvent all{TimeOfDay::parse("16:32"), {}};
  const auto before = net_power_curve(f, c, default_pack(), TimeGrid{}, std::nullopt);
  const auto after = net_power_curve(f, c, default_pack(), TimeGrid{}, all);
  for (std::size_t k = 0; k < before.size(); ++k) {
    if (before[k].first < all.event_time) CHECK(after[k].second == before[k].second);
    else CHECK(after[k].second >= before[k].second);
  }
  CHECK_THROWS_AS((GenerationLossEvent{TimeOfDay::parse("19:00"), {}}.validate(TimeGrid{})), ScenarioError);
}

TEST_CASE("time grids") {
  const auto instants = TimeGrid{}.instants();
  CHECK(instants.size() == 25);
  CHECK(instants.front().str() == "12:00");
  CHECK(instants.back().str() == "18:00");
  CHECK_THROWS_AS((TimeGrid{TimeOfDay{720}, TimeOfDay{720}, 15}.instants()), ScenarioError);
  CHECK_THROWS_AS((TimeGrid{TimeOfDay{720}, TimeOfDay{780}, 0}.instants()), ScenarioError);
}

TEST_CASE("net power reverses around midday at thirty percent") {
  const auto& f = ieee37();
  const auto c = allocate_penetration(f, 0.3, 14, 1, {default_pack().profile("bell")});
  const auto curve = net_power_curve(f, c, default_pack(), TimeGrid{});
  const auto lowest = std::min_element(curve.begin(), curve.end(), [](auto& a, auto& b) { return a.second < b.second; });
  CHECK(lowest->second < 0.0);
  CHECK(curve.back().second > 0.0);
}

TEST_CASE("time series are reproducible and deterministic without noise") {
  const auto& f = ieee37();
  const auto c = allocate_penetration(f, 0.3, 14, 1, default_pack().profiles);
  const TimeGrid grid{TimeOfDay::parse("12:00"), TimeOfDay::parse("13:00"), 15};
  const auto a = run_timeseries(f, c, default_pack(), grid, std::nullopt, 99);
  const auto b = run_timeseries(f, c, default_pack(), grid, std::nullopt, 99);
  const auto other = run_timeseries(f, c, default_pack(), grid, std::nullopt, 100);
  REQUIRE(a.size() == 5);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].flow.voltages.values() == b[k].flow.voltages.values());
    CHECK(a[k].next.has_value() == (k + 1 < a.size()));
  }
  CHECK(a[2].flow.voltages.values() != other[2].flow.voltages.values());

  // Without noise and with a flat trend every instant has the same state.
  ScenarioPack still = load_pack(data_path("packs/zero-noise.yaml"));
  still.load_trend = Trend::constant(1.0);
  still.profiles[0].trend = Trend::constant(0.5);
  const auto zc = allocate_penetration(f, 0.3, 14, 1, still.profiles);
  const auto z1 = run_timeseries(f, zc, still, grid, std::nullopt, 1);
  const auto z2 = run_timeseries(f, zc, still, grid, std::nullopt, 2);
  for (std::size_t k = 0; k < z1.size(); ++k) {
    CHECK(z1[k].flow.voltages.values() == z2[k].flow.voltages.values());
    for (std::size_t i = 0; i < f.node_count(); ++i)
      CHECK((z1[k].flow.voltages.node(i) - z1[0].flow.voltages.node(i)).norm() < 1e-8);
    if (z1[k].next) CHECK(z1[k].next->mu.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("forecast mean is conditioned on the realized present state") {
  const auto& f = ieee37();
  const auto c = allocate_penetration(f, 0.3, 14, 1, default_pack().profiles);
  const TimeGrid grid{TimeOfDay::parse("12:00"), TimeOfDay::parse("12:30"), 15};
  const auto series = run_timeseries(f, c, default_pack(), grid, std::nullopt, 5);
  const auto unconditioned = net_power_change(f, c, default_pack(), grid.instants()[1], grid.instants()[0]);
  const auto level = injection_level(f, c, default_pack(), grid.instants()[0]);
  const Eigen::VectorXd deviation = series[0].injections.stacked() - level.mean;
  CHECK((series[0].next->mu - (unconditioned.mu - deviation)).cwiseAbs().maxCoeff() < 1e-14);
  // Forecast mean plus present realization is the mean at the next instant.
  const auto next_level = injection_level(f, c, default_pack(), grid.instants()[1]);
  CHECK((series[0].injections.stacked() + series[0].next->mu - next_level.mean).cwiseAbs().maxCoeff() < 1e-14);
}
