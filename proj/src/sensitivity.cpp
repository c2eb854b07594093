#include "pvsa/sensitivity.hpp"

#include <cmath>

namespace pvsa {

namespace {

Matrix3c shared_pu(const Feeder& feeder, std::size_t o, std::size_t a) {
  return feeder.path_impedance(feeder.common_ancestor(o, a)) / feeder.base().impedance();
}

void check_actor_voltage(const Feeder& feeder, std::size_t a, Complex v, Complex ds, Phase p) {
  if (ds != Complex{} && v == Complex{})
    throw SingularVoltage("zero voltage at actor node " + std::to_string(feeder.node(a).id.value) + " phase " +
                          to_char(p));
}

}  // namespace

VoltageChange delta_v_single(const Feeder& feeder, const PhasorSet& state, NodeId observation, NodeId actor,
                             const ComplexPowerChange& ds) {
  const std::size_t o = feeder.index_of(observation);
  const std::size_t a = feeder.index_of(actor);
  const Matrix3c z = shared_pu(feeder, o, a);
  Vector3c current = Vector3c::Zero();  // change of the actor's load current
  for (Phase v : kPhases) {
    const Complex s = ds[v];
    const Complex va = state.at(a, v);
    check_actor_voltage(feeder, a, va, s, v);
    if (s != Complex{}) current(static_cast<Eigen::Index>(index(v))) = std::conj(s) / std::conj(va);
  }
  return VoltageChange{-(z * current)};
}

VoltageChange delta_v_cumulative(const Feeder& feeder, const PhasorSet& state, NodeId observation,
                                 std::span<const Actor> actors) {
  VoltageChange total;
  for (const Actor& act : actors) total += delta_v_single(feeder, state, observation, act.node, act.change);
  return total;
}

RealImag delta_v_real_imag(const Feeder& feeder, const PhasorSet& state, NodeId observation, NodeId actor,
                           const ComplexPowerChange& ds, Phase phase) {
  const std::size_t o = feeder.index_of(observation);
  const std::size_t a = feeder.index_of(actor);
  const Matrix3c z = shared_pu(feeder, o, a);
  const auto u = static_cast<Eigen::Index>(index(phase));
  RealImag out;
  for (Phase v : kPhases) {
    const Complex va = state.at(a, v);
    check_actor_voltage(feeder, a, va, ds[v], v);
    if (ds[v] == Complex{}) continue;
    const auto k = static_cast<Eigen::Index>(index(v));
    const double r = z(u, k).real();
    const double x = z(u, k).imag();
    const double mag = std::abs(va);
    const double theta = std::arg(va);
    const double along = r * std::cos(theta) - x * std::sin(theta);
    const double across = r * std::sin(theta) + x * std::cos(theta);
    const double dp = ds.active(v);
    const double dq = ds.reactive(v);
    out.real -= (dp * along + dq * across) / mag;
    out.imag -= (dp * across - dq * along) / mag;
  }
  return out;
}

}  // namespace pvsa
