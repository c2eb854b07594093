#pragma once

#include "pvsa/network.hpp"

#include <span>
#include <stdexcept>

namespace pvsa {

/// Per-phase complex power change at one node, per unit, positive = more consumption.
struct ComplexPowerChange {
  Vector3c s = Vector3c::Zero();

  static ComplexPowerChange on(Phase p, Complex ds) {
    ComplexPowerChange c;
    c.s(static_cast<Eigen::Index>(index(p))) = ds;
    return c;
  }
  Complex operator[](Phase p) const { return s(static_cast<Eigen::Index>(index(p))); }
  double active(Phase p) const { return (*this)[p].real(); }
  double reactive(Phase p) const { return (*this)[p].imag(); }
};

struct VoltageChange {
  Vector3c dv = Vector3c::Zero();

  Complex operator[](Phase p) const { return dv(static_cast<Eigen::Index>(index(p))); }
  double real(Phase p) const { return (*this)[p].real(); }
  double imag(Phase p) const { return (*this)[p].imag(); }
  VoltageChange& operator+=(const VoltageChange& o) {
    dv += o.dv;
    return *this;
  }
};

struct Actor {
  NodeId node;
  ComplexPowerChange change;
};

struct RealImag {
  double real = 0.0;
  double imag = 0.0;
};

class SingularVoltage : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// First-order change of the observation-node voltage caused by a power change at actor A:
/// dV_O^u = -sum_v Z_OA^{uv} conj(dS_A^v) / conj(V_A^v), with Z_OA the shared-path impedance.
VoltageChange delta_v_single(const Feeder& feeder, const PhasorSet& state, NodeId observation, NodeId actor,
                             const ComplexPowerChange& ds);

/// Superposition of delta_v_single over all actors.
VoltageChange delta_v_cumulative(const Feeder& feeder, const PhasorSet& state, NodeId observation,
                                 std::span<const Actor> actors);

/// Same quantity as delta_v_single for one observed phase, expanded into real and imaginary
/// parts with |V_A|, theta_A and the R, X entries of Z_OA.
RealImag delta_v_real_imag(const Feeder& feeder, const PhasorSet& state, NodeId observation, NodeId actor,
                           const ComplexPowerChange& ds, Phase phase);

}  // namespace pvsa
