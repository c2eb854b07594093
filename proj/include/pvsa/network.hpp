#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pvsa {

using Complex = std::complex<double>;
using Matrix3c = Eigen::Matrix3cd;
using Vector3c = Eigen::Vector3cd;

enum class Phase : std::uint8_t { a = 0, b = 1, c = 2 };

inline constexpr std::array<Phase, 3> kPhases{Phase::a, Phase::b, Phase::c};

constexpr std::size_t index(Phase p) { return static_cast<std::size_t>(p); }
char to_char(Phase p);
Phase phase_from_char(char c);

struct NodeId {
  int value = 0;
  auto operator<=>(const NodeId&) const = default;
};

/// Bitmask over {a, b, c}.
class PhaseMask {
 public:
  constexpr PhaseMask() = default;
  static constexpr PhaseMask all() { return PhaseMask(0b111); }
  static PhaseMask parse(std::string_view letters);

  constexpr bool has(Phase p) const { return (bits_ >> index(p)) & 1U; }
  constexpr void set(Phase p) { bits_ |= static_cast<std::uint8_t>(1U << index(p)); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool contains(PhaseMask other) const { return (other.bits_ & ~bits_) == 0; }
  std::string str() const;
  constexpr bool operator==(const PhaseMask&) const = default;

 private:
  constexpr explicit PhaseMask(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownNode : public std::out_of_range {
 public:
  explicit UnknownNode(NodeId id);
};

struct LineSegment {
  NodeId from;
  NodeId to;
  Matrix3c impedance = Matrix3c::Zero();  // ohms, structurally zero rows/cols for absent phases
};

struct NodeInfo {
  NodeId id;
  PhaseMask phases;
  double base_voltage_v = 0.0;  // line-to-neutral magnitude
  double base_angle_rad = 0.0;  // phase-a angle; b and c follow at -120 and +120 degrees
};

/// Three-phase power base and line-to-line voltage base.
struct PerUnitBase {
  double power_va = 1.0e6;
  double voltage_v = 4800.0;

  double phase_power() const { return power_va / 3.0; }
  double phase_voltage() const;
  double impedance() const { return voltage_v * voltage_v / power_va; }
};

/// Radial three-phase feeder. Immutable once constructed; the constructor orients every line away
/// from the source and rejects anything that is not a tree.
class Feeder {
 public:
  Feeder(std::string name, PerUnitBase base, NodeId source, std::vector<NodeInfo> nodes,
         std::vector<LineSegment> lines, std::vector<Vector3c> loads_pu);

  const std::string& name() const { return name_; }
  const PerUnitBase& base() const { return base_; }
  NodeId source() const { return nodes_[source_].id; }
  std::size_t source_index() const { return source_; }

  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<NodeInfo>& nodes() const { return nodes_; }
  const NodeInfo& node(std::size_t idx) const { return nodes_[idx]; }
  bool contains(NodeId id) const { return lookup_.contains(id.value); }
  /// Throws UnknownNode.
  std::size_t index_of(NodeId id) const;

  const std::vector<LineSegment>& lines() const { return lines_; }
  /// Line feeding the node, absent for the source.
  std::optional<std::size_t> parent_line(std::size_t idx) const;
  std::optional<std::size_t> parent(std::size_t idx) const;
  std::size_t depth(std::size_t idx) const { return depth_[idx]; }
  /// Node indices with every parent before its children.
  const std::vector<std::size_t>& sweep_order() const { return order_; }
  const std::vector<std::size_t>& children(std::size_t idx) const { return children_[idx]; }

  /// Series impedance of the line feeding `idx`, per unit. Zero for the source.
  const Matrix3c& feed_impedance_pu(std::size_t idx) const { return feed_z_pu_[idx]; }
  /// Sum of line impedances from the source to `idx`, ohms.
  const Matrix3c& path_impedance(std::size_t idx) const { return path_z_[idx]; }
  std::size_t common_ancestor(std::size_t i, std::size_t j) const;

  /// Spot load per phase, per unit, positive = consumption.
  const Vector3c& load_pu(std::size_t idx) const { return loads_[idx]; }
  double total_active_load_pu() const;

  /// Nominal phasor of the node's energized phases, per unit.
  Vector3c base_phasor(std::size_t idx) const;

 private:
  std::string name_;
  PerUnitBase base_;
  std::size_t source_ = 0;
  std::vector<NodeInfo> nodes_;
  std::vector<LineSegment> lines_;
  std::vector<Vector3c> loads_;
  std::unordered_map<int, std::size_t> lookup_;

  std::vector<std::optional<std::size_t>> parent_line_;
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> depth_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<Matrix3c> feed_z_pu_;
  std::vector<Matrix3c> path_z_;
  std::vector<std::vector<std::size_t>> ancestors_;  // binary lifting table
};

/// Per (node, phase) complex voltage, per unit, indexed like Feeder::nodes().
class PhasorSet {
 public:
  PhasorSet() = default;
  explicit PhasorSet(std::vector<Vector3c> voltages) : v_(std::move(voltages)) {}
  static PhasorSet flat(const Feeder& feeder);

  std::size_t size() const { return v_.size(); }
  const Vector3c& node(std::size_t idx) const { return v_[idx]; }
  Vector3c& node(std::size_t idx) { return v_[idx]; }
  Complex at(std::size_t idx, Phase p) const { return v_[idx](static_cast<Eigen::Index>(index(p))); }
  const std::vector<Vector3c>& values() const { return v_; }

  /// Throws std::invalid_argument on size mismatch or a non-positive energized magnitude.
  void validate(const Feeder& feeder) const;

 private:
  std::vector<Vector3c> v_;
};

Feeder load_feeder(const std::filesystem::path& path);
/// Reads the feeder-file format from a stream; `origin` only labels error messages.
Feeder load_feeder(std::istream& in, std::string_view origin = "<stdin>");

std::vector<LineSegment> path_to_source(const Feeder& feeder, NodeId n);
/// Z_OA in ohms: impedance common to the source-to-O and source-to-A paths.
Matrix3c shared_path_impedance(const Feeder& feeder, NodeId o, NodeId a);

/// Chain of `n_nodes` three-phase nodes, each segment and spot load a copy of the given ones.
Feeder make_chain_feeder(std::size_t n_nodes, const Matrix3c& segment_ohm, const Vector3c& load_va,
                         PerUnitBase base = {});

}  // namespace pvsa
