#include "pvsa/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <queue>
#include <sstream>

namespace pvsa {

char to_char(Phase p) { return static_cast<char>('a' + index(p)); }

Phase phase_from_char(char c) {
  switch (c) {
    case 'a': case 'A': return Phase::a;
    case 'b': case 'B': return Phase::b;
    case 'c': case 'C': return Phase::c;
    default: throw std::invalid_argument(std::string("bad phase letter '") + c + "'");
  }
}

PhaseMask PhaseMask::parse(std::string_view letters) {
  PhaseMask m;
  for (char c : letters) m.set(phase_from_char(c));
  if (m.empty()) throw std::invalid_argument("empty phase set");
  return m;
}

std::string PhaseMask::str() const {
  std::string s;
  for (Phase p : kPhases)
    if (has(p)) s.push_back(to_char(p));
  return s;
}

UnknownNode::UnknownNode(NodeId id)
    : std::out_of_range("unknown node " + std::to_string(id.value)) {}

double PerUnitBase::phase_voltage() const { return voltage_v / std::numbers::sqrt3; }

namespace {

bool finite(const Matrix3c& z) {
  return z.unaryExpr([](const Complex& c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); })
      .all();
}

void mask_absent(Matrix3c& z, PhaseMask phases) {
  for (Phase p : kPhases) {
    if (phases.has(p)) continue;
    z.row(static_cast<Eigen::Index>(index(p))).setZero();
    z.col(static_cast<Eigen::Index>(index(p))).setZero();
  }
}

}  // namespace

Feeder::Feeder(std::string name, PerUnitBase base, NodeId source, std::vector<NodeInfo> nodes,
               std::vector<LineSegment> lines, std::vector<Vector3c> loads_pu)
    : name_(std::move(name)), base_(base), nodes_(std::move(nodes)), lines_(std::move(lines)),
      loads_(std::move(loads_pu)) {
  if (nodes_.empty()) throw TopologyError("feeder has no nodes");
  if (!(base_.power_va > 0.0) || !(base_.voltage_v > 0.0))
    throw std::invalid_argument("per-unit bases must be positive");
  if (loads_.empty()) loads_.assign(nodes_.size(), Vector3c::Zero());
  if (loads_.size() != nodes_.size()) throw std::invalid_argument("one load vector per node required");

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!lookup_.emplace(nodes_[i].id.value, i).second)
      throw TopologyError("duplicate node " + std::to_string(nodes_[i].id.value));
    if (nodes_[i].phases.empty())
      throw TopologyError("node " + std::to_string(nodes_[i].id.value) + " has no phases");
  }
  auto src = lookup_.find(source.value);
  if (src == lookup_.end()) throw TopologyError("source node " + std::to_string(source.value) + " not declared");
  source_ = src->second;

  const std::size_t n = nodes_.size();
  if (lines_.size() + 1 != n)
    throw TopologyError("radial feeder needs " + std::to_string(n - 1) + " lines, found " +
                        std::to_string(lines_.size()));

  std::vector<std::vector<std::size_t>> incident(n);
  for (std::size_t k = 0; k < lines_.size(); ++k) {
    const auto& l = lines_[k];
    if (l.from == l.to) throw TopologyError("line " + std::to_string(l.from.value) + " loops onto itself");
    if (!contains(l.from) || !contains(l.to))
      throw TopologyError("line " + std::to_string(l.from.value) + "-" + std::to_string(l.to.value) +
                          " references an unknown node");
    if (!finite(l.impedance)) throw std::invalid_argument("non-finite line impedance");
    incident[index_of(l.from)].push_back(k);
    incident[index_of(l.to)].push_back(k);
  }

  // Breadth-first orientation away from the source.
  parent_line_.assign(n, std::nullopt);
  parent_.assign(n, n);
  depth_.assign(n, 0);
  children_.assign(n, {});
  std::vector<bool> seen(n, false);
  std::vector<bool> used(lines_.size(), false);
  std::queue<std::size_t> frontier;
  frontier.push(source_);
  seen[source_] = true;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    order_.push_back(u);
    for (std::size_t k : incident[u]) {
      if (used[k]) continue;
      used[k] = true;
      auto& l = lines_[k];
      if (index_of(l.to) == u) std::swap(l.from, l.to);
      const std::size_t v = index_of(l.to);
      if (seen[v]) throw TopologyError("cycle through node " + std::to_string(l.to.value));
      seen[v] = true;
      parent_line_[v] = k;
      parent_[v] = u;
      depth_[v] = depth_[u] + 1;
      children_[u].push_back(v);
      frontier.push(v);
    }
  }
  if (order_.size() != n) throw TopologyError("feeder is disconnected");

  feed_z_pu_.assign(n, Matrix3c::Zero());
  path_z_.assign(n, Matrix3c::Zero());
  const double zbase = base_.impedance();
  for (std::size_t u : order_) {
    if (!parent_line_[u]) continue;
    auto& l = lines_[*parent_line_[u]];
    const auto& child = nodes_[u];
    if (!nodes_[parent_[u]].phases.contains(child.phases))
      throw TopologyError("node " + std::to_string(child.id.value) + " has phases missing upstream");
    mask_absent(l.impedance, child.phases);
    feed_z_pu_[u] = l.impedance / zbase;
    path_z_[u] = path_z_[parent_[u]] + l.impedance;
  }

  for (std::size_t i = 0; i < n; ++i)
    for (Phase p : kPhases)
      if (!nodes_[i].phases.has(p)) loads_[i](static_cast<Eigen::Index>(index(p))) = 0.0;

  std::size_t levels = 1;
  while ((std::size_t{1} << levels) < n) ++levels;
  ancestors_.assign(levels, std::vector<std::size_t>(n));
  for (std::size_t i = 0; i < n; ++i) ancestors_[0][i] = parent_line_[i] ? parent_[i] : i;
  for (std::size_t j = 1; j < levels; ++j)
    for (std::size_t i = 0; i < n; ++i) ancestors_[j][i] = ancestors_[j - 1][ancestors_[j - 1][i]];
}

std::size_t Feeder::index_of(NodeId id) const {
  auto it = lookup_.find(id.value);
  if (it == lookup_.end()) throw UnknownNode(id);
  return it->second;
}

std::optional<std::size_t> Feeder::parent_line(std::size_t idx) const { return parent_line_[idx]; }

std::optional<std::size_t> Feeder::parent(std::size_t idx) const {
  if (!parent_line_[idx]) return std::nullopt;
  return parent_[idx];
}

std::size_t Feeder::common_ancestor(std::size_t i, std::size_t j) const {
  if (depth_[i] < depth_[j]) std::swap(i, j);
  std::size_t lift = depth_[i] - depth_[j];
  for (std::size_t k = 0; lift != 0; ++k, lift >>= 1U)
    if (lift & 1U) i = ancestors_[k][i];
  if (i == j) return i;
  for (std::size_t k = ancestors_.size(); k-- > 0;) {
    if (ancestors_[k][i] != ancestors_[k][j]) {
      i = ancestors_[k][i];
      j = ancestors_[k][j];
    }
  }
  return parent_[i];
}

double Feeder::total_active_load_pu() const {
  double total = 0.0;
  for (const auto& s : loads_) total += s.real().sum();
  return total;
}

Vector3c Feeder::base_phasor(std::size_t idx) const {
  const auto& info = nodes_[idx];
  const double mag = info.base_voltage_v / base_.phase_voltage();
  constexpr double shift = 2.0 * std::numbers::pi / 3.0;
  Vector3c v;
  for (Phase p : kPhases) {
    const auto k = static_cast<Eigen::Index>(index(p));
    const double angle = info.base_angle_rad - shift * (k == 1 ? 1.0 : k == 2 ? -1.0 : 0.0);
    v(k) = info.phases.has(p) ? std::polar(mag, angle) : Complex{};
  }
  return v;
}

PhasorSet PhasorSet::flat(const Feeder& feeder) {
  std::vector<Vector3c> v(feeder.node_count());
  const Vector3c src = feeder.base_phasor(feeder.source_index());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = src;
    for (Phase p : kPhases)
      if (!feeder.node(i).phases.has(p)) v[i](static_cast<Eigen::Index>(index(p))) = 0.0;
  }
  return PhasorSet(std::move(v));
}

void PhasorSet::validate(const Feeder& feeder) const {
  if (v_.size() != feeder.node_count()) throw std::invalid_argument("phasor set does not match feeder");
  for (std::size_t i = 0; i < v_.size(); ++i)
    for (Phase p : kPhases)
      if (feeder.node(i).phases.has(p) && !(std::abs(at(i, p)) > 0.0))
        throw std::invalid_argument("zero voltage at node " + std::to_string(feeder.node(i).id.value) +
                                    " phase " + to_char(p));
}

// ---------------------------------------------------------------------------
// Feeder-file parsing
// ---------------------------------------------------------------------------

namespace {

struct Cursor {
  std::string_view origin;
  std::size_t line = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(std::string(origin) + ":" + std::to_string(line) + ": " + what);
  }
};

double parse_double(std::string_view s, const Cursor& at) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) at.fail("bad number '" + std::string(s) + "'");
  return v;
}

int parse_int(std::string_view s, const Cursor& at) {
  int v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) at.fail("bad integer '" + std::string(s) + "'");
  return v;
}

// Accepts "re", "imj", "re+imj", "re-imj".
Complex parse_complex(std::string_view s, const Cursor& at) {
  if (s.empty()) at.fail("empty complex number");
  if (s.back() != 'j') return {parse_double(s, at), 0.0};
  s.remove_suffix(1);
  std::size_t split = std::string_view::npos;
  for (std::size_t i = s.size(); i-- > 1;) {
    if ((s[i] == '+' || s[i] == '-') && s[i - 1] != 'e' && s[i - 1] != 'E') {
      split = i;
      break;
    }
  }
  if (split == std::string_view::npos) return {0.0, s.empty() ? 1.0 : parse_double(s, at)};
  return {parse_double(s.substr(0, split), at), parse_double(s.substr(split), at)};
}

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

Feeder load_feeder(std::istream& in, std::string_view origin) {
  enum class Section { none, feeder, nodes, lines, loads };
  Section section = Section::none;
  Cursor at{origin};

  std::string name = "feeder";
  PerUnitBase base;
  std::optional<int> source;
  std::vector<NodeInfo> nodes;
  std::vector<LineSegment> lines;
  struct LoadEntry {
    int node;
    Phase phase;
    Complex s_va;
    std::size_t line;
  };
  std::vector<LoadEntry> loads;
  bool saw_nodes = false;

  std::string raw;
  while (std::getline(in, raw)) {
    ++at.line;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tok = tokenize(line);
    if (tok.empty()) continue;

    if (tok[0].front() == '[') {
      if (tok.size() != 1) at.fail("junk after section header");
      if (tok[0] == "[FEEDER]") section = Section::feeder;
      else if (tok[0] == "[NODES]") section = Section::nodes, saw_nodes = true;
      else if (tok[0] == "[LINES]") section = Section::lines;
      else if (tok[0] == "[LOADS]") section = Section::loads;
      else at.fail("unknown section " + std::string(tok[0]));
      continue;
    }

    switch (section) {
      case Section::none:
        at.fail("content before first section");
      case Section::feeder: {
        if (tok.size() != 2) at.fail("expected 'key value'");
        if (tok[0] == "name") name = tok[1];
        else if (tok[0] == "base_power_va") base.power_va = parse_double(tok[1], at);
        else if (tok[0] == "base_voltage_v") base.voltage_v = parse_double(tok[1], at);
        else if (tok[0] == "source") source = parse_int(tok[1], at);
        else at.fail("unknown key " + std::string(tok[0]));
        break;
      }
      case Section::nodes: {
        if (tok.size() != 4) at.fail("expected 'id phases v_mag_volts angle_deg'");
        NodeInfo info;
        info.id = NodeId{parse_int(tok[0], at)};
        try {
          info.phases = PhaseMask::parse(tok[1]);
        } catch (const std::invalid_argument& e) {
          at.fail(e.what());
        }
        info.base_voltage_v = parse_double(tok[2], at);
        info.base_angle_rad = parse_double(tok[3], at) * std::numbers::pi / 180.0;
        if (!(info.base_voltage_v > 0.0)) at.fail("node voltage must be positive");
        nodes.push_back(info);
        break;
      }
      case Section::lines: {
        if (tok.size() != 11) at.fail("expected 'from to' and nine impedance entries");
        LineSegment seg;
        seg.from = NodeId{parse_int(tok[0], at)};
        seg.to = NodeId{parse_int(tok[1], at)};
        for (int k = 0; k < 9; ++k) seg.impedance(k / 3, k % 3) = parse_complex(tok[2 + k], at);
        lines.push_back(seg);
        break;
      }
      case Section::loads: {
        if (tok.size() != 3 || tok[1].size() != 1) at.fail("expected 'node phase complex_va'");
        Phase ph{};
        try {
          ph = phase_from_char(tok[1][0]);
        } catch (const std::invalid_argument& e) {
          at.fail(e.what());
        }
        loads.push_back({parse_int(tok[0], at), ph, parse_complex(tok[2], at), at.line});
        break;
      }
    }
  }
  if (!saw_nodes || nodes.empty()) throw ParseError(std::string(origin) + ": no [NODES] section");
  if (!source) throw ParseError(std::string(origin) + ": [FEEDER] source missing");

  std::vector<Vector3c> load_pu(nodes.size(), Vector3c::Zero());
  {
    std::unordered_map<int, std::size_t> pos;
    for (std::size_t i = 0; i < nodes.size(); ++i) pos.emplace(nodes[i].id.value, i);
    for (const auto& e : loads) {
      at.line = e.line;
      auto it = pos.find(e.node);
      if (it == pos.end()) at.fail("load on unknown node " + std::to_string(e.node));
      if (!nodes[it->second].phases.has(e.phase)) at.fail("load on absent phase");
      load_pu[it->second](static_cast<Eigen::Index>(index(e.phase))) += e.s_va / base.phase_power();
    }
  }
  return Feeder(std::move(name), base, NodeId{*source}, std::move(nodes), std::move(lines), std::move(load_pu));
}

Feeder load_feeder(const std::filesystem::path& path) {
  if (path == "-") return load_feeder(std::cin, "<stdin>");
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open feeder file " + path.string());
  return load_feeder(in, path.string());
}

std::vector<LineSegment> path_to_source(const Feeder& feeder, NodeId n) {
  std::size_t idx = feeder.index_of(n);
  std::vector<LineSegment> path;
  while (auto k = feeder.parent_line(idx)) {
    path.push_back(feeder.lines()[*k]);
    idx = *feeder.parent(idx);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

Matrix3c shared_path_impedance(const Feeder& feeder, NodeId o, NodeId a) {
  const std::size_t io = feeder.index_of(o);
  const std::size_t ia = feeder.index_of(a);
  return feeder.path_impedance(feeder.common_ancestor(io, ia));
}

Feeder make_chain_feeder(std::size_t n_nodes, const Matrix3c& segment_ohm, const Vector3c& load_va,
                         PerUnitBase base) {
  if (n_nodes < 2) throw std::invalid_argument("chain needs at least two nodes");
  std::vector<NodeInfo> nodes;
  std::vector<LineSegment> lines;
  std::vector<Vector3c> loads;
  for (std::size_t i = 0; i < n_nodes; ++i) {
    const int id = static_cast<int>(i) + 1;
    nodes.push_back({NodeId{id}, PhaseMask::all(), base.phase_voltage(), 0.0});
    loads.push_back(i == 0 ? Vector3c::Zero() : Vector3c(load_va / base.phase_power()));
    if (i > 0) lines.push_back({NodeId{id - 1}, NodeId{id}, segment_ohm});
  }
  return Feeder("chain" + std::to_string(n_nodes), base, NodeId{1}, std::move(nodes), std::move(lines),
                std::move(loads));
}

}  // namespace pvsa
