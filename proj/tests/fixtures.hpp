#pragma once

#include "pvsa/network.hpp"

#include <filesystem>
#include <sstream>
#include <string>

namespace pvsa::test {

inline std::filesystem::path data_path(const std::string& rel) { return std::filesystem::path(PVSA_DATA_DIR) / rel; }

inline const Feeder& ieee37() {
  static const Feeder f = load_feeder(data_path("ieee37.feeder"));
  return f;
}

inline Feeder feeder_from(const std::string& text) {
  std::istringstream in(text);
  return load_feeder(in, "fixture");
}

/// Source 1 feeding node 2 through a diagonal line of 0.5+1j ohm per phase; 90+30j kVA on phase a.
inline const char* kTwoNode = R"(
[FEEDER]
name two
base_power_va 1000000
base_voltage_v 4800
source 1
[NODES]
1 abc 2771.281292 0
2 abc 2771.281292 0
[LINES]
1 2 0.5+1j 0 0 0 0.5+1j 0 0 0 0.5+1j
[LOADS]
2 a 90000+30000j
)";

/// 1 -> 2 -> 3 and 2 -> 4, each line a distinct full 3x3 matrix.
inline const char* kFourNode = R"(
[FEEDER]
name four
source 1
[NODES]
# id phases v_mag_volts angle_deg
1 abc 2771.281292 0
2 abc 2771.281292 0
3 abc 2771.281292 0
4 ab 2771.281292 0
[LINES]
1 2 0.3+0.6j 0.1+0.2j 0.1+0.1j 0.1+0.2j 0.3+0.6j 0.1+0.2j 0.1+0.1j 0.1+0.2j 0.3+0.6j
2 3 0.2+0.4j 0.05+0.1j 0.04+0.1j 0.05+0.1j 0.2+0.4j 0.05+0.1j 0.04+0.1j 0.05+0.1j 0.2+0.4j
2 4 0.4+0.3j 0.1-0.05j 0 0.1-0.05j 0.4+0.3j 0 0 0 0
[LOADS]
3 a 50000+20000j
3 b 40000+15000j
3 c 60000+25000j
4 a 30000+10000j
4 b 20000+5000j
)";

}  // namespace pvsa::test
