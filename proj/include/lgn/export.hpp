#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgn/discrete.hpp"

namespace lgn {

/// Count bits (LSB first) of a popcount circuit appended to `net`.
struct AdderTree {
  std::vector<Ref> sum;
  std::size_t full_adders = 0;
  std::size_t half_adders = 0;
  std::size_t gates = 0;
};

/// Column-compression popcount of `bits`: full adders (2 XOR, 2 AND, 1 OR) while a column
/// holds three or more bits, a half adder (XOR, AND) for two.
AdderTree build_adder_tree(HardNet& net, std::span<const Ref> bits, std::uint16_t layer);

/// Copy of `net` with one adder tree per class appended; returns the count bits per class.
std::vector<AdderTree> append_class_adders(HardNet& net);

struct VerilogOptions {
  std::string module_name = "lgn_net";
  /// Emit per-class score buses (popcount circuits) instead of the raw output bits.
  bool adders = true;
};

/// Flat structural Verilog: input bus x, one wire per node (assign n<id> = ...), and either
/// score_<c> buses or an output bus y.
void emit_verilog(std::ostream& out, const HardNet& net, const VerilogOptions& options = {});

class NetlistFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kNetlistVersion = 1;

/// References are written as "i<n>", "n<id>", "c0" and "c1".
std::string ref_to_string(const Ref& r);
Ref ref_from_string(const std::string& s);

nlohmann::json netlist_to_json(const HardNet& net);
HardNet netlist_from_json(const nlohmann::json& j);

void save_netlist(const std::filesystem::path& path, const HardNet& net);
HardNet load_netlist(const std::filesystem::path& path);

}  // namespace lgn
