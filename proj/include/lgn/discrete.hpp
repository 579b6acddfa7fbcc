#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lgn/gates.hpp"
#include "lgn/network.hpp"

namespace lgn {

/// Reference to a signal: a primary input, an earlier node, or a constant (index 0 or 1).
struct Ref {
  enum class Kind : std::uint8_t { kInput, kNode, kConst };
  Kind kind = Kind::kConst;
  std::uint32_t index = 0;

  static Ref input(std::uint32_t i) { return {Kind::kInput, i}; }
  static Ref node(std::uint32_t i) { return {Kind::kNode, i}; }
  static Ref constant(bool v) { return {Kind::kConst, v ? 1u : 0u}; }

  bool is_const() const { return kind == Kind::kConst; }
  bool operator==(const Ref&) const = default;
  auto operator<=>(const Ref&) const = default;
};

struct HardNode {
  std::uint8_t gate = 0;
  Ref a;
  Ref b;
  std::uint16_t layer = 0;  // originating network stage, for reporting
  bool operator==(const HardNode&) const = default;
};

/// Feed-forward gate netlist. Nodes are in topological order (inputs of node i are primary
/// inputs, constants, or nodes < i). Outputs are grouped contiguously by class.
struct HardNet {
  std::uint32_t num_inputs = 0;
  std::vector<HardNode> nodes;
  std::vector<Ref> outputs;
  int classes = 10;
  double tau = 1.0;
  std::vector<std::string> layer_names;

  std::size_t group_size() const { return classes > 0 ? outputs.size() / static_cast<std::size_t>(classes) : 0; }
  bool operator==(const HardNet&) const = default;
};

/// Validates topological order, reference ranges and output grouping; throws on error.
void validate(const HardNet& net);

/// Hard network for the argmax gate of every node. Conv placements are unrolled, each
/// pooled output becomes three ORs, and padded leaves read constant 0.
template <typename T>
HardNet discretize(const Network<T>& net);

/// Constant folding, pass-through elision, NOT canonicalization and absorption, input-order
/// canonicalization, structural hashing and dead-node removal, iterated to a fixed point.
/// The result computes the same outputs and never has more nodes.
HardNet simplify(const HardNet& net);

/// Node values for one input vector (0/1 per byte).
std::vector<std::uint8_t> eval_nodes(const HardNet& net, std::span<const std::uint8_t> inputs);
/// Output bits for one input vector.
std::vector<std::uint8_t> eval_outputs(const HardNet& net, std::span<const std::uint8_t> inputs);
/// Per-class popcounts of the output groups.
std::vector<int> eval_discrete(const HardNet& net, std::span<const std::uint8_t> inputs);

struct HardNetStats {
  std::size_t inputs = 0;
  std::size_t nodes = 0;
  std::size_t outputs = 0;
  std::size_t depth = 0;
  std::array<std::size_t, kNumGates> histogram{};
};

HardNetStats stats(const HardNet& net);

/// Random netlist for testing and benchmarking: uniform gates, operands drawn from inputs,
/// earlier nodes and (with probability const_rate) constants; outputs are the last nodes.
HardNet random_hardnet(std::uint64_t seed, std::uint32_t inputs, std::size_t nodes,
                       std::size_t outputs_per_class, int classes, double const_rate = 0.02);

/// Rows "layer,gate,name,count" for every layer and gate.
void write_gate_histogram(std::ostream& out, const HardNet& net);

}  // namespace lgn
