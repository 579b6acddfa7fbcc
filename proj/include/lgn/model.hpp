#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lgn/layers.hpp"

namespace lgn {

struct TreeConvSpec {
  int kernels = 0;
  int receptive = 3;
  int padding = 1;
  int depth = 3;
  int channel_restriction = 2;  // 0 = unrestricted
  int groups = 1;
  bool operator==(const TreeConvSpec&) const = default;
};

struct OrPoolSpec {
  bool operator==(const OrPoolSpec&) const = default;
};

struct RandomSpec {
  int outputs = 0;
  bool operator==(const RandomSpec&) const = default;
};

using LayerSpec = std::variant<TreeConvSpec, OrPoolSpec, RandomSpec>;

/// Declarative network description. Layers after the first RandomSpec see the flattened
/// activations of the previous stage.
struct ModelSpec {
  std::string dataset = "custom";
  std::string size_tag;
  int k = 0;
  int ox = 1;
  int input_bits = 1;
  Shape image{1, 28, 28};
  std::vector<LayerSpec> layers;
  int classes = 10;

  // Training defaults carried with the architecture.
  double tau = 1.0;
  double learning_rate = 0.01;
  double weight_decay = 0.0;
  int batch_size = 128;

  /// Encoded input shape: image channels times the number of threshold planes.
  Shape input_shape() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Shape after each layer; element 0 is the input. Random layers yield {n, 1, 1}.
/// Throws ShapeError on inconsistent specs.
std::vector<Shape> propagate_shapes(const ModelSpec& spec);

struct SpecOverrides {
  std::optional<int> k;
  std::optional<int> ox;
  std::optional<int> input_bits;
  std::optional<double> tau;
  std::optional<double> learning_rate;
  std::optional<double> weight_decay;
  std::optional<int> batch_size;
  std::optional<int> groups;  // per conv block after the first; default max(1, k/8)
};

class UnknownModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// LogicTreeNet for `dataset` in {"mnist", "cifar10"} and a size tag (S, M, B, L, G).
/// An empty or unknown tag is accepted only when overrides.k is set.
ModelSpec build_logictreenet(const std::string& dataset, const std::string& size_tag,
                             const SpecOverrides& overrides = {});

/// Single depth-2 tree-conv block with or-pooling on 1x8x8 binary images, three classes.
ModelSpec build_motif_model(int kernels = 32);
/// Two random logic layers of 4 nodes on two binary inputs, two classes.
ModelSpec build_xor_model();

enum class CountMode { kTrainable, kHardware };

struct LayerGateCount {
  std::string name;
  std::int64_t gates = 0;
};

struct GateCountReport {
  CountMode mode = CountMode::kTrainable;
  std::int64_t total = 0;
  std::vector<LayerGateCount> layers;
};

/// Trainable mode counts learnable nodes. Hardware mode counts one gate per node per
/// convolution placement, 3 ORs per pooled output, random-layer nodes, and 7 adder gates
/// per last-layer output.
GateCountReport count_gates(const ModelSpec& spec, CountMode mode);

inline constexpr int kAdderGatesPerOutput = 7;

void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

}  // namespace lgn
