#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "lgn/layers.hpp"
#include "lgn/model.hpp"

namespace lgn {

/// Or-pool stage that is not preceded by a tree convolution.
struct PoolStage {
  Shape in;
  Shape out;
};

enum class InitScheme { kResidual, kGaussian };

/// Trainable instance of a ModelSpec. Tree convolutions directly followed by an or-pool
/// are fused into one ConvBlock. Connection tables are derived deterministically from the
/// construction seed.
template <typename T>
class Network {
 public:
  using Stage = std::variant<ConvBlock<T>, PoolStage, RandomLayer<T>>;

  Network(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t input_size() const { return input_shape_.size(); }
  Shape input_shape() const { return input_shape_; }
  int classes() const { return head_.classes; }
  const GroupSumHead& head() const { return head_; }
  void set_tau(double tau) { head_.tau = tau; }

  std::vector<Stage>& stages() { return stages_; }
  const std::vector<Stage>& stages() const { return stages_; }

  /// Gate-parameter sets in stage order (pool stages contribute none).
  std::vector<GateParams<T>*> gate_params();
  std::vector<const GateParams<T>*> gate_params() const;

  /// Number of learnable gate nodes.
  std::size_t node_count() const;
  /// Number of logits (16 per node).
  std::size_t parameter_count() const { return node_count() * kNumGates; }

  void init(InitScheme scheme, T residual_strength, std::mt19937_64& rng);
  void prepare();
  void prepare_hard();

  std::vector<T> parameters() const;
  void set_parameters(std::span<const T> flat);

  /// Per-thread scratch memory for one sample.
  struct Workspace {
    std::vector<std::vector<T>> acts;  // acts[i] = input of stage i; acts.back() = last output
    std::vector<std::vector<std::uint8_t>> argmax;
    std::vector<std::vector<T>> grads;
    std::vector<T> scores;
  };

  /// Per-thread gradient accumulators with respect to mixture coefficients.
  struct Gradients {
    std::vector<std::vector<GateCoeffs<T>>> dcoef;  // one per gate_params() entry
    void clear();
    void add(const Gradients& other);
  };

  Workspace make_workspace() const;
  Gradients make_gradients() const;

  /// Runs one sample; scores end up in ws.scores.
  void forward(std::span<const T> input, Workspace& ws) const;
  /// Uses the activations left in `ws` by forward().
  void backward(Workspace& ws, std::span<const T> grad_scores, Gradients& grads) const;

  /// Writes dL/dz for all logits (flat, parameters() order) from coefficient gradients.
  void logit_gradients(const Gradients& grads, std::span<T> dlogits) const;

 private:
  ModelSpec spec_;
  std::uint64_t seed_;
  Shape input_shape_;
  std::vector<Stage> stages_;
  GroupSumHead head_;
};

/// SplitMix64 step, used to derive per-layer seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace lgn
