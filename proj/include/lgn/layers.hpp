#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "lgn/gates.hpp"

namespace lgn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  bool operator==(const Shape&) const = default;
};

/// Channel-major (c, y, x) dense activations of one sample.
template <typename T>
struct ActivationMap {
  Shape shape;
  std::vector<T> values;

  ActivationMap() = default;
  explicit ActivationMap(Shape s, T fill = T(0)) : shape(s), values(s.size(), fill) {}

  T& at(int c, int y, int x) { return values[index(c, y, x)]; }
  T at(int c, int y, int x) const { return values[index(c, y, x)]; }
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape.height + y) * shape.width + x;
  }
};

/// Fixed random wiring of tree leaves into a receptive field. Entries are 0-based:
/// channel in [0, in_channels), row in [0, receptive_h), col in [0, receptive_w).
struct ConnectionTable {
  int in_channels = 0;
  int receptive_h = 0;
  int receptive_w = 0;
  int depth = 0;
  int kernels = 0;
  std::vector<int> channel;  // kernels x leaves
  std::vector<int> row;
  std::vector<int> col;

  int leaves() const { return 1 << depth; }
  int nodes_per_kernel() const { return (1 << depth) - 1; }
  std::size_t at(int kernel, int leaf) const {
    return static_cast<std::size_t>(kernel) * static_cast<std::size_t>(leaves()) +
           static_cast<std::size_t>(leaf);
  }
  bool operator==(const ConnectionTable&) const = default;
};

/// Unbiased integer in [0, n) from a 64-bit engine. Identical across standard libraries,
/// unlike std::uniform_int_distribution.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n);

/// Samples tree-leaf connections. `channel_restriction` > 0 caps the number of distinct
/// input channels per kernel; `groups` partitions input and output channels so that a kernel
/// in output group g only reads input channels of group g.
ConnectionTable sample_connections(std::uint64_t seed, int in_channels, int receptive_h,
                                   int receptive_w, int kernels, int depth,
                                   int channel_restriction, int groups);

/// Trainable gate choices for a set of nodes, with the derived mixture coefficients
/// cached by prepare()/prepare_hard().
template <typename T>
class GateParams {
 public:
  GateParams() = default;
  explicit GateParams(std::size_t nodes);

  std::size_t size() const { return coeffs_.size(); }
  std::span<T> logits() { return logits_; }
  std::span<const T> logits() const { return logits_; }

  GateDistribution<T> distribution(std::size_t node) const;
  void set_distribution(std::size_t node, const GateDistribution<T>& dist);

  void init_residual(T strength);
  void init_gaussian(std::mt19937_64& rng);

  /// Relaxed mode: probabilities are softmax(z).
  void prepare();
  /// Discrete mode: probabilities are one-hot on argmax(z), lowest index on ties.
  void prepare_hard();

  const GateCoeffs<T>& coeffs(std::size_t node) const { return coeffs_[node]; }
  const GateProbabilities<T>& probabilities(std::size_t node) const { return probs_[node]; }
  int chosen_gate(std::size_t node) const;

  /// Adds dL/dz for every node given dL/d(coefficients).
  void accumulate_logit_grad(std::span<const GateCoeffs<T>> dcoef, std::span<T> dlogits) const;

 private:
  std::vector<T> logits_;
  std::vector<GateProbabilities<T>> probs_;
  std::vector<GateCoeffs<T>> coeffs_;
};

/// Convolution whose kernels are complete binary trees of learnable gates. Placements of
/// one kernel share parameters; out-of-image leaves read a constant 0.
template <typename T>
class TreeConvLayer {
 public:
  TreeConvLayer(ConnectionTable table, int in_height, int in_width, int padding);

  Shape input_shape() const { return in_shape_; }
  /// Shape before any pooling.
  Shape conv_shape() const { return conv_shape_; }
  const ConnectionTable& connections() const { return table_; }
  int padding() const { return padding_; }

  GateParams<T>& params() { return params_; }
  const GateParams<T>& params() const { return params_; }

  /// Root value of kernel `k` placed with its top-left receptive-field corner at
  /// conv-output position (y, x).
  T eval_placement(std::span<const T> input, int k, int y, int x) const;

  /// Back-propagates `upstream` through kernel `k` at (y, x). The tree is recomputed.
  void backward_placement(std::span<const T> input, int k, int y, int x, T upstream,
                          std::span<T> grad_input, std::span<GateCoeffs<T>> dcoef) const;

  void forward(std::span<const T> input, std::span<T> output) const;
  void backward(std::span<const T> input, std::span<const T> grad_output,
                std::span<T> grad_input, std::span<GateCoeffs<T>> dcoef) const;

  /// Input index read by leaf `leaf` of kernel `k` at (y, x), or -1 for padding.
  std::ptrdiff_t leaf_source(int k, int leaf, int y, int x) const;

  /// Zero-padded copy of the input, as read by eval_row().
  void pad(std::span<const T> input, std::vector<T>& padded) const;
  /// Conv-output row y of kernel k, all columns at once. `scratch` holds nodes * width values.
  void eval_row(const T* padded, int k, int y, T* out, std::vector<T>& scratch) const;

 private:
  ConnectionTable table_;
  Shape in_shape_;
  Shape conv_shape_;
  int padding_;
  GateParams<T> params_;
  std::vector<std::ptrdiff_t> offsets_;  // per (kernel, leaf), relative to the window corner

  /// Loads leaf values (and their sources when `src` is non-null).
  void gather(std::span<const T> input, int k, int y, int x, T* v, std::ptrdiff_t* src) const;
};

/// 2x2 stride-2 max t-conorm pooling. Ties go to the first maximal position in row-major
/// window order.
Shape or_pool_output_shape(Shape in);

template <typename T>
void or_pool_forward(Shape in_shape, std::span<const T> input, std::span<T> output,
                     std::span<std::uint8_t> argmax);

template <typename T>
void or_pool_backward(Shape in_shape, std::span<const std::uint8_t> argmax,
                      std::span<const T> grad_output, std::span<T> grad_input);

/// Tree convolution fused with optional or-pooling. Only the pooled output and the argmax
/// index are kept; backward recomputes the selected placement.
template <typename T>
class ConvBlock {
 public:
  ConvBlock(TreeConvLayer<T> conv, bool pool);

  Shape input_shape() const { return conv_.input_shape(); }
  Shape output_shape() const { return out_shape_; }
  bool pooled() const { return pool_; }
  TreeConvLayer<T>& conv() { return conv_; }
  const TreeConvLayer<T>& conv() const { return conv_; }
  GateParams<T>& params() { return conv_.params(); }
  const GateParams<T>& params() const { return conv_.params(); }

  /// `argmax` has output_shape().size() entries; unused when not pooled.
  void forward(std::span<const T> input, std::span<T> output,
               std::span<std::uint8_t> argmax) const;
  void backward(std::span<const T> input, std::span<const std::uint8_t> argmax,
                std::span<const T> grad_output, std::span<T> grad_input,
                std::span<GateCoeffs<T>> dcoef) const;

  /// Mean of the pre-pool activations (equal to the output mean when not pooled).
  T pre_pool_mean(std::span<const T> input) const;

 private:
  TreeConvLayer<T> conv_;
  bool pool_;
  Shape out_shape_;
};

/// Fully random pairs of inputs: slots are filled from concatenated random permutations so
/// that every input is used as evenly as possible.
struct RandomWiring {
  int inputs = 0;
  int outputs = 0;
  std::vector<int> a;
  std::vector<int> b;
  bool operator==(const RandomWiring&) const = default;
};

RandomWiring sample_random_wiring(std::uint64_t seed, int inputs, int outputs);

template <typename T>
class RandomLayer {
 public:
  explicit RandomLayer(RandomWiring wiring);

  int input_size() const { return wiring_.inputs; }
  int output_size() const { return wiring_.outputs; }
  const RandomWiring& wiring() const { return wiring_; }
  GateParams<T>& params() { return params_; }
  const GateParams<T>& params() const { return params_; }

  void forward(std::span<const T> input, std::span<T> output) const;
  void backward(std::span<const T> input, std::span<const T> grad_output,
                std::span<T> grad_input, std::span<GateCoeffs<T>> dcoef) const;

 private:
  RandomWiring wiring_;
  GateParams<T> params_;
};

/// Sums contiguous equal-size groups (class c owns group c) and divides by tau.
struct GroupSumHead {
  int classes = 10;
  double tau = 1.0;

  int group_size(std::size_t inputs) const;

  template <typename T>
  void forward(std::span<const T> input, std::span<T> scores) const;
  template <typename T>
  void backward(std::span<const T> grad_scores, std::span<T> grad_input) const;
};

}  // namespace lgn
