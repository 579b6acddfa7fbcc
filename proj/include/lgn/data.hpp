#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lgn/layers.hpp"

namespace lgn {

class DataFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Images normalized to [0,1], channel-major per image.
struct LabeledImageSet {
  Shape image;
  std::vector<float> pixels;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> image_at(std::size_t i) const {
    return std::span<const float>(pixels).subspan(i * image.size(), image.size());
  }
};

/// Binary planes, one byte (0 or 1) per bit, channel-major per sample.
struct BinaryEncodedSet {
  Shape shape;
  std::vector<std::uint8_t> bits;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const std::uint8_t> sample(std::size_t i) const {
    return std::span<const std::uint8_t>(bits).subspan(i * shape.size(), shape.size());
  }
};

LabeledImageSet load_mnist_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path);

/// Concatenates CIFAR-10 binary batches (1 label byte + 3072 channel-major pixels per record).
LabeledImageSet load_cifar10_bin(std::span<const std::filesystem::path> batch_paths);

/// Evenly spaced thresholds j / 2^bits for j = 1 .. 2^bits - 1.
std::vector<double> uniform_thresholds(int bits);

/// Thermometer code: plane j of channel c is 1 where pixel > thresholds[j]. Output channel
/// index is c * thresholds.size() + j. Uses uniform_thresholds(bits) unless overridden.
BinaryEncodedSet threshold_encode(const LabeledImageSet& set, int bits,
                                  const std::optional<std::vector<double>>& thresholds = {});

/// Fixed (non-learned) binary feature detector: a k x k kernel applied to every image channel
/// with zero padding, followed by a threshold.
struct FixedKernel {
  int size = 3;
  std::vector<float> weights;  // size * size, row-major
  float threshold = 0.0f;
};

/// Preprocessing hook producing one plane per (image channel, kernel); the planes of all
/// kernels for channel c are contiguous.
BinaryEncodedSet apply_fixed_kernels(const LabeledImageSet& set,
                                     std::span<const FixedKernel> kernels);

/// Concatenates the planes of two encodings of the same samples.
BinaryEncodedSet concat_planes(const BinaryEncodedSet& a, const BinaryEncodedSet& b);

template <typename Set>
Set subset(const Set& set, std::span<const std::size_t> indices);

/// Deterministic disjoint split; the last n_val entries of a seeded permutation form the
/// validation set.
template <typename Set>
std::pair<Set, Set> split_validation(const Set& set, std::size_t n_val, std::uint64_t seed);

/// $LGN_DATA_DIR, or ~/.cache/lgn when unset.
std::filesystem::path default_data_dir();

enum class Split { kTrain, kTest };

/// Reads <dir>/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte.
LabeledImageSet load_mnist(const std::filesystem::path& dir, Split split);
/// Reads <dir>/cifar10/cifar-10-batches-bin/{data_batch_1..5,test_batch}.bin.
LabeledImageSet load_cifar10(const std::filesystem::path& dir, Split split);
/// Dispatches on "mnist" / "cifar10".
LabeledImageSet load_dataset(const std::string& name, const std::filesystem::path& dir, Split split);

inline constexpr std::size_t kMnistValidation = 10000;
inline constexpr std::size_t kCifarValidation = 5000;

/// Synthetic 3-class task: 8x8 binary images, each containing one of three 3x3 motifs at a
/// random position plus sparse background noise.
BinaryEncodedSet make_motif_set(std::size_t n, std::uint64_t seed, double noise = 0.03);

/// The four 2-bit inputs (a, b) with label a XOR b.
BinaryEncodedSet make_xor_set();

}  // namespace lgn
