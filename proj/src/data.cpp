#include "lgn/data.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

namespace lgn {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t off) {
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
         (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

}  // namespace

LabeledImageSet load_mnist_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  if (images.size() < 16) throw DataFormatError(images_path.string() + ": truncated header");
  if (labels.size() < 8) throw DataFormatError(labels_path.string() + ": truncated header");
  if (read_be32(images, 0) != kIdxImagesMagic) {
    throw DataFormatError(images_path.string() + ": bad IDX image magic");
  }
  if (read_be32(labels, 0) != kIdxLabelsMagic) {
    throw DataFormatError(labels_path.string() + ": bad IDX label magic");
  }
  const std::size_t n = read_be32(images, 4);
  const std::size_t rows = read_be32(images, 8);
  const std::size_t cols = read_be32(images, 12);
  const std::size_t n_labels = read_be32(labels, 4);
  if (n != n_labels) {
    throw DataFormatError("image count " + std::to_string(n) + " != label count " +
                          std::to_string(n_labels));
  }
  if (images.size() < 16 + n * rows * cols) {
    throw DataFormatError(images_path.string() + ": truncated image data");
  }
  if (labels.size() < 8 + n) throw DataFormatError(labels_path.string() + ": truncated labels");

  LabeledImageSet set;
  set.image = {1, static_cast<int>(rows), static_cast<int>(cols)};
  set.pixels.resize(n * rows * cols);
  for (std::size_t i = 0; i < set.pixels.size(); ++i) {
    set.pixels[i] = static_cast<float>(images[16 + i]) / 255.0f;
  }
  set.labels.assign(labels.begin() + 8, labels.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  for (auto l : set.labels) {
    if (l > 9) throw DataFormatError(labels_path.string() + ": label outside 0..9");
  }
  return set;
}

LabeledImageSet load_cifar10_bin(std::span<const std::filesystem::path> batch_paths) {
  LabeledImageSet set;
  set.image = {3, 32, 32};
  for (const auto& path : batch_paths) {
    const auto buf = read_file(path);
    if (buf.empty() || buf.size() % kCifarRecord != 0) {
      throw DataFormatError(path.string() + ": length " + std::to_string(buf.size()) +
                            " is not a multiple of the 3073-byte record");
    }
    const std::size_t n = buf.size() / kCifarRecord;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t off = r * kCifarRecord;
      if (buf[off] > 9) throw DataFormatError(path.string() + ": label outside 0..9");
      set.labels.push_back(buf[off]);
      for (std::size_t p = 1; p < kCifarRecord; ++p) {
        set.pixels.push_back(static_cast<float>(buf[off + p]) / 255.0f);
      }
    }
  }
  return set;
}

std::vector<double> uniform_thresholds(int bits) {
  if (bits < 1 || bits > 5) throw std::invalid_argument("input bits must be in 1..5");
  const int planes = (1 << bits) - 1;
  std::vector<double> t;
  for (int j = 1; j <= planes; ++j) t.push_back(static_cast<double>(j) / (planes + 1));
  return t;
}

BinaryEncodedSet threshold_encode(const LabeledImageSet& set, int bits,
                                  const std::optional<std::vector<double>>& thresholds) {
  const std::vector<double> t = thresholds ? *thresholds : uniform_thresholds(bits);
  if (t.empty()) throw std::invalid_argument("threshold encoding needs at least one threshold");
  const int planes = static_cast<int>(t.size());
  BinaryEncodedSet out;
  out.shape = {set.image.channels * planes, set.image.height, set.image.width};
  out.labels = set.labels;
  out.bits.resize(set.size() * out.shape.size());
  const std::size_t hw = static_cast<std::size_t>(set.image.height) * set.image.width;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto img = set.image_at(i);
    auto dst = out.bits.begin() + static_cast<std::ptrdiff_t>(i * out.shape.size());
    for (int c = 0; c < set.image.channels; ++c) {
      for (int j = 0; j < planes; ++j) {
        const std::size_t plane = static_cast<std::size_t>(c * planes + j);
        for (std::size_t p = 0; p < hw; ++p) {
          dst[static_cast<std::ptrdiff_t>(plane * hw + p)] =
              img[static_cast<std::size_t>(c) * hw + p] > t[static_cast<std::size_t>(j)] ? 1 : 0;
        }
      }
    }
  }
  return out;
}

BinaryEncodedSet apply_fixed_kernels(const LabeledImageSet& set,
                                     std::span<const FixedKernel> kernels) {
  for (const auto& k : kernels) {
    if (k.size < 1 || k.size % 2 == 0 ||
        k.weights.size() != static_cast<std::size_t>(k.size * k.size)) {
      throw std::invalid_argument("fixed kernel must be odd-sized with size*size weights");
    }
  }
  const int nk = static_cast<int>(kernels.size());
  const int h = set.image.height;
  const int w = set.image.width;
  BinaryEncodedSet out;
  out.shape = {set.image.channels * nk, h, w};
  out.labels = set.labels;
  out.bits.resize(set.size() * out.shape.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto img = set.image_at(i);
    auto dst = out.bits.begin() + static_cast<std::ptrdiff_t>(i * out.shape.size());
    for (int c = 0; c < set.image.channels; ++c) {
      for (int ki = 0; ki < nk; ++ki) {
        const auto& k = kernels[static_cast<std::size_t>(ki)];
        const int r = k.size / 2;
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            float acc = 0;
            for (int dy = -r; dy <= r; ++dy) {
              for (int dx = -r; dx <= r; ++dx) {
                const int yy = y + dy;
                const int xx = x + dx;
                if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
                acc += k.weights[static_cast<std::size_t>((dy + r) * k.size + dx + r)] *
                       img[(static_cast<std::size_t>(c) * h + yy) * w + xx];
              }
            }
            const std::size_t plane = static_cast<std::size_t>(c * nk + ki);
            dst[static_cast<std::ptrdiff_t>((plane * h + y) * w + x)] = acc > k.threshold;
          }
        }
      }
    }
  }
  return out;
}

BinaryEncodedSet concat_planes(const BinaryEncodedSet& a, const BinaryEncodedSet& b) {
  if (a.size() != b.size() || a.shape.height != b.shape.height ||
      a.shape.width != b.shape.width) {
    throw std::invalid_argument("concat_planes: encodings disagree in sample count or size");
  }
  BinaryEncodedSet out;
  out.shape = {a.shape.channels + b.shape.channels, a.shape.height, a.shape.width};
  out.labels = a.labels;
  out.bits.reserve(a.bits.size() + b.bits.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto sa = a.sample(i);
    const auto sb = b.sample(i);
    out.bits.insert(out.bits.end(), sa.begin(), sa.end());
    out.bits.insert(out.bits.end(), sb.begin(), sb.end());
  }
  return out;
}

namespace {

std::vector<float>& payload(LabeledImageSet& s) { return s.pixels; }
const std::vector<float>& payload(const LabeledImageSet& s) { return s.pixels; }
std::vector<std::uint8_t>& payload(BinaryEncodedSet& s) { return s.bits; }
const std::vector<std::uint8_t>& payload(const BinaryEncodedSet& s) { return s.bits; }
Shape& sample_shape(LabeledImageSet& s) { return s.image; }
Shape sample_shape(const LabeledImageSet& s) { return s.image; }
Shape& sample_shape(BinaryEncodedSet& s) { return s.shape; }
Shape sample_shape(const BinaryEncodedSet& s) { return s.shape; }

}  // namespace

template <typename Set>
Set subset(const Set& set, std::span<const std::size_t> indices) {
  Set out;
  sample_shape(out) = sample_shape(set);
  const std::size_t stride = sample_shape(set).size();
  const auto& src = payload(set);
  auto& dst = payload(out);
  dst.reserve(indices.size() * stride);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= set.size()) throw std::out_of_range("subset index out of range");
    const auto first = src.begin() + static_cast<std::ptrdiff_t>(i * stride);
    dst.insert(dst.end(), first, first + static_cast<std::ptrdiff_t>(stride));
    out.labels.push_back(set.labels[i]);
  }
  return out;
}

template <typename Set>
std::pair<Set, Set> split_validation(const Set& set, std::size_t n_val, std::uint64_t seed) {
  if (n_val == 0 || n_val >= set.size()) {
    throw std::out_of_range("validation size " + std::to_string(n_val) + " must be in 1.." +
                            std::to_string(set.size() > 0 ? set.size() - 1 : 0));
  }
  std::vector<std::size_t> perm(set.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[uniform_below(rng, i)]);
  const std::size_t n_train = set.size() - n_val;
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> val(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  // Keep original order inside each part so that loaders stay cache friendly.
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {subset(set, std::span<const std::size_t>(train)),
          subset(set, std::span<const std::size_t>(val))};
}

template LabeledImageSet subset(const LabeledImageSet&, std::span<const std::size_t>);
template BinaryEncodedSet subset(const BinaryEncodedSet&, std::span<const std::size_t>);
template std::pair<LabeledImageSet, LabeledImageSet> split_validation(const LabeledImageSet&,
                                                                      std::size_t,
                                                                      std::uint64_t);
template std::pair<BinaryEncodedSet, BinaryEncodedSet> split_validation(const BinaryEncodedSet&,
                                                                        std::size_t,
                                                                        std::uint64_t);

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("LGN_DATA_DIR"); env && *env) return env;
  const char* home = std::getenv("HOME");
  return std::filesystem::path(home ? home : ".") / ".cache" / "lgn";
}

LabeledImageSet load_mnist(const std::filesystem::path& dir, Split split) {
  const std::string prefix = split == Split::kTrain ? "train" : "t10k";
  const auto base = dir / "mnist";
  return load_mnist_idx(base / (prefix + "-images-idx3-ubyte"), base / (prefix + "-labels-idx1-ubyte"));
}

LabeledImageSet load_cifar10(const std::filesystem::path& dir, Split split) {
  const auto base = dir / "cifar10" / "cifar-10-batches-bin";
  std::vector<std::filesystem::path> files;
  if (split == Split::kTrain) {
    for (int i = 1; i <= 5; ++i) files.push_back(base / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(base / "test_batch.bin");
  }
  return load_cifar10_bin(files);
}

LabeledImageSet load_dataset(const std::string& name, const std::filesystem::path& dir, Split split) {
  if (name == "mnist") return load_mnist(dir, split);
  if (name == "cifar10") return load_cifar10(dir, split);
  throw std::invalid_argument("unknown dataset: " + name);
}

BinaryEncodedSet make_motif_set(std::size_t n, std::uint64_t seed, double noise) {
  // Plus, X and ring motifs.
  static constexpr std::array<std::array<std::uint8_t, 9>, 3> kMotifs = {{
      {0, 1, 0, 1, 1, 1, 0, 1, 0},
      {1, 0, 1, 0, 1, 0, 1, 0, 1},
      {1, 1, 1, 1, 0, 1, 1, 1, 1},
  }};
  constexpr int kSide = 8;
  BinaryEncodedSet out;
  out.shape = {1, kSide, kSide};
  out.bits.resize(n * out.shape.size());
  out.labels.resize(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(uniform_below(rng, 3));
    const int oy = static_cast<int>(uniform_below(rng, kSide - 2));
    const int ox = static_cast<int>(uniform_below(rng, kSide - 2));
    auto img = out.bits.begin() + static_cast<std::ptrdiff_t>(i * out.shape.size());
    for (int p = 0; p < kSide * kSide; ++p) img[p] = u(rng) < noise ? 1 : 0;
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 3; ++x) {
        img[(oy + y) * kSide + ox + x] =
            kMotifs[static_cast<std::size_t>(label)][static_cast<std::size_t>(y * 3 + x)];
      }
    }
    out.labels[i] = static_cast<std::uint8_t>(label);
  }
  return out;
}

BinaryEncodedSet make_xor_set() {
  BinaryEncodedSet out;
  out.shape = {2, 1, 1};
  out.bits = {0, 0, 0, 1, 1, 0, 1, 1};
  out.labels = {0, 1, 1, 0};
  return out;
}

}  // namespace lgn
