#include "lgn/layers.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <string>

namespace lgn {

namespace {

constexpr int kMaxDepth = 4;
constexpr int kMaxLeaves = 1 << kMaxDepth;

std::string shape_str(Shape s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

}  // namespace

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: empty range");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

ConnectionTable sample_connections(std::uint64_t seed, int in_channels, int receptive_h,
                                   int receptive_w, int kernels, int depth,
                                   int channel_restriction, int groups) {
  if (in_channels < 1 || receptive_h < 1 || receptive_w < 1 || kernels < 1) {
    throw std::invalid_argument("sample_connections: sizes must be positive");
  }
  if (depth < 1 || depth > kMaxDepth) {
    throw std::invalid_argument("sample_connections: tree depth must be in 1.." +
                                std::to_string(kMaxDepth));
  }
  if (groups < 1 || in_channels % groups != 0 || kernels % groups != 0) {
    throw std::invalid_argument("sample_connections: groups (" + std::to_string(groups) +
                                ") must divide input channels (" + std::to_string(in_channels) +
                                ") and kernels (" + std::to_string(kernels) + ")");
  }

  ConnectionTable t;
  t.in_channels = in_channels;
  t.receptive_h = receptive_h;
  t.receptive_w = receptive_w;
  t.depth = depth;
  t.kernels = kernels;
  const int leaves = t.leaves();
  const std::size_t total = static_cast<std::size_t>(kernels) * static_cast<std::size_t>(leaves);
  t.channel.resize(total);
  t.row.resize(total);
  t.col.resize(total);

  std::mt19937_64 rng(seed);
  const int kernels_per_group = kernels / groups;
  const int channels_per_group = in_channels / groups;
  std::vector<int> allowed;
  for (int k = 0; k < kernels; ++k) {
    const int first_channel = (k / kernels_per_group) * channels_per_group;
    allowed.clear();
    if (channel_restriction > 0) {
      // A 1-channel group degrades to a single allowed channel.
      const int want = std::min(channel_restriction, channels_per_group);
      while (static_cast<int>(allowed.size()) < want) {
        const int c = first_channel + static_cast<int>(uniform_below(rng, channels_per_group));
        if (std::find(allowed.begin(), allowed.end(), c) == allowed.end()) allowed.push_back(c);
      }
    }
    for (int l = 0; l < leaves; ++l) {
      const std::size_t i = t.at(k, l);
      if (allowed.empty()) {
        t.channel[i] = first_channel + static_cast<int>(uniform_below(rng, channels_per_group));
      } else {
        t.channel[i] = allowed[uniform_below(rng, allowed.size())];
      }
      t.row[i] = static_cast<int>(uniform_below(rng, receptive_h));
      t.col[i] = static_cast<int>(uniform_below(rng, receptive_w));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// GateParams

template <typename T>
GateParams<T>::GateParams(std::size_t nodes)
    : logits_(nodes * kNumGates, T(0)), probs_(nodes), coeffs_(nodes) {
  prepare();
}

template <typename T>
GateDistribution<T> GateParams<T>::distribution(std::size_t node) const {
  GateDistribution<T> d;
  std::copy_n(logits_.begin() + static_cast<std::ptrdiff_t>(node * kNumGates), kNumGates,
              d.z.begin());
  return d;
}

template <typename T>
void GateParams<T>::set_distribution(std::size_t node, const GateDistribution<T>& dist) {
  std::copy(dist.z.begin(), dist.z.end(),
            logits_.begin() + static_cast<std::ptrdiff_t>(node * kNumGates));
}

template <typename T>
void GateParams<T>::init_residual(T strength) {
  const auto d = residual_init<T>(strength);
  for (std::size_t i = 0; i < size(); ++i) set_distribution(i, d);
  prepare();
}

template <typename T>
void GateParams<T>::init_gaussian(std::mt19937_64& rng) {
  for (std::size_t i = 0; i < size(); ++i) set_distribution(i, gaussian_init<T>(rng));
  prepare();
}

template <typename T>
void GateParams<T>::prepare() {
  for (std::size_t i = 0; i < size(); ++i) {
    probs_[i] = distribution(i).softmax();
    coeffs_[i] = probs_[i].coeffs();
  }
}

template <typename T>
void GateParams<T>::prepare_hard() {
  for (std::size_t i = 0; i < size(); ++i) {
    probs_[i] = GateProbabilities<T>::one_hot(chosen_gate(i));
    coeffs_[i] = gate_coeffs<T>(chosen_gate(i));
  }
}

template <typename T>
int GateParams<T>::chosen_gate(std::size_t node) const {
  const auto first = logits_.begin() + static_cast<std::ptrdiff_t>(node * kNumGates);
  return static_cast<int>(std::max_element(first, first + kNumGates) - first);
}

template <typename T>
void GateParams<T>::accumulate_logit_grad(std::span<const GateCoeffs<T>> dcoef,
                                          std::span<T> dlogits) const {
  for (std::size_t i = 0; i < size(); ++i) {
    coeff_grad_to_logit_grad<T>(probs_[i], dcoef[i],
                                dlogits.subspan(i * kNumGates).template first<kNumGates>());
  }
}

// ---------------------------------------------------------------------------
// TreeConvLayer

template <typename T>
TreeConvLayer<T>::TreeConvLayer(ConnectionTable table, int in_height, int in_width,
                                int padding)
    : table_(std::move(table)),
      in_shape_{table_.in_channels, in_height, in_width},
      padding_(padding) {
  if (padding < 0) throw ShapeError("tree conv: negative padding");
  if (table_.depth < 1 || table_.depth > kMaxDepth) throw ShapeError("tree conv: bad depth");
  const std::size_t expected =
      static_cast<std::size_t>(table_.kernels) * static_cast<std::size_t>(table_.leaves());
  if (table_.channel.size() != expected || table_.row.size() != expected ||
      table_.col.size() != expected) {
    throw ShapeError("tree conv: connection table size mismatch");
  }
  for (std::size_t i = 0; i < expected; ++i) {
    if (table_.channel[i] < 0 || table_.channel[i] >= table_.in_channels ||
        table_.row[i] < 0 || table_.row[i] >= table_.receptive_h || table_.col[i] < 0 ||
        table_.col[i] >= table_.receptive_w) {
      throw ShapeError("tree conv: connection entry out of range");
    }
  }
  conv_shape_ = {table_.kernels, in_height - table_.receptive_h + 1 + 2 * padding,
                 in_width - table_.receptive_w + 1 + 2 * padding};
  if (conv_shape_.height < 1 || conv_shape_.width < 1) {
    throw ShapeError("tree conv: receptive field larger than padded input " +
                     shape_str(in_shape_));
  }
  params_ = GateParams<T>(static_cast<std::size_t>(table_.kernels) *
                          static_cast<std::size_t>(table_.nodes_per_kernel()));
  offsets_.resize(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    offsets_[i] = (static_cast<std::ptrdiff_t>(table_.channel[i]) * in_height + table_.row[i]) *
                      in_width +
                  table_.col[i];
  }
}

template <typename T>
void TreeConvLayer<T>::gather(std::span<const T> input, int k, int y, int x, T* v,
                              std::ptrdiff_t* src) const {
  const int leaves = table_.leaves();
  const int iy = y - padding_;
  const int ix = x - padding_;
  if (iy >= 0 && ix >= 0 && iy + table_.receptive_h <= in_shape_.height &&
      ix + table_.receptive_w <= in_shape_.width) {
    const std::ptrdiff_t corner = static_cast<std::ptrdiff_t>(iy) * in_shape_.width + ix;
    const std::ptrdiff_t* off = offsets_.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(leaves);
    const T* in = input.data();
    for (int l = 0; l < leaves; ++l) {
      const std::ptrdiff_t s = corner + off[l];
      v[l] = in[s];
      if (src) src[l] = s;
    }
    return;
  }
  for (int l = 0; l < leaves; ++l) {
    const std::ptrdiff_t s = leaf_source(k, l, y, x);
    v[l] = s < 0 ? T(0) : input[static_cast<std::size_t>(s)];
    if (src) src[l] = s;
  }
}

template <typename T>
std::ptrdiff_t TreeConvLayer<T>::leaf_source(int k, int leaf, int y, int x) const {
  const std::size_t i = table_.at(k, leaf);
  const int iy = y - padding_ + table_.row[i];
  const int ix = x - padding_ + table_.col[i];
  if (iy < 0 || ix < 0 || iy >= in_shape_.height || ix >= in_shape_.width) return -1;
  return (static_cast<std::ptrdiff_t>(table_.channel[i]) * in_shape_.height + iy) *
             in_shape_.width +
         ix;
}

template <typename T>
T TreeConvLayer<T>::eval_placement(std::span<const T> input, int k, int y, int x) const {
  const int leaves = table_.leaves();
  const int nodes = leaves - 1;
  std::array<T, 2 * kMaxLeaves> v;
  gather(input, k, y, x, v.data(), nullptr);
  const std::size_t base = static_cast<std::size_t>(k) * static_cast<std::size_t>(nodes);
  for (int j = 0; j < nodes; ++j) {
    const auto& c = params_.coeffs(base + static_cast<std::size_t>(j));
    v[static_cast<std::size_t>(leaves + j)] =
        c(v[static_cast<std::size_t>(2 * j)], v[static_cast<std::size_t>(2 * j + 1)]);
  }
  return v[static_cast<std::size_t>(2 * leaves - 2)];
}

template <typename T>
void TreeConvLayer<T>::backward_placement(std::span<const T> input, int k, int y, int x,
                                          T upstream, std::span<T> grad_input,
                                          std::span<GateCoeffs<T>> dcoef) const {
  const int leaves = table_.leaves();
  const int nodes = leaves - 1;
  std::array<std::ptrdiff_t, kMaxLeaves> src;
  std::array<T, 2 * kMaxLeaves> v;
  std::array<T, 2 * kMaxLeaves> g{};
  gather(input, k, y, x, v.data(), src.data());
  const std::size_t base = static_cast<std::size_t>(k) * static_cast<std::size_t>(nodes);
  for (int j = 0; j < nodes; ++j) {
    const auto& c = params_.coeffs(base + static_cast<std::size_t>(j));
    v[static_cast<std::size_t>(leaves + j)] =
        c(v[static_cast<std::size_t>(2 * j)], v[static_cast<std::size_t>(2 * j + 1)]);
  }
  g[static_cast<std::size_t>(2 * leaves - 2)] = upstream;
  for (int j = nodes - 1; j >= 0; --j) {
    const T gj = g[static_cast<std::size_t>(leaves + j)];
    const T a = v[static_cast<std::size_t>(2 * j)];
    const T b = v[static_cast<std::size_t>(2 * j + 1)];
    const auto& c = params_.coeffs(base + static_cast<std::size_t>(j));
    auto& d = dcoef[base + static_cast<std::size_t>(j)];
    d.c0 += gj;
    d.c1 += gj * a;
    d.c2 += gj * b;
    d.c3 += gj * a * b;
    g[static_cast<std::size_t>(2 * j)] += gj * c.d_da(b);
    g[static_cast<std::size_t>(2 * j + 1)] += gj * c.d_db(a);
  }
  if (grad_input.empty()) return;
  for (int l = 0; l < leaves; ++l) {
    const auto s = src[static_cast<std::size_t>(l)];
    if (s >= 0) grad_input[static_cast<std::size_t>(s)] += g[static_cast<std::size_t>(l)];
  }
}

template <typename T>
void TreeConvLayer<T>::forward(std::span<const T> input, std::span<T> output) const {
  if (input.size() != in_shape_.size() || output.size() != conv_shape_.size()) {
    throw ShapeError("tree conv forward: expected input " + shape_str(in_shape_));
  }
  thread_local std::vector<T> padded;
  thread_local std::vector<T> scratch;
  pad(input, padded);
  const auto w = static_cast<std::size_t>(conv_shape_.width);
  T* out = output.data();
  for (int k = 0; k < conv_shape_.channels; ++k) {
    for (int y = 0; y < conv_shape_.height; ++y, out += w) eval_row(padded.data(), k, y, out, scratch);
  }
}

template <typename T>
void TreeConvLayer<T>::pad(std::span<const T> input, std::vector<T>& padded) const {
  const int hp = in_shape_.height + 2 * padding_;
  const int wp = in_shape_.width + 2 * padding_;
  padded.assign(static_cast<std::size_t>(in_shape_.channels) * hp * wp, T(0));
  for (int c = 0; c < in_shape_.channels; ++c) {
    for (int y = 0; y < in_shape_.height; ++y) {
      const T* src = input.data() + (static_cast<std::size_t>(c) * in_shape_.height + y) * in_shape_.width;
      T* dst = padded.data() + (static_cast<std::size_t>(c) * hp + y + padding_) * wp + padding_;
      std::copy(src, src + in_shape_.width, dst);
    }
  }
}

template <typename T>
void TreeConvLayer<T>::eval_row(const T* padded, int k, int y, T* out,
                                std::vector<T>& scratch) const {
  const int leaves = table_.leaves();
  const int nodes = leaves - 1;
  const int w = conv_shape_.width;
  const int hp = in_shape_.height + 2 * padding_;
  const int wp = in_shape_.width + 2 * padding_;
  scratch.resize(static_cast<std::size_t>(nodes) * static_cast<std::size_t>(w));
  std::array<const T*, 2 * kMaxLeaves> ptr;
  const std::size_t first = static_cast<std::size_t>(k) * static_cast<std::size_t>(leaves);
  for (int l = 0; l < leaves; ++l) {
    const std::size_t i = first + static_cast<std::size_t>(l);
    ptr[static_cast<std::size_t>(l)] =
        padded + (static_cast<std::ptrdiff_t>(table_.channel[i]) * hp + y + table_.row[i]) * wp +
        table_.col[i];
  }
  const std::size_t base = static_cast<std::size_t>(k) * static_cast<std::size_t>(nodes);
  for (int j = 0; j < nodes; ++j) {
    T* __restrict dst = j == nodes - 1 ? out : scratch.data() + static_cast<std::size_t>(j) * w;
    const T* __restrict a = ptr[static_cast<std::size_t>(2 * j)];
    const T* __restrict b = ptr[static_cast<std::size_t>(2 * j + 1)];
    const auto c = params_.coeffs(base + static_cast<std::size_t>(j));
    for (int x = 0; x < w; ++x) dst[x] = c.c0 + c.c1 * a[x] + c.c2 * b[x] + c.c3 * a[x] * b[x];
    ptr[static_cast<std::size_t>(leaves + j)] = dst;
  }
}

template <typename T>
void TreeConvLayer<T>::backward(std::span<const T> input, std::span<const T> grad_output,
                                std::span<T> grad_input,
                                std::span<GateCoeffs<T>> dcoef) const {
  if (input.size() != in_shape_.size() || grad_output.size() != conv_shape_.size() ||
      dcoef.size() != params_.size()) {
    throw ShapeError("tree conv backward: shape mismatch");
  }
  std::size_t o = 0;
  for (int k = 0; k < conv_shape_.channels; ++k) {
    for (int y = 0; y < conv_shape_.height; ++y) {
      for (int x = 0; x < conv_shape_.width; ++x) {
        const T up = grad_output[o++];
        if (up != T(0)) backward_placement(input, k, y, x, up, grad_input, dcoef);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Or pooling

Shape or_pool_output_shape(Shape in) {
  if (in.height % 2 != 0 || in.width % 2 != 0) {
    throw ShapeError("or pool: spatial dims must be even, got " + shape_str(in));
  }
  return {in.channels, in.height / 2, in.width / 2};
}

template <typename T>
void or_pool_forward(Shape in_shape, std::span<const T> input, std::span<T> output,
                     std::span<std::uint8_t> argmax) {
  const Shape out = or_pool_output_shape(in_shape);
  if (input.size() != in_shape.size() || output.size() != out.size() ||
      argmax.size() != out.size()) {
    throw ShapeError("or pool forward: shape mismatch");
  }
  std::size_t o = 0;
  for (int c = 0; c < out.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        T best = T(0);
        std::uint8_t best_i = 0;
        for (int w = 0; w < 4; ++w) {
          const std::size_t i =
              (static_cast<std::size_t>(c) * in_shape.height + 2 * y + w / 2) * in_shape.width +
              2 * x + w % 2;
          if (w == 0 || input[i] > best) {
            best = input[i];
            best_i = static_cast<std::uint8_t>(w);
          }
        }
        output[o] = best;
        argmax[o] = best_i;
        ++o;
      }
    }
  }
}

template <typename T>
void or_pool_backward(Shape in_shape, std::span<const std::uint8_t> argmax,
                      std::span<const T> grad_output, std::span<T> grad_input) {
  const Shape out = or_pool_output_shape(in_shape);
  if (argmax.size() != out.size() || grad_output.size() != out.size() ||
      grad_input.size() != in_shape.size()) {
    throw ShapeError("or pool backward: indices do not match shapes");
  }
  std::size_t o = 0;
  for (int c = 0; c < out.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        const int w = argmax[o];
        const std::size_t i =
            (static_cast<std::size_t>(c) * in_shape.height + 2 * y + w / 2) * in_shape.width +
            2 * x + w % 2;
        grad_input[i] += grad_output[o];
        ++o;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// ConvBlock

template <typename T>
ConvBlock<T>::ConvBlock(TreeConvLayer<T> conv, bool pool)
    : conv_(std::move(conv)),
      pool_(pool),
      out_shape_(pool ? or_pool_output_shape(conv_.conv_shape()) : conv_.conv_shape()) {}

template <typename T>
void ConvBlock<T>::forward(std::span<const T> input, std::span<T> output,
                           std::span<std::uint8_t> argmax) const {
  if (!pool_) {
    conv_.forward(input, output);
    return;
  }
  if (input.size() != conv_.input_shape().size() || output.size() != out_shape_.size() ||
      argmax.size() != out_shape_.size()) {
    throw ShapeError("conv block forward: shape mismatch");
  }
  thread_local std::vector<T> padded;
  thread_local std::vector<T> scratch;
  thread_local std::vector<T> rows;
  conv_.pad(input, padded);
  const int cw = conv_.conv_shape().width;
  rows.resize(2 * static_cast<std::size_t>(cw));
  T* r0 = rows.data();
  T* r1 = rows.data() + cw;
  std::size_t o = 0;
  for (int k = 0; k < out_shape_.channels; ++k) {
    for (int y = 0; y < out_shape_.height; ++y) {
      conv_.eval_row(padded.data(), k, 2 * y, r0, scratch);
      conv_.eval_row(padded.data(), k, 2 * y + 1, r1, scratch);
      for (int x = 0; x < out_shape_.width; ++x, ++o) {
        const T cand[4] = {r0[2 * x], r0[2 * x + 1], r1[2 * x], r1[2 * x + 1]};
        T best = cand[0];
        std::uint8_t best_i = 0;
        for (std::uint8_t w = 1; w < 4; ++w) {
          if (cand[w] > best) {
            best = cand[w];
            best_i = w;
          }
        }
        output[o] = best;
        argmax[o] = best_i;
      }
    }
  }
}

template <typename T>
void ConvBlock<T>::backward(std::span<const T> input, std::span<const std::uint8_t> argmax,
                            std::span<const T> grad_output, std::span<T> grad_input,
                            std::span<GateCoeffs<T>> dcoef) const {
  if (!pool_) {
    conv_.backward(input, grad_output, grad_input, dcoef);
    return;
  }
  if (argmax.size() != out_shape_.size() || grad_output.size() != out_shape_.size() ||
      dcoef.size() != conv_.params().size()) {
    throw ShapeError("conv block backward: shape mismatch");
  }
  std::size_t o = 0;
  for (int k = 0; k < out_shape_.channels; ++k) {
    for (int y = 0; y < out_shape_.height; ++y) {
      for (int x = 0; x < out_shape_.width; ++x) {
        const T up = grad_output[o];
        const int w = argmax[o];
        ++o;
        if (up == T(0)) continue;
        conv_.backward_placement(input, k, 2 * y + w / 2, 2 * x + w % 2, up, grad_input,
                                 dcoef);
      }
    }
  }
}

template <typename T>
T ConvBlock<T>::pre_pool_mean(std::span<const T> input) const {
  std::vector<T> conv_out(conv_.conv_shape().size());
  conv_.forward(input, conv_out);
  return std::accumulate(conv_out.begin(), conv_out.end(), T(0)) /
         static_cast<T>(conv_out.size());
}

// ---------------------------------------------------------------------------
// Random layer

RandomWiring sample_random_wiring(std::uint64_t seed, int inputs, int outputs) {
  if (inputs < 1 || outputs < 1) {
    throw std::invalid_argument("random wiring: sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  std::vector<int> slots;
  slots.reserve(2 * static_cast<std::size_t>(outputs));
  std::vector<int> perm(static_cast<std::size_t>(inputs));
  while (slots.size() < 2 * static_cast<std::size_t>(outputs)) {
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) {
      std::swap(perm[i - 1], perm[uniform_below(rng, i)]);
    }
    for (int p : perm) {
      if (slots.size() == 2 * static_cast<std::size_t>(outputs)) break;
      slots.push_back(p);
    }
  }
  RandomWiring w;
  w.inputs = inputs;
  w.outputs = outputs;
  w.a.assign(slots.begin(), slots.begin() + outputs);
  w.b.assign(slots.begin() + outputs, slots.end());
  // Pairs reading one input twice are swapped apart; the usage counts stay the same.
  if (inputs > 1) {
    const std::size_t n = w.a.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (w.a[i] != w.b[i]) continue;
      for (std::size_t step = 1; step < n; ++step) {
        const std::size_t j = (i + step) % n;
        if (w.b[j] != w.a[i] && w.a[j] != w.b[i]) {
          std::swap(w.b[i], w.b[j]);
          break;
        }
      }
    }
  }
  return w;
}

template <typename T>
RandomLayer<T>::RandomLayer(RandomWiring wiring)
    : wiring_(std::move(wiring)), params_(static_cast<std::size_t>(wiring_.outputs)) {
  if (wiring_.a.size() != static_cast<std::size_t>(wiring_.outputs) ||
      wiring_.b.size() != static_cast<std::size_t>(wiring_.outputs)) {
    throw ShapeError("random layer: wiring size mismatch");
  }
  for (int j = 0; j < wiring_.outputs; ++j) {
    const auto a = wiring_.a[static_cast<std::size_t>(j)];
    const auto b = wiring_.b[static_cast<std::size_t>(j)];
    if (a < 0 || a >= wiring_.inputs || b < 0 || b >= wiring_.inputs) {
      throw std::out_of_range("random layer: input index out of range");
    }
  }
}

template <typename T>
void RandomLayer<T>::forward(std::span<const T> input, std::span<T> output) const {
  if (input.size() != static_cast<std::size_t>(wiring_.inputs) ||
      output.size() != static_cast<std::size_t>(wiring_.outputs)) {
    throw ShapeError("random layer forward: shape mismatch");
  }
  const int* a = wiring_.a.data();
  const int* b = wiring_.b.data();
  for (std::size_t j = 0; j < output.size(); ++j) {
    output[j] = params_.coeffs(j)(input[static_cast<std::size_t>(a[j])],
                                  input[static_cast<std::size_t>(b[j])]);
  }
}

template <typename T>
void RandomLayer<T>::backward(std::span<const T> input, std::span<const T> grad_output,
                              std::span<T> grad_input, std::span<GateCoeffs<T>> dcoef) const {
  if (input.size() != static_cast<std::size_t>(wiring_.inputs) ||
      grad_output.size() != static_cast<std::size_t>(wiring_.outputs) ||
      dcoef.size() != params_.size()) {
    throw ShapeError("random layer backward: shape mismatch");
  }
  const bool want_input_grad = !grad_input.empty();
  for (std::size_t j = 0; j < grad_output.size(); ++j) {
    const T g = grad_output[j];
    if (g == T(0)) continue;
    const auto ia = static_cast<std::size_t>(wiring_.a[j]);
    const auto ib = static_cast<std::size_t>(wiring_.b[j]);
    const T a = input[ia];
    const T b = input[ib];
    auto& d = dcoef[j];
    d.c0 += g;
    d.c1 += g * a;
    d.c2 += g * b;
    d.c3 += g * a * b;
    if (want_input_grad) {
      const auto& c = params_.coeffs(j);
      grad_input[ia] += g * c.d_da(b);
      grad_input[ib] += g * c.d_db(a);
    }
  }
}

// ---------------------------------------------------------------------------
// GroupSum

int GroupSumHead::group_size(std::size_t inputs) const {
  if (classes < 1 || inputs == 0 || inputs % static_cast<std::size_t>(classes) != 0) {
    throw ShapeError("group sum: " + std::to_string(inputs) + " inputs not divisible into " +
                     std::to_string(classes) + " classes");
  }
  return static_cast<int>(inputs / static_cast<std::size_t>(classes));
}

template <typename T>
void GroupSumHead::forward(std::span<const T> input, std::span<T> scores) const {
  const int gs = group_size(input.size());
  if (scores.size() != static_cast<std::size_t>(classes)) {
    throw ShapeError("group sum: score buffer size mismatch");
  }
  for (int c = 0; c < classes; ++c) {
    T sum = 0;
    for (int i = 0; i < gs; ++i) sum += input[static_cast<std::size_t>(c * gs + i)];
    scores[static_cast<std::size_t>(c)] = sum / static_cast<T>(tau);
  }
}

template <typename T>
void GroupSumHead::backward(std::span<const T> grad_scores, std::span<T> grad_input) const {
  const int gs = group_size(grad_input.size());
  for (int c = 0; c < classes; ++c) {
    const T g = grad_scores[static_cast<std::size_t>(c)] / static_cast<T>(tau);
    for (int i = 0; i < gs; ++i) grad_input[static_cast<std::size_t>(c * gs + i)] += g;
  }
}

#define LGN_INSTANTIATE_LAYERS(T)                                                            \
  template class GateParams<T>;                                                              \
  template class TreeConvLayer<T>;                                                           \
  template class ConvBlock<T>;                                                               \
  template class RandomLayer<T>;                                                             \
  template void or_pool_forward<T>(Shape, std::span<const T>, std::span<T>,                  \
                                   std::span<std::uint8_t>);                                 \
  template void or_pool_backward<T>(Shape, std::span<const std::uint8_t>, std::span<const T>, \
                                    std::span<T>);                                           \
  template void GroupSumHead::forward<T>(std::span<const T>, std::span<T>) const;            \
  template void GroupSumHead::backward<T>(std::span<const T>, std::span<T>) const;

LGN_INSTANTIATE_LAYERS(float)
LGN_INSTANTIATE_LAYERS(double)

#undef LGN_INSTANTIATE_LAYERS

}  // namespace lgn
