#include "lgn/bitsim.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <stdexcept>

#include "parallel.hpp"

namespace lgn {

std::uint64_t PackedBatch::lane_mask(std::size_t block) const {
  const std::size_t lanes = std::min<std::size_t>(64, samples - block * 64);
  return lanes == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << lanes) - 1;
}

PackedBatch PackedBatch::pack(const BinaryEncodedSet& set, std::size_t begin, std::size_t end) {
  end = std::min(end, set.size());
  if (begin > end) throw std::out_of_range("pack: bad sample range");
  PackedBatch p;
  p.samples = end - begin;
  p.inputs = static_cast<std::uint32_t>(set.shape.size());
  p.words.assign(p.blocks() * p.inputs, 0);
  for (std::size_t s = 0; s < p.samples; ++s) {
    const auto bits = set.sample(begin + s);
    std::uint64_t* w = p.words.data() + (s / 64) * p.inputs;
    const std::uint64_t lane = std::uint64_t{1} << (s % 64);
    for (std::uint32_t i = 0; i < p.inputs; ++i) {
      if (bits[i]) w[i] |= lane;
    }
  }
  return p;
}

PackedBatch PackedBatch::pack(std::span<const std::vector<std::uint8_t>> samples, std::uint32_t inputs) {
  PackedBatch p;
  p.samples = samples.size();
  p.inputs = inputs;
  p.words.assign(p.blocks() * p.inputs, 0);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (samples[s].size() != inputs) throw std::invalid_argument("pack: sample width mismatch");
    std::uint64_t* w = p.words.data() + (s / 64) * p.inputs;
    for (std::uint32_t i = 0; i < inputs; ++i) {
      if (samples[s][i]) w[i] |= std::uint64_t{1} << (s % 64);
    }
  }
  return p;
}

std::vector<std::uint8_t> PackedBatch::unpack(std::size_t sample) const {
  if (sample >= samples) throw std::out_of_range("unpack: sample out of range");
  std::vector<std::uint8_t> out(inputs);
  const std::uint64_t* w = words.data() + (sample / 64) * inputs;
  for (std::uint32_t i = 0; i < inputs; ++i) out[i] = (w[i] >> (sample % 64)) & 1;
  return out;
}

void transpose64(std::uint64_t* a) {
  std::uint64_t m = 0x00000000FFFFFFFFULL;
  for (int j = 32; j != 0; j >>= 1, m ^= (m << j)) {
    for (int k = 0; k < 64; k = ((k | j) + 1) & ~j) {
      const std::uint64_t t = ((a[k] >> j) ^ a[k | j]) & m;
      a[k] ^= t << j;
      a[k | j] ^= t;
    }
  }
}

PackedEvaluator::PackedEvaluator(const HardNet& net) : net_(net) {
  validate(net_);
  if (net_.outputs.empty()) throw std::invalid_argument("network has no outputs");
  const std::uint32_t node_base = 2 + net_.num_inputs;
  auto slot = [&](const Ref& r) -> std::uint32_t {
    switch (r.kind) {
      case Ref::Kind::kConst: return r.index;
      case Ref::Kind::kInput: return 2 + r.index;
      case Ref::Kind::kNode: return node_base + r.index;
    }
    return 0;
  };
  ops_.reserve(net_.nodes.size());
  for (const auto& n : net_.nodes) ops_.push_back({n.gate, slot(n.a), slot(n.b)});
  for (const auto& o : net_.outputs) out_.push_back(slot(o));
}

void PackedEvaluator::run_block(const PackedBatch& batch, std::size_t block,
                                std::vector<std::uint64_t>& v) const {
  if (batch.inputs != net_.num_inputs) {
    throw std::invalid_argument("batch has " + std::to_string(batch.inputs) + " inputs, network " +
                                std::to_string(net_.num_inputs));
  }
  v.resize(2 + net_.num_inputs + ops_.size());
  v[0] = 0;
  v[1] = ~std::uint64_t{0};
  std::copy_n(batch.words.begin() + static_cast<std::ptrdiff_t>(block * batch.inputs), batch.inputs,
              v.begin() + 2);
  std::uint64_t* out = v.data() + 2 + net_.num_inputs;
  const std::uint64_t* val = v.data();
  for (const Op& op : ops_) {
    const std::uint64_t a = val[op.a];
    const std::uint64_t b = val[op.b];
    std::uint64_t r = 0;
    switch (op.gate) {
      case 0: r = 0; break;
      case 1: r = a & b; break;
      case 2: r = a & ~b; break;
      case 3: r = a; break;
      case 4: r = ~a & b; break;
      case 5: r = b; break;
      case 6: r = a ^ b; break;
      case 7: r = a | b; break;
      case 8: r = ~(a | b); break;
      case 9: r = ~(a ^ b); break;
      case 10: r = ~b; break;
      case 11: r = a | ~b; break;
      case 12: r = ~a; break;
      case 13: r = ~a | b; break;
      case 14: r = ~(a & b); break;
      default: r = ~std::uint64_t{0}; break;
    }
    *out++ = r;
  }
}

std::vector<std::uint64_t> PackedEvaluator::output_words(const PackedBatch& batch,
                                                         std::size_t block) const {
  std::vector<std::uint64_t> v;
  run_block(batch, block, v);
  std::vector<std::uint64_t> out;
  out.reserve(out_.size());
  const std::uint64_t mask = batch.lane_mask(block);
  for (auto s : out_) out.push_back(v[s] & mask);
  return out;
}

void PackedEvaluator::count_block(const std::vector<std::uint64_t>& v, std::size_t block,
                                  std::size_t samples, std::span<int> counts) const {
  const std::size_t classes = static_cast<std::size_t>(net_.classes);
  const std::size_t g = net_.group_size();
  const std::size_t lanes = std::min<std::size_t>(64, samples - block * 64);
  std::uint64_t tile[64];
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t start = 0; start < g; start += 64) {
      const std::size_t n = std::min<std::size_t>(64, g - start);
      for (std::size_t i = 0; i < 64; ++i) tile[i] = i < n ? v[out_[c * g + start + i]] : 0;
      transpose64(tile);
      for (std::size_t s = 0; s < lanes; ++s) {
        counts[(block * 64 + s) * classes + c] += std::popcount(tile[s]);
      }
    }
  }
}

std::vector<int> PackedEvaluator::class_counts(const PackedBatch& batch, int threads) const {
  const std::size_t classes = static_cast<std::size_t>(net_.classes);
  std::vector<int> counts(batch.samples * classes, 0);
  detail::parallel_chunks(batch.blocks(), detail::resolve_threads(threads),
                          [&](std::size_t, std::size_t begin, std::size_t end) {
                            std::vector<std::uint64_t> v;
                            for (std::size_t b = begin; b < end; ++b) {
                              run_block(batch, b, v);
                              count_block(v, b, batch.samples, counts);
                            }
                          });
  return counts;
}

std::vector<int> PackedEvaluator::predict(const PackedBatch& batch, int threads) const {
  const auto counts = class_counts(batch, threads);
  const std::size_t classes = static_cast<std::size_t>(net_.classes);
  std::vector<int> pred(batch.samples);
  for (std::size_t s = 0; s < batch.samples; ++s) {
    const auto* row = counts.data() + s * classes;
    pred[s] = static_cast<int>(std::max_element(row, row + classes) - row);
  }
  return pred;
}

double PackedEvaluator::accuracy(const BinaryEncodedSet& set, int threads) const {
  if (set.size() == 0) return 0.0;
  const auto pred = predict(PackedBatch::pack(set), threads);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == set.labels[i];
  return double(correct) / double(set.size());
}

BenchRecord bench_packed(const std::string& name, const HardNet& net, const PackedBatch& batch,
                         int threads, int repeats) {
  const PackedEvaluator eval(net);
  BenchRecord r;
  r.net = name;
  r.gates = net.nodes.size();
  r.samples = batch.samples;
  r.threads = detail::resolve_threads(threads);
  double best = 0;
  for (int i = 0; i < std::max(1, repeats); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto counts = eval.class_counts(batch, r.threads);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (i == 0 || s < best) best = s;
    if (counts.size() != batch.samples * static_cast<std::size_t>(net.classes)) {
      throw std::logic_error("bench: unexpected result size");
    }
  }
  r.seconds = best;
  r.samples_per_s = best > 0 ? double(batch.samples) / best : 0.0;
  return r;
}

void write_bench_header(std::ostream& out) { out << "net,gates,samples,threads,seconds,samples_per_s\n"; }

void write_bench_row(std::ostream& out, const BenchRecord& r) {
  out << r.net << ',' << r.gates << ',' << r.samples << ',' << r.threads << ',' << r.seconds << ','
      << r.samples_per_s << '\n';
}

}  // namespace lgn
