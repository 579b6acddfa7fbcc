#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lgn/data.hpp"
#include "lgn/discrete.hpp"

namespace lgn {

/// Samples packed 64 per machine word: bit s of words[block * inputs + i] is input i of
/// sample block * 64 + s.
struct PackedBatch {
  std::size_t samples = 0;
  std::uint32_t inputs = 0;
  std::vector<std::uint64_t> words;

  std::size_t blocks() const { return (samples + 63) / 64; }
  /// Valid lanes of a block.
  std::uint64_t lane_mask(std::size_t block) const;

  static PackedBatch pack(const BinaryEncodedSet& set, std::size_t begin = 0,
                          std::size_t end = static_cast<std::size_t>(-1));
  static PackedBatch pack(std::span<const std::vector<std::uint8_t>> samples, std::uint32_t inputs);
  std::vector<std::uint8_t> unpack(std::size_t sample) const;
};

/// In-place transpose of a 64x64 bit matrix (row r = words[r], column c = bit c).
void transpose64(std::uint64_t* words);

/// Bit-parallel evaluator of a HardNet.
class PackedEvaluator {
 public:
  explicit PackedEvaluator(const HardNet& net);

  const HardNet& net() const { return net_; }

  /// Per-sample class popcounts, samples x classes row-major.
  std::vector<int> class_counts(const PackedBatch& batch, int threads = 1) const;
  /// Output words of one block, one word per output.
  std::vector<std::uint64_t> output_words(const PackedBatch& batch, std::size_t block) const;

  /// argmax of the class counts, lowest class on ties.
  std::vector<int> predict(const PackedBatch& batch, int threads = 1) const;
  double accuracy(const BinaryEncodedSet& set, int threads = 1) const;

 private:
  struct Op {
    std::uint8_t gate;
    std::uint32_t a;
    std::uint32_t b;
  };
  HardNet net_;
  std::vector<Op> ops_;            // value slots: 0 = const0, 1 = const1, inputs, nodes
  std::vector<std::uint32_t> out_;  // value slot of each output

  void run_block(const PackedBatch& batch, std::size_t block, std::vector<std::uint64_t>& values) const;
  void count_block(const std::vector<std::uint64_t>& values, std::size_t block, std::size_t samples,
                   std::span<int> counts) const;
};

struct BenchRecord {
  std::string net;
  std::size_t gates = 0;
  std::size_t samples = 0;
  int threads = 1;
  double seconds = 0.0;
  double samples_per_s = 0.0;
};

/// Times class_counts() over the batch (best of `repeats`).
BenchRecord bench_packed(const std::string& name, const HardNet& net, const PackedBatch& batch,
                         int threads, int repeats = 3);

void write_bench_header(std::ostream& out);
void write_bench_row(std::ostream& out, const BenchRecord& r);

}  // namespace lgn
