#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "lgn/layers.hpp"

using namespace lgn;

namespace {

ConnectionTable single_kernel_table(int depth, std::vector<int> rows, std::vector<int> cols,
                                    int rh, int rw) {
  ConnectionTable t;
  t.in_channels = 1;
  t.receptive_h = rh;
  t.receptive_w = rw;
  t.depth = depth;
  t.kernels = 1;
  t.channel.assign(rows.size(), 0);
  t.row = std::move(rows);
  t.col = std::move(cols);
  return t;
}

template <typename T>
void set_hard_gates(GateParams<T>& params, const std::vector<int>& gates) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    GateDistribution<T> d;
    d.z[static_cast<std::size_t>(gates[i % gates.size()])] = T(1);
    params.set_distribution(i, d);
  }
  params.prepare_hard();
}

// Reference evaluator: reads leaves straight from the connection table and folds the tree
// level by level with relaxed_gate()/softmax, independent of the layer's heap layout.
double reference_tree(const TreeConvLayer<double>& layer, const std::vector<double>& input,
                      int k, int y, int x, bool hard) {
  const auto& t = layer.connections();
  const Shape in = layer.input_shape();
  std::vector<double> level;
  for (int l = 0; l < t.leaves(); ++l) {
    const std::size_t i = t.at(k, l);
    const int iy = y - layer.padding() + t.row[i];
    const int ix = x - layer.padding() + t.col[i];
    const bool inside = iy >= 0 && ix >= 0 && iy < in.height && ix < in.width;
    level.push_back(inside ? input[(static_cast<std::size_t>(t.channel[i]) * in.height + iy) *
                                       in.width + ix]
                           : 0.0);
  }
  std::size_t node = static_cast<std::size_t>(k) * t.nodes_per_kernel();
  while (level.size() > 1) {
    std::vector<double> next;
    for (std::size_t j = 0; j + 1 < level.size(); j += 2, ++node) {
      const auto d = layer.params().distribution(node);
      double v = 0;
      if (hard) {
        v = relaxed_gate(layer.params().chosen_gate(node), level[j], level[j + 1]);
      } else {
        const auto p = d.softmax();
        for (int g = 0; g < kNumGates; ++g) {
          v += p.p[static_cast<std::size_t>(g)] * relaxed_gate(g, level[j], level[j + 1]);
        }
      }
      next.push_back(v);
    }
    level = std::move(next);
  }
  return level[0];
}

// Relative error with a 1e-3 floor on the denominator: near-zero coordinates are dominated
// by finite-difference roundoff.
double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = 0.05,
                                  double hi = 0.95) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void randomize(GateParams<double>& params, std::mt19937_64& rng) {
  params.init_gaussian(rng);
}

}  // namespace

TEST_CASE("uniform_below is in range and covers all values") {
  std::mt19937_64 rng(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = uniform_below(rng, 7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("tree conv: hard AND tree over a 2x2 window") {
  TreeConvLayer<double> layer(single_kernel_table(2, {0, 0, 1, 1}, {0, 1, 0, 1}, 2, 2), 2, 2, 0);
  set_hard_gates(layer.params(), {gate::kAnd});
  std::vector<double> in{1, 1, 1, 0};
  std::vector<double> out(1);
  layer.forward(in, out);
  CHECK(out[0] == 0.0);
  in = {1, 1, 1, 1};
  layer.forward(in, out);
  CHECK(out[0] == 1.0);
}

TEST_CASE("tree conv: pass-through tree echoes the first leaf") {
  std::mt19937_64 rng(2);
  auto table = sample_connections(9, 1, 3, 3, 1, 2, 0, 1);
  TreeConvLayer<double> layer(table, 5, 5, 1);
  set_hard_gates(layer.params(), {gate::kA});
  const auto in = random_vector(rng, 25);
  std::vector<double> out(layer.conv_shape().size());
  layer.forward(in, out);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      const auto src = layer.leaf_source(0, 0, y, x);
      CHECK(out[static_cast<std::size_t>(y * 5 + x)] ==
            (src < 0 ? 0.0 : in[static_cast<std::size_t>(src)]));
    }
  }

  // Backward with upstream ones scatters ones onto leaf-0 positions only.
  std::vector<double> up(out.size(), 1.0), gin(in.size(), 0.0);
  std::vector<GateCoeffs<double>> dcoef(layer.params().size());
  layer.backward(in, up, gin, dcoef);
  std::vector<double> expected(in.size(), 0.0);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      const auto src = layer.leaf_source(0, 0, y, x);
      if (src >= 0) expected[static_cast<std::size_t>(src)] += 1.0;
    }
  }
  CHECK(gin == expected);
}

TEST_CASE("tree conv matches the per-placement reference evaluator") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int depth = 1 + trial % 3;
    const int pad = trial % 2;
    auto table = sample_connections(100 + trial, 2, 3, 3, 3, depth, trial % 3 == 0 ? 2 : 0, 1);
    TreeConvLayer<double> layer(table, 4, 4, pad);
    const bool hard = trial % 2 == 0;
    randomize(layer.params(), rng);
    if (hard) layer.params().prepare_hard();
    std::vector<double> in = random_vector(rng, layer.input_shape().size(), 0, 1);
    if (hard) {
      for (auto& v : in) v = v < 0.5 ? 0.0 : 1.0;
    }
    std::vector<double> out(layer.conv_shape().size());
    layer.forward(in, out);
    const Shape s = layer.conv_shape();
    for (int k = 0; k < s.channels; ++k) {
      for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
          const double got = out[(static_cast<std::size_t>(k) * s.height + y) * s.width + x];
          const double want = reference_tree(layer, in, k, y, x, hard);
          if (hard) {
            CHECK(got == want);
          } else {
            CHECK(std::abs(got - want) < 1e-12);
          }
        }
      }
    }
  }
}

TEST_CASE("tree conv gradients match finite differences") {
  std::mt19937_64 rng(4);
  const double h = 1e-5;
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    // 3x3 input with a 3x3 receptive field and no padding: a single placement.
    auto table = sample_connections(200 + trial, 1, 3, 3, 1, 2 + trial % 2, 0, 1);
    TreeConvLayer<double> layer(table, 3, 3, 0);
    randomize(layer.params(), rng);
    const auto in = random_vector(rng, 9);
    const double up = 0.7;
    std::vector<double> gin(9, 0.0);
    std::vector<GateCoeffs<double>> dcoef(layer.params().size());
    std::vector<double> upv{up};
    layer.backward(in, upv, gin, dcoef);
    std::vector<double> dz(layer.params().logits().size(), 0.0);
    layer.params().accumulate_logit_grad(dcoef, dz);

    auto loss = [&](const std::vector<double>& x) {
      std::vector<double> out(1);
      layer.forward(x, out);
      return up * out[0];
    };
    for (std::size_t i = 0; i < in.size(); ++i) {
      auto p = in, m = in;
      p[i] += h;
      m[i] -= h;
      const double fd = (loss(p) - loss(m)) / (2 * h);
      worst = std::max(worst, rel_err(gin[i], fd));
    }
    auto logits = layer.params().logits();
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double orig = logits[i];
      logits[i] = orig + h;
      layer.params().prepare();
      const double fp = loss(in);
      logits[i] = orig - h;
      layer.params().prepare();
      const double fm = loss(in);
      logits[i] = orig;
      layer.params().prepare();
      const double fd = (fp - fm) / (2 * h);
      worst = std::max(worst, rel_err(dz[i], fd));
    }
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("shared kernel gradient is the sum of per-placement gradients") {
  std::mt19937_64 rng(5);
  auto table = sample_connections(7, 1, 2, 2, 1, 2, 0, 1);
  // 2x3 input, 2x2 field, no padding: two placements side by side.
  TreeConvLayer<double> layer(table, 2, 3, 0);
  randomize(layer.params(), rng);
  const auto in = random_vector(rng, 6);
  const std::vector<double> up{0.3, -1.2};

  std::vector<double> gin_full(6, 0.0);
  std::vector<GateCoeffs<double>> full(layer.params().size());
  layer.backward(in, up, gin_full, full);

  std::vector<double> gin_sum(6, 0.0);
  std::vector<GateCoeffs<double>> parts(layer.params().size());
  for (int x = 0; x < 2; ++x) {
    layer.backward_placement(in, 0, 0, x, up[static_cast<std::size_t>(x)], gin_sum, parts);
  }
  for (std::size_t i = 0; i < full.size(); ++i) {
    CHECK(full[i].c0 == doctest::Approx(parts[i].c0));
    CHECK(full[i].c1 == doctest::Approx(parts[i].c1));
    CHECK(full[i].c2 == doctest::Approx(parts[i].c2));
    CHECK(full[i].c3 == doctest::Approx(parts[i].c3));
  }

  // Explicit unrolling: each placement alone through its own single-placement layer copy.
  std::vector<double> dz_full(layer.params().logits().size(), 0.0);
  layer.params().accumulate_logit_grad(full, dz_full);
  std::vector<double> dz_sum(dz_full.size(), 0.0);
  for (int x = 0; x < 2; ++x) {
    std::vector<GateCoeffs<double>> one(layer.params().size());
    std::vector<double> gin(6, 0.0);
    layer.backward_placement(in, 0, 0, x, up[static_cast<std::size_t>(x)], gin, one);
    layer.params().accumulate_logit_grad(one, dz_sum);
  }
  for (std::size_t i = 0; i < dz_full.size(); ++i) {
    CHECK(dz_full[i] == doctest::Approx(dz_sum[i]).epsilon(1e-12));
  }
}

TEST_CASE("tree conv rejects mismatched input") {
  auto table = sample_connections(1, 2, 3, 3, 2, 2, 0, 1);
  TreeConvLayer<double> layer(table, 4, 4, 1);
  std::vector<double> in(4 * 4), out(layer.conv_shape().size());
  CHECK_THROWS_AS(layer.forward(in, out), ShapeError);
  CHECK_THROWS_AS(TreeConvLayer<double>(table, 1, 1, 0), ShapeError);
}

TEST_CASE("or pool forward and backward") {
  const Shape s{1, 2, 2};
  std::vector<double> in{0.2, 0.9, 0.4, 0.1}, out(1);
  std::vector<std::uint8_t> idx(1);
  or_pool_forward<double>(s, in, out, idx);
  CHECK(out[0] == 0.9);
  CHECK(idx[0] == 1);

  in = {0, 0, 0, 0};
  or_pool_forward<double>(s, in, out, idx);
  CHECK(out[0] == 0.0);

  // Exhaustive over boolean windows: max equals logical or.
  for (int pattern = 0; pattern < 16; ++pattern) {
    for (int i = 0; i < 4; ++i) in[static_cast<std::size_t>(i)] = (pattern >> i) & 1;
    or_pool_forward<double>(s, in, out, idx);
    CHECK(out[0] == (pattern != 0 ? 1.0 : 0.0));
  }

  idx[0] = 3;
  std::vector<double> up{1.0}, gin(4, 0.0);
  or_pool_backward<double>(s, idx, up, gin);
  CHECK(gin == std::vector<double>{0, 0, 0, 1});

  in = {0.5, 0.5, 0.3, 0.1};
  or_pool_forward<double>(s, in, out, idx);
  CHECK(idx[0] == 0);
  std::fill(gin.begin(), gin.end(), 0.0);
  or_pool_backward<double>(s, idx, up, gin);
  CHECK(gin == std::vector<double>{1, 0, 0, 0});

  CHECK_THROWS_AS(or_pool_output_shape({1, 3, 2}), ShapeError);
  std::vector<std::uint8_t> stale(2);
  CHECK_THROWS_AS(or_pool_backward<double>(s, stale, up, gin), ShapeError);
}

TEST_CASE("or pool gradient matches finite differences away from ties") {
  std::mt19937_64 rng(8);
  const Shape s{2, 4, 4};
  const auto in = random_vector(rng, s.size());
  const auto up = random_vector(rng, 8, -1, 1);
  std::vector<double> out(8), gin(s.size(), 0.0);
  std::vector<std::uint8_t> idx(8);
  or_pool_forward<double>(s, in, out, idx);
  or_pool_backward<double>(s, idx, up, gin);
  const double h = 1e-7;
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto p = in, m = in;
    p[i] += h;
    m[i] -= h;
    std::vector<double> op(8), om(8);
    or_pool_forward<double>(s, p, op, idx);
    or_pool_forward<double>(s, m, om, idx);
    double fd = 0;
    for (std::size_t o = 0; o < 8; ++o) fd += up[o] * (op[o] - om[o]) / (2 * h);
    CHECK(std::abs(fd - gin[i]) <= 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("fused conv block equals conv followed by pool") {
  std::mt19937_64 rng(9);
  auto table = sample_connections(11, 3, 3, 3, 4, 3, 2, 1);
  TreeConvLayer<double> conv(table, 6, 6, 1);
  randomize(conv.params(), rng);
  ConvBlock<double> block(conv, true);
  CHECK(block.output_shape() == Shape{4, 3, 3});

  const auto in = random_vector(rng, conv.input_shape().size());
  std::vector<double> conv_out(conv.conv_shape().size()), pooled(block.output_shape().size());
  std::vector<std::uint8_t> idx(pooled.size());
  conv.forward(in, conv_out);
  or_pool_forward<double>(conv.conv_shape(), conv_out, pooled, idx);

  std::vector<double> fused(pooled.size());
  std::vector<std::uint8_t> fidx(pooled.size());
  block.forward(in, fused, fidx);
  CHECK(fused == pooled);
  CHECK(fidx == idx);

  const auto up = random_vector(rng, pooled.size(), -1, 1);
  std::vector<double> gconv(conv_out.size(), 0.0), gin_a(in.size(), 0.0), gin_b(in.size(), 0.0);
  std::vector<GateCoeffs<double>> da(conv.params().size()), db(conv.params().size());
  or_pool_backward<double>(conv.conv_shape(), idx, up, gconv);
  conv.backward(in, gconv, gin_a, da);
  block.backward(in, fidx, up, gin_b, db);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(gin_a[i] == doctest::Approx(gin_b[i]));
  for (std::size_t i = 0; i < da.size(); ++i) CHECK(da[i].c3 == doctest::Approx(db[i].c3));
}

TEST_CASE("random layer") {
  RandomWiring w{4, 3, {0, 1, 2}, {3, 3, 0}};
  RandomLayer<double> layer(w);
  set_hard_gates(layer.params(), {gate::kA});
  std::vector<double> in{0.1, 0.2, 0.3, 0.4}, out(3);
  layer.forward(in, out);
  CHECK(out == std::vector<double>{0.1, 0.2, 0.3});

  RandomLayer<double> single(RandomWiring{2, 1, {0}, {1}});
  set_hard_gates(single.params(), {gate::kXor});
  std::vector<double> ones{1, 1}, o1(1);
  single.forward(ones, o1);
  CHECK(o1[0] == 0.0);

  CHECK_THROWS_AS(RandomLayer<double>(RandomWiring{2, 1, {0}, {5}}), std::out_of_range);
}

TEST_CASE("random layer gradients match finite differences") {
  std::mt19937_64 rng(10);
  RandomLayer<double> layer(sample_random_wiring(3, 12, 8));
  randomize(layer.params(), rng);
  const auto in = random_vector(rng, 12);
  const auto up = random_vector(rng, 8, -1, 1);
  std::vector<double> gin(12, 0.0);
  std::vector<GateCoeffs<double>> dcoef(8);
  layer.backward(in, up, gin, dcoef);
  std::vector<double> dz(8 * kNumGates, 0.0);
  layer.params().accumulate_logit_grad(dcoef, dz);
  auto loss = [&](const std::vector<double>& x) {
    std::vector<double> out(8);
    layer.forward(x, out);
    double s = 0;
    for (std::size_t i = 0; i < 8; ++i) s += up[i] * out[i];
    return s;
  };
  const double h = 1e-5;
  double worst = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto p = in, m = in;
    p[i] += h;
    m[i] -= h;
    const double fd = (loss(p) - loss(m)) / (2 * h);
    worst = std::max(worst, rel_err(gin[i], fd));
  }
  auto logits = layer.params().logits();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double orig = logits[i];
    logits[i] = orig + h;
    layer.params().prepare();
    const double fp = loss(in);
    logits[i] = orig - h;
    layer.params().prepare();
    const double fm = loss(in);
    logits[i] = orig;
    layer.params().prepare();
    const double fd = (fp - fm) / (2 * h);
    worst = std::max(worst, rel_err(dz[i], fd));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("random wiring uses inputs evenly") {
  const auto w = sample_random_wiring(5, 10, 10);
  std::vector<int> uses(10, 0);
  for (int i : w.a) ++uses[static_cast<std::size_t>(i)];
  for (int u : uses) CHECK(u == 1);
  CHECK(sample_random_wiring(5, 10, 10) == w);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (const auto& [in, out] : {std::pair{2, 4}, std::pair{4, 4}, std::pair{3, 17}, std::pair{100, 60}}) {
      const auto r = sample_random_wiring(seed, in, out);
      std::vector<int> a_uses(static_cast<std::size_t>(in)), b_uses(static_cast<std::size_t>(in));
      for (int i = 0; i < out; ++i) {
        CHECK(r.a[static_cast<std::size_t>(i)] != r.b[static_cast<std::size_t>(i)]);
        ++a_uses[static_cast<std::size_t>(r.a[static_cast<std::size_t>(i)])];
        ++b_uses[static_cast<std::size_t>(r.b[static_cast<std::size_t>(i)])];
      }
      std::vector<int> total(static_cast<std::size_t>(in));
      for (int i = 0; i < in; ++i) {
        total[static_cast<std::size_t>(i)] = a_uses[static_cast<std::size_t>(i)] + b_uses[static_cast<std::size_t>(i)];
      }
      const auto [lo, hi] = std::minmax_element(total.begin(), total.end());
      CHECK(*hi - *lo <= 1);
    }
  }
  CHECK(sample_random_wiring(1, 1, 3).a == std::vector<int>{0, 0, 0});
}

TEST_CASE("group sum") {
  GroupSumHead head{2, 2.0};
  std::vector<double> in{1, 0, 1, 1, 0, 0, 0, 1}, scores(2);
  head.forward<double>(in, scores);
  CHECK(scores[0] == 1.5);
  CHECK(scores[1] == 0.5);

  GroupSumHead mnist_s{10, 6.5};
  std::vector<double> ones(10 * 1024, 1.0), s10(10);
  mnist_s.forward<double>(ones, s10);
  for (double s : s10) {
    CHECK(s == doctest::Approx(1024 / 6.5));
    CHECK(std::lround(s) == 158);
  }
  std::vector<double> zeros(10 * 1024, 0.0);
  mnist_s.forward<double>(zeros, s10);
  for (double s : s10) CHECK(s == 0.0);

  std::vector<double> gs{1.0, -2.0}, gin(8, 0.0);
  head.backward<double>(gs, gin);
  CHECK(gin == std::vector<double>{0.5, 0.5, 0.5, 0.5, -1, -1, -1, -1});

  std::vector<double> bad(7);
  CHECK_THROWS_AS(head.forward<double>(bad, scores), ShapeError);
}

TEST_CASE("sample_connections invariants") {
  const auto a = sample_connections(123, 8, 3, 3, 16, 3, 2, 1);
  CHECK(a == sample_connections(123, 8, 3, 3, 16, 3, 2, 1));
  CHECK_FALSE(a == sample_connections(124, 8, 3, 3, 16, 3, 2, 1));
  for (int k = 0; k < a.kernels; ++k) {
    std::set<int> ch;
    for (int l = 0; l < a.leaves(); ++l) {
      const auto i = a.at(k, l);
      ch.insert(a.channel[i]);
      CHECK(a.row[i] >= 0);
      CHECK(a.row[i] < 3);
      CHECK(a.col[i] >= 0);
      CHECK(a.col[i] < 3);
    }
    CHECK(ch.size() <= 2);
  }

  // 64 -> 128 channels in 4 groups: group g of kernels reads channels [16g, 16g+16).
  const auto g = sample_connections(5, 64, 3, 3, 128, 3, 2, 4);
  for (int k = 0; k < 128; ++k) {
    const int group = k / 32;
    for (int l = 0; l < g.leaves(); ++l) {
      const int c = g.channel[g.at(k, l)];
      CHECK(c >= 16 * group);
      CHECK(c < 16 * group + 16);
    }
  }

  // A single input channel degrades the 2-channel restriction to one channel.
  const auto one = sample_connections(5, 1, 3, 3, 4, 3, 2, 1);
  for (int c : one.channel) CHECK(c == 0);

  CHECK_THROWS(sample_connections(5, 6, 3, 3, 8, 3, 2, 4));
  CHECK_THROWS(sample_connections(5, 0, 3, 3, 8, 3, 2, 1));
}

TEST_CASE("hard parameters on boolean inputs give boolean outputs equal to truth tables") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> bit(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    RandomLayer<double> layer(sample_random_wiring(static_cast<std::uint64_t>(trial), 16, 16));
    randomize(layer.params(), rng);
    layer.params().prepare_hard();
    std::vector<double> in(16), out(16);
    for (auto& v : in) v = bit(rng);
    layer.forward(in, out);
    for (std::size_t j = 0; j < 16; ++j) {
      const bool want = truth_table(layer.params().chosen_gate(j),
                                    in[static_cast<std::size_t>(layer.wiring().a[j])] != 0,
                                    in[static_cast<std::size_t>(layer.wiring().b[j])] != 0);
      CHECK(out[j] == (want ? 1.0 : 0.0));
    }
  }
}
