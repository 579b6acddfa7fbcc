#include "lgn/discrete.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace lgn {

namespace {

std::string ref_str(const Ref& r) {
  switch (r.kind) {
    case Ref::Kind::kInput: return "input " + std::to_string(r.index);
    case Ref::Kind::kNode: return "node " + std::to_string(r.index);
    case Ref::Kind::kConst: return "const " + std::to_string(r.index);
  }
  return "?";
}

void check_ref(const HardNet& net, const Ref& r, std::size_t limit, const std::string& where) {
  const bool ok = (r.kind == Ref::Kind::kInput && r.index < net.num_inputs) ||
                  (r.kind == Ref::Kind::kNode && r.index < limit) ||
                  (r.kind == Ref::Kind::kConst && r.index <= 1);
  if (!ok) throw std::invalid_argument(where + ": invalid reference " + ref_str(r));
}

}  // namespace

void validate(const HardNet& net) {
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    const auto& n = net.nodes[i];
    if (n.gate >= kNumGates) throw std::invalid_argument("node " + std::to_string(i) + ": bad gate");
    check_ref(net, n.a, i, "node " + std::to_string(i));
    check_ref(net, n.b, i, "node " + std::to_string(i));
  }
  for (const auto& o : net.outputs) check_ref(net, o, net.nodes.size(), "output");
  if (net.classes <= 0 || net.outputs.size() % static_cast<std::size_t>(net.classes) != 0) {
    throw std::invalid_argument("outputs (" + std::to_string(net.outputs.size()) +
                                ") not divisible into " + std::to_string(net.classes) + " classes");
  }
}

// ---------------------------------------------------------------------------

template <typename T>
HardNet discretize(const Network<T>& net) {
  HardNet out;
  out.num_inputs = static_cast<std::uint32_t>(net.input_size());
  out.classes = net.classes();
  out.tau = net.head().tau;
  std::vector<Ref> cur(net.input_size());
  for (std::uint32_t i = 0; i < out.num_inputs; ++i) cur[i] = Ref::input(i);

  auto add = [&](int gate, Ref a, Ref b, std::uint16_t layer) {
    out.nodes.push_back({static_cast<std::uint8_t>(gate), a, b, layer});
    return Ref::node(static_cast<std::uint32_t>(out.nodes.size() - 1));
  };
  auto or4 = [&](const Ref (&w)[4], std::uint16_t layer) {
    const Ref top = add(gate::kOr, w[0], w[1], layer);
    const Ref bottom = add(gate::kOr, w[2], w[3], layer);
    return add(gate::kOr, top, bottom, layer);
  };
  auto new_layer = [&](const std::string& name) {
    out.layer_names.push_back(name);
    return static_cast<std::uint16_t>(out.layer_names.size() - 1);
  };

  const auto& stages = net.stages();
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string idx = std::to_string(s);
    std::vector<Ref> next;
    if (const auto* block = std::get_if<ConvBlock<T>>(&stages[s])) {
      const auto& conv = block->conv();
      const auto& params = conv.params();
      const int leaves = conv.connections().leaves();
      const int nodes = leaves - 1;
      const Shape cs = conv.conv_shape();
      const std::uint16_t layer = new_layer("tree_conv_" + idx);
      const std::uint16_t pool_layer = block->pooled() ? new_layer("or_pool_" + idx) : layer;
      auto tree = [&](int k, int y, int x) {
        std::vector<Ref> v(static_cast<std::size_t>(2 * leaves - 1));
        for (int l = 0; l < leaves; ++l) {
          const auto src = conv.leaf_source(k, l, y, x);
          v[static_cast<std::size_t>(l)] = src < 0 ? Ref::constant(false) : cur[static_cast<std::size_t>(src)];
        }
        const std::size_t base = static_cast<std::size_t>(k) * static_cast<std::size_t>(nodes);
        for (int j = 0; j < nodes; ++j) {
          v[static_cast<std::size_t>(leaves + j)] =
              add(params.chosen_gate(base + static_cast<std::size_t>(j)),
                  v[static_cast<std::size_t>(2 * j)], v[static_cast<std::size_t>(2 * j + 1)], layer);
        }
        return v.back();
      };
      if (!block->pooled()) {
        for (int k = 0; k < cs.channels; ++k) {
          for (int y = 0; y < cs.height; ++y) {
            for (int x = 0; x < cs.width; ++x) next.push_back(tree(k, y, x));
          }
        }
      } else {
        const Shape os = block->output_shape();
        for (int k = 0; k < os.channels; ++k) {
          for (int y = 0; y < os.height; ++y) {
            for (int x = 0; x < os.width; ++x) {
              const Ref w[4] = {tree(k, 2 * y, 2 * x), tree(k, 2 * y, 2 * x + 1),
                                tree(k, 2 * y + 1, 2 * x), tree(k, 2 * y + 1, 2 * x + 1)};
              next.push_back(or4(w, pool_layer));
            }
          }
        }
      }
    } else if (const auto* pool = std::get_if<PoolStage>(&stages[s])) {
      const std::uint16_t layer = new_layer("or_pool_" + idx);
      const Shape in = pool->in;
      const Shape os = pool->out;
      auto at = [&](int c, int y, int x) {
        return cur[(static_cast<std::size_t>(c) * in.height + y) * in.width + x];
      };
      for (int c = 0; c < os.channels; ++c) {
        for (int y = 0; y < os.height; ++y) {
          for (int x = 0; x < os.width; ++x) {
            const Ref w[4] = {at(c, 2 * y, 2 * x), at(c, 2 * y, 2 * x + 1), at(c, 2 * y + 1, 2 * x),
                              at(c, 2 * y + 1, 2 * x + 1)};
            next.push_back(or4(w, layer));
          }
        }
      }
    } else {
      const auto& rl = std::get<RandomLayer<T>>(stages[s]);
      const std::uint16_t layer = new_layer("random_" + idx);
      const auto& w = rl.wiring();
      for (int j = 0; j < w.outputs; ++j) {
        next.push_back(add(rl.params().chosen_gate(static_cast<std::size_t>(j)),
                           cur[static_cast<std::size_t>(w.a[static_cast<std::size_t>(j)])],
                           cur[static_cast<std::size_t>(w.b[static_cast<std::size_t>(j)])], layer));
      }
    }
    cur = std::move(next);
  }
  out.outputs = std::move(cur);
  validate(out);
  return out;
}

template HardNet discretize(const Network<float>&);
template HardNet discretize(const Network<double>&);

// ---------------------------------------------------------------------------
// Simplification

namespace {

struct NodeKey {
  std::uint8_t gate;
  Ref a;
  Ref b;
  bool operator==(const NodeKey&) const = default;
};

struct NodeKeyHash {
  std::size_t operator()(const NodeKey& k) const {
    auto pack = [](const Ref& r) {
      return (std::uint64_t(static_cast<std::uint8_t>(r.kind)) << 32) | r.index;
    };
    std::uint64_t h = pack(k.a) * 0x9e3779b97f4a7c15ULL;
    h ^= pack(k.b) + 0x632be59bd9b4e019ULL + (h << 6) + (h >> 2);
    h ^= std::uint64_t(k.gate) * 0xbf58476d1ce4e5b9ULL;
    return static_cast<std::size_t>(h ^ (h >> 31));
  }
};

class Builder {
 public:
  std::vector<HardNode> nodes;

  Ref make(int g, Ref a, Ref b, std::uint16_t layer) {
    for (;;) {
      if (a.is_const() && b.is_const()) return Ref::constant(truth_table(g, a.index, b.index));
      if (a.is_const()) return unary(truth_table(g, a.index, false), truth_table(g, a.index, true), b, layer);
      if (b.is_const()) return unary(truth_table(g, false, b.index), truth_table(g, true, b.index), a, layer);
      if (a == b) return unary(truth_table(g, false, false), truth_table(g, true, true), a, layer);
      const bool uses_a = truth_table(g, false, false) != truth_table(g, true, false) ||
                          truth_table(g, false, true) != truth_table(g, true, true);
      const bool uses_b = truth_table(g, false, false) != truth_table(g, false, true) ||
                          truth_table(g, true, false) != truth_table(g, true, true);
      if (!uses_a && !uses_b) return Ref::constant(truth_table(g, false, false));
      if (!uses_b) return unary(truth_table(g, false, false), truth_table(g, true, false), a, layer);
      if (!uses_a) return unary(truth_table(g, false, false), truth_table(g, false, true), b, layer);
      Ref inner;
      if (is_not(a, &inner)) {
        g = negate_first_input(g);
        a = inner;
        continue;
      }
      if (is_not(b, &inner)) {
        g = negate_second_input(g);
        b = inner;
        continue;
      }
      if (b < a) {
        std::swap(a, b);
        g = swap_inputs(g);
      }
      return intern(static_cast<std::uint8_t>(g), a, b, layer);
    }
  }

 private:
  std::unordered_map<NodeKey, std::uint32_t, NodeKeyHash> table_;

  bool is_not(const Ref& r, Ref* inner) const {
    if (r.kind != Ref::Kind::kNode) return false;
    const auto& n = nodes[r.index];
    if (n.gate != gate::kNotA || n.a != n.b) return false;
    *inner = n.a;
    return true;
  }

  Ref unary(bool f0, bool f1, Ref x, std::uint16_t layer) {
    if (f0 == f1) return Ref::constant(f0);
    if (!f0) return x;
    if (x.is_const()) return Ref::constant(x.index == 0);
    Ref inner;
    if (is_not(x, &inner)) return inner;
    return intern(gate::kNotA, x, x, layer);
  }

  Ref intern(std::uint8_t g, Ref a, Ref b, std::uint16_t layer) {
    const NodeKey key{g, a, b};
    if (auto it = table_.find(key); it != table_.end()) return Ref::node(it->second);
    nodes.push_back({g, a, b, layer});
    const auto id = static_cast<std::uint32_t>(nodes.size() - 1);
    table_.emplace(key, id);
    return Ref::node(id);
  }
};

HardNet simplify_pass(const HardNet& net) {
  Builder builder;
  std::vector<Ref> map(net.nodes.size());
  auto remap = [&](const Ref& r) { return r.kind == Ref::Kind::kNode ? map[r.index] : r; };
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    const auto& n = net.nodes[i];
    map[i] = builder.make(n.gate, remap(n.a), remap(n.b), n.layer);
  }
  std::vector<Ref> outputs;
  outputs.reserve(net.outputs.size());
  for (const auto& o : net.outputs) outputs.push_back(remap(o));

  // Dead-node removal with order-preserving renumbering.
  const auto& nodes = builder.nodes;
  std::vector<char> live(nodes.size(), 0);
  for (const auto& o : outputs) {
    if (o.kind == Ref::Kind::kNode) live[o.index] = 1;
  }
  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (!live[i]) continue;
    if (nodes[i].a.kind == Ref::Kind::kNode) live[nodes[i].a.index] = 1;
    if (nodes[i].b.kind == Ref::Kind::kNode) live[nodes[i].b.index] = 1;
  }
  std::vector<std::uint32_t> renum(nodes.size(), 0);
  HardNet out;
  out.num_inputs = net.num_inputs;
  out.classes = net.classes;
  out.tau = net.tau;
  out.layer_names = net.layer_names;
  auto fix = [&](const Ref& r) { return r.kind == Ref::Kind::kNode ? Ref::node(renum[r.index]) : r; };
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!live[i]) continue;
    renum[i] = static_cast<std::uint32_t>(out.nodes.size());
    out.nodes.push_back({nodes[i].gate, fix(nodes[i].a), fix(nodes[i].b), nodes[i].layer});
  }
  out.outputs.reserve(outputs.size());
  for (const auto& o : outputs) out.outputs.push_back(fix(o));
  return out;
}

}  // namespace

HardNet simplify(const HardNet& net) {
  validate(net);
  HardNet cur = simplify_pass(net);
  for (int iter = 0; iter < 64; ++iter) {
    HardNet next = simplify_pass(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> eval_nodes(const HardNet& net, std::span<const std::uint8_t> inputs) {
  if (inputs.size() != net.num_inputs) {
    throw std::invalid_argument("expected " + std::to_string(net.num_inputs) + " inputs, got " +
                                std::to_string(inputs.size()));
  }
  std::vector<std::uint8_t> v(net.nodes.size());
  auto get = [&](const Ref& r) -> bool {
    switch (r.kind) {
      case Ref::Kind::kInput: return inputs[r.index] != 0;
      case Ref::Kind::kNode: return v[r.index] != 0;
      case Ref::Kind::kConst: return r.index != 0;
    }
    return false;
  };
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    const auto& n = net.nodes[i];
    v[i] = truth_table(n.gate, get(n.a), get(n.b)) ? 1 : 0;
  }
  return v;
}

std::vector<std::uint8_t> eval_outputs(const HardNet& net, std::span<const std::uint8_t> inputs) {
  const auto v = eval_nodes(net, inputs);
  std::vector<std::uint8_t> out;
  out.reserve(net.outputs.size());
  for (const auto& o : net.outputs) {
    switch (o.kind) {
      case Ref::Kind::kInput: out.push_back(inputs[o.index] ? 1 : 0); break;
      case Ref::Kind::kNode: out.push_back(v[o.index]); break;
      case Ref::Kind::kConst: out.push_back(o.index ? 1 : 0); break;
    }
  }
  return out;
}

std::vector<int> eval_discrete(const HardNet& net, std::span<const std::uint8_t> inputs) {
  if (net.outputs.empty()) throw std::invalid_argument("network has no outputs");
  if (net.outputs.size() % static_cast<std::size_t>(net.classes) != 0) {
    throw std::invalid_argument("outputs not divisible into classes");
  }
  const auto bits = eval_outputs(net, inputs);
  const std::size_t g = net.group_size();
  std::vector<int> counts(static_cast<std::size_t>(net.classes), 0);
  for (std::size_t i = 0; i < bits.size(); ++i) counts[i / g] += bits[i];
  return counts;
}

HardNetStats stats(const HardNet& net) {
  HardNetStats s;
  s.inputs = net.num_inputs;
  s.nodes = net.nodes.size();
  s.outputs = net.outputs.size();
  std::vector<std::size_t> depth(net.nodes.size(), 0);
  auto d = [&](const Ref& r) { return r.kind == Ref::Kind::kNode ? depth[r.index] : std::size_t{0}; };
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    depth[i] = 1 + std::max(d(net.nodes[i].a), d(net.nodes[i].b));
    ++s.histogram[net.nodes[i].gate];
  }
  for (const auto& o : net.outputs) s.depth = std::max(s.depth, d(o));
  return s;
}

HardNet random_hardnet(std::uint64_t seed, std::uint32_t inputs, std::size_t nodes,
                       std::size_t outputs_per_class, int classes, double const_rate) {
  const std::size_t outputs = outputs_per_class * static_cast<std::size_t>(classes);
  if (inputs == 0 || classes <= 0 || outputs == 0 || outputs > nodes) {
    throw std::invalid_argument("random_hardnet: need inputs, classes and outputs <= nodes");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  HardNet net;
  net.num_inputs = inputs;
  net.classes = classes;
  net.layer_names = {"random"};
  auto pick = [&](std::size_t i) {
    if (u(rng) < const_rate) return Ref::constant(uniform_below(rng, 2) == 1);
    const std::uint64_t n = inputs + i;
    const std::uint64_t r = uniform_below(rng, n);
    return r < inputs ? Ref::input(static_cast<std::uint32_t>(r))
                      : Ref::node(static_cast<std::uint32_t>(r - inputs));
  };
  for (std::size_t i = 0; i < nodes; ++i) {
    const auto g = static_cast<std::uint8_t>(uniform_below(rng, kNumGates));
    const Ref a = pick(i);
    const Ref b = pick(i);
    net.nodes.push_back({g, a, b, 0});
  }
  for (std::size_t o = 0; o < outputs; ++o) {
    net.outputs.push_back(Ref::node(static_cast<std::uint32_t>(nodes - outputs + o)));
  }
  return net;
}

void write_gate_histogram(std::ostream& out, const HardNet& net) {
  const std::size_t layers = std::max<std::size_t>(net.layer_names.size(), 1);
  std::vector<std::array<std::size_t, kNumGates>> counts(layers);
  for (const auto& n : net.nodes) {
    const std::size_t l = std::min<std::size_t>(n.layer, layers - 1);
    ++counts[l][n.gate];
  }
  out << "layer,gate,name,count\n";
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string name = l < net.layer_names.size() ? net.layer_names[l] : "layer_" + std::to_string(l);
    for (int g = 0; g < kNumGates; ++g) {
      out << name << ',' << g << ',' << gate_name(g) << ',' << counts[l][static_cast<std::size_t>(g)] << '\n';
    }
  }
}

}  // namespace lgn
