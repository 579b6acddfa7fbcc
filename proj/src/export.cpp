#include "lgn/export.hpp"

#include <deque>
#include <fstream>

namespace lgn {

AdderTree build_adder_tree(HardNet& net, std::span<const Ref> bits, std::uint16_t layer) {
  AdderTree t;
  const std::size_t before = net.nodes.size();
  auto add = [&](int g, Ref a, Ref b) {
    net.nodes.push_back({static_cast<std::uint8_t>(g), a, b, layer});
    return Ref::node(static_cast<std::uint32_t>(net.nodes.size() - 1));
  };
  std::vector<std::deque<Ref>> columns(1, std::deque<Ref>(bits.begin(), bits.end()));
  for (std::size_t w = 0; w < columns.size(); ++w) {
    auto carry_out = [&](Ref c) {
      if (columns.size() == w + 1) columns.emplace_back();
      columns[w + 1].push_back(c);
    };
    while (columns[w].size() >= 2) {
      if (columns[w].size() >= 3) {
        const Ref a = columns[w][0], b = columns[w][1], c = columns[w][2];
        columns[w].erase(columns[w].begin(), columns[w].begin() + 3);
        const Ref ab = add(gate::kXor, a, b);
        const Ref s = add(gate::kXor, ab, c);
        const Ref and_ab = add(gate::kAnd, a, b);
        const Ref and_c = add(gate::kAnd, ab, c);
        const Ref carry = add(gate::kOr, and_ab, and_c);
        columns[w].push_back(s);
        carry_out(carry);
        ++t.full_adders;
      } else {
        const Ref a = columns[w][0], b = columns[w][1];
        columns[w].clear();
        columns[w].push_back(add(gate::kXor, a, b));
        carry_out(add(gate::kAnd, a, b));
        ++t.half_adders;
      }
    }
    t.sum.push_back(columns[w].empty() ? Ref::constant(false) : columns[w].front());
  }
  t.gates = net.nodes.size() - before;
  return t;
}

std::vector<AdderTree> append_class_adders(HardNet& net) {
  validate(net);
  net.layer_names.push_back("adder");
  const auto layer = static_cast<std::uint16_t>(net.layer_names.size() - 1);
  const std::size_t g = net.group_size();
  const std::vector<Ref> outputs = net.outputs;
  std::vector<AdderTree> trees;
  for (int c = 0; c < net.classes; ++c) {
    const std::span<const Ref> group(outputs.data() + static_cast<std::size_t>(c) * g, g);
    trees.push_back(build_adder_tree(net, group, layer));
  }
  return trees;
}

namespace {

std::string verilog_ref(const Ref& r) {
  switch (r.kind) {
    case Ref::Kind::kInput: return "x[" + std::to_string(r.index) + "]";
    case Ref::Kind::kNode: return "n" + std::to_string(r.index);
    case Ref::Kind::kConst: return r.index ? "1'b1" : "1'b0";
  }
  return "1'b0";
}

std::string gate_expr(int g, const std::string& a, const std::string& b) {
  switch (g) {
    case 0: return "1'b0";
    case 1: return a + " & " + b;
    case 2: return a + " & ~" + b;
    case 3: return a;
    case 4: return "~" + a + " & " + b;
    case 5: return b;
    case 6: return a + " ^ " + b;
    case 7: return a + " | " + b;
    case 8: return "~(" + a + " | " + b + ")";
    case 9: return "~(" + a + " ^ " + b + ")";
    case 10: return "~" + b;
    case 11: return a + " | ~" + b;
    case 12: return "~" + a;
    case 13: return "~" + a + " | " + b;
    case 14: return "~(" + a + " & " + b + ")";
    default: return "1'b1";
  }
}

}  // namespace

void emit_verilog(std::ostream& out, const HardNet& source, const VerilogOptions& options) {
  HardNet net = source;
  std::vector<AdderTree> trees;
  if (options.adders) trees = append_class_adders(net);
  else validate(net);

  out << "// " << net.num_inputs << " inputs, " << source.nodes.size() << " logic gates";
  if (options.adders) out << ", " << net.nodes.size() - source.nodes.size() << " adder gates";
  out << "\n";
  out << "module " << options.module_name << " (\n";
  out << "  input wire [" << (net.num_inputs == 0 ? 0 : net.num_inputs - 1) << ":0] x";
  if (options.adders) {
    for (std::size_t c = 0; c < trees.size(); ++c) {
      out << ",\n  output wire [" << trees[c].sum.size() - 1 << ":0] score_" << c;
    }
  } else {
    out << ",\n  output wire [" << (net.outputs.empty() ? 0 : net.outputs.size() - 1) << ":0] y";
  }
  out << "\n);\n";
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    const auto& n = net.nodes[i];
    out << "  wire n" << i << ";\n";
    out << "  assign n" << i << " = " << gate_expr(n.gate, verilog_ref(n.a), verilog_ref(n.b)) << ";\n";
  }
  if (options.adders) {
    for (std::size_t c = 0; c < trees.size(); ++c) {
      for (std::size_t b = 0; b < trees[c].sum.size(); ++b) {
        out << "  assign score_" << c << "[" << b << "] = " << verilog_ref(trees[c].sum[b]) << ";\n";
      }
    }
  } else {
    for (std::size_t j = 0; j < net.outputs.size(); ++j) {
      out << "  assign y[" << j << "] = " << verilog_ref(net.outputs[j]) << ";\n";
    }
  }
  out << "endmodule\n";
}

// ---------------------------------------------------------------------------

std::string ref_to_string(const Ref& r) {
  switch (r.kind) {
    case Ref::Kind::kInput: return "i" + std::to_string(r.index);
    case Ref::Kind::kNode: return "n" + std::to_string(r.index);
    case Ref::Kind::kConst: return r.index ? "c1" : "c0";
  }
  return "c0";
}

Ref ref_from_string(const std::string& s) {
  if (s == "c0") return Ref::constant(false);
  if (s == "c1") return Ref::constant(true);
  if (s.size() < 2 || (s[0] != 'i' && s[0] != 'n')) throw NetlistFormatError("bad reference: " + s);
  std::uint64_t v = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') throw NetlistFormatError("bad reference: " + s);
    v = v * 10 + static_cast<std::uint64_t>(s[i] - '0');
    if (v > 0xffffffffULL) throw NetlistFormatError("reference index too large: " + s);
  }
  const auto idx = static_cast<std::uint32_t>(v);
  return s[0] == 'i' ? Ref::input(idx) : Ref::node(idx);
}

nlohmann::json netlist_to_json(const HardNet& net) {
  validate(net);
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : net.nodes) {
    nodes.push_back({n.gate, ref_to_string(n.a), ref_to_string(n.b), n.layer});
  }
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& o : net.outputs) outputs.push_back(ref_to_string(o));
  const auto st = stats(net);
  return {{"format", "lgn-netlist"},
          {"version", kNetlistVersion},
          {"num_inputs", net.num_inputs},
          {"classes", net.classes},
          {"tau", net.tau},
          {"layer_names", net.layer_names},
          {"nodes", std::move(nodes)},
          {"outputs", std::move(outputs)},
          {"stats", {{"gates", st.nodes}, {"depth", st.depth}, {"histogram", st.histogram}}}};
}

HardNet netlist_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "lgn-netlist") throw NetlistFormatError("not an lgn netlist");
    const int version = j.value("version", -1);
    if (version != kNetlistVersion) {
      throw NetlistFormatError("unsupported netlist version " + std::to_string(version));
    }
    HardNet net;
    net.num_inputs = j.at("num_inputs").get<std::uint32_t>();
    net.classes = j.at("classes").get<int>();
    net.tau = j.value("tau", 1.0);
    net.layer_names = j.value("layer_names", std::vector<std::string>{});
    for (const auto& n : j.at("nodes")) {
      if (!n.is_array() || n.size() < 3) throw NetlistFormatError("bad node entry");
      HardNode node;
      node.gate = n.at(0).get<std::uint8_t>();
      node.a = ref_from_string(n.at(1).get<std::string>());
      node.b = ref_from_string(n.at(2).get<std::string>());
      node.layer = n.size() > 3 ? n.at(3).get<std::uint16_t>() : 0;
      net.nodes.push_back(node);
    }
    for (const auto& o : j.at("outputs")) net.outputs.push_back(ref_from_string(o.get<std::string>()));
    validate(net);
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw NetlistFormatError(std::string("malformed netlist: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw NetlistFormatError(std::string("invalid netlist: ") + e.what());
  }
}

void save_netlist(const std::filesystem::path& path, const HardNet& net) {
  std::ofstream out(path);
  if (!out) throw NetlistFormatError("cannot write " + path.string());
  out << netlist_to_json(net).dump() << '\n';
}

HardNet load_netlist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NetlistFormatError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw NetlistFormatError(path.string() + ": " + e.what());
  }
  return netlist_from_json(j);
}

}  // namespace lgn
