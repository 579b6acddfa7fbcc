#include <doctest.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lgn/export.hpp"
#include "support/verilog_reader.hpp"

using namespace lgn;

namespace {

std::uint64_t value_of(const HardNet& net, const std::vector<Ref>& sum,
                       const std::vector<std::uint8_t>& inputs) {
  const auto v = eval_nodes(net, inputs);
  std::uint64_t total = 0;
  for (std::size_t b = 0; b < sum.size(); ++b) {
    bool bit = false;
    switch (sum[b].kind) {
      case Ref::Kind::kInput: bit = inputs[sum[b].index]; break;
      case Ref::Kind::kNode: bit = v[sum[b].index]; break;
      case Ref::Kind::kConst: bit = sum[b].index; break;
    }
    total |= std::uint64_t(bit) << b;
  }
  return total;
}

}  // namespace

TEST_CASE("adder trees count exactly") {
  for (std::uint32_t n = 1; n <= 16; ++n) {
    HardNet net;
    net.num_inputs = n;
    std::vector<Ref> bits;
    for (std::uint32_t i = 0; i < n; ++i) bits.push_back(Ref::input(i));
    const auto tree = build_adder_tree(net, bits, 0);
    CHECK(tree.gates == 5 * tree.full_adders + 2 * tree.half_adders);
    CHECK(tree.sum.size() >= static_cast<std::size_t>(std::bit_width(n)));
    for (std::uint32_t v = 0; v < (1u << n); ++v) {
      std::vector<std::uint8_t> in(n);
      for (std::uint32_t i = 0; i < n; ++i) in[i] = (v >> i) & 1;
      if (value_of(net, tree.sum, in) != static_cast<std::uint64_t>(std::popcount(v))) {
        FAIL("adder of width " << n << " wrong for " << v);
      }
    }
  }
}

TEST_CASE("adder cost per input") {
  for (std::uint32_t n : {64u, 256u, 1000u}) {
    HardNet net;
    net.num_inputs = n;
    std::vector<Ref> bits;
    for (std::uint32_t i = 0; i < n; ++i) bits.push_back(Ref::input(i));
    const auto tree = build_adder_tree(net, bits, 0);
    CHECK(double(tree.gates) / n <= 7.5);
    std::mt19937_64 rng(n);
    for (int t = 0; t < 50; ++t) {
      std::vector<std::uint8_t> in(n);
      std::uint64_t ones = 0;
      for (auto& b : in) ones += (b = static_cast<std::uint8_t>(rng() & 1));
      CHECK(value_of(net, tree.sum, in) == ones);
    }
  }
}

TEST_CASE("Verilog round trip") {
  std::mt19937_64 rng(7);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const HardNet net = random_hardnet(seed, 24, 300, 12, 3, 0.02);
    std::ostringstream text;
    emit_verilog(text, net);
    const testing::VerilogModule mod(text.str());
    CHECK(mod.inputs() == 24);
    REQUIRE(mod.buses().size() == 3);
    std::ostringstream raw;
    emit_verilog(raw, net, {"raw", false});
    const testing::VerilogModule raw_mod(raw.str());
    for (int t = 0; t < 200; ++t) {
      std::vector<std::uint8_t> in(24);
      for (auto& b : in) b = static_cast<std::uint8_t>(rng() & 1);
      const auto counts = eval_discrete(net, in);
      const auto scores = mod.eval(in);
      for (int c = 0; c < 3; ++c) {
        CHECK(scores.at("score_" + std::to_string(c)) == static_cast<std::uint64_t>(counts[static_cast<std::size_t>(c)]));
      }
      const auto bits = eval_outputs(net, in);
      const auto y = raw_mod.eval(in).at("y");
      for (std::size_t j = 0; j < bits.size(); ++j) CHECK(((y >> j) & 1) == bits[j]);
    }
  }
  const std::string text = [] {
    std::ostringstream s;
    emit_verilog(s, random_hardnet(1, 4, 10, 1, 2), {"tiny", true});
    return s.str();
  }();
  CHECK(text.find("module tiny (") != std::string::npos);
  CHECK(text.find("assign n0 = ") != std::string::npos);
  CHECK(text.find("endmodule") != std::string::npos);
}

TEST_CASE("netlist JSON round trip and errors") {
  HardNet net = random_hardnet(5, 10, 80, 4, 2, 0.1);
  net.tau = 2.5;
  net.outputs[0] = Ref::input(3);
  net.outputs[1] = Ref::constant(true);
  const auto j = netlist_to_json(net);
  CHECK(j["stats"]["gates"] == 80);
  CHECK(netlist_from_json(j) == net);

  const auto path = std::filesystem::temp_directory_path() / "lgn_test_netlist.json";
  save_netlist(path, net);
  CHECK(load_netlist(path) == net);

  auto bad = j;
  bad["version"] = 99;
  CHECK_THROWS_AS(netlist_from_json(bad), NetlistFormatError);
  bad = j;
  bad["nodes"][3][1] = "n77";
  CHECK_THROWS_AS(netlist_from_json(bad), NetlistFormatError);
  bad = j;
  bad["nodes"][0][2] = "q1";
  CHECK_THROWS_AS(netlist_from_json(bad), NetlistFormatError);
  bad = j;
  bad.erase("outputs");
  CHECK_THROWS_AS(netlist_from_json(bad), NetlistFormatError);
  {
    std::ofstream out(path);
    out << "{not json";
  }
  CHECK_THROWS_AS(load_netlist(path), NetlistFormatError);

  CHECK(ref_to_string(Ref::input(12)) == "i12");
  CHECK(ref_from_string("n4") == Ref::node(4));
  CHECK(ref_from_string("c1") == Ref::constant(true));
}
