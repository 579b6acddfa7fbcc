#include "lgn/model.hpp"

#include <algorithm>
#include <map>

namespace lgn {

namespace {

struct SizeDefaults {
  int k;
  double tau;
  double learning_rate;
  double weight_decay;
  int batch_size;
  int ox;
  int input_bits;
};

// Hyperparameters per (dataset, size).
const std::map<std::string, std::map<std::string, SizeDefaults>>& size_table() {
  static const std::map<std::string, std::map<std::string, SizeDefaults>> table = {
      {"cifar10",
       {
           {"S", {32, 20.0, 0.02, 0.002, 128, 1, 2}},
           {"M", {256, 40.0, 0.02, 0.002, 128, 1, 2}},
           {"B", {512, 280.0, 0.02, 0.002, 128, 2, 5}},
           {"L", {1024, 340.0, 0.02, 0.002, 128, 2, 5}},
           {"G", {2048, 450.0, 0.02, 0.001, 128, 1, 5}},
       }},
      {"mnist",
       {
           {"S", {16, 6.5, 0.01, 0.0, 512, 2, 1}},
           {"M", {64, 28.0, 0.01, 0.0, 256, 2, 1}},
           {"L", {1024, 35.0, 0.01, 0.0, 128, 1, 1}},
       }},
  };
  return table;
}

std::int64_t product(Shape s) { return static_cast<std::int64_t>(s.size()); }

}  // namespace

Shape ModelSpec::input_shape() const {
  if (input_bits < 1) throw ShapeError("input_bits must be >= 1");
  return {image.channels * ((1 << input_bits) - 1), image.height, image.width};
}

std::vector<Shape> propagate_shapes(const ModelSpec& spec) {
  std::vector<Shape> shapes{spec.input_shape()};
  bool flat = false;
  for (const auto& layer : spec.layers) {
    const Shape in = shapes.back();
    if (const auto* conv = std::get_if<TreeConvSpec>(&layer)) {
      if (flat) throw ShapeError("tree conv after a random layer");
      if (conv->kernels < 1) throw ShapeError("tree conv needs at least one kernel");
      const Shape out{conv->kernels, in.height - conv->receptive + 1 + 2 * conv->padding,
                      in.width - conv->receptive + 1 + 2 * conv->padding};
      if (out.height < 1 || out.width < 1) throw ShapeError("tree conv shrinks input to nothing");
      if (conv->groups < 1 || in.channels % conv->groups != 0 ||
          conv->kernels % conv->groups != 0) {
        throw ShapeError("tree conv groups must divide input channels and kernels");
      }
      shapes.push_back(out);
    } else if (std::holds_alternative<OrPoolSpec>(layer)) {
      if (flat) throw ShapeError("or pool after a random layer");
      shapes.push_back(or_pool_output_shape(in));
    } else {
      const auto& rnd = std::get<RandomSpec>(layer);
      if (rnd.outputs < 1) throw ShapeError("random layer needs at least one output");
      flat = true;
      shapes.push_back({rnd.outputs, 1, 1});
    }
  }
  if (spec.classes < 1 || shapes.back().size() % static_cast<std::size_t>(spec.classes) != 0) {
    throw ShapeError("last layer size " + std::to_string(shapes.back().size()) +
                     " not divisible by class count " + std::to_string(spec.classes));
  }
  return shapes;
}

ModelSpec build_logictreenet(const std::string& dataset, const std::string& size_tag,
                             const SpecOverrides& overrides) {
  const auto& table = size_table();
  const auto ds = table.find(dataset);
  if (ds == table.end()) throw UnknownModelError("unknown dataset '" + dataset + "'");

  SizeDefaults d{};
  const auto sz = ds->second.find(size_tag);
  if (sz != ds->second.end()) {
    d = sz->second;
  } else if (overrides.k) {
    // Custom width: borrow the smallest size's hyperparameters.
    d = ds->second.at("S");
  } else {
    throw UnknownModelError("unknown size '" + size_tag + "' for " + dataset +
                            " (set k explicitly)");
  }

  ModelSpec spec;
  spec.dataset = dataset;
  spec.size_tag = size_tag;
  spec.k = overrides.k.value_or(d.k);
  spec.ox = overrides.ox.value_or(d.ox);
  spec.input_bits = overrides.input_bits.value_or(d.input_bits);
  spec.tau = overrides.tau.value_or(d.tau);
  spec.learning_rate = overrides.learning_rate.value_or(d.learning_rate);
  spec.weight_decay = overrides.weight_decay.value_or(d.weight_decay);
  spec.batch_size = overrides.batch_size.value_or(d.batch_size);
  spec.classes = 10;
  if (spec.k < 1 || spec.ox < 1) throw UnknownModelError("k and ox must be positive");

  const int k = spec.k;
  const int groups = overrides.groups.value_or(std::max(1, k / 8));
  auto conv = [](int kernels, int receptive, int padding, int g) {
    return TreeConvSpec{kernels, receptive, padding, 3, 2, g};
  };

  std::vector<int> random_inputs;
  if (dataset == "mnist") {
    spec.image = {1, 28, 28};
    spec.layers = {conv(k, 5, 0, 1),     OrPoolSpec{}, conv(3 * k, 3, 1, groups),
                   OrPoolSpec{},         conv(9 * k, 3, 1, groups), OrPoolSpec{}};
  } else {
    spec.image = {3, 32, 32};
    spec.layers = {conv(k, 3, 1, 1),          OrPoolSpec{}, conv(4 * k, 3, 1, groups),
                   OrPoolSpec{},              conv(16 * k, 3, 1, groups), OrPoolSpec{},
                   conv(32 * k, 3, 1, groups), OrPoolSpec{}};
  }
  spec.layers.push_back(RandomSpec{1280 * k * spec.ox});
  spec.layers.push_back(RandomSpec{640 * k * spec.ox});
  spec.layers.push_back(RandomSpec{320 * k * spec.ox});
  propagate_shapes(spec);
  return spec;
}

ModelSpec build_motif_model(int kernels) {
  if (kernels < 1) throw UnknownModelError("kernels must be positive");
  ModelSpec spec;
  spec.dataset = "motif";
  spec.size_tag = "toy";
  spec.k = kernels;
  spec.image = {1, 8, 8};
  spec.layers = {TreeConvSpec{kernels, 3, 1, 2, 0, 1}, OrPoolSpec{}, RandomSpec{600}, RandomSpec{300}};
  spec.classes = 3;
  spec.tau = 4;
  spec.learning_rate = 0.05;
  spec.batch_size = 32;
  propagate_shapes(spec);
  return spec;
}

ModelSpec build_xor_model() {
  ModelSpec spec;
  spec.dataset = "xor";
  spec.size_tag = "toy";
  spec.image = {2, 1, 1};
  spec.layers = {RandomSpec{4}, RandomSpec{4}};
  spec.classes = 2;
  spec.tau = 1;
  spec.learning_rate = 0.05;
  spec.batch_size = 4;
  propagate_shapes(spec);
  return spec;
}

GateCountReport count_gates(const ModelSpec& spec, CountMode mode) {
  const auto shapes = propagate_shapes(spec);
  GateCountReport report;
  report.mode = mode;
  const bool hw = mode == CountMode::kHardware;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const Shape out = shapes[i + 1];
    LayerGateCount entry;
    if (const auto* conv = std::get_if<TreeConvSpec>(&spec.layers[i])) {
      const std::int64_t per_kernel = (std::int64_t{1} << conv->depth) - 1;
      entry.name = "conv" + std::to_string(i);
      entry.gates = hw ? product(out) * per_kernel : conv->kernels * per_kernel;
    } else if (std::holds_alternative<OrPoolSpec>(spec.layers[i])) {
      entry.name = "orpool" + std::to_string(i);
      entry.gates = hw ? product(out) * 3 : 0;
    } else {
      entry.name = "random" + std::to_string(i);
      entry.gates = std::get<RandomSpec>(spec.layers[i]).outputs;
    }
    report.layers.push_back(entry);
  }
  if (hw) {
    report.layers.push_back(
        {"groupsum_adders", product(shapes.back()) * kAdderGatesPerOutput});
  }
  for (const auto& l : report.layers) report.total += l.gates;
  return report;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json layer_to_json(const LayerSpec& layer) {
  if (const auto* c = std::get_if<TreeConvSpec>(&layer)) {
    return {{"type", "tree_conv"},   {"kernels", c->kernels},
            {"receptive", c->receptive}, {"padding", c->padding},
            {"depth", c->depth},     {"channel_restriction", c->channel_restriction},
            {"groups", c->groups}};
  }
  if (std::holds_alternative<OrPoolSpec>(layer)) return {{"type", "or_pool"}};
  return {{"type", "random"}, {"outputs", std::get<RandomSpec>(layer).outputs}};
}

LayerSpec layer_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "tree_conv") {
    TreeConvSpec c;
    c.kernels = j.at("kernels").get<int>();
    c.receptive = j.at("receptive").get<int>();
    c.padding = j.at("padding").get<int>();
    c.depth = j.at("depth").get<int>();
    c.channel_restriction = j.value("channel_restriction", 2);
    c.groups = j.value("groups", 1);
    return c;
  }
  if (type == "or_pool") return OrPoolSpec{};
  if (type == "random") return RandomSpec{j.at("outputs").get<int>()};
  throw std::invalid_argument("unknown layer type '" + type + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const ModelSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) layers.push_back(layer_to_json(l));
  j = {{"dataset", spec.dataset},
       {"size", spec.size_tag},
       {"k", spec.k},
       {"ox", spec.ox},
       {"input_bits", spec.input_bits},
       {"image", {spec.image.channels, spec.image.height, spec.image.width}},
       {"layers", layers},
       {"classes", spec.classes},
       {"tau", spec.tau},
       {"learning_rate", spec.learning_rate},
       {"weight_decay", spec.weight_decay},
       {"batch_size", spec.batch_size}};
}

void from_json(const nlohmann::json& j, ModelSpec& spec) {
  spec.dataset = j.at("dataset").get<std::string>();
  spec.size_tag = j.value("size", "");
  spec.k = j.value("k", 0);
  spec.ox = j.value("ox", 1);
  spec.input_bits = j.at("input_bits").get<int>();
  const auto& img = j.at("image");
  spec.image = {img.at(0).get<int>(), img.at(1).get<int>(), img.at(2).get<int>()};
  spec.layers.clear();
  for (const auto& l : j.at("layers")) spec.layers.push_back(layer_from_json(l));
  spec.classes = j.value("classes", 10);
  spec.tau = j.at("tau").get<double>();
  spec.learning_rate = j.value("learning_rate", 0.01);
  spec.weight_decay = j.value("weight_decay", 0.0);
  spec.batch_size = j.value("batch_size", 128);
}

}  // namespace lgn
