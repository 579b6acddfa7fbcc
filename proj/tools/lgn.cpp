// lgn: command-line front end for training, discretizing, simplifying, evaluating,
// benchmarking and exporting logic gate networks.

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "fetch.hpp"
#include "lgn/bitsim.hpp"
#include "lgn/data.hpp"
#include "lgn/discrete.hpp"
#include "lgn/export.hpp"
#include "lgn/model.hpp"
#include "lgn/network.hpp"
#include "lgn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lgn;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit : int {
  kOk = 0,
  kError = 1,
  kUsage = 2,
  kData = 3,
  kFormat = 4,
  kDiverged = 5,
  kNetwork = 6,
};

std::vector<std::string> g_argv;

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

/// Writes <artifact>.manifest.json next to the artifact.
void write_manifest(const fs::path& artifact, const std::string& command, json details) {
  json m = {{"artifact", artifact.filename().string()},
            {"command", command},
            {"argv", g_argv},
            {"tool", "lgn"},
            {"version", kVersion},
            {"created", utc_now()},
            {"details", std::move(details)}};
  std::ofstream out(artifact.string() + ".manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest for " + artifact.string());
  out << m.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

int resolve_threads(int t) {
  if (t > 0) return t;
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// datasets

struct Splits {
  BinaryEncodedSet train;
  BinaryEncodedSet val;
  BinaryEncodedSet test;
};

constexpr std::size_t kMotifTrain = 2000;
constexpr std::size_t kMotifEval = 1000;

std::size_t image_pixels(const std::string& dataset) {
  if (dataset == "mnist") return 28 * 28;
  if (dataset == "cifar10") return 3 * 32 * 32;
  if (dataset == "motif") return 64;
  if (dataset == "xor") return 2;
  throw std::invalid_argument("unknown dataset: " + dataset);
}

Splits load_splits(const std::string& dataset, int input_bits, const fs::path& data_dir,
                   bool need_train) {
  Splits s;
  if (dataset == "motif") {
    if (need_train) s.train = make_motif_set(kMotifTrain, 1);
    s.val = make_motif_set(kMotifEval, 2);
    s.test = make_motif_set(kMotifEval, 3);
    return s;
  }
  if (dataset == "xor") {
    s.train = s.val = s.test = make_xor_set();
    return s;
  }
  const std::size_t n_val = dataset == "cifar10" ? kCifarValidation : kMnistValidation;
  const auto full = load_dataset(dataset, data_dir, Split::kTrain);
  auto [train, val] = split_validation(full, n_val, 0);
  if (need_train) s.train = threshold_encode(train, input_bits);
  s.val = threshold_encode(val, input_bits);
  s.test = threshold_encode(load_dataset(dataset, data_dir, Split::kTest), input_bits);
  return s;
}

const BinaryEncodedSet& pick(const Splits& s, const std::string& split) {
  if (split == "test") return s.test;
  if (split == "val") return s.val;
  if (split == "train") return s.train;
  throw std::invalid_argument("unknown split: " + split);
}

/// Thermometer bits implied by a netlist's input count.
int infer_input_bits(const std::string& dataset, std::uint32_t inputs) {
  const std::size_t px = image_pixels(dataset);
  if (inputs % px != 0) throw std::invalid_argument("netlist inputs do not match " + dataset);
  const std::size_t planes = inputs / px;
  for (int b = 1; b <= 8; ++b) {
    if (static_cast<std::size_t>((1 << b) - 1) == planes) return b;
  }
  throw std::invalid_argument("cannot infer input bits from " + std::to_string(inputs) + " inputs");
}

ModelSpec make_spec(const std::string& dataset, const std::string& size, const SpecOverrides& o) {
  if (dataset == "motif") return build_motif_model(o.k.value_or(32));
  if (dataset == "xor") return build_xor_model();
  return build_logictreenet(dataset, size, o);
}

double discrete_accuracy(const HardNet& net, const BinaryEncodedSet& data, int threads) {
  return PackedEvaluator(net).accuracy(data, threads);
}

// ---------------------------------------------------------------------------
// fetch

struct FetchArgs {
  std::string dataset;
  std::string data_dir;
  std::string source;
};

int run_fetch(const FetchArgs& a) {
  const fs::path dir = a.data_dir.empty() ? default_data_dir() : fs::path(a.data_dir);
  const auto files = tools::fetch_dataset(a.dataset, dir, a.source);
  for (const auto& f : files) std::cout << f.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::optional<std::string> dataset;
  std::optional<std::string> size;
  std::optional<int> k, ox, input_bits, groups;
  std::optional<double> learning_rate, weight_decay, tau, residual_strength;
  std::optional<int> batch_size, threads;
  std::optional<std::int64_t> steps, eval_interval;
  std::optional<std::string> init;
  std::optional<std::size_t> eval_samples;
  std::vector<std::uint64_t> seeds;
  std::string config;
  std::string out;
  std::string data_dir;
  bool quiet = false;
};

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::invalid_argument("cannot open config " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + p.string() + ": " + e.what());
  }
}

template <typename T>
std::optional<T> pick_opt(const std::optional<T>& flag, const json& cfg, const char* key) {
  if (flag) return flag;
  if (cfg.contains(key)) return cfg.at(key).get<T>();
  return std::nullopt;
}

int run_train(const TrainArgs& a) {
  const json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  const auto dataset = pick_opt(a.dataset, cfg, "dataset");
  if (!dataset) throw std::invalid_argument("--dataset is required");
  const std::string size = pick_opt(a.size, cfg, "size").value_or("S");

  SpecOverrides o;
  o.k = pick_opt(a.k, cfg, "k");
  o.ox = pick_opt(a.ox, cfg, "ox");
  o.input_bits = pick_opt(a.input_bits, cfg, "input_bits");
  o.groups = pick_opt(a.groups, cfg, "groups");
  const ModelSpec spec = make_spec(*dataset, size, o);

  // defaults < config file < flags
  json tc;
  to_json(tc, TrainConfig::from_spec(spec));
  for (const auto& [key, value] : cfg.items()) {
    if (tc.contains(key)) tc[key] = value;
  }
  if (a.learning_rate) tc["learning_rate"] = *a.learning_rate;
  if (a.weight_decay) tc["weight_decay"] = *a.weight_decay;
  if (a.tau) tc["tau"] = *a.tau;
  if (a.residual_strength) tc["residual_strength"] = *a.residual_strength;
  if (a.batch_size) tc["batch_size"] = *a.batch_size;
  if (a.threads) tc["threads"] = *a.threads;
  if (a.steps) tc["steps"] = *a.steps;
  if (a.eval_interval) tc["eval_interval"] = *a.eval_interval;
  if (a.init) tc["init"] = *a.init;
  if (a.eval_samples) tc["eval_samples"] = *a.eval_samples;
  TrainConfig config;
  from_json(tc, config);
  config.threads = resolve_threads(config.threads);

  std::vector<std::uint64_t> seeds = a.seeds;
  if (seeds.empty() && cfg.contains("seeds")) seeds = cfg.at("seeds").get<std::vector<std::uint64_t>>();
  if (seeds.empty()) seeds.push_back(cfg.value("seed", std::uint64_t{0}));

  const fs::path data_dir = a.data_dir.empty() ? default_data_dir() : fs::path(a.data_dir);
  const Splits data = load_splits(*dataset, spec.input_bits, data_dir, true);
  const fs::path out_dir = a.out.empty() ? fs::path("run") : fs::path(a.out);
  fs::create_directories(out_dir);

  json runs = json::array();
  for (const std::uint64_t seed : seeds) {
    const fs::path dir = seeds.size() > 1 ? out_dir / ("seed_" + std::to_string(seed)) : out_dir;
    fs::create_directories(dir);
    TrainConfig c = config;
    c.seed = seed;

    Network<float> net(spec, seed);
    std::mt19937_64 rng(mix_seed(seed, 0x1417));
    net.init(c.init, static_cast<float>(c.residual_strength), rng);

    const fs::path metrics_path = dir / "metrics.csv";
    auto metrics = open_out(metrics_path);
    const auto on_eval = [&](const Metrics& m) {
      if (a.quiet) return;
      std::cerr << "seed " << seed << " step " << m.step << " loss " << m.train_loss << " val soft "
                << m.val_acc_soft << " hard " << m.val_acc_hard << " (" << m.seconds << "s)\n";
    };
    const auto fit_res = fit(net, data.train, data.val, c, &metrics, on_eval);
    metrics.close();

    net.set_parameters(fit_res.best_parameters);
    net.prepare();
    const auto soft = evaluate(net, data.test, false, c.threads);
    const auto hard = evaluate(net, data.test, true, c.threads);
    const double disc = discrete_accuracy(simplify(discretize(net)), data.test, c.threads);

    json result = {{"seed", seed},
                   {"best_step", fit_res.best_step},
                   {"best_val_acc", fit_res.best_val_acc},
                   {"test_acc_soft", soft.accuracy},
                   {"test_acc_hard", hard.accuracy},
                   {"test_acc_discrete", disc}};

    Checkpoint ck;
    ck.spec = spec;
    ck.config = c;
    ck.seed = seed;
    ck.step = fit_res.best_step;
    ck.parameters = fit_res.best_parameters;
    ck.extra = result;
    const fs::path ck_path = dir / "checkpoint.lgnckpt";
    save_checkpoint(ck_path, ck);
    write_manifest(ck_path, "train", {{"dataset", *dataset}, {"size", spec.size_tag}, {"result", result}});
    write_manifest(metrics_path, "train", {{"dataset", *dataset}, {"seed", seed}});
    {
      const fs::path rp = dir / "result.json";
      open_out(rp) << result.dump(2) << '\n';
    }
    std::cout << result.dump() << '\n';
    runs.push_back(result);
  }

  if (seeds.size() > 1) {
    json summary = {{"dataset", *dataset}, {"size", spec.size_tag}, {"runs", runs}};
    for (const char* key : {"best_val_acc", "test_acc_soft", "test_acc_hard", "test_acc_discrete"}) {
      double sum = 0, sq = 0;
      for (const auto& r : runs) sum += r[key].get<double>();
      const double mean = sum / static_cast<double>(runs.size());
      for (const auto& r : runs) sq += std::pow(r[key].get<double>() - mean, 2);
      summary[std::string(key) + "_mean"] = mean;
      summary[std::string(key) + "_std"] = std::sqrt(sq / static_cast<double>(runs.size() - 1));
    }
    const fs::path sp = out_dir / "summary.json";
    open_out(sp) << summary.dump(2) << '\n';
    write_manifest(sp, "train", {{"seeds", seeds}});
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// eval / discretize / synth

struct EvalArgs {
  std::string checkpoint;
  std::string netlist;
  std::string dataset;
  std::string split = "test";
  std::string mode = "discrete";
  std::string data_dir;
  int threads = 1;
};

int run_eval(const EvalArgs& a) {
  const fs::path data_dir = a.data_dir.empty() ? default_data_dir() : fs::path(a.data_dir);
  const int threads = resolve_threads(a.threads);
  json out = {{"split", a.split}, {"mode", a.mode}};
  if (!a.netlist.empty()) {
    if (a.mode != "discrete") throw std::invalid_argument("netlists support --mode discrete only");
    if (a.dataset.empty()) throw std::invalid_argument("--dataset is required with --netlist");
    const HardNet net = load_netlist(a.netlist);
    const Splits data = load_splits(a.dataset, infer_input_bits(a.dataset, net.num_inputs), data_dir,
                                    a.split == "train");
    const auto& set = pick(data, a.split);
    out["dataset"] = a.dataset;
    out["samples"] = set.size();
    out["accuracy"] = discrete_accuracy(net, set, threads);
  } else {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const std::string dataset = a.dataset.empty() ? ck.spec.dataset : a.dataset;
    const Splits data = load_splits(dataset, ck.spec.input_bits, data_dir, a.split == "train");
    const auto& set = pick(data, a.split);
    auto net = network_from_checkpoint<float>(ck);
    out["dataset"] = dataset;
    out["samples"] = set.size();
    if (a.mode == "soft" || a.mode == "hard") {
      const auto r = evaluate(net, set, a.mode == "hard", threads);
      out["accuracy"] = r.accuracy;
      out["loss"] = r.loss;
    } else if (a.mode == "discrete") {
      out["accuracy"] = discrete_accuracy(simplify(discretize(net)), set, threads);
    } else {
      throw std::invalid_argument("unknown mode: " + a.mode);
    }
  }
  std::cout << out.dump() << '\n';
  return kOk;
}

struct DiscretizeArgs {
  std::string checkpoint;
  std::string out;
  std::string histogram;
  bool simplify = false;
};

json gate_summary(const HardNet& net) {
  const auto st = stats(net);
  return {{"gates", st.nodes}, {"depth", st.depth}, {"inputs", st.inputs}, {"outputs", st.outputs}};
}

int run_discretize(const DiscretizeArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto net = network_from_checkpoint<float>(ck);
  HardNet hard = discretize(net);
  const json raw = gate_summary(hard);
  if (a.simplify) hard = simplify(hard);
  save_netlist(a.out, hard);
  json details = {{"checkpoint", a.checkpoint}, {"simplified", a.simplify}, {"raw", raw},
                  {"final", gate_summary(hard)}};
  write_manifest(a.out, "discretize", details);
  if (!a.histogram.empty()) {
    auto h = open_out(a.histogram);
    write_gate_histogram(h, hard);
    h.close();
    write_manifest(a.histogram, "discretize", {{"netlist", a.out}});
  }
  std::cout << details.dump() << '\n';
  return kOk;
}

struct SynthArgs {
  std::string netlist;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  const HardNet in = load_netlist(a.netlist);
  const HardNet out = simplify(in);
  save_netlist(a.out, out);
  json details = {{"input", a.netlist}, {"before", gate_summary(in)}, {"after", gate_summary(out)}};
  write_manifest(a.out, "synth", details);
  std::cout << details.dump() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// bench / export / diag

struct BenchArgs {
  std::string netlist;
  std::string dataset;
  std::string split = "test";
  std::string data_dir;
  std::string csv;
  std::vector<int> threads{1};
  int repeats = 3;
  std::size_t samples = 0;
};

int run_bench(const BenchArgs& a) {
  const HardNet net = load_netlist(a.netlist);
  PackedBatch batch;
  if (a.dataset.empty()) {
    const std::size_t n = a.samples ? a.samples : 10000;
    std::mt19937_64 rng(0);
    std::vector<std::vector<std::uint8_t>> samples(n, std::vector<std::uint8_t>(net.num_inputs));
    for (auto& s : samples) {
      for (auto& b : s) b = static_cast<std::uint8_t>(rng() & 1);
    }
    batch = PackedBatch::pack(samples, net.num_inputs);
  } else {
    const fs::path data_dir = a.data_dir.empty() ? default_data_dir() : fs::path(a.data_dir);
    const Splits data = load_splits(a.dataset, infer_input_bits(a.dataset, net.num_inputs), data_dir,
                                    a.split == "train");
    const auto& set = pick(data, a.split);
    batch = PackedBatch::pack(set, 0, a.samples ? std::min(a.samples, set.size()) : set.size());
  }
  std::ofstream file;
  if (!a.csv.empty()) file = open_out(a.csv);
  std::ostream& out = a.csv.empty() ? std::cout : file;
  write_bench_header(out);
  for (const int t : a.threads) {
    write_bench_row(out, bench_packed(fs::path(a.netlist).filename().string(), net, batch,
                                      resolve_threads(t), a.repeats));
  }
  if (!a.csv.empty()) {
    file.close();
    write_manifest(a.csv, "bench", {{"netlist", a.netlist}, {"samples", batch.samples}});
  }
  return kOk;
}

struct ExportArgs {
  std::string netlist;
  std::string verilog;
  std::string module_name = "lgn_net";
  bool raw = false;
};

int run_export(const ExportArgs& a) {
  const HardNet net = load_netlist(a.netlist);
  auto out = open_out(a.verilog);
  emit_verilog(out, net, {a.module_name, !a.raw});
  out.close();
  write_manifest(a.verilog, "export", {{"netlist", a.netlist}, {"module", a.module_name}, {"adders", !a.raw}});
  return kOk;
}

struct DiagArgs {
  std::string what;
  std::string dataset = "mnist";
  std::string size = "S";
  std::optional<int> k;
  std::string mode = "trainable";
  int layers = 12;
  int width = 1000;
  std::string init = "residual";
  double strength = 5.0;
  std::uint64_t seed = 0;
  std::string netlist;
};

int run_diag(const DiagArgs& a) {
  if (a.what == "count" || a.what == "shapes") {
    SpecOverrides o;
    o.k = a.k;
    const ModelSpec spec = make_spec(a.dataset, a.size, o);
    if (a.what == "shapes") {
      const auto shapes = propagate_shapes(spec);
      for (std::size_t i = 0; i < shapes.size(); ++i) {
        std::cout << i << ' ' << shapes[i].channels << 'x' << shapes[i].height << 'x' << shapes[i].width
                  << '\n';
      }
      return kOk;
    }
    if (a.mode != "trainable" && a.mode != "hardware") throw std::invalid_argument("unknown mode: " + a.mode);
    const auto r = count_gates(spec, a.mode == "hardware" ? CountMode::kHardware : CountMode::kTrainable);
    for (const auto& l : r.layers) std::cout << l.name << ',' << l.gates << '\n';
    std::cout << "total," << r.total << '\n';
    return kOk;
  }
  if (a.what == "decay") {
    if (a.init != "residual" && a.init != "gaussian") throw std::invalid_argument("unknown init: " + a.init);
    const auto r = measure_gradient_decay(a.layers, a.width,
                                          a.init == "gaussian" ? InitScheme::kGaussian : InitScheme::kResidual,
                                          a.strength, a.seed);
    json out = {{"init", a.init}, {"layers", a.layers}, {"width", a.width},
                {"layer_ratios", r.layer_ratios}, {"mean_ratio", r.mean_ratio}};
    std::cout << out.dump() << '\n';
    return kOk;
  }
  if (a.what == "histogram") {
    write_gate_histogram(std::cout, load_netlist(a.netlist));
    return kOk;
  }
  throw std::invalid_argument("unknown diagnostic: " + a.what);
}

}  // namespace

int main(int argc, char** argv) {
  g_argv.assign(argv, argv + argc);
  CLI::App app{"Differentiable logic gate networks: train, discretize, simplify, evaluate, export"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  FetchArgs fa;
  auto* fetch = app.add_subcommand("fetch", "Download a dataset into the data directory");
  fetch->add_option("--dataset", fa.dataset, "mnist or cifar10")->required();
  fetch->add_option("--data-dir", fa.data_dir, "Defaults to $LGN_DATA_DIR or ~/.cache/lgn");
  fetch->add_option("--source", fa.source, "URL prefix or local directory with the archives");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a relaxed network and save the best checkpoint");
  train->add_option("--dataset", ta.dataset, "mnist, cifar10, motif or xor");
  train->add_option("--size", ta.size, "S, M, B, L or G");
  train->add_option("--k", ta.k, "Base kernel count");
  train->add_option("--ox", ta.ox);
  train->add_option("--input-bits", ta.input_bits);
  train->add_option("--groups", ta.groups);
  train->add_option("--lr", ta.learning_rate);
  train->add_option("--weight-decay", ta.weight_decay);
  train->add_option("--tau", ta.tau);
  train->add_option("--residual-strength", ta.residual_strength);
  train->add_option("--batch-size", ta.batch_size);
  train->add_option("--threads", ta.threads, "0 uses every core");
  train->add_option("--steps", ta.steps);
  train->add_option("--eval-interval", ta.eval_interval);
  train->add_option("--eval-samples", ta.eval_samples);
  train->add_option("--init", ta.init)->check(CLI::IsMember({"residual", "gaussian"}));
  train->add_option("--seed", ta.seeds, "One or more seeds; several seeds write seed_<s>/ and summary.json");
  train->add_option("--config", ta.config, "JSON file; flags take precedence")->check(CLI::ExistingFile);
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--data-dir", ta.data_dir);
  train->add_flag("--quiet", ta.quiet);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Accuracy of a checkpoint or netlist");
  auto* ck_opt = eval->add_option("--checkpoint", ea.checkpoint);
  auto* nl_opt = eval->add_option("--netlist", ea.netlist);
  ck_opt->excludes(nl_opt);
  eval->add_option("--dataset", ea.dataset);
  eval->add_option("--split", ea.split)->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--mode", ea.mode)->check(CLI::IsMember({"soft", "hard", "discrete"}));
  eval->add_option("--threads", ea.threads);
  eval->add_option("--data-dir", ea.data_dir);

  DiscretizeArgs da;
  auto* disc = app.add_subcommand("discretize", "Convert a checkpoint into a netlist");
  disc->add_option("--checkpoint", da.checkpoint)->required();
  disc->add_option("--out", da.out)->required();
  disc->add_flag("--simplify", da.simplify);
  disc->add_option("--histogram", da.histogram, "Per-layer gate histogram CSV");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Simplify a netlist");
  synth->add_option("--netlist", sa.netlist)->required();
  synth->add_option("--out", sa.out)->required();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Time the bit-packed evaluator");
  bench->add_option("--netlist", ba.netlist)->required();
  bench->add_option("--dataset", ba.dataset, "Random inputs when omitted");
  bench->add_option("--split", ba.split)->check(CLI::IsMember({"train", "val", "test"}));
  bench->add_option("--data-dir", ba.data_dir);
  bench->add_option("--threads", ba.threads)->delimiter(',');
  bench->add_option("--repeats", ba.repeats);
  bench->add_option("--samples", ba.samples);
  bench->add_option("--csv", ba.csv);

  ExportArgs xa;
  auto* exp = app.add_subcommand("export", "Write a netlist as Verilog");
  exp->add_option("--netlist", xa.netlist)->required();
  exp->add_option("--verilog", xa.verilog)->required();
  exp->add_option("--module", xa.module_name);
  exp->add_flag("--raw", xa.raw, "Expose the output bits instead of per-class popcounts");

  DiagArgs ga;
  auto* diag = app.add_subcommand("diag", "Gate counts, layer shapes, gradient decay, gate histograms");
  diag->add_option("what", ga.what)->required()->check(CLI::IsMember({"count", "shapes", "decay", "histogram"}));
  diag->add_option("--dataset", ga.dataset);
  diag->add_option("--size", ga.size);
  diag->add_option("--k", ga.k);
  diag->add_option("--mode", ga.mode);
  diag->add_option("--layers", ga.layers);
  diag->add_option("--width", ga.width);
  diag->add_option("--init", ga.init);
  diag->add_option("--residual-strength", ga.strength);
  diag->add_option("--seed", ga.seed);
  diag->add_option("--netlist", ga.netlist);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fetch) return run_fetch(fa);
    if (*train) return run_train(ta);
    if (*eval) {
      if (ea.checkpoint.empty() && ea.netlist.empty()) {
        throw std::invalid_argument("eval needs --checkpoint or --netlist");
      }
      return run_eval(ea);
    }
    if (*disc) return run_discretize(da);
    if (*synth) return run_synth(sa);
    if (*bench) return run_bench(ba);
    if (*exp) return run_export(xa);
    if (*diag) return run_diag(ga);
  } catch (const tools::FetchError& e) {
    std::cerr << "lgn: " << e.what() << '\n';
    return kNetwork;
  } catch (const TrainingDivergedError& e) {
    std::cerr << "lgn: " << e.what() << '\n';
    return kDiverged;
  } catch (const DataFormatError& e) {
    std::cerr << "lgn: " << e.what() << '\n';
    return kData;
  } catch (const CheckpointError& e) {
    std::cerr << "lgn: " << e.what() << '\n';
    return kFormat;
  } catch (const NetlistFormatError& e) {
    std::cerr << "lgn: " << e.what() << '\n';
    return kFormat;
  } catch (const std::invalid_argument& e) {
    std::cerr << "lgn: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "lgn: " << e.what() << '\n';
    return kError;
  }
  return kError;
}
