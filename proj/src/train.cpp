#include "lgn/train.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "parallel.hpp"

namespace lgn {

template <typename T>
T softmax_cross_entropy(std::span<const T> scores, int label, std::span<T> grad) {
  if (scores.empty() || grad.size() != scores.size()) throw ShapeError("score size mismatch");
  if (label < 0 || static_cast<std::size_t>(label) >= scores.size()) {
    throw std::out_of_range("label out of range");
  }
  const T m = *std::max_element(scores.begin(), scores.end());
  double sum = 0;
  for (T s : scores) sum += std::exp(double(s - m));
  const double lse = double(m) + std::log(sum);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    grad[i] = static_cast<T>(std::exp(double(scores[i]) - lse));
  }
  grad[static_cast<std::size_t>(label)] -= T(1);
  return static_cast<T>(lse - double(scores[static_cast<std::size_t>(label)]));
}

template <typename T>
AdamW<T>::AdamW(std::size_t size, double learning_rate, double weight_decay)
    : lr_(learning_rate), wd_(weight_decay), m_(size, T(0)), v_(size, T(0)) {}

template <typename T>
void AdamW<T>::step(std::span<T> params, std::span<const T> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("optimizer size mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, double(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, double(t_));
  const double decay = 1.0 - lr_ * wd_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = kBeta1 * m_[i] + (1 - kBeta1) * g;
    const double v = kBeta2 * v_[i] + (1 - kBeta2) * g * g;
    m_[i] = static_cast<T>(m);
    v_[i] = static_cast<T>(v);
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    params[i] = static_cast<T>(params[i] * decay - lr_ * mhat / (std::sqrt(vhat) + kEpsilon));
  }
}

TrainConfig TrainConfig::from_spec(const ModelSpec& spec) {
  TrainConfig c;
  c.learning_rate = spec.learning_rate;
  c.weight_decay = spec.weight_decay;
  c.tau = spec.tau;
  c.batch_size = spec.batch_size;
  return c;
}

namespace {

const char* init_name(InitScheme s) { return s == InitScheme::kGaussian ? "gaussian" : "residual"; }

InitScheme parse_init(const std::string& s) {
  if (s == "residual") return InitScheme::kResidual;
  if (s == "gaussian") return InitScheme::kGaussian;
  throw std::invalid_argument("unknown init scheme: " + s);
}

}  // namespace

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"weight_decay", c.weight_decay},
                     {"tau", c.tau},
                     {"batch_size", c.batch_size},
                     {"steps", c.steps},
                     {"eval_interval", c.eval_interval},
                     {"seed", c.seed},
                     {"init", init_name(c.init)},
                     {"residual_strength", c.residual_strength},
                     {"threads", c.threads},
                     {"eval_samples", c.eval_samples},
                     {"density_samples", c.density_samples}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.tau = j.value("tau", d.tau);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.steps = j.value("steps", d.steps);
  c.eval_interval = j.value("eval_interval", d.eval_interval);
  c.seed = j.value("seed", d.seed);
  c.init = parse_init(j.value("init", std::string(init_name(d.init))));
  c.residual_strength = j.value("residual_strength", d.residual_strength);
  c.threads = j.value("threads", d.threads);
  c.eval_samples = j.value("eval_samples", d.eval_samples);
  c.density_samples = j.value("density_samples", d.density_samples);
}

void write_metrics_header(std::ostream& out, std::size_t blocks) {
  out << "step,train_loss,train_acc,val_acc_soft,val_acc_hard,best_val_acc,seconds";
  for (std::size_t b = 0; b < blocks; ++b) out << ",pre_pool_" << b << ",post_pool_" << b;
  out << '\n';
}

void write_metrics_row(std::ostream& out, const Metrics& m) {
  out << m.step << ',' << m.train_loss << ',' << m.train_acc << ',' << m.val_acc_soft << ','
      << m.val_acc_hard << ',' << m.best_val_acc << ',' << m.seconds;
  for (const auto& d : m.densities) out << ',' << d.pre_pool << ',' << d.post_pool;
  out << '\n';
}

template <typename T>
void load_input(std::span<const std::uint8_t> bits, std::span<T> out) {
  if (bits.size() != out.size()) throw ShapeError("input size mismatch");
  for (std::size_t i = 0; i < bits.size(); ++i) out[i] = bits[i] ? T(1) : T(0);
}

namespace {

template <typename T>
std::size_t argmax_score(std::span<const T> s) {
  return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
}

template <typename T>
void check_compatible(const Network<T>& net, const BinaryEncodedSet& data) {
  if (data.shape.size() != net.input_size()) {
    throw ShapeError("dataset sample size " + std::to_string(data.shape.size()) +
                     " does not match network input " + std::to_string(net.input_size()));
  }
}

}  // namespace

template <typename T>
EvalResult evaluate(Network<T>& net, const BinaryEncodedSet& data, bool hard, int threads,
                    std::size_t limit) {
  check_compatible(net, data);
  const std::size_t n = limit == 0 ? data.size() : std::min(limit, data.size());
  if (hard) net.prepare_hard();
  const int t = detail::resolve_threads(threads);
  std::vector<std::size_t> correct(static_cast<std::size_t>(t), 0);
  std::vector<double> loss(static_cast<std::size_t>(t), 0.0);
  try {
    detail::parallel_chunks(n, t, [&](std::size_t c, std::size_t begin, std::size_t end) {
      auto ws = net.make_workspace();
      std::vector<T> input(net.input_size());
      std::vector<T> grad(static_cast<std::size_t>(net.classes()));
      for (std::size_t i = begin; i < end; ++i) {
        load_input<T>(data.sample(i), input);
        net.forward(input, ws);
        const int label = data.labels[i];
        loss[c] += softmax_cross_entropy<T>(ws.scores, label, grad);
        if (argmax_score<T>(ws.scores) == static_cast<std::size_t>(label)) ++correct[c];
      }
    });
  } catch (...) {
    if (hard) net.prepare();
    throw;
  }
  if (hard) net.prepare();
  EvalResult r;
  r.samples = n;
  if (n > 0) {
    r.accuracy = double(std::accumulate(correct.begin(), correct.end(), std::size_t{0})) / double(n);
    r.loss = std::accumulate(loss.begin(), loss.end(), 0.0) / double(n);
  }
  return r;
}

template <typename T>
std::vector<BlockDensity> activation_stats(const Network<T>& net, const BinaryEncodedSet& data,
                                           std::size_t samples) {
  check_compatible(net, data);
  const std::size_t n = std::min(samples, data.size());
  std::vector<BlockDensity> out;
  const auto& stages = net.stages();
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (!std::holds_alternative<RandomLayer<T>>(stages[s])) {
      out.push_back(BlockDensity{static_cast<int>(s), 0.0, 0.0});
    }
  }
  if (n == 0) return out;
  auto ws = net.make_workspace();
  std::vector<T> input(net.input_size());
  for (std::size_t i = 0; i < n; ++i) {
    load_input<T>(data.sample(i), input);
    net.forward(input, ws);
    std::size_t b = 0;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const auto& post = ws.acts[s + 1];
      const double post_mean =
          std::accumulate(post.begin(), post.end(), 0.0) / double(std::max<std::size_t>(post.size(), 1));
      if (const auto* block = std::get_if<ConvBlock<T>>(&stages[s])) {
        out[b].pre_pool += double(block->pre_pool_mean(ws.acts[s]));
        out[b].post_pool += post_mean;
        ++b;
      } else if (std::holds_alternative<PoolStage>(stages[s])) {
        const auto& pre = ws.acts[s];
        out[b].pre_pool += std::accumulate(pre.begin(), pre.end(), 0.0) / double(pre.size());
        out[b].post_pool += post_mean;
        ++b;
      }
    }
  }
  for (auto& d : out) {
    d.pre_pool /= double(n);
    d.post_pool /= double(n);
  }
  return out;
}

template <typename T>
FitResult<T> fit(Network<T>& net, const BinaryEncodedSet& train, const BinaryEncodedSet& val,
                 const TrainConfig& config, std::ostream* metrics_csv,
                 const std::function<void(const Metrics&)>& on_eval) {
  check_compatible(net, train);
  check_compatible(net, val);
  if (config.batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  if (train.size() == 0) throw std::invalid_argument("empty training set");
  const std::size_t batch = std::min<std::size_t>(config.batch_size, train.size());
  const int threads = detail::resolve_threads(config.threads);
  const std::int64_t interval = config.eval_interval > 0 ? config.eval_interval : config.steps;

  net.set_tau(config.tau);
  net.prepare();

  std::vector<typename Network<T>::Workspace> workspaces;
  std::vector<typename Network<T>::Gradients> grads;
  for (int t = 0; t < threads; ++t) {
    workspaces.push_back(net.make_workspace());
    grads.push_back(net.make_gradients());
  }
  std::vector<double> shard_loss(static_cast<std::size_t>(threads));
  std::vector<std::size_t> shard_correct(static_cast<std::size_t>(threads));

  std::vector<T> params = net.parameters();
  std::vector<T> dlogits(params.size());
  AdamW<T> opt(params.size(), config.learning_rate, config.weight_decay);

  std::mt19937_64 rng(mix_seed(config.seed, 0x5eed));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = train.size();

  FitResult<T> result;
  result.best_parameters = params;
  const std::size_t blocks = activation_stats(net, val, 0).size();
  if (metrics_csv) write_metrics_header(*metrics_csv, blocks);

  double run_loss = 0;
  std::size_t run_correct = 0;
  std::size_t run_samples = 0;
  const auto start = std::chrono::steady_clock::now();
  const T inv_batch = T(1) / static_cast<T>(batch);

  for (std::int64_t step = 1; step <= config.steps; ++step) {
    if (cursor + batch > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::span<const std::size_t> ids(order.data() + cursor, batch);
    cursor += batch;

    detail::parallel_chunks(batch, threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
      auto& ws = workspaces[c];
      auto& g = grads[c];
      g.clear();
      shard_loss[c] = 0;
      shard_correct[c] = 0;
      std::vector<T> input(net.input_size());
      std::vector<T> dscore(static_cast<std::size_t>(net.classes()));
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t id = ids[i];
        load_input<T>(train.sample(id), input);
        net.forward(input, ws);
        const int label = train.labels[id];
        shard_loss[c] += softmax_cross_entropy<T>(ws.scores, label, dscore);
        if (argmax_score<T>(ws.scores) == static_cast<std::size_t>(label)) ++shard_correct[c];
        for (auto& d : dscore) d *= inv_batch;
        net.backward(ws, dscore, g);
      }
    });
    for (int t = 1; t < threads; ++t) grads[0].add(grads[static_cast<std::size_t>(t)]);
    const double step_loss = std::accumulate(shard_loss.begin(), shard_loss.end(), 0.0);
    if (!std::isfinite(step_loss)) {
      throw TrainingDivergedError("non-finite loss at step " + std::to_string(step));
    }
    run_loss += step_loss;
    run_correct += std::accumulate(shard_correct.begin(), shard_correct.end(), std::size_t{0});
    run_samples += batch;

    net.logit_gradients(grads[0], dlogits);
    opt.step(params, dlogits);
    net.set_parameters(params);

    if (step % interval == 0 || step == config.steps) {
      Metrics m;
      m.step = step;
      m.train_loss = run_loss / double(run_samples);
      m.train_acc = double(run_correct) / double(run_samples);
      m.val_acc_soft = evaluate(net, val, false, threads, config.eval_samples).accuracy;
      m.val_acc_hard = evaluate(net, val, true, threads, config.eval_samples).accuracy;
      if (m.val_acc_hard > result.best_val_acc) {
        result.best_val_acc = m.val_acc_hard;
        result.best_step = step;
        result.best_parameters = params;
      }
      m.best_val_acc = result.best_val_acc;
      m.densities = activation_stats(net, val, config.density_samples);
      m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (metrics_csv) {
        write_metrics_row(*metrics_csv, m);
        metrics_csv->flush();
      }
      if (on_eval) on_eval(m);
      result.log.push_back(std::move(m));
      run_loss = 0;
      run_correct = 0;
      run_samples = 0;
    }
  }
  return result;
}

GradientDecayReport measure_gradient_decay(int layers, int width, InitScheme init,
                                           double residual_strength, std::uint64_t seed) {
  if (layers < 1 || width < 2) throw std::invalid_argument("need at least one layer of width 2");
  std::vector<RandomLayer<double>> stack;
  std::mt19937_64 rng(mix_seed(seed, 0x1a1d));
  for (int l = 0; l < layers; ++l) {
    stack.emplace_back(sample_random_wiring(mix_seed(seed, static_cast<std::uint64_t>(l)), width, width));
    if (init == InitScheme::kResidual) {
      stack.back().params().init_residual(residual_strength);
    } else {
      stack.back().params().init_gaussian(rng);
    }
  }
  const auto w = static_cast<std::size_t>(width);
  std::vector<std::vector<double>> acts(static_cast<std::size_t>(layers) + 1, std::vector<double>(w));
  std::bernoulli_distribution coin(0.5);
  for (auto& v : acts[0]) v = coin(rng) ? 1.0 : 0.0;
  for (std::size_t l = 0; l < stack.size(); ++l) stack[l].forward(acts[l], acts[l + 1]);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> grad(w);
  for (auto& g : grad) g = normal(rng);
  auto norm = [](const std::vector<double>& v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  };

  GradientDecayReport report;
  std::vector<double> below(w);
  for (std::size_t l = stack.size(); l-- > 0;) {
    std::vector<GateCoeffs<double>> dcoef(w);
    std::fill(below.begin(), below.end(), 0.0);
    stack[l].backward(acts[l], grad, below, dcoef);
    const double upper = norm(grad);
    report.layer_ratios.push_back(upper > 0 ? norm(below) / upper : 0.0);
    grad.swap(below);
  }
  report.mean_ratio = std::accumulate(report.layer_ratios.begin(), report.layer_ratios.end(), 0.0) /
                      double(report.layer_ratios.size());
  return report;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'L', 'G', 'N', 'C', 'K', 'P', 'T', '\0'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json manifest{{"format_version", kCheckpointVersion},
                          {"spec", ckpt.spec},
                          {"config", ckpt.config},
                          {"seed", ckpt.seed},
                          {"step", ckpt.step},
                          {"parameter_count", ckpt.parameters.size()},
                          {"extra", ckpt.extra}};
  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<char> blob(ckpt.parameters.size() * 4);
  for (std::size_t i = 0; i < ckpt.parameters.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(ckpt.parameters[i]);
    for (int k = 0; k < 4; ++k) blob[4 * i + static_cast<std::size_t>(k)] = static_cast<char>((u >> (8 * k)) & 0xff);
  }
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a checkpoint: " + path.string());
  }
  const std::uint64_t len = get_u64(bytes.data() + 8);
  if (len > bytes.size() - 16) throw CheckpointError("truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad manifest: ") + e.what());
  }
  const int version = manifest.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  try {
    ckpt.spec = manifest.at("spec").get<ModelSpec>();
    ckpt.config = manifest.at("config").get<TrainConfig>();
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();
    ckpt.step = manifest.at("step").get<std::int64_t>();
    ckpt.extra = manifest.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad manifest: ") + e.what());
  }
  const auto count = manifest.value("parameter_count", std::uint64_t{0});
  const std::size_t offset = 16 + len;
  if (bytes.size() - offset != count * 4) throw CheckpointError("parameter blob size mismatch");
  ckpt.parameters.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u = 0;
    for (int k = 0; k < 4; ++k) u |= std::uint32_t(bytes[offset + 4 * i + static_cast<std::size_t>(k)]) << (8 * k);
    ckpt.parameters[i] = std::bit_cast<float>(u);
  }
  return ckpt;
}

template <typename T>
Network<T> network_from_checkpoint(const Checkpoint& ckpt) {
  Network<T> net(ckpt.spec, ckpt.seed);
  if (ckpt.parameters.size() != net.parameter_count()) {
    throw CheckpointError("checkpoint has " + std::to_string(ckpt.parameters.size()) +
                          " parameters, model expects " + std::to_string(net.parameter_count()));
  }
  std::vector<T> p(ckpt.parameters.begin(), ckpt.parameters.end());
  net.set_parameters(p);
  net.set_tau(ckpt.config.tau);
  return net;
}

#define LGN_INSTANTIATE(T)                                                                       \
  template T softmax_cross_entropy<T>(std::span<const T>, int, std::span<T>);                   \
  template class AdamW<T>;                                                                       \
  template void load_input<T>(std::span<const std::uint8_t>, std::span<T>);                     \
  template EvalResult evaluate<T>(Network<T>&, const BinaryEncodedSet&, bool, int, std::size_t); \
  template std::vector<BlockDensity> activation_stats<T>(const Network<T>&,                     \
                                                         const BinaryEncodedSet&, std::size_t); \
  template FitResult<T> fit<T>(Network<T>&, const BinaryEncodedSet&, const BinaryEncodedSet&,   \
                               const TrainConfig&, std::ostream*,                                \
                               const std::function<void(const Metrics&)>&);                     \
  template Network<T> network_from_checkpoint<T>(const Checkpoint&);

LGN_INSTANTIATE(float)
LGN_INSTANTIATE(double)

#undef LGN_INSTANTIATE

}  // namespace lgn
