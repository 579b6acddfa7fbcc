#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgn/data.hpp"
#include "lgn/network.hpp"

namespace lgn {

/// Softmax cross-entropy with a stable log-sum-exp. Writes softmax(scores) - onehot(label)
/// into `grad` and returns the loss.
template <typename T>
T softmax_cross_entropy(std::span<const T> scores, int label, std::span<T> grad);

/// AdamW with decoupled weight decay: p <- p - lr*wd*p, then the bias-corrected Adam step.
template <typename T>
class AdamW {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  AdamW(std::size_t size, double learning_rate, double weight_decay);

  void step(std::span<T> params, std::span<const T> grads);

  std::int64_t steps() const { return t_; }
  double learning_rate() const { return lr_; }
  double weight_decay() const { return wd_; }

 private:
  double lr_;
  double wd_;
  std::int64_t t_ = 0;
  std::vector<T> m_;
  std::vector<T> v_;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double weight_decay = 0.0;
  double tau = 1.0;
  int batch_size = 128;
  std::int64_t steps = 1000;
  std::int64_t eval_interval = 1000;
  std::uint64_t seed = 0;
  InitScheme init = InitScheme::kResidual;
  double residual_strength = 5.0;
  int threads = 1;
  /// Validation samples used per evaluation (0 = all).
  std::size_t eval_samples = 0;
  /// Samples used for the activation-density columns of the metrics log.
  std::size_t density_samples = 64;

  /// Table-style defaults carried by a ModelSpec.
  static TrainConfig from_spec(const ModelSpec& spec);
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct BlockDensity {
  int stage = 0;
  double pre_pool = 0.0;
  double post_pool = 0.0;
};

struct Metrics {
  std::int64_t step = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc_soft = 0.0;
  double val_acc_hard = 0.0;
  double best_val_acc = 0.0;
  double seconds = 0.0;
  std::vector<BlockDensity> densities;
};

/// Writes the metrics header (given the number of conv/pool blocks) and rows.
void write_metrics_header(std::ostream& out, std::size_t blocks);
void write_metrics_row(std::ostream& out, const Metrics& m);

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t samples = 0;
};

/// Accuracy of argmax(scores). `hard` evaluates the discretized network (one-hot gates);
/// the relaxed parameters are restored afterwards.
template <typename T>
EvalResult evaluate(Network<T>& net, const BinaryEncodedSet& data, bool hard, int threads = 1,
                    std::size_t limit = 0);

template <typename T>
struct FitResult {
  std::vector<T> best_parameters;
  std::int64_t best_step = 0;
  double best_val_acc = -1.0;
  std::vector<Metrics> log;
};

/// Trains with shuffled mini-batches. Every eval_interval steps (and at the end) the
/// discretized validation accuracy is measured and the best parameters retained.
/// Throws TrainingDivergedError on a non-finite loss.
template <typename T>
FitResult<T> fit(Network<T>& net, const BinaryEncodedSet& train, const BinaryEncodedSet& val,
                 const TrainConfig& config, std::ostream* metrics_csv = nullptr,
                 const std::function<void(const Metrics&)>& on_eval = {});

/// Mean activation before and after pooling for every conv or pool stage, in relaxed mode.
template <typename T>
std::vector<BlockDensity> activation_stats(const Network<T>& net, const BinaryEncodedSet& data,
                                           std::size_t samples);

struct GradientDecayReport {
  std::vector<double> layer_ratios;  // ||dL/dx_{l-1}|| / ||dL/dx_l||, output side first
  double mean_ratio = 0.0;
};

/// Backward gradient-norm ratio per layer of a stack of `layers` equal-width random logic
/// layers, fed a random boolean input and a standard-normal upstream gradient.
GradientDecayReport measure_gradient_decay(int layers, int width, InitScheme init,
                                           double residual_strength, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints: "LGNCKPT\0", u64 LE manifest length, JSON manifest, f32 LE parameters.

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelSpec spec;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::vector<float> parameters;
  nlohmann::json extra = nlohmann::json::object();
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Network with the checkpoint's wiring and parameters, prepared in relaxed mode.
template <typename T>
Network<T> network_from_checkpoint(const Checkpoint& ckpt);

/// Converts one encoded sample to network input values.
template <typename T>
void load_input(std::span<const std::uint8_t> bits, std::span<T> out);

}  // namespace lgn
