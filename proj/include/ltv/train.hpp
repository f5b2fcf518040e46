#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ltv/network.hpp"
#include "ltv/rng.hpp"

namespace ltv::drnn {

// A network input sequence with per-step targets (T x K) and a 0/1 validity
// mask of the same shape. Masked entries never contribute to loss or gradient.
struct TrainingSequence {
  SequenceInput input;
  std::vector<double> targets;
  std::vector<std::uint8_t> mask;
};

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
  std::size_t patience = 10;
  std::size_t threads = 0;  // 0: hardware concurrency
};

struct TrainResult {
  NetworkParams params;  // at the best validation (or training) loss
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

struct LossSum {
  double sum_squares = 0.0;
  std::size_t count = 0;
  double mean() const { return count ? sum_squares / static_cast<double>(count) : 0.0; }
};

// Sum of masked squared errors. If dpred is non-empty it receives
// 2 * scale * (pred - target) at unmasked entries and 0 elsewhere.
LossSum masked_squared_error(std::span<const double> predictions, const TrainingSequence& seq,
                             double scale, std::span<double> dpred);

LossSum evaluate_loss(const NetworkSpec& spec, const NetworkParams& params,
                      std::span<const TrainingSequence> data, std::size_t threads = 0);

// Gradient of the mean masked squared error over `batch` (used by train and
// by gradient tests). Returns the loss.
double batch_gradient(const NetworkSpec& spec, const NetworkParams& params,
                      std::span<const TrainingSequence* const> batch, NetworkParams& grads,
                      std::size_t threads = 0);

// Minibatch Adam with global-norm clipping and early stopping on the
// validation loss (training loss when validation is empty or fully masked).
TrainResult train(const NetworkSpec& spec, std::span<const TrainingSequence> data,
                  std::span<const TrainingSequence> validation, const TrainConfig& config,
                  RngStream& rng, const std::optional<NetworkParams>& initial = std::nullopt);

// Analytic gradient of the summed masked squared error against central
// differences with step h, over every parameter.
struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t parameters = 0;
};
GradientCheck gradient_check(const NetworkSpec& spec, const NetworkParams& params, const TrainingSequence& seq,
                             double h = 1e-5);
// Same check on parameters uniform in +-0.6, random inputs, targets and a
// mask keeping 80% of the entries. Embedding vocabularies of 0 become 5.
GradientCheck random_gradient_check(NetworkSpec spec, std::size_t length, std::uint64_t seed);

// Runs fn(i) for i in [0, n) across worker threads; each index runs exactly once.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace ltv::drnn
