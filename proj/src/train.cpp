#include "ltv/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

#include "ltv/error.hpp"

namespace ltv::drnn {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

LossSum masked_squared_error(std::span<const double> predictions, const TrainingSequence& seq,
                             double scale, std::span<double> dpred) {
  if (predictions.size() != seq.targets.size() || seq.mask.size() != seq.targets.size()) {
    throw ShapeError("masked_squared_error: predictions " + std::to_string(predictions.size()) +
                     ", targets " + std::to_string(seq.targets.size()) + ", mask " +
                     std::to_string(seq.mask.size()));
  }
  LossSum loss;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!seq.mask[i]) {
      if (!dpred.empty()) dpred[i] = 0.0;
      continue;
    }
    const double diff = predictions[i] - seq.targets[i];
    loss.sum_squares += diff * diff;
    loss.count += 1;
    if (!dpred.empty()) dpred[i] = 2.0 * scale * diff;
  }
  return loss;
}

LossSum evaluate_loss(const NetworkSpec& spec, const NetworkParams& params,
                      std::span<const TrainingSequence> data, std::size_t threads) {
  std::vector<LossSum> parts(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const ForwardCache cache = forward_sequence(spec, params, data[i].input);
    parts[i] = masked_squared_error(cache.predictions, data[i], 1.0, {});
  });
  LossSum total;
  for (const auto& p : parts) {
    total.sum_squares += p.sum_squares;
    total.count += p.count;
  }
  return total;
}

namespace {

std::size_t mask_count(const TrainingSequence& s) {
  return static_cast<std::size_t>(std::count_if(s.mask.begin(), s.mask.end(),
                                                [](std::uint8_t m) { return m != 0; }));
}

}  // namespace

double batch_gradient(const NetworkSpec& spec, const NetworkParams& params,
                      std::span<const TrainingSequence* const> batch, NetworkParams& grads,
                      std::size_t threads) {
  std::size_t count = 0;
  for (const auto* s : batch) count += mask_count(*s);
  grads.set_zero();
  if (count == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(count);
  // Per-sequence buffers keep the summation order independent of threading.
  std::vector<NetworkParams> per_seq(batch.size(), grads);
  std::vector<LossSum> losses(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const TrainingSequence& seq = *batch[i];
    const ForwardCache cache = forward_sequence(spec, params, seq.input);
    std::vector<double> dpred(cache.predictions.size());
    losses[i] = masked_squared_error(cache.predictions, seq, scale, dpred);
    backward_sequence(spec, params, cache, dpred, per_seq[i]);
  });
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    grads.add(per_seq[i]);
    sum += losses[i].sum_squares;
  }
  return sum * scale;
}

TrainResult train(const NetworkSpec& spec, std::span<const TrainingSequence> data,
                  std::span<const TrainingSequence> validation, const TrainConfig& config,
                  RngStream& rng, const std::optional<NetworkParams>& initial) {
  if (data.empty()) throw UsageError("train: no training sequences");
  if (config.batch_size == 0) throw UsageError("train: batch_size must be >= 1");
  spec.validate();
  NetworkParams params = initial ? *initial : NetworkParams::initialize(spec, rng);
  params.validate(spec);

  const std::size_t n_params = params.parameter_count();
  AdamState adam = AdamState::create(n_params, config.learning_rate, config.beta1, config.beta2,
                                     config.epsilon);
  NetworkParams grads = NetworkParams::zeros(spec);
  Vector flat_params = params.flatten();
  Vector flat_grads(n_params);

  TrainResult result;
  result.params = params;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const TrainingSequence*> batch;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    double epoch_sq = 0.0;
    std::size_t epoch_count = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      std::size_t count = 0;
      for (std::size_t j = start; j < end; ++j) {
        batch.push_back(&data[order[j]]);
        count += mask_count(data[order[j]]);
      }
      if (count == 0) continue;
      const double loss = batch_gradient(spec, params, batch, grads, config.threads);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batch_index + 1));
      }
      epoch_sq += loss * static_cast<double>(count);
      epoch_count += count;
      std::size_t offset = 0;
      grads.for_each_array([&](std::span<const double> a) {
        std::copy(a.begin(), a.end(), flat_grads.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += a.size();
      });
      clip_by_global_norm(flat_grads, config.clip_norm);
      adam_step(flat_params, flat_grads, adam);
      params.assign(flat_params);
    }
    const double train_loss = epoch_count ? epoch_sq / static_cast<double>(epoch_count) : 0.0;
    result.train_loss.push_back(train_loss);
    double monitored = train_loss;
    if (!validation.empty()) {
      const LossSum v = evaluate_loss(spec, params, validation, config.threads);
      result.validation_loss.push_back(v.mean());
      if (v.count > 0) monitored = v.mean();  // fully masked validation: fall back
    }
    if (!std::isfinite(monitored)) {
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1));
    }
    if (monitored < best) {
      best = monitored;
      since_best = 0;
      result.params = params;
      result.best_epoch = epoch + 1;
    } else if (++since_best > config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

GradientCheck gradient_check(const NetworkSpec& spec, const NetworkParams& params, const TrainingSequence& seq,
                             double h) {
  params.validate(spec);
  NetworkParams grads = NetworkParams::zeros(spec);
  const ForwardCache cache = forward_sequence(spec, params, seq.input);
  std::vector<double> dpred(cache.predictions.size());
  masked_squared_error(cache.predictions, seq, 1.0, dpred);
  backward_sequence(spec, params, cache, dpred, grads);
  const Vector analytic = grads.flatten();
  NetworkParams probe = params;
  const auto loss = [&](std::span<const double> flat) {
    probe.assign(flat);
    return masked_squared_error(forward_sequence(spec, probe, seq.input).predictions, seq, 1.0, {}).sum_squares;
  };
  const Vector numeric = finite_diff_gradient(loss, params.flatten(), h);
  GradientCheck out;
  out.parameters = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double e = max_relative_error(std::span(&analytic[i], 1), std::span(&numeric[i], 1), 1e-6);
    if (e > out.max_relative_error) {
      out.max_relative_error = e;
      out.worst_index = i;
    }
  }
  return out;
}

GradientCheck random_gradient_check(NetworkSpec spec, std::size_t length, std::uint64_t seed) {
  if (length == 0) throw UsageError("sequence length must be >= 1");
  for (auto& e : spec.embeddings) {
    if (e.vocabulary == 0) e.vocabulary = 5;
  }
  spec.validate();
  RngStream rng(seed, 0x9c);
  auto params = NetworkParams::zeros(spec);
  params.for_each_array([&](std::span<double> a) {
    for (double& x : a) x = 1.2 * rng.uniform() - 0.6;
  });
  TrainingSequence seq;
  seq.input.length = length;
  for (std::size_t i = 0; i < length * spec.input_dim; ++i) seq.input.features.push_back(2.0 * rng.uniform() - 1.0);
  for (std::size_t t = 0; t < length; ++t) {
    for (const auto& e : spec.embeddings) seq.input.categories.push_back(static_cast<std::int32_t>(rng.below(e.vocabulary)));
  }
  for (std::size_t i = 0; i < length * spec.output_dim; ++i) {
    seq.targets.push_back(2.0 * rng.uniform() - 1.0);
    seq.mask.push_back(rng.uniform() < 0.8 ? 1 : 0);
  }
  return gradient_check(spec, params, seq);
}

}  // namespace ltv::drnn
