#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ltv/cells.hpp"
#include "ltv/rng.hpp"

namespace ltv::drnn {

struct LayerSpec {
  CellKind kind = CellKind::drnn;
  std::size_t dilation = 1;
  std::size_t n_y = 0;
  std::size_t n_h = 0;
  bool operator==(const LayerSpec&) const = default;
};

struct BlockSpec {
  std::vector<LayerSpec> layers;
  bool shortcut = false;  // block output = last layer output + block input
  bool operator==(const BlockSpec&) const = default;
};

struct EmbeddingSpec {
  std::size_t vocabulary = 0;
  std::size_t dim = 0;
  bool operator==(const EmbeddingSpec&) const = default;
};

struct NetworkSpec {
  std::size_t input_dim = 0;  // numeric features per step
  std::vector<EmbeddingSpec> embeddings;
  std::vector<BlockSpec> blocks;
  std::size_t output_dim = 1;  // K

  // Width of the first layer's input: numeric features plus all embedding dims.
  std::size_t network_input_dim() const;
  std::size_t layer_count() const;
  // Throws ShapeError on inconsistent sizes.
  void validate() const;

  // Two blocks of two layers with dilations (1, 2) and (4, 8) and a shortcut
  // over the second block.
  static NetworkSpec default_topology(std::size_t input_dim, std::vector<EmbeddingSpec> embeddings,
                                      std::size_t output_dim, CellKind kind = CellKind::drnn,
                                      std::size_t n_y = 12, std::size_t n_h = 6);

  bool operator==(const NetworkSpec&) const = default;
};

struct NetworkParams {
  std::vector<CellParams> layers;  // all layers, block order
  std::vector<Matrix> embeddings;  // vocabulary x dim
  Matrix adaptor;                  // K x top n_y
  Vector adaptor_bias;

  static NetworkParams zeros(const NetworkSpec& spec);
  // Uniform in +-sqrt(1/fan_in); retain-type gate biases start at +1.
  static NetworkParams initialize(const NetworkSpec& spec, RngStream& rng);

  std::size_t parameter_count() const;
  // Visits every parameter array in a fixed order (layers, embeddings, adaptor).
  void for_each_array(const std::function<void(std::span<double>)>& fn);
  void for_each_array(const std::function<void(std::span<const double>)>& fn) const;
  Vector flatten() const;
  void assign(std::span<const double> flat);
  void set_zero();
  // this += other (same shapes)
  void add(const NetworkParams& other);
  void validate(const NetworkSpec& spec) const;

  bool operator==(const NetworkParams&) const = default;
};

// Returns row `id` of an embedding table; DataError names the id and vocabulary.
Vector embed_lookup(const Matrix& table, std::int64_t id);
// Adds `grad_row` into row `id` of the table gradient.
void embed_accumulate(Matrix& table_grad, std::int64_t id, std::span<const double> grad_row);

// One sequence of network inputs. features is length x input_dim, categories
// is length x embeddings.size(), both row-major by step.
struct SequenceInput {
  std::size_t length = 0;
  std::vector<double> features;
  std::vector<std::int32_t> categories;
};

struct LayerTrace {
  std::size_t in_dim = 0;
  std::vector<double> input;   // T x in_dim
  std::vector<double> u, gates, fused, c, tanh_c, v;  // T x width each
  std::vector<double> h;       // T x n_h
  std::vector<double> y;       // T x n_y, the layer's real output
};

// Everything forward_sequence computes, retained for the backward pass.
struct ForwardCache {
  bool valid = false;
  std::size_t length = 0;
  std::vector<std::int32_t> categories;
  std::vector<LayerTrace> layers;
  std::vector<std::vector<double>> block_outputs;  // per block, T x dim
  std::vector<double> predictions;                 // T x K

  std::span<const double> prediction(std::size_t t, std::size_t k_dim) const {
    return {predictions.data() + t * k_dim, k_dim};
  }
};

ForwardCache forward_sequence(const NetworkSpec& spec, const NetworkParams& params,
                              const SequenceInput& input);

// Accumulates gradients of sum_t <dpred_t, pred_t> into `grads` (shaped like params).
void backward_sequence(const NetworkSpec& spec, const NetworkParams& params,
                       const ForwardCache& cache, std::span<const double> dpred,
                       NetworkParams& grads);

}  // namespace ltv::drnn
