#include "ltv/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ltv/error.hpp"

namespace ltv::drnn {

std::size_t NetworkSpec::network_input_dim() const {
  std::size_t d = input_dim;
  for (const auto& e : embeddings) d += e.dim;
  return d;
}

std::size_t NetworkSpec::layer_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.layers.size();
  return n;
}

void NetworkSpec::validate() const {
  if (output_dim < 1) throw ShapeError("network output_dim must be >= 1");
  if (blocks.empty()) throw ShapeError("network needs at least one block");
  for (const auto& e : embeddings) {
    if (e.vocabulary == 0 || e.dim == 0) throw ShapeError("embedding tables need vocab, dim >= 1");
  }
  std::size_t dim = network_input_dim();
  if (dim == 0) throw ShapeError("network input is empty");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& block = blocks[b];
    if (block.layers.empty()) throw ShapeError("block " + std::to_string(b) + " has no layers");
    const std::size_t block_in = dim;
    for (const auto& layer : block.layers) {
      if (layer.dilation < 1) throw ShapeError("layer dilation must be >= 1");
      if (layer.n_y == 0 || layer.n_h == 0) throw ShapeError("layer sizes must be >= 1");
      if (layer.kind != CellKind::drnn && layer.n_y != layer.n_h) {
        throw ShapeError(std::string(to_string(layer.kind)) + " layer needs n_y == n_h");
      }
      dim = layer.n_y;
    }
    if (block.shortcut && block_in != dim) {
      throw ShapeError("shortcut over block " + std::to_string(b) + " needs input dim " +
                       std::to_string(block_in) + " == output dim " + std::to_string(dim));
    }
  }
}

NetworkSpec NetworkSpec::default_topology(std::size_t input_dim,
                                          std::vector<EmbeddingSpec> embeddings,
                                          std::size_t output_dim, CellKind kind, std::size_t n_y,
                                          std::size_t n_h) {
  if (kind != CellKind::drnn) n_h = n_y;
  NetworkSpec s;
  s.input_dim = input_dim;
  s.embeddings = std::move(embeddings);
  s.output_dim = output_dim;
  s.blocks.push_back(BlockSpec{{{kind, 1, n_y, n_h}, {kind, 2, n_y, n_h}}, false});
  s.blocks.push_back(BlockSpec{{{kind, 4, n_y, n_h}, {kind, 8, n_y, n_h}}, true});
  return s;
}

NetworkParams NetworkParams::zeros(const NetworkSpec& spec) {
  spec.validate();
  NetworkParams p;
  std::size_t dim = spec.network_input_dim();
  for (const auto& block : spec.blocks) {
    for (const auto& layer : block.layers) {
      p.layers.push_back(CellParams::zeros(layer.kind, dim, layer.n_y, layer.n_h));
      dim = layer.n_y;
    }
  }
  for (const auto& e : spec.embeddings) p.embeddings.emplace_back(e.vocabulary, e.dim);
  p.adaptor = Matrix(spec.output_dim, dim);
  p.adaptor_bias.assign(spec.output_dim, 0.0);
  return p;
}

NetworkParams NetworkParams::initialize(const NetworkSpec& spec, RngStream& rng) {
  NetworkParams p = zeros(spec);
  auto fill_uniform = [&](std::span<double> values, double bound) {
    for (double& x : values) x = bound * (2.0 * rng.uniform() - 1.0);
  };
  for (auto& layer : p.layers) {
    const double bound = std::sqrt(1.0 / static_cast<double>(layer.input_width()));
    for (auto& w : layer.weights) fill_uniform(w.values(), bound);
    std::fill(layer.biases[CellParams::kRetainGate].begin(),
              layer.biases[CellParams::kRetainGate].end(), 1.0);
  }
  for (auto& table : p.embeddings) fill_uniform(table.values(), 1.0);
  fill_uniform(p.adaptor.values(), std::sqrt(1.0 / static_cast<double>(p.adaptor.cols())));
  return p;
}

void NetworkParams::for_each_array(const std::function<void(std::span<double>)>& fn) {
  for (auto& layer : layers) {
    for (std::size_t g = 0; g < layer.weights.size(); ++g) {
      fn(layer.weights[g].values());
      fn(layer.biases[g]);
    }
  }
  for (auto& table : embeddings) fn(table.values());
  fn(adaptor.values());
  fn(adaptor_bias);
}

void NetworkParams::for_each_array(const std::function<void(std::span<const double>)>& fn) const {
  for (const auto& layer : layers) {
    for (std::size_t g = 0; g < layer.weights.size(); ++g) {
      fn(layer.weights[g].values());
      fn(layer.biases[g]);
    }
  }
  for (const auto& table : embeddings) fn(table.values());
  fn(adaptor.values());
  fn(adaptor_bias);
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for_each_array([&](std::span<const double> a) { n += a.size(); });
  return n;
}

Vector NetworkParams::flatten() const {
  Vector flat;
  flat.reserve(parameter_count());
  for_each_array([&](std::span<const double> a) { flat.insert(flat.end(), a.begin(), a.end()); });
  return flat;
}

void NetworkParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError("assign: " + std::to_string(flat.size()) + " values for " +
                     std::to_string(parameter_count()) + " parameters");
  }
  std::size_t offset = 0;
  for_each_array([&](std::span<double> a) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), a.size(), a.begin());
    offset += a.size();
  });
}

void NetworkParams::set_zero() {
  for_each_array([](std::span<double> a) { std::fill(a.begin(), a.end(), 0.0); });
}

void NetworkParams::add(const NetworkParams& other) {
  std::vector<std::span<const double>> src;
  other.for_each_array([&](std::span<const double> a) { src.push_back(a); });
  std::size_t idx = 0;
  for_each_array([&](std::span<double> a) {
    if (idx >= src.size() || src[idx].size() != a.size()) {
      throw ShapeError("NetworkParams::add: shape mismatch");
    }
    const auto& s = src[idx++];
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += s[i];
  });
}

void NetworkParams::validate(const NetworkSpec& spec) const {
  if (layers.size() != spec.layer_count() || embeddings.size() != spec.embeddings.size()) {
    throw ShapeError("network params do not match spec layer/embedding counts");
  }
  std::size_t dim = spec.network_input_dim();
  std::size_t l = 0;
  for (const auto& block : spec.blocks) {
    for (const auto& layer : block.layers) {
      const CellParams& p = layers[l];
      if (p.kind != layer.kind || p.n_x != dim || p.n_y != layer.n_y || p.n_h != layer.n_h) {
        throw ShapeError("layer " + std::to_string(l) + " params do not match spec");
      }
      p.validate();
      dim = layer.n_y;
      ++l;
    }
  }
  for (std::size_t e = 0; e < embeddings.size(); ++e) {
    if (embeddings[e].rows() != spec.embeddings[e].vocabulary ||
        embeddings[e].cols() != spec.embeddings[e].dim) {
      throw ShapeError("embedding table " + std::to_string(e) + " is " +
                       embeddings[e].shape_string() + ", expected " +
                       std::to_string(spec.embeddings[e].vocabulary) + "x" +
                       std::to_string(spec.embeddings[e].dim));
    }
  }
  if (adaptor.rows() != spec.output_dim || adaptor.cols() != dim ||
      adaptor_bias.size() != spec.output_dim) {
    throw ShapeError("adaptor is " + adaptor.shape_string() + ", expected " +
                     std::to_string(spec.output_dim) + "x" + std::to_string(dim));
  }
}

Vector embed_lookup(const Matrix& table, std::int64_t id) {
  if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
    throw DataError("category id " + std::to_string(id) + " outside vocabulary of size " +
                    std::to_string(table.rows()));
  }
  const auto row = table.row(static_cast<std::size_t>(id));
  return Vector(row.begin(), row.end());
}

void embed_accumulate(Matrix& table_grad, std::int64_t id, std::span<const double> grad_row) {
  if (id < 0 || static_cast<std::size_t>(id) >= table_grad.rows()) {
    throw DataError("category id " + std::to_string(id) + " outside vocabulary of size " +
                    std::to_string(table_grad.rows()));
  }
  if (grad_row.size() != table_grad.cols()) throw ShapeError("embedding gradient row width");
  auto row = table_grad.row(static_cast<std::size_t>(id));
  for (std::size_t j = 0; j < row.size(); ++j) row[j] += grad_row[j];
}

namespace {

StepBuffers step_buffers(LayerTrace& tr, const CellParams& p, std::size_t t) {
  auto slice = [t](std::vector<double>& v, std::size_t w) {
    return std::span<double>(v.data() + t * w, w);
  };
  return {slice(tr.u, p.input_width()),
          slice(tr.gates, p.gate_count() * p.gate_rows()),
          slice(tr.fused, fused_width(p)),
          slice(tr.c, p.n_c()),
          slice(tr.tanh_c, p.n_c()),
          slice(tr.v, p.output_width())};
}

StepBuffers step_buffers(const LayerTrace& tr, const CellParams& p, std::size_t t) {
  return step_buffers(const_cast<LayerTrace&>(tr), p, t);
}

void run_layer(const CellParams& p, std::size_t dilation, std::size_t length, LayerTrace& tr) {
  const std::size_t nc = p.n_c(), nh = p.n_h, ny = p.n_y;
  tr.u.assign(length * p.input_width(), 0.0);
  tr.gates.assign(length * p.gate_count() * p.gate_rows(), 0.0);
  tr.fused.assign(length * fused_width(p), 0.0);
  tr.c.assign(length * nc, 0.0);
  tr.tanh_c.assign(length * nc, 0.0);
  tr.v.assign(length * p.output_width(), 0.0);
  tr.h.assign(length * nh, 0.0);
  tr.y.assign(length * ny, 0.0);
  const Vector zero_c(nc, 0.0), zero_h(nh, 0.0);
  auto state_at = [&](std::ptrdiff_t t) -> StateView {
    if (t < 0) return {zero_c, zero_h};
    const auto i = static_cast<std::size_t>(t);
    return {std::span<const double>(tr.c.data() + i * nc, nc),
            std::span<const double>(tr.h.data() + i * nh, nh)};
  };
  const std::size_t out_w = p.output_width();
  for (std::size_t t = 0; t < length; ++t) {
    const auto st = static_cast<std::ptrdiff_t>(t);
    const StepBuffers buf = step_buffers(tr, p, t);
    cell_forward(p, std::span<const double>(tr.input.data() + t * tr.in_dim, tr.in_dim),
                 state_at(st - 1), state_at(st - static_cast<std::ptrdiff_t>(dilation)), buf);
    const double* v = tr.v.data() + t * out_w;
    if (p.kind == CellKind::drnn) {
      std::copy_n(v, ny, tr.y.data() + t * ny);
      std::copy_n(v + ny, nh, tr.h.data() + t * nh);
    } else {
      std::copy_n(v, nh, tr.y.data() + t * ny);
      std::copy_n(v, nh, tr.h.data() + t * nh);
    }
  }
}

// Backpropagates dY (T x n_y) through one layer; accumulates into grad and
// returns dL/dinput (T x in_dim).
std::vector<double> backward_layer(const CellParams& p, std::size_t dilation, std::size_t length,
                                   const LayerTrace& tr, std::span<const double> dy,
                                   CellParams& grad) {
  const std::size_t nc = p.n_c(), nh = p.n_h, ny = p.n_y, out_w = p.output_width();
  std::vector<double> dx(length * tr.in_dim, 0.0);
  std::vector<double> dh(length * nh, 0.0), dc(length * nc, 0.0);
  std::vector<double> sink_c(nc, 0.0), sink_h(nh, 0.0);
  const Vector zero_c(nc, 0.0), zero_h(nh, 0.0);
  Vector dv(out_w), scratch;
  auto state_at = [&](std::ptrdiff_t t) -> StateView {
    if (t < 0) return {zero_c, zero_h};
    const auto i = static_cast<std::size_t>(t);
    return {std::span<const double>(tr.c.data() + i * nc, nc),
            std::span<const double>(tr.h.data() + i * nh, nh)};
  };
  auto grad_at = [&](std::ptrdiff_t t) -> StateGrad {
    if (t < 0) return {sink_c, sink_h};
    const auto i = static_cast<std::size_t>(t);
    return {std::span<double>(dc.data() + i * nc, nc), std::span<double>(dh.data() + i * nh, nh)};
  };
  const auto d = static_cast<std::ptrdiff_t>(dilation);
  for (std::size_t t = length; t-- > 0;) {
    const auto st = static_cast<std::ptrdiff_t>(t);
    if (p.kind == CellKind::drnn) {
      for (std::size_t k = 0; k < ny; ++k) dv[k] = dy[t * ny + k];
      for (std::size_t k = 0; k < nh; ++k) dv[ny + k] = dh[t * nh + k];
    } else {
      for (std::size_t k = 0; k < nh; ++k) dv[k] = dy[t * ny + k] + dh[t * nh + k];
    }
    const std::span<const double> dc_t(dc.data() + t * nc, nc);
    cell_backward(p, std::span<const double>(tr.input.data() + t * tr.in_dim, tr.in_dim),
                  state_at(st - 1), state_at(st - d), step_buffers(tr, p, t), dv, dc_t, grad,
                  std::span<double>(dx.data() + t * tr.in_dim, tr.in_dim), grad_at(st - 1),
                  grad_at(st - d), scratch);
  }
  return dx;
}

}  // namespace

ForwardCache forward_sequence(const NetworkSpec& spec, const NetworkParams& params,
                              const SequenceInput& input) {
  spec.validate();
  params.validate(spec);
  const std::size_t T = input.length;
  const std::size_t n_tables = spec.embeddings.size();
  if (T == 0) throw ShapeError("forward_sequence: empty sequence");
  if (input.features.size() != T * spec.input_dim) {
    throw ShapeError("forward_sequence: features hold " + std::to_string(input.features.size()) +
                     " values, expected " + std::to_string(T) + "x" +
                     std::to_string(spec.input_dim));
  }
  if (input.categories.size() != T * n_tables) {
    throw ShapeError("forward_sequence: categories hold " +
                     std::to_string(input.categories.size()) + " ids, expected " +
                     std::to_string(T) + "x" + std::to_string(n_tables));
  }

  ForwardCache cache;
  cache.length = T;
  cache.categories = input.categories;
  const std::size_t in0 = spec.network_input_dim();
  std::vector<double> current(T * in0);
  for (std::size_t t = 0; t < T; ++t) {
    double* row = current.data() + t * in0;
    std::copy_n(input.features.data() + t * spec.input_dim, spec.input_dim, row);
    std::size_t offset = spec.input_dim;
    for (std::size_t e = 0; e < n_tables; ++e) {
      const Vector emb = embed_lookup(params.embeddings[e], input.categories[t * n_tables + e]);
      std::copy(emb.begin(), emb.end(), row + offset);
      offset += emb.size();
    }
  }
  std::size_t dim = in0;
  std::size_t layer_index = 0;
  cache.layers.resize(spec.layer_count());
  for (const auto& block : spec.blocks) {
    const std::vector<double> block_in = block.shortcut ? current : std::vector<double>{};
    for (const auto& layer : block.layers) {
      LayerTrace& tr = cache.layers[layer_index];
      tr.in_dim = dim;
      tr.input = std::move(current);
      run_layer(params.layers[layer_index], layer.dilation, T, tr);
      current = tr.y;
      dim = layer.n_y;
      ++layer_index;
    }
    if (block.shortcut) {
      for (std::size_t i = 0; i < current.size(); ++i) current[i] += block_in[i];
    }
    cache.block_outputs.push_back(current);
  }
  const std::size_t K = spec.output_dim;
  cache.predictions.assign(T * K, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    affine_into(params.adaptor, params.adaptor_bias,
                std::span<const double>(current.data() + t * dim, dim),
                std::span<double>(cache.predictions.data() + t * K, K));
  }
  cache.valid = true;
  return cache;
}

void backward_sequence(const NetworkSpec& spec, const NetworkParams& params,
                       const ForwardCache& cache, std::span<const double> dpred,
                       NetworkParams& grads) {
  if (!cache.valid) throw UsageError("backward_sequence called without a forward cache");
  const std::size_t T = cache.length;
  const std::size_t K = spec.output_dim;
  if (dpred.size() != T * K) {
    throw ShapeError("backward_sequence: loss gradient has " + std::to_string(dpred.size()) +
                     " values, expected " + std::to_string(T) + "x" + std::to_string(K));
  }
  if (cache.layers.size() != spec.layer_count() || cache.block_outputs.size() != spec.blocks.size()) {
    throw UsageError("backward_sequence: cache does not belong to this network");
  }
  const auto& top = cache.block_outputs.back();
  const std::size_t top_dim = params.adaptor.cols();
  std::vector<double> dcur(T * top_dim, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const std::span<const double> dp(dpred.data() + t * K, K);
    add_outer(grads.adaptor, dp, std::span<const double>(top.data() + t * top_dim, top_dim));
    for (std::size_t k = 0; k < K; ++k) grads.adaptor_bias[k] += dp[k];
    add_transposed_product(params.adaptor, dp,
                           std::span<double>(dcur.data() + t * top_dim, top_dim));
  }

  std::size_t layer_end = spec.layer_count();
  for (std::size_t b = spec.blocks.size(); b-- > 0;) {
    const auto& block = spec.blocks[b];
    const std::vector<double> dshort = block.shortcut ? dcur : std::vector<double>{};
    for (std::size_t l = block.layers.size(); l-- > 0;) {
      const std::size_t li = layer_end - block.layers.size() + l;
      dcur = backward_layer(params.layers[li], block.layers[l].dilation, T, cache.layers[li],
                            dcur, grads.layers[li]);
    }
    if (block.shortcut) {
      for (std::size_t i = 0; i < dcur.size(); ++i) dcur[i] += dshort[i];
    }
    layer_end -= block.layers.size();
  }

  const std::size_t n_tables = spec.embeddings.size();
  const std::size_t in0 = spec.network_input_dim();
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t offset = spec.input_dim;
    for (std::size_t e = 0; e < n_tables; ++e) {
      const std::size_t dim = spec.embeddings[e].dim;
      embed_accumulate(grads.embeddings[e], cache.categories[t * n_tables + e],
                       std::span<const double>(dcur.data() + t * in0 + offset, dim));
      offset += dim;
    }
  }
}

}  // namespace ltv::drnn
