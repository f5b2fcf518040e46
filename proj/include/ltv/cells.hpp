#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ltv/numeric.hpp"

namespace ltv::drnn {

enum class CellKind { drnn, lstm, gru };

std::string_view to_string(CellKind kind);
CellKind parse_cell_kind(std::string_view name);

// Gate parameters of one recurrent layer.
//
// dRNN: four gates (fusion f, input i, candidate g, output o), each
//   n_c x (n_x + 2 n_h) with n_c = n_y + n_h, acting on u = [x_t; h_{t-1}; h_{t-d}].
// LSTM: four gates (f, i, g, o), each n_h x (n_x + n_h), acting on [x_t; h_{t-d}].
// GRU: three gates (update z, reset r, candidate n), each n_h x (n_x + n_h).
// For LSTM and GRU the output is the full hidden state, so n_y == n_h.
struct CellParams {
  CellKind kind = CellKind::drnn;
  std::size_t n_x = 0;
  std::size_t n_y = 0;
  std::size_t n_h = 0;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static CellParams zeros(CellKind kind, std::size_t n_x, std::size_t n_y, std::size_t n_h);

  std::size_t n_c() const noexcept;             // cell-state width (0 for GRU)
  std::size_t gate_rows() const noexcept;       // rows of each gate matrix
  std::size_t gate_count() const noexcept;      // 4 or 3
  std::size_t input_width() const noexcept;     // columns of each gate matrix
  std::size_t output_width() const noexcept;    // width of v (n_y + n_h for dRNN, n_h otherwise)

  // Index of the gate whose bias starts at +1 (fusion / forget / update gate).
  static constexpr std::size_t kRetainGate = 0;

  void validate() const;

  bool operator==(const CellParams&) const = default;
};

struct CellState {
  Vector c;
  Vector h;

  static CellState zeros(const CellParams& p);
};

struct StepOutput {
  Vector y;
  CellState state;
  Vector v;  // full gated output; y and h are its leading / trailing slices for dRNN
};

StepOutput drnn_step(const CellParams& p, std::span<const double> x_t, const CellState& prev,
                     const CellState& delayed);
StepOutput lstm_step(const CellParams& p, std::span<const double> x_t, const CellState& delayed);
StepOutput gru_step(const CellParams& p, std::span<const double> x_t, const CellState& delayed);

// ---------------------------------------------------------------------------
// Span-based kernels shared by the single-step API and the sequence network.

// Per-step intermediate buffers. Sizes (see CellParams accessors):
//   u: input_width; gates: gate_count * gate_rows; fused: n_c (dRNN) or
//   input_width (GRU: [x; r*h]) or 0 (LSTM); c: n_c; tanh_c: n_c; v: output_width.
struct StepBuffers {
  std::span<double> u;
  std::span<double> gates;
  std::span<double> fused;
  std::span<double> c;
  std::span<double> tanh_c;
  std::span<double> v;
};

std::size_t fused_width(const CellParams& p) noexcept;

// State views. h_prev / c_prev are only read by the dRNN cell.
struct StateView {
  std::span<const double> c;
  std::span<const double> h;
};

// Runs the cell; writes every buffer. The new h state is the trailing n_h
// entries of v (dRNN) or v itself (LSTM, GRU); the new c state is buffers.c.
void cell_forward(const CellParams& p, std::span<const double> x, StateView prev,
                  StateView delayed, const StepBuffers& buffers);

struct StateGrad {
  std::span<double> c;
  std::span<double> h;
};

// Reverse-mode step. dv is dL/dv (for LSTM/GRU: dL/dh_t including the
// downstream output gradient); dc is dL/dc_t from later steps (empty for GRU).
// Every gradient output is accumulated (+=). `scratch` is resized as needed.
void cell_backward(const CellParams& p, std::span<const double> x, StateView prev,
                   StateView delayed, const StepBuffers& buffers, std::span<const double> dv,
                   std::span<const double> dc, CellParams& grad, std::span<double> dx,
                   StateGrad dprev, StateGrad ddelayed, Vector& scratch);

}  // namespace ltv::drnn
