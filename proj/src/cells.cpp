#include "ltv/cells.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ltv/error.hpp"

namespace ltv::drnn {

std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::drnn: return "drnn";
    case CellKind::lstm: return "lstm";
    case CellKind::gru: return "gru";
  }
  return "?";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "drnn") return CellKind::drnn;
  if (name == "lstm") return CellKind::lstm;
  if (name == "gru") return CellKind::gru;
  throw UsageError("unknown cell kind '" + std::string(name) + "'");
}

std::size_t CellParams::n_c() const noexcept {
  switch (kind) {
    case CellKind::drnn: return n_y + n_h;
    case CellKind::lstm: return n_h;
    case CellKind::gru: return 0;
  }
  return 0;
}

std::size_t CellParams::gate_rows() const noexcept {
  return kind == CellKind::drnn ? n_y + n_h : n_h;
}

std::size_t CellParams::gate_count() const noexcept { return kind == CellKind::gru ? 3 : 4; }

std::size_t CellParams::input_width() const noexcept {
  return kind == CellKind::drnn ? n_x + 2 * n_h : n_x + n_h;
}

std::size_t CellParams::output_width() const noexcept {
  return kind == CellKind::drnn ? n_y + n_h : n_h;
}

std::size_t fused_width(const CellParams& p) noexcept {
  switch (p.kind) {
    case CellKind::drnn: return p.n_c();
    case CellKind::lstm: return 0;
    case CellKind::gru: return p.input_width();
  }
  return 0;
}

CellParams CellParams::zeros(CellKind kind, std::size_t n_x, std::size_t n_y, std::size_t n_h) {
  CellParams p;
  p.kind = kind;
  p.n_x = n_x;
  p.n_y = n_y;
  p.n_h = n_h;
  if (n_y == 0 || n_h == 0) throw ShapeError("cell needs n_y >= 1 and n_h >= 1");
  if (kind != CellKind::drnn && n_y != n_h) {
    throw ShapeError(std::string(to_string(kind)) + " cell requires n_y == n_h, got n_y=" +
                     std::to_string(n_y) + " n_h=" + std::to_string(n_h));
  }
  for (std::size_t g = 0; g < p.gate_count(); ++g) {
    p.weights.emplace_back(p.gate_rows(), p.input_width());
    p.biases.emplace_back(p.gate_rows(), 0.0);
  }
  return p;
}

void CellParams::validate() const {
  if (n_y == 0 || n_h == 0) throw ShapeError("cell needs n_y >= 1 and n_h >= 1");
  if (weights.size() != gate_count() || biases.size() != gate_count()) {
    throw ShapeError("cell has " + std::to_string(weights.size()) + " gate matrices, expected " +
                     std::to_string(gate_count()));
  }
  for (std::size_t g = 0; g < gate_count(); ++g) {
    if (weights[g].rows() != gate_rows() || weights[g].cols() != input_width() ||
        biases[g].size() != gate_rows()) {
      throw ShapeError("gate " + std::to_string(g) + " is " + weights[g].shape_string() +
                       ", expected " + std::to_string(gate_rows()) + "x" +
                       std::to_string(input_width()));
    }
  }
}

CellState CellState::zeros(const CellParams& p) {
  return CellState{Vector(p.n_c(), 0.0), Vector(p.n_h, 0.0)};
}

namespace {

void check_step_shapes(const CellParams& p, std::span<const double> x, const CellState* prev,
                       const CellState& delayed) {
  p.validate();
  auto bad_state = [&](const CellState& s) {
    return s.c.size() != p.n_c() || s.h.size() != p.n_h;
  };
  if (x.size() != p.n_x) {
    throw ShapeError("cell input has length " + std::to_string(x.size()) + ", expected n_x=" +
                     std::to_string(p.n_x));
  }
  if ((prev && bad_state(*prev)) || bad_state(delayed)) {
    throw ShapeError("cell state shape mismatch: expected c=" + std::to_string(p.n_c()) +
                     ", h=" + std::to_string(p.n_h));
  }
}

struct OwnedBuffers {
  Vector u, gates, fused, c, tanh_c, v;
  explicit OwnedBuffers(const CellParams& p)
      : u(p.input_width()),
        gates(p.gate_count() * p.gate_rows()),
        fused(fused_width(p)),
        c(p.n_c()),
        tanh_c(p.n_c()),
        v(p.output_width()) {}
  StepBuffers view() { return {u, gates, fused, c, tanh_c, v}; }
};

StepOutput run_step(const CellParams& p, std::span<const double> x, const CellState* prev,
                    const CellState& delayed) {
  check_step_shapes(p, x, prev, delayed);
  OwnedBuffers buf(p);
  const StateView pv = prev ? StateView{prev->c, prev->h} : StateView{};
  cell_forward(p, x, pv, StateView{delayed.c, delayed.h}, buf.view());
  StepOutput out;
  out.v = buf.v;
  out.state.c = buf.c;
  if (p.kind == CellKind::drnn) {
    out.y.assign(buf.v.begin(), buf.v.begin() + static_cast<std::ptrdiff_t>(p.n_y));
    out.state.h.assign(buf.v.begin() + static_cast<std::ptrdiff_t>(p.n_y), buf.v.end());
  } else {
    out.y = buf.v;
    out.state.h = buf.v;
  }
  return out;
}

}  // namespace

StepOutput drnn_step(const CellParams& p, std::span<const double> x_t, const CellState& prev,
                     const CellState& delayed) {
  if (p.kind != CellKind::drnn) throw UsageError("drnn_step called with a non-dRNN cell");
  return run_step(p, x_t, &prev, delayed);
}

StepOutput lstm_step(const CellParams& p, std::span<const double> x_t, const CellState& delayed) {
  if (p.kind != CellKind::lstm) throw UsageError("lstm_step called with a non-LSTM cell");
  return run_step(p, x_t, nullptr, delayed);
}

StepOutput gru_step(const CellParams& p, std::span<const double> x_t, const CellState& delayed) {
  if (p.kind != CellKind::gru) throw UsageError("gru_step called with a non-GRU cell");
  return run_step(p, x_t, nullptr, delayed);
}

// ---------------------------------------------------------------------------

namespace {

inline std::span<double> gate(const StepBuffers& b, std::size_t g, std::size_t rows) {
  return b.gates.subspan(g * rows, rows);
}

inline std::span<const double> cgate(const StepBuffers& b, std::size_t g, std::size_t rows) {
  return b.gates.subspan(g * rows, rows);
}

void sigmoid_inplace(std::span<double> a) {
  for (double& x : a) x = sigmoid(x);
}

void tanh_inplace(std::span<double> a) {
  for (double& x : a) x = std::tanh(x);
}

void copy_into(std::span<double> dst, std::span<const double> src) {
  std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

void cell_forward(const CellParams& p, std::span<const double> x, StateView prev,
                  StateView delayed, const StepBuffers& b) {
  const std::size_t nx = p.n_x;
  const std::size_t nh = p.n_h;
  const std::size_t rows = p.gate_rows();

  copy_into(b.u.subspan(0, nx), x);
  if (p.kind == CellKind::drnn) {
    copy_into(b.u.subspan(nx, nh), prev.h);
    copy_into(b.u.subspan(nx + nh, nh), delayed.h);
  } else {
    copy_into(b.u.subspan(nx, nh), delayed.h);
  }

  switch (p.kind) {
    case CellKind::drnn: {
      auto f = gate(b, 0, rows), i = gate(b, 1, rows), g = gate(b, 2, rows), o = gate(b, 3, rows);
      affine_into(p.weights[0], p.biases[0], b.u, f);
      affine_into(p.weights[1], p.biases[1], b.u, i);
      affine_into(p.weights[2], p.biases[2], b.u, g);
      affine_into(p.weights[3], p.biases[3], b.u, o);
      sigmoid_inplace(f);
      sigmoid_inplace(i);
      tanh_inplace(g);
      sigmoid_inplace(o);
      for (std::size_t k = 0; k < rows; ++k) {
        // Written as offsets so equal states pass through bit-exactly.
        const double fused = delayed.c[k] + f[k] * (prev.c[k] - delayed.c[k]);
        b.fused[k] = fused;
        b.c[k] = fused + i[k] * (g[k] - fused);
        b.tanh_c[k] = std::tanh(b.c[k]);
        b.v[k] = o[k] * b.tanh_c[k];
      }
      break;
    }
    case CellKind::lstm: {
      auto f = gate(b, 0, rows), i = gate(b, 1, rows), g = gate(b, 2, rows), o = gate(b, 3, rows);
      affine_into(p.weights[0], p.biases[0], b.u, f);
      affine_into(p.weights[1], p.biases[1], b.u, i);
      affine_into(p.weights[2], p.biases[2], b.u, g);
      affine_into(p.weights[3], p.biases[3], b.u, o);
      sigmoid_inplace(f);
      sigmoid_inplace(i);
      tanh_inplace(g);
      sigmoid_inplace(o);
      for (std::size_t k = 0; k < rows; ++k) {
        b.c[k] = f[k] * delayed.c[k] + i[k] * g[k];
        b.tanh_c[k] = std::tanh(b.c[k]);
        b.v[k] = o[k] * b.tanh_c[k];
      }
      break;
    }
    case CellKind::gru: {
      auto z = gate(b, 0, rows), r = gate(b, 1, rows), n = gate(b, 2, rows);
      affine_into(p.weights[0], p.biases[0], b.u, z);
      affine_into(p.weights[1], p.biases[1], b.u, r);
      sigmoid_inplace(z);
      sigmoid_inplace(r);
      copy_into(b.fused.subspan(0, nx), x);
      for (std::size_t k = 0; k < nh; ++k) b.fused[nx + k] = r[k] * delayed.h[k];
      affine_into(p.weights[2], p.biases[2], b.fused, n);
      tanh_inplace(n);
      for (std::size_t k = 0; k < rows; ++k) b.v[k] = (1.0 - z[k]) * n[k] + z[k] * delayed.h[k];
      break;
    }
  }
}

void cell_backward(const CellParams& p, std::span<const double> /*x*/, StateView prev,
                   StateView delayed, const StepBuffers& b, std::span<const double> dv,
                   std::span<const double> dc_in, CellParams& grad, std::span<double> dx,
                   StateGrad dprev, StateGrad ddel, Vector& scratch) {
  const std::size_t nx = p.n_x;
  const std::size_t nh = p.n_h;
  const std::size_t rows = p.gate_rows();
  const std::size_t width = p.input_width();
  scratch.assign(p.gate_count() * rows + width, 0.0);
  std::span<double> da(scratch.data(), p.gate_count() * rows);
  std::span<double> du(scratch.data() + p.gate_count() * rows, width);

  switch (p.kind) {
    case CellKind::drnn: {
      auto f = cgate(b, 0, rows), i = cgate(b, 1, rows), g = cgate(b, 2, rows),
           o = cgate(b, 3, rows);
      for (std::size_t k = 0; k < rows; ++k) {
        const double dout = dv[k] * b.tanh_c[k];
        const double dc = dc_in[k] + dv[k] * o[k] * (1.0 - b.tanh_c[k] * b.tanh_c[k]);
        const double di = dc * (g[k] - b.fused[k]);
        const double dg = dc * i[k];
        const double dfused = dc * (1.0 - i[k]);
        const double df = dfused * (prev.c[k] - delayed.c[k]);
        dprev.c[k] += dfused * f[k];
        ddel.c[k] += dfused * (1.0 - f[k]);
        da[0 * rows + k] = df * f[k] * (1.0 - f[k]);
        da[1 * rows + k] = di * i[k] * (1.0 - i[k]);
        da[2 * rows + k] = dg * (1.0 - g[k] * g[k]);
        da[3 * rows + k] = dout * o[k] * (1.0 - o[k]);
      }
      for (std::size_t gi = 0; gi < 4; ++gi) {
        auto dag = da.subspan(gi * rows, rows);
        add_outer(grad.weights[gi], dag, b.u);
        for (std::size_t k = 0; k < rows; ++k) grad.biases[gi][k] += dag[k];
        add_transposed_product(p.weights[gi], dag, du);
      }
      for (std::size_t k = 0; k < nx; ++k) dx[k] += du[k];
      for (std::size_t k = 0; k < nh; ++k) {
        dprev.h[k] += du[nx + k];
        ddel.h[k] += du[nx + nh + k];
      }
      break;
    }
    case CellKind::lstm: {
      auto f = cgate(b, 0, rows), i = cgate(b, 1, rows), g = cgate(b, 2, rows),
           o = cgate(b, 3, rows);
      for (std::size_t k = 0; k < rows; ++k) {
        const double dout = dv[k] * b.tanh_c[k];
        const double dc = dc_in[k] + dv[k] * o[k] * (1.0 - b.tanh_c[k] * b.tanh_c[k]);
        ddel.c[k] += dc * f[k];
        da[0 * rows + k] = dc * delayed.c[k] * f[k] * (1.0 - f[k]);
        da[1 * rows + k] = dc * g[k] * i[k] * (1.0 - i[k]);
        da[2 * rows + k] = dc * i[k] * (1.0 - g[k] * g[k]);
        da[3 * rows + k] = dout * o[k] * (1.0 - o[k]);
      }
      for (std::size_t gi = 0; gi < 4; ++gi) {
        auto dag = da.subspan(gi * rows, rows);
        add_outer(grad.weights[gi], dag, b.u);
        for (std::size_t k = 0; k < rows; ++k) grad.biases[gi][k] += dag[k];
        add_transposed_product(p.weights[gi], dag, du);
      }
      for (std::size_t k = 0; k < nx; ++k) dx[k] += du[k];
      for (std::size_t k = 0; k < nh; ++k) ddel.h[k] += du[nx + k];
      break;
    }
    case CellKind::gru: {
      auto z = cgate(b, 0, rows), r = cgate(b, 1, rows), n = cgate(b, 2, rows);
      for (std::size_t k = 0; k < rows; ++k) {
        const double dz = dv[k] * (delayed.h[k] - n[k]);
        const double dn = dv[k] * (1.0 - z[k]);
        ddel.h[k] += dv[k] * z[k];
        da[0 * rows + k] = dz * z[k] * (1.0 - z[k]);
        da[2 * rows + k] = dn * (1.0 - n[k] * n[k]);
      }
      // candidate sees [x; r*h]
      auto dan = da.subspan(2 * rows, rows);
      add_outer(grad.weights[2], dan, b.fused);
      for (std::size_t k = 0; k < rows; ++k) grad.biases[2][k] += dan[k];
      add_transposed_product(p.weights[2], dan, du);
      for (std::size_t k = 0; k < nx; ++k) dx[k] += du[k];
      for (std::size_t k = 0; k < nh; ++k) {
        const double drh = du[nx + k];
        ddel.h[k] += drh * r[k];
        const double dr = drh * delayed.h[k];
        da[1 * rows + k] = dr * r[k] * (1.0 - r[k]);
      }
      std::fill(du.begin(), du.end(), 0.0);
      for (std::size_t gi = 0; gi < 2; ++gi) {
        auto dag = da.subspan(gi * rows, rows);
        add_outer(grad.weights[gi], dag, b.u);
        for (std::size_t k = 0; k < rows; ++k) grad.biases[gi][k] += dag[k];
        add_transposed_product(p.weights[gi], dag, du);
      }
      for (std::size_t k = 0; k < nx; ++k) dx[k] += du[k];
      for (std::size_t k = 0; k < nh; ++k) ddel.h[k] += du[nx + k];
      break;
    }
  }
}

}  // namespace ltv::drnn
