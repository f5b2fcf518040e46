#include "ltv/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ltv/error.hpp"

namespace ltv {

Matrix::Matrix(std::size_t rows, std::size_t cols, Vector data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                     " does not match " + shape_string());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Vector affine(const Matrix& w, std::span<const double> b, std::span<const double> u) {
  if (w.cols() != u.size() || w.rows() != b.size()) {
    throw ShapeError("affine: W is " + w.shape_string() + ", b has length " +
                     std::to_string(b.size()) + ", u has length " + std::to_string(u.size()));
  }
  Vector out(w.rows());
  affine_into(w, b, u, out);
  return out;
}

void affine_into(const Matrix& w, std::span<const double> b, std::span<const double> u,
                 std::span<double> out) {
  const std::size_t cols = w.cols();
  const double* wp = w.values().data();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* row = wp + r * cols;
    double acc = b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * u[c];
    out[r] = acc;
  }
}

void add_outer(Matrix& grad, std::span<const double> delta, std::span<const double> u) {
  const std::size_t cols = grad.cols();
  double* gp = grad.values().data();
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    const double d = delta[r];
    if (d == 0.0) continue;
    double* row = gp + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += d * u[c];
  }
}

void add_transposed_product(const Matrix& w, std::span<const double> delta,
                            std::span<double> out) {
  const std::size_t cols = w.cols();
  const double* wp = w.values().data();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double d = delta[r];
    if (d == 0.0) continue;
    const double* row = wp + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c] * d;
  }
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double clip_by_global_norm(std::span<double> v, double max_norm) {
  const double norm = l2_norm(v);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (double& x : v) x *= scale;
  }
  return norm;
}

AdamState AdamState::create(std::size_t n, double lr, double beta1, double beta2,
                            double epsilon) {
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw UsageError("adam: betas must lie in [0, 1)");
  }
  AdamState s;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: params " + std::to_string(params.size()) + ", grads " +
                     std::to_string(grads.size()) + ", moments " +
                     std::to_string(state.first_moment.size()));
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingError("non-finite gradient at parameter index " + std::to_string(i),
                          static_cast<std::ptrdiff_t>(i));
    }
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

Vector finite_diff_gradient(const ScalarFunction& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw UsageError("finite_diff_gradient: step h must be positive");
  Vector probe(x.begin(), x.end());
  Vector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw OracleError("non-finite function value while differencing coordinate " +
                        std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

SimplexResult minimize_simplex(const ScalarFunction& f, std::span<const double> x0,
                               const SimplexOptions& options,
                               const std::vector<Vector>& start_simplex) {
  const std::size_t n = x0.size();
  std::vector<Vector> verts;
  if (start_simplex.empty()) {
    verts.emplace_back(x0.begin(), x0.end());
    for (std::size_t i = 0; i < n; ++i) {
      Vector v(x0.begin(), x0.end());
      v[i] += options.initial_step;
      verts.push_back(std::move(v));
    }
  } else {
    if (start_simplex.size() != n + 1) throw UsageError("simplex needs n+1 vertices");
    verts = start_simplex;
  }
  auto eval = [&](const Vector& v) {
    const double y = f(v);
    return std::isfinite(y) ? y : std::numeric_limits<double>::infinity();
  };
  Vector vals(n + 1);
  for (std::size_t i = 0; i <= n; ++i) vals[i] = eval(verts[i]);

  std::vector<std::size_t> order(n + 1);
  SimplexResult result;
  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
  Vector centroid(n), trial(n), trial2(n);

  auto diameter = [&](std::size_t best) {
    double d = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double diff = verts[i][k] - verts[best][k];
        s += diff * diff;
      }
      d = std::max(d, std::sqrt(s));
    }
    return d;
  };

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];
    if (diameter(best) < options.tolerance) {
      result.converged = true;
      break;
    }
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& v = verts[order[i]];
      for (std::size_t k = 0; k < n; ++k) centroid[k] += v[k] / static_cast<double>(n);
    }
    for (std::size_t k = 0; k < n; ++k)
      trial[k] = centroid[k] + alpha * (centroid[k] - verts[worst][k]);
    const double f_reflect = eval(trial);
    if (f_reflect < vals[best]) {
      for (std::size_t k = 0; k < n; ++k)
        trial2[k] = centroid[k] + gamma * (trial[k] - centroid[k]);
      const double f_expand = eval(trial2);
      if (f_expand < f_reflect) {
        verts[worst] = trial2;
        vals[worst] = f_expand;
      } else {
        verts[worst] = trial;
        vals[worst] = f_reflect;
      }
      continue;
    }
    if (f_reflect < vals[second]) {
      verts[worst] = trial;
      vals[worst] = f_reflect;
      continue;
    }
    // contraction (outside if the reflection improved on the worst point)
    const bool outside = f_reflect < vals[worst];
    for (std::size_t k = 0; k < n; ++k) {
      trial2[k] = outside ? centroid[k] + rho * (trial[k] - centroid[k])
                          : centroid[k] + rho * (verts[worst][k] - centroid[k]);
    }
    const double f_contract = eval(trial2);
    if (f_contract < (outside ? f_reflect : vals[worst])) {
      verts[worst] = trial2;
      vals[worst] = f_contract;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t k = 0; k < n; ++k)
        verts[i][k] = verts[best][k] + sigma * (verts[i][k] - verts[best][k]);
      vals[i] = eval(verts[i]);
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i <= n; ++i)
    if (vals[i] < vals[best]) best = i;
  result.x = verts[best];
  result.value = vals[best];
  result.iterations = it;
  return result;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ltv
