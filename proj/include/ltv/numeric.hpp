#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ltv {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  std::string shape_string() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

// W·u + b. Throws ShapeError naming both shapes on mismatch.
Vector affine(const Matrix& w, std::span<const double> b, std::span<const double> u);

// Unchecked hot-path variants used by the cells.
void affine_into(const Matrix& w, std::span<const double> b, std::span<const double> u,
                 std::span<double> out);
// grad += delta ⊗ u
void add_outer(Matrix& grad, std::span<const double> delta, std::span<const double> u);
// out += Wᵀ·delta
void add_transposed_product(const Matrix& w, std::span<const double> delta, std::span<double> out);

// Logistic sigmoid, branching on sign so exp never overflows.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool all_finite(std::span<const double> v);
double l2_norm(std::span<const double> v);

// Scales v in place so its L2 norm is at most max_norm; returns the norm before clipping.
double clip_by_global_norm(std::span<double> v, double max_norm);

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::uint64_t step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState create(std::size_t n, double lr = 1e-3, double beta1 = 0.9,
                          double beta2 = 0.999, double epsilon = 1e-8);
};

// One bias-corrected Adam update of params in place.
// Non-finite gradient -> TrainingError carrying the offending index.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central-difference gradient of f at x.
Vector finite_diff_gradient(const ScalarFunction& f, std::span<const double> x, double h);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-8);

struct SimplexOptions {
  double initial_step = 0.1;
  double tolerance = 1e-6;  // simplex diameter (max vertex distance to best)
  int max_iterations = 20000;
};

struct SimplexResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Nelder-Mead minimisation. `start_simplex` may be empty (axis-aligned steps
// of size options.initial_step) or hold n+1 vertices.
SimplexResult minimize_simplex(const ScalarFunction& f, std::span<const double> x0,
                               const SimplexOptions& options,
                               const std::vector<Vector>& start_simplex = {});

// 64-bit FNV-1a, used for config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace ltv
