#include <cmath>
#include <random>

#include "doctest.h"
#include "ltv/error.hpp"
#include "ltv/numeric.hpp"
#include "ltv/rng.hpp"

using namespace ltv;

namespace {

Matrix random_matrix(std::mt19937_64& gen, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (double& x : m.values()) x = u(gen);
  return m;
}

Vector random_vector(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(n);
  for (double& x : v) x = u(gen);
  return v;
}

}  // namespace

TEST_CASE("affine: identity and zero-weight cases") {
  const Vector id = affine(Matrix::identity(2), Vector{0.0, 0.0}, Vector{3.0, -1.0});
  CHECK(id == Vector{3.0, -1.0});
  const Vector z = affine(Matrix(2, 3), Vector{5.0, 7.0}, Vector{0.3, -9.0, 2.0});
  CHECK(z == Vector{5.0, 7.0});
}

TEST_CASE("affine: matches a triple-loop multiply") {
  std::mt19937_64 gen(7);
  const Matrix w = random_matrix(gen, 3, 3);
  const Vector b = random_vector(gen, 3), u = random_vector(gen, 3);
  Vector expected(3);
  for (std::size_t i = 0; i < 3; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 3; ++j) acc += w(i, j) * u[j];
    expected[i] = acc + b[i];
  }
  const Vector got = affine(w, b, u);
  for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("affine: shape errors name both shapes") {
  try {
    affine(Matrix(2, 3), Vector{0.0, 0.0}, Vector{1.0, 2.0});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("u has length 2") != std::string::npos);
  }
}

TEST_CASE("affine is linear in u (property)") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t r = 1 + gen() % 6, c = 1 + gen() % 6;
    const Matrix w = random_matrix(gen, r, c);
    const Vector b = random_vector(gen, r), u = random_vector(gen, c), v = random_vector(gen, c);
    const double alpha = coef(gen), beta = coef(gen);
    Vector mix(c);
    for (std::size_t j = 0; j < c; ++j) mix[j] = alpha * u[j] + beta * v[j];
    const Vector zero(r, 0.0);
    const Vector lhs = affine(w, b, mix);
    const Vector au = affine(w, zero, u), bv = affine(w, zero, v);
    for (std::size_t i = 0; i < r; ++i) {
      CHECK(std::abs(lhs[i] - (alpha * au[i] + beta * bv[i] + b[i])) < 1e-10);
    }
  }
}

TEST_CASE("sigmoid is stable for large magnitudes") {
  CHECK(sigmoid(1000.0) == 1.0);
  CHECK(sigmoid(-1000.0) == 0.0);
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-3.0) == doctest::Approx(1.0 - sigmoid(3.0)).epsilon(1e-15));
}

TEST_CASE("adam: zero gradients leave parameters fixed") {
  Vector params{1.5, -2.0, 0.25};
  const Vector before = params;
  AdamState st = AdamState::create(3);
  for (int i = 0; i < 50; ++i) adam_step(params, Vector(3, 0.0), st);
  CHECK(params == before);
  CHECK(st.step_count == 50);
}

TEST_CASE("adam: first step from a fresh state moves by lr") {
  Vector params{0.0};
  AdamState st = AdamState::create(1, 0.001, 0.9, 0.999, 1e-8);
  adam_step(params, Vector{1.0}, st);
  // m_hat = v_hat = 1 -> step = lr * 1 / (1 + eps)
  CHECK(params[0] == doctest::Approx(-0.001).epsilon(1e-7));
  CHECK(st.step_count == 1);
}

TEST_CASE("adam: deterministic and rejects non-finite gradients") {
  const Vector grads{0.3, -0.7};
  Vector a{1.0, 2.0}, b{1.0, 2.0};
  AdamState sa = AdamState::create(2), sb = AdamState::create(2);
  for (int i = 0; i < 5; ++i) {
    adam_step(a, grads, sa);
    adam_step(b, grads, sb);
  }
  CHECK(a == b);
  Vector p{0.0, 0.0};
  AdamState s = AdamState::create(2);
  try {
    adam_step(p, Vector{0.0, std::nan("")}, s);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.index() == 1);
  }
  CHECK_THROWS_AS(AdamState::create(1, 1e-3, 1.0, 0.999), UsageError);
}

TEST_CASE("finite differences: analytic, constant and linear functions") {
  const Vector g = finite_diff_gradient([](std::span<const double> x) { return x[0] * x[0]; },
                                        Vector{3.0}, 1e-5);
  CHECK(std::abs(g[0] - 6.0) < 1e-6);
  const Vector c = finite_diff_gradient([](std::span<const double>) { return 4.2; },
                                        Vector{1.0, -2.0, 3.0}, 1e-5);
  for (double x : c) CHECK(x == 0.0);
  const Vector s = finite_diff_gradient(
      [](std::span<const double> x) {
        double t = 0.0;
        for (double v : x) t += v;
        return t;
      },
      Vector{0.1, 20.0, -3.0, 7.5}, 1e-5);
  for (double x : s) CHECK(std::abs(x - 1.0) < 1e-8);
  CHECK_THROWS_AS(finite_diff_gradient([](std::span<const double>) { return std::nan(""); },
                                       Vector{1.0}, 1e-5),
                  OracleError);
  CHECK_THROWS_AS(finite_diff_gradient([](std::span<const double>) { return 0.0; }, Vector{1.0}, 0.0),
                  UsageError);
}

TEST_CASE("global-norm clipping") {
  Vector v{3.0, 4.0};
  CHECK(clip_by_global_norm(v, 1.0) == doctest::Approx(5.0));
  CHECK(l2_norm(v) == doctest::Approx(1.0));
  Vector small{0.1, 0.1};
  clip_by_global_norm(small, 5.0);
  CHECK(small == Vector{0.1, 0.1});
}

TEST_CASE("philox matches the Random123 known-answer vector") {
  const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
  CHECK(out[0] == 0x6627e8d5u);
  CHECK(out[1] == 0xe169c58du);
  CHECK(out[2] == 0xbc57ac4cu);
  CHECK(out[3] == 0x9b00dbd8u);
}

TEST_CASE("rng streams: reproducible and independent") {
  RngStream a(42, 7), b(42, 7), c(42, 8);
  int equal_to_other_stream = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto x = a.next_u64();
    REQUIRE(x == b.next_u64());
    if (x == c.next_u64()) ++equal_to_other_stream;
  }
  CHECK(equal_to_other_stream == 0);
}

TEST_CASE("rng distributions have the right moments") {
  RngStream r(1, 2);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sg = 0, sb = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
    sg += r.gamma(0.4, 2.5);
    sb += r.beta(2.0, 6.0);
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(sg / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(sb / n == doctest::Approx(0.25).epsilon(0.02));
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
}

TEST_CASE("simplex minimises the Rosenbrock function") {
  auto rosen = [](std::span<const double> x) {
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
  };
  SimplexOptions opt;
  opt.initial_step = 0.5;
  opt.tolerance = 1e-9;
  const auto res = minimize_simplex(rosen, Vector{-1.2, 1.0}, opt);
  CHECK(res.converged);
  CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(res.x[1] == doctest::Approx(1.0).epsilon(1e-5));
}
