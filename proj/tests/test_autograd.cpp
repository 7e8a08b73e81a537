#include "support.hpp"

#include <doctest.h>

using namespace vrdone;
using testing::gradient_error;
using testing::project;
using testing::random_matrix;

namespace {
constexpr double kTol = 1e-6;
}

TEST_CASE("elementwise and matrix ops") {
  std::mt19937_64 rng(1);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng), c = random_matrix(4, 2, rng);
  CHECK(gradient_error([](auto& v) { return project(ag::add(v[0], v[1])); }, {a, b}) < kTol);
  CHECK(gradient_error([](auto& v) { return project(ag::sub(v[0], v[1])); }, {a, b}) < kTol);
  CHECK(gradient_error([](auto& v) { return project(ag::mul(v[0], v[1])); }, {a, b}) < kTol);
  CHECK(gradient_error([](auto& v) { return project(ag::scale(v[0], -2.5)); }, {a}) < kTol);
  CHECK(gradient_error([](auto& v) { return project(ag::matmul(v[0], v[1])); }, {a, c}) < kTol);
  CHECK(gradient_error([](auto& v) { return project(ag::matmul_nt(v[0], v[1])); }, {a, b}) < kTol);
  CHECK(gradient_error([](auto& v) { return project(ag::gelu(v[0])); }, {a}) < kTol);
  CHECK(gradient_error([](auto& v) { return ag::mean(ag::mul(v[0], v[0])); }, {a}) < kTol);
}

TEST_CASE("linear and layer norm") {
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(5, 4, rng), w = random_matrix(4, 3, rng), b = random_matrix(1, 3, rng);
  CHECK(gradient_error([](auto& v) { return project(ag::linear(v[0], v[1], v[2])); }, {x, w, b}) < kTol);
  const Matrix g = random_matrix(1, 4, rng), beta = random_matrix(1, 4, rng);
  CHECK(gradient_error([](auto& v) { return project(ag::layer_norm(v[0], v[1], v[2])); }, {x, g, beta}) < kTol);
}

TEST_CASE("layer norm output has zero mean and unit variance per row") {
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(4, 6, rng, 3.0);
  const Matrix y = ag::layer_norm(ag::Var(x), ag::Var(Matrix::Ones(1, 6)), ag::Var(Matrix::Zero(1, 6)), 0.0).value();
  for (Index i = 0; i < 4; ++i) {
    CHECK(y.row(i).mean() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK((y.row(i).array().square().mean()) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("structural ops") {
  std::mt19937_64 rng(4);
  const Matrix a = random_matrix(6, 3, rng), b = random_matrix(6, 2, rng);
  CHECK(gradient_error([](auto& v) { return project(ag::concat_cols({v[0], v[1]})); }, {a, b}) < kTol);
  CHECK(gradient_error([](auto& v) { return project(ag::row(v[0], 2)); }, {a}) < kTol);
  const std::vector<double> f{0.5, -1.0, 2.0, 0.0, 1.0, 3.0};
  CHECK(gradient_error([&](auto& v) { return project(ag::scale_rows(v[0], f)); }, {a}) < kTol);
  const Mask m{1, 0, 1, 1, 0, 1};
  CHECK(gradient_error([&](auto& v) { return project(ag::mask_rows(v[0], m)); }, {a}) < kTol);
  CHECK(gradient_error([](auto& v) { return project(ag::unfold1d(v[0], 3)); }, {a}) < kTol);
}

TEST_CASE("unfold1d zero-pads the borders") {
  Matrix x(3, 1);
  x << 1, 2, 3;
  const Matrix u = ag::unfold1d(ag::Var(x), 3).value();
  REQUIRE(u.rows() == 3);
  REQUIRE(u.cols() == 3);
  CHECK(u(0, 0) == 0.0);
  CHECK(u(0, 1) == 1.0);
  CHECK(u(0, 2) == 2.0);
  CHECK(u(2, 2) == 0.0);
}

TEST_CASE("max pooling over valid frames") {
  Matrix x(5, 1);
  x << 1, 9, 3, -2, 4;
  Mask out;
  const Matrix y = ag::max_pool2(ag::Var(x), Mask{1, 0, 1, 1, 1}, &out).value();
  REQUIRE(y.rows() == 3);
  CHECK(y(0, 0) == 1.0);  // the 9 is padding
  CHECK(y(1, 0) == 3.0);
  CHECK(y(2, 0) == 4.0);
  CHECK(out == Mask{1, 1, 1});

  Mask out2;
  const Matrix z = ag::max_pool2(ag::Var(x), Mask{1, 1, 1, 0, 0}, &out2).value();
  CHECK(out2 == Mask{1, 1, 0});
  CHECK(z(2, 0) == 0.0);

  std::mt19937_64 rng(5);
  const Matrix r = random_matrix(7, 3, rng);
  const Mask vm{1, 1, 0, 1, 1, 1, 0};
  CHECK(gradient_error([&](auto& v) { return project(ag::max_pool2(v[0], vm, nullptr)); }, {r}) < kTol);
}

TEST_CASE("upsampling") {
  std::mt19937_64 rng(6);
  const Matrix r = random_matrix(4, 2, rng);
  CHECK(gradient_error([](auto& v) { return project(ag::upsample2(v[0], 7)); }, {r}) < kTol);
  CHECK(gradient_error([](auto& v) { return project(ag::upsample2_linear(v[0], 8)); }, {r}) < kTol);
  const Matrix u = ag::upsample2(ag::Var(r), 7).value();
  CHECK(u.rows() == 7);
  CHECK(u.row(5) == r.row(2));
  CHECK(u.row(6) == r.row(3));
}

TEST_CASE("attention gradients, global and banded, with masked keys") {
  std::mt19937_64 rng(7);
  const Matrix q = random_matrix(6, 4, rng), k = random_matrix(6, 4, rng), v = random_matrix(6, 4, rng);
  const Mask m{1, 1, 0, 1, 1, 0};
  for (int radius : {-1, 0, 1, 2}) {
    CAPTURE(radius);
    CHECK(gradient_error([&](auto& x) { return project(ag::attention(x[0], x[1], x[2], 2, radius, m)); }, {q, k, v}) <
          kTol);
  }
}

TEST_CASE("backward accumulates over shared inputs") {
  Matrix x(1, 1);
  x << 3.0;
  ag::Var a(x, true);
  ag::backward(ag::sum(ag::add(ag::mul(a, a), a)));
  CHECK(a.grad()(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("no-grad guard records nothing") {
  ag::Var a(Matrix::Ones(2, 2), true);
  ag::NoGradGuard g;
  const ag::Var y = ag::scale(a, 2.0);
  CHECK_FALSE(y.requires_grad());
}
