#pragma once

#include "vrdone/autograd.hpp"
#include "vrdone/nn.hpp"

#include <functional>
#include <random>
#include <vector>

namespace vrdone::testing {

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Mask random_mask(Index length, std::mt19937_64& rng, double p_valid = 0.7) {
  std::bernoulli_distribution b(p_valid);
  Mask m(static_cast<std::size_t>(length));
  for (auto& v : m) v = b(rng) ? 1 : 0;
  return m;
}

/// ||a - b|| / (||a|| + ||b||), zero when both vanish.
inline double relative_error(const Matrix& a, const Matrix& b) {
  const double denom = a.norm() + b.norm();
  return denom == 0.0 ? 0.0 : (a - b).norm() / denom;
}

using ScalarFn = std::function<ag::Var(const std::vector<ag::Var>&)>;

/// Central-difference gradients of a scalar function of several matrices.
inline std::vector<Matrix> numeric_gradients(const ScalarFn& f, const std::vector<Matrix>& inputs, double h = 1e-6) {
  ag::NoGradGuard guard;
  std::vector<Matrix> grads;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix g(inputs[k].rows(), inputs[k].cols());
    for (Index i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<ag::Var> vars;
        for (std::size_t m = 0; m < inputs.size(); ++m) {
          Matrix x = inputs[m];
          if (m == k) x.data()[i] += delta;
          vars.emplace_back(x);
        }
        return f(vars).item();
      };
      g.data()[i] = (eval(h) - eval(-h)) / (2 * h);
    }
    grads.push_back(g);
  }
  return grads;
}

inline std::vector<Matrix> analytic_gradients(const ScalarFn& f, const std::vector<Matrix>& inputs) {
  std::vector<ag::Var> vars;
  for (const auto& x : inputs) vars.emplace_back(x, true);
  ag::backward(f(vars));
  std::vector<Matrix> grads;
  for (const auto& v : vars) {
    grads.push_back(v.grad().size() == 0 ? Matrix::Zero(v.rows(), v.cols()) : v.grad());
  }
  return grads;
}

/// Largest relative error over the inputs.
inline double gradient_error(const ScalarFn& f, const std::vector<Matrix>& inputs, double h = 1e-6) {
  const auto a = analytic_gradients(f, inputs);
  const auto n = numeric_gradients(f, inputs, h);
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, relative_error(a[k], n[k]));
  return worst;
}

/// Reduces a matrix-valued output to a scalar with fixed random weights.
inline ag::Var project(const ag::Var& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ag::sum(ag::mul_const(y, random_matrix(y.rows(), y.cols(), rng)));
}

}  // namespace vrdone::testing

#include "vrdone/model_config.hpp"
#include "vrdone/pair_sample.hpp"

namespace vrdone::testing {

/// Random pair of `length` frames whose first `valid` frames are real; padding rows are zero.
inline PairSample random_pair(const ModelConfig& cfg, Index length, Index valid, std::mt19937_64& rng) {
  PairSample p;
  p.span = {0, static_cast<int>(valid) - 1};
  p.valid.assign(static_cast<std::size_t>(length), 0);
  for (Index t = 0; t < valid; ++t) p.valid[static_cast<std::size_t>(t)] = 1;
  auto fill = [&](Index cols) {
    Matrix m = Matrix::Zero(length, cols);
    m.topRows(valid) = random_matrix(valid, cols, rng, 0.5);
    return m;
  };
  p.features_s = fill(cfg.feature_dim);
  p.features_o = fill(cfg.feature_dim);
  if (cfg.extra_dim > 0) {
    p.extra_s = fill(cfg.extra_dim);
    p.extra_o = fill(cfg.extra_dim);
  }
  p.theta_a_s = fill(8);
  p.theta_a_o = fill(8);
  p.theta_r = fill(5);
  p.gt.masks = Matrix::Zero(0, length);
  return p;
}

inline ModelConfig small_config() {
  ModelConfig c;
  c.feature_dim = 6;
  c.dim = 16;
  c.heads = 2;
  c.window = 5;
  c.droppath = 0.0;
  c.sos_layers = 2;
  c.encoder_blocks = 3;
  c.decoder_layers = 2;
  c.num_queries = 3;
  c.num_predicates = 4;
  c.init_seed = 5;
  return c;
}

}  // namespace vrdone::testing
