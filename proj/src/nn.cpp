#include "vrdone/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vrdone::nn {

Parameter& ParameterStore::add(const std::string& name, Matrix value, bool weight_decay) {
  if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(value);
  p->grad = Matrix::Zero(p->value.rows(), p->value.cols());
  p->weight_decay = weight_decay;
  by_name_[name] = p.get();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::uniform(const std::string& name, Index rows, Index cols, double bound,
                                   bool weight_decay) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
  return add(name, std::move(m), weight_decay);
}

Parameter& ParameterStore::constant(const std::string& name, Index rows, Index cols, double value,
                                    bool weight_decay) {
  return add(name, Matrix::Constant(rows, cols, value), weight_decay);
}

Parameter& ParameterStore::normal(const std::string& name, Index rows, Index cols, double stddev,
                                  bool weight_decay) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
  return add(name, std::move(m), weight_decay);
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  if (other.params_.size() != params_.size()) throw std::invalid_argument("parameter count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = *other.params_[i];
    auto& dst = *params_[i];
    if (src.name != dst.name || src.value.rows() != dst.value.rows() ||
        src.value.cols() != dst.value.cols()) {
      throw std::invalid_argument("parameter layout mismatch at " + dst.name);
    }
    dst.value = src.value;
  }
}

ag::Var Graph::param(Parameter& p) {
  auto it = index_.find(&p);
  if (it != index_.end()) return leaves_[it->second].second;
  ag::Var leaf(p.value, ag::grad_enabled());
  index_[&p] = leaves_.size();
  leaves_.emplace_back(&p, leaf);
  return leaf;
}

void Graph::accumulate_into_params() {
  for (auto& [p, leaf] : leaves_) {
    if (leaf.grad().size() != 0) p->grad += leaf.grad();
  }
}

Linear::Linear(ParameterStore& store, const std::string& name, Index in, Index out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = &store.uniform(name + ".weight", in, out, bound, true);
  bias_ = &store.constant(name + ".bias", 1, out, 0.0, false);
}

ag::Var Linear::operator()(Context& ctx, const ag::Var& x) const {
  return ag::linear(x, ctx.graph.param(*weight_), ctx.graph.param(*bias_));
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, Index width) {
  gamma_ = &store.constant(name + ".gamma", 1, width, 1.0, false);
  beta_ = &store.constant(name + ".beta", 1, width, 0.0, false);
}

ag::Var LayerNorm::operator()(Context& ctx, const ag::Var& x) const {
  return ag::layer_norm(x, ctx.graph.param(*gamma_), ctx.graph.param(*beta_));
}

Mlp::Mlp(ParameterStore& store, const std::string& name, Index in, Index hidden, Index out,
         double dropout)
    : fc1_(store, name + ".fc1", in, hidden), fc2_(store, name + ".fc2", hidden, out),
      dropout_(dropout) {}

ag::Var Mlp::operator()(Context& ctx, const ag::Var& x) const {
  return fc2_(ctx, dropout(ctx, ag::gelu(fc1_(ctx, x)), dropout_));
}

ag::Var dropout(Context& ctx, const ag::Var& x, double rate) {
  if (!ctx.training || rate <= 0.0 || ctx.rng == nullptr) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix m(x.rows(), x.cols());
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = keep(*ctx.rng) ? 1.0 / (1.0 - rate) : 0.0;
  return ag::mul_const(x, m);
}

ag::Var drop_path(Context& ctx, const ag::Var& branch, double rate) {
  if (!ctx.training || rate <= 0.0 || ctx.rng == nullptr) return branch;
  std::bernoulli_distribution keep(1.0 - rate);
  return ag::scale(branch, keep(*ctx.rng) ? 1.0 / (1.0 - rate) : 0.0);
}

}  // namespace vrdone::nn
