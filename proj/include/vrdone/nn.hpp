#pragma once

#include "vrdone/autograd.hpp"

#include <map>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace vrdone::nn {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool weight_decay = true;
};

/// Owns every trainable tensor of a model, in registration order.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t init_seed = 0) : rng_(init_seed) {}

  Parameter& uniform(const std::string& name, Index rows, Index cols, double bound,
                     bool weight_decay = true);
  Parameter& constant(const std::string& name, Index rows, Index cols, double value,
                      bool weight_decay = false);
  Parameter& normal(const std::string& name, Index rows, Index cols, double stddev,
                    bool weight_decay = false);

  std::vector<std::unique_ptr<Parameter>>& params() { return params_; }
  const std::vector<std::unique_ptr<Parameter>>& params() const { return params_; }
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad();
  /// Copies values from another store with identical names and shapes.
  void copy_values_from(const ParameterStore& other);

 private:
  Parameter& add(const std::string& name, Matrix value, bool weight_decay);

  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> by_name_;
  std::mt19937_64 rng_;
};

/// Binds parameters to graph leaves for one forward/backward pass.
class Graph {
 public:
  ag::Var param(Parameter& p);
  /// Adds leaf gradients into Parameter::grad, in binding order.
  void accumulate_into_params();

 private:
  std::vector<std::pair<Parameter*, ag::Var>> leaves_;
  std::unordered_map<Parameter*, std::size_t> index_;
};

/// Forward-pass state: graph bindings plus train-mode randomness.
struct Context {
  Graph& graph;
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Index in, Index out);
  ag::Var operator()(Context& ctx, const ag::Var& x) const;
  Index in_features() const { return weight_->value.rows(); }
  Index out_features() const { return weight_->value.cols(); }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, Index width);
  ag::Var operator()(Context& ctx, const ag::Var& x) const;

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
};

/// Two linear layers with GELU in between.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, Index in, Index hidden, Index out,
      double dropout = 0.0);
  ag::Var operator()(Context& ctx, const ag::Var& x) const;

 private:
  Linear fc1_;
  Linear fc2_;
  double dropout_ = 0.0;
};

/// Inverted dropout; identity outside training or when rate == 0.
ag::Var dropout(Context& ctx, const ag::Var& x, double rate);

/// Stochastic depth on a residual branch: whole branch zeroed with
/// probability `rate`, otherwise rescaled by 1 / (1 - rate).
ag::Var drop_path(Context& ctx, const ag::Var& branch, double rate);

}  // namespace vrdone::nn
