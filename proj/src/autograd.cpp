#include "vrdone/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace vrdone::ag {

namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

void Node::accumulate(const Matrix& g) { accumulate_expr(g); }

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("item() on non-scalar");
  return node_->value(0, 0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Var& v) { return v.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& in : inputs) node->inputs.push_back(in.node());
      node->backward = std::move(backward);
    }
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::logic_error("backward: root must be scalar");
  }
  if (!root.requires_grad()) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) in->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate_expr(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    auto& x = self.inputs[0];
    auto& y = self.inputs[1];
    if (x->requires_grad) x->accumulate_expr(self.grad.cwiseProduct(y->value));
    if (y->requires_grad) y->accumulate_expr(self.grad.cwiseProduct(x->value));
  });
}

Var scale(const Var& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& self) {
    self.inputs[0]->accumulate_expr(self.grad * s);
  });
}

Var mul_const(const Var& x, const Matrix& c) {
  if (x.rows() != c.rows() || x.cols() != c.cols()) {
    throw std::invalid_argument("mul_const: shape mismatch");
  }
  return make_result(x.value().cwiseProduct(c), {x}, [c](Node& self) {
    self.inputs[0]->accumulate_expr(self.grad.cwiseProduct(c));
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  return make_result(a.value() * b.value(), {a, b}, [](Node& self) {
    auto& x = self.inputs[0];
    auto& y = self.inputs[1];
    if (x->requires_grad) x->accumulate_expr(self.grad * y->value.transpose());
    if (y->requires_grad) y->accumulate_expr(x->value.transpose() * self.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: width mismatch");
  return make_result(a.value() * b.value().transpose(), {a, b}, [](Node& self) {
    auto& x = self.inputs[0];
    auto& y = self.inputs[1];
    if (x->requires_grad) x->accumulate_expr(self.grad * y->value);
    if (y->requires_grad) y->accumulate_expr(self.grad.transpose() * x->value);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw std::invalid_argument("linear: shape mismatch");
  }
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return make_result(std::move(out), {x, w, b}, [](Node& self) {
    auto& xi = self.inputs[0];
    auto& wi = self.inputs[1];
    auto& bi = self.inputs[2];
    if (xi->requires_grad) xi->accumulate_expr(self.grad * wi->value.transpose());
    if (wi->requires_grad) wi->accumulate_expr(xi->value.transpose() * self.grad);
    if (bi->requires_grad) bi->accumulate_expr(self.grad.colwise().sum());
  });
}

Var gelu(const Var& x) {
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  Matrix out = x.value().unaryExpr(
      [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); });
  return make_result(std::move(out), {x}, [=](Node& self) {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix d = self.inputs[0]->value.unaryExpr([=](double v) {
      return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    self.inputs[0]->accumulate_expr(self.grad.cwiseProduct(d));
  });
}

Var sum(const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return make_result(std::move(out), {x}, [](Node& self) {
    auto& in = self.inputs[0];
    in->accumulate_expr(Matrix::Constant(in->value.rows(), in->value.cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw std::invalid_argument("mean of empty matrix");
  return scale(sum(x), 1.0 / n);
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Index rows = x.rows();
  const Index cols = x.cols();
  if (gamma.cols() != cols || beta.cols() != cols) {
    throw std::invalid_argument("layer_norm: affine width mismatch");
  }
  Matrix xhat(rows, cols);
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    auto v = x.value().row(r);
    const double mu = v.mean();
    const double var = (v.array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    xhat.row(r) = (v.array() - mu) * is;
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       auto& xi = self.inputs[0];
                       auto& gi = self.inputs[1];
                       auto& bi = self.inputs[2];
                       const Matrix& g = self.grad;
                       if (gi->requires_grad)
                         gi->accumulate_expr(g.cwiseProduct(xhat).colwise().sum());
                       if (bi->requires_grad) bi->accumulate_expr(g.colwise().sum());
                       if (xi->requires_grad) {
                         Matrix dxhat = g.array().rowwise() * gi->value.row(0).array();
                         Matrix dx(g.rows(), g.cols());
                         for (Index r = 0; r < g.rows(); ++r) {
                           const double m1 = dxhat.row(r).mean();
                           const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                           dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) *
                                       inv_std[static_cast<std::size_t>(r)];
                         }
                         xi->accumulate(dx);
                       }
                     });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  return make_result(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      auto& in = self.inputs[i];
      if (in->requires_grad) in->accumulate_expr(self.grad.middleCols(offsets[i], in->value.cols()));
    }
  });
}

Var row(const Var& x, Index r) {
  if (r < 0 || r >= x.rows()) throw std::out_of_range("row index");
  return make_result(x.value().row(r), {x}, [r](Node& self) {
    auto& in = self.inputs[0];
    Matrix g = Matrix::Zero(in->value.rows(), in->value.cols());
    g.row(r) = self.grad.row(0);
    in->accumulate(g);
  });
}

Var scale_rows(const Var& x, std::span<const double> factors) {
  if (static_cast<Index>(factors.size()) != x.rows()) {
    throw std::invalid_argument("scale_rows: factor count mismatch");
  }
  Eigen::Map<const Eigen::VectorXd> f(factors.data(), x.rows());
  Eigen::VectorXd fv = f;
  Matrix out = fv.asDiagonal() * x.value();
  return make_result(std::move(out), {x}, [fv](Node& self) {
    self.inputs[0]->accumulate_expr(fv.asDiagonal() * self.grad);
  });
}

Var mask_rows(const Var& x, const Mask& valid) {
  std::vector<double> f(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i) f[i] = valid[i] ? 1.0 : 0.0;
  return scale_rows(x, f);
}

Var unfold1d(const Var& x, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("unfold1d: kernel must be odd");
  const Index len = x.rows();
  const Index c = x.cols();
  const int half = kernel / 2;
  Matrix out = Matrix::Zero(len, c * kernel);
  for (Index t = 0; t < len; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Index src = t + k - half;
      if (src >= 0 && src < len) out.block(t, k * c, 1, c) = x.value().row(src);
    }
  }
  return make_result(std::move(out), {x}, [kernel, half](Node& self) {
    auto& in = self.inputs[0];
    const Index len = in->value.rows();
    const Index c = in->value.cols();
    Matrix g = Matrix::Zero(len, c);
    for (Index t = 0; t < len; ++t) {
      for (int k = 0; k < kernel; ++k) {
        const Index src = t + k - half;
        if (src >= 0 && src < len) g.row(src) += self.grad.block(t, k * c, 1, c);
      }
    }
    in->accumulate(g);
  });
}

Var max_pool2(const Var& x, const Mask& valid, Mask* out_valid) {
  const Index len = x.rows();
  const Index c = x.cols();
  if (static_cast<Index>(valid.size()) != len) throw std::invalid_argument("max_pool2: mask length");
  const Index out_len = (len + 1) / 2;
  Matrix out = Matrix::Zero(out_len, c);
  std::vector<Index> argmax(static_cast<std::size_t>(out_len * c), -1);
  Mask pooled(static_cast<std::size_t>(out_len), 0);
  for (Index t = 0; t < out_len; ++t) {
    for (Index s = 2 * t; s < std::min(len, 2 * t + 2); ++s) {
      if (!valid[static_cast<std::size_t>(s)]) continue;
      pooled[static_cast<std::size_t>(t)] = 1;
      for (Index j = 0; j < c; ++j) {
        auto& a = argmax[static_cast<std::size_t>(t * c + j)];
        if (a < 0 || x.value()(s, j) > x.value()(a, j)) a = s;
      }
    }
    for (Index j = 0; j < c; ++j) {
      const Index a = argmax[static_cast<std::size_t>(t * c + j)];
      if (a >= 0) out(t, j) = x.value()(a, j);
    }
  }
  if (out_valid) *out_valid = std::move(pooled);
  return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    auto& in = self.inputs[0];
    Matrix g = Matrix::Zero(in->value.rows(), in->value.cols());
    const Index c = in->value.cols();
    for (Index t = 0; t < self.grad.rows(); ++t) {
      for (Index j = 0; j < c; ++j) {
        const Index a = argmax[static_cast<std::size_t>(t * c + j)];
        if (a >= 0) g(a, j) += self.grad(t, j);
      }
    }
    in->accumulate(g);
  });
}

Var upsample2(const Var& x, Index out_len) {
  if (out_len > 2 * x.rows() || out_len < 2 * x.rows() - 1) {
    throw std::invalid_argument("upsample2: output length incompatible with input");
  }
  Matrix out(out_len, x.cols());
  for (Index t = 0; t < out_len; ++t) out.row(t) = x.value().row(t / 2);
  return make_result(std::move(out), {x}, [](Node& self) {
    auto& in = self.inputs[0];
    Matrix g = Matrix::Zero(in->value.rows(), in->value.cols());
    for (Index t = 0; t < self.grad.rows(); ++t) g.row(t / 2) += self.grad.row(t);
    in->accumulate(g);
  });
}

Var upsample2_linear(const Var& x, Index out_len) {
  const Index in_len = x.rows();
  if (out_len > 2 * in_len || out_len < 2 * in_len - 1) {
    throw std::invalid_argument("upsample2_linear: output length incompatible with input");
  }
  // Source coordinate of output t is (t + 0.5) / 2 - 0.5.
  std::vector<std::tuple<Index, Index, double>> taps(static_cast<std::size_t>(out_len));
  Matrix out(out_len, x.cols());
  for (Index t = 0; t < out_len; ++t) {
    const double src = std::clamp((static_cast<double>(t) + 0.5) * 0.5 - 0.5, 0.0,
                                  static_cast<double>(in_len - 1));
    const Index a = static_cast<Index>(std::floor(src));
    const Index b = std::min(a + 1, in_len - 1);
    const double w = src - static_cast<double>(a);
    taps[static_cast<std::size_t>(t)] = {a, b, w};
    out.row(t) = (1.0 - w) * x.value().row(a) + w * x.value().row(b);
  }
  return make_result(std::move(out), {x}, [taps = std::move(taps)](Node& self) {
    auto& in = self.inputs[0];
    Matrix g = Matrix::Zero(in->value.rows(), in->value.cols());
    for (Index t = 0; t < self.grad.rows(); ++t) {
      const auto& [a, b, w] = taps[static_cast<std::size_t>(t)];
      g.row(a) += (1.0 - w) * self.grad.row(t);
      g.row(b) += w * self.grad.row(t);
    }
    in->accumulate(g);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, int radius,
              const Mask& key_valid) {
  const Index lq = q.rows();
  const Index lk = k.rows();
  const Index c = q.cols();
  if (k.cols() != c || v.cols() != c || v.rows() != lk) {
    throw std::invalid_argument("attention: q/k/v shape mismatch");
  }
  if (heads <= 0 || c % heads != 0) throw std::invalid_argument("attention: heads must divide width");
  if (static_cast<Index>(key_valid.size()) != lk) throw std::invalid_argument("attention: key mask length");
  if (radius >= 0 && lq != lk) throw std::invalid_argument("attention: local window needs equal lengths");

  const Index dh = c / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  // Visible key range per query.
  std::vector<Index> lo(static_cast<std::size_t>(lq)), hi(static_cast<std::size_t>(lq));
  Index width = 0;
  for (Index i = 0; i < lq; ++i) {
    Index a = 0, b = lk - 1;
    if (radius >= 0) {
      a = std::max<Index>(0, i - radius);
      b = std::min<Index>(lk - 1, i + radius);
    }
    lo[static_cast<std::size_t>(i)] = a;
    hi[static_cast<std::size_t>(i)] = b;
    width = std::max(width, b - a + 1);
  }

  // probs[(h * lq + i) * width + (j - lo_i)]
  std::vector<double> probs(static_cast<std::size_t>(heads * lq * width), 0.0);
  Matrix out = Matrix::Zero(lq, c);
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  std::vector<double> logits(static_cast<std::size_t>(width));
  for (int h = 0; h < heads; ++h) {
    const Index off = h * dh;
    for (Index i = 0; i < lq; ++i) {
      const Index a = lo[static_cast<std::size_t>(i)];
      const Index b = hi[static_cast<std::size_t>(i)];
      double mx = -std::numeric_limits<double>::infinity();
      for (Index j = a; j <= b; ++j) {
        double s = -std::numeric_limits<double>::infinity();
        if (key_valid[static_cast<std::size_t>(j)]) {
          s = qv.row(i).segment(off, dh).dot(kv.row(j).segment(off, dh)) * inv_scale;
        }
        logits[static_cast<std::size_t>(j - a)] = s;
        mx = std::max(mx, s);
      }
      if (mx == -std::numeric_limits<double>::infinity()) continue;
      double z = 0.0;
      for (Index j = a; j <= b; ++j) {
        double& l = logits[static_cast<std::size_t>(j - a)];
        l = std::isinf(l) ? 0.0 : std::exp(l - mx);
        z += l;
      }
      double* p = &probs[static_cast<std::size_t>((h * lq + i) * width)];
      for (Index j = a; j <= b; ++j) {
        const double w = logits[static_cast<std::size_t>(j - a)] / z;
        p[j - a] = w;
        if (w != 0.0) out.row(i).segment(off, dh) += w * vv.row(j).segment(off, dh);
      }
    }
  }

  return make_result(
      std::move(out), {q, k, v},
      [probs = std::move(probs), lo = std::move(lo), hi = std::move(hi), heads, dh, width,
       inv_scale](Node& self) {
        auto& qn = self.inputs[0];
        auto& kn = self.inputs[1];
        auto& vn = self.inputs[2];
        const Index lq = qn->value.rows();
        const Index lk = kn->value.rows();
        const Index c = qn->value.cols();
        Matrix gq = Matrix::Zero(lq, c);
        Matrix gk = Matrix::Zero(lk, c);
        Matrix gv = Matrix::Zero(lk, c);
        const Matrix& go = self.grad;
        std::vector<double> dp(static_cast<std::size_t>(width));
        for (int h = 0; h < heads; ++h) {
          const Index off = h * dh;
          for (Index i = 0; i < lq; ++i) {
            const Index a = lo[static_cast<std::size_t>(i)];
            const Index b = hi[static_cast<std::size_t>(i)];
            const double* p = &probs[static_cast<std::size_t>((h * lq + i) * width)];
            auto goi = go.row(i).segment(off, dh);
            double dot = 0.0;
            for (Index j = a; j <= b; ++j) {
              const double w = p[j - a];
              if (w == 0.0) {
                dp[static_cast<std::size_t>(j - a)] = 0.0;
                continue;
              }
              gv.row(j).segment(off, dh) += w * goi;
              const double d = goi.dot(vn->value.row(j).segment(off, dh));
              dp[static_cast<std::size_t>(j - a)] = d;
              dot += w * d;
            }
            for (Index j = a; j <= b; ++j) {
              const double w = p[j - a];
              if (w == 0.0) continue;
              const double ds = w * (dp[static_cast<std::size_t>(j - a)] - dot) * inv_scale;
              gq.row(i).segment(off, dh) += ds * kn->value.row(j).segment(off, dh);
              gk.row(j).segment(off, dh) += ds * qn->value.row(i).segment(off, dh);
            }
          }
        }
        if (qn->requires_grad) qn->accumulate(gq);
        if (kn->requires_grad) kn->accumulate(gk);
        if (vn->requires_grad) vn->accumulate(gv);
      });
}

}  // namespace vrdone::ag
