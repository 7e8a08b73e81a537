#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace vrdone {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Index = Eigen::Index;

/// Per-frame validity flags; 1 = real frame, 0 = padding.
using Mask = std::vector<std::uint8_t>;

namespace ag {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

/// Handle to a node in the computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// True when new ops record backward closures (thread-local).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates a result node. `backward` is stored only when some input requires grad.
Var make_result(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward);

/// Reverse-mode sweep from a scalar (1x1) root.
void backward(const Var& root);

// Elementwise and linear algebra.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
/// x * w + b, with b a 1 x out row broadcast over rows.
Var linear(const Var& x, const Var& w, const Var& b);
Var gelu(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);

/// Row-wise layer normalisation with affine gamma/beta (1 x C each).
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

Var concat_cols(const std::vector<Var>& parts);
Var row(const Var& x, Index r);
/// Multiplies every row r by factors[r].
Var scale_rows(const Var& x, std::span<const double> factors);
/// Zeroes rows where valid[r] == 0.
Var mask_rows(const Var& x, const Mask& valid);
/// Elementwise multiplication with a constant matrix (dropout masks).
Var mul_const(const Var& x, const Matrix& c);

/// Zero-padded temporal unfolding: row t holds rows t-k/2 .. t+k/2 concatenated.
Var unfold1d(const Var& x, int kernel);

/// Stride-2 max pool over rows with ceil semantics. Only valid rows compete;
/// windows without a valid row produce zeros. Output validity is any-valid.
Var max_pool2(const Var& x, const Mask& valid, Mask* out_valid);

/// Nearest-neighbour x2 upsampling truncated to `out_len` rows.
Var upsample2(const Var& x, Index out_len);

/// Linear x2 upsampling (half-pixel centres, edge clamped) truncated to `out_len` rows.
Var upsample2_linear(const Var& x, Index out_len);

/// Fused scaled dot-product attention on already projected q, k, v.
/// `radius < 0` means global attention; otherwise query i sees keys
/// j with |i - j| <= radius (requires equal lengths). Keys with
/// key_valid[j] == 0 receive zero weight; rows without any visible valid
/// key produce zeros.
Var attention(const Var& q, const Var& k, const Var& v, int heads, int radius,
              const Mask& key_valid);

}  // namespace ag
}  // namespace vrdone
