#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// Every value is a 2-D Eigen matrix. Feature grids are stored positions x dim,
// convolutional feature maps are stored channels x (height*width). A Var is a
// cheap shared handle; the graph is built eagerly during the forward pass and
// released when the last handle to the root goes away.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace orid::ag {

using Matrix = Eigen::MatrixXd;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  // Mutable access is for parameters only (optimizer steps, finite differences).
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;
  void zero_grad() { node_->grad.resize(0, 0); }
  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var parameter(Matrix value);
Var scalar(double v);

// Seeds d(root)/d(root) = 1 and propagates into every leaf that requires grad.
// Leaf gradients accumulate across calls until zero_grad().
void backward(const Var& root);

// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var scale_by(const Var& s, const Var& a);    // s is 1x1
Var add_row(const Var& a, const Var& row);   // row is 1 x cols, broadcast down
Var add_col(const Var& a, const Var& col);   // col is rows x 1, broadcast across
Var outer_sum(const Var& col, const Var& row);  // out(i,j) = col(i) + row(j)

// ---- reductions / reshaping ----
Var sum(const Var& a);        // 1x1
Var mean_rows(const Var& a);  // 1 x cols
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& table, std::span<const int> ids);

// ---- pointwise nonlinearities ----
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var elu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);

// Row softmax. An optional additive mask (same shape) may hold -infinity to
// exclude entries; excluded entries come out exactly zero.
Var softmax_rows(const Var& a, const Matrix* additive_mask = nullptr);
// Scaled dot-product attention over column blocks of q, k and v (one block
// per head); head outputs are placed side by side. additive_mask is
// q.rows() x k.rows(). weights, when given, receives each head's matrix.
Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads, const Matrix* additive_mask = nullptr,
                         std::vector<Matrix>* weights = nullptr);

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);

// Mean token cross-entropy over rows whose target is >= 0; 1x1.
Var cross_entropy(const Var& logits, std::span<const int> targets);

// Cosine similarity of two 1 x n vectors; 1x1. Caller guarantees nonzero norms.
Var cosine_similarity(const Var& a, const Var& b);

// Unfolds a (channels x height*width) map into columns of k*k patches.
Var im2col(const Var& a, int height, int width, int kernel, int stride, int pad);

int conv_out_size(int in, int kernel, int stride, int pad);

// Non-overlapping factor x factor average pooling of a (channels x h*w) map.
Var avg_pool(const Var& a, int height, int width, int factor);

}  // namespace orid::ag
