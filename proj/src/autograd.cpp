#include "orid/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace orid::ag {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

// Creates a result node. The backward closure is only attached when the graph
// is being recorded and some input needs a gradient.
template <class F>
Var make_op(Matrix value, std::vector<Var> inputs, F&& fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled)
    for (const Var& v : inputs) needs = needs || v.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Var& v : inputs) node->parents.push_back(v.node());
    node->backward = std::forward<F>(fn);
  }
  return Var(std::move(node));
}

inline void push(Node& self, std::size_t i, const Matrix& g) {
  Node& p = *self.parents[i];
  if (p.requires_grad) p.accumulate(g);
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("item() on non-scalar");
  return value()(0, 0);
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& root) {
  if (!root.requires_grad()) return;
  require(root.rows() == 1 && root.cols() == 1, "backward: root must be 1x1");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) {
      n->backward(*n);
      // Interior gradients are not needed once propagated.
      n->grad.resize(0, 0);
    }
  }
}

int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) push(self, 0, self.grad * b.value().transpose());
    if (b.requires_grad()) push(self, 1, a.value().transpose() * self.grad);
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a},
                 [](Node& self) { push(self, 0, self.grad.transpose()); });
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    push(self, 0, self.grad);
    push(self, 1, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    push(self, 0, self.grad);
    push(self, 1, -self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) push(self, 0, self.grad.cwiseProduct(b.value()));
    if (b.requires_grad()) push(self, 1, self.grad.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& self) { push(self, 0, self.grad * s); });
}

Var scale_by(const Var& s, const Var& a) {
  require(s.rows() == 1 && s.cols() == 1, "scale_by: scale must be 1x1");
  const double k = s.value()(0, 0);
  return make_op(a.value() * k, {s, a}, [s, a, k](Node& self) {
    if (s.requires_grad()) push(self, 0, Matrix::Constant(1, 1, self.grad.cwiseProduct(a.value()).sum()));
    if (a.requires_grad()) push(self, 1, self.grad * k);
  });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& self) {
    push(self, 0, self.grad);
    push(self, 1, self.grad.colwise().sum());
  });
}

Var add_col(const Var& a, const Var& col) {
  require(col.cols() == 1 && col.rows() == a.rows(), "add_col: shape mismatch");
  Matrix out = a.value().colwise() + col.value().col(0);
  return make_op(std::move(out), {a, col}, [](Node& self) {
    push(self, 0, self.grad);
    push(self, 1, self.grad.rowwise().sum());
  });
}

Var outer_sum(const Var& col, const Var& row) {
  require(col.cols() == 1 && row.rows() == 1, "outer_sum: expects column and row");
  Matrix out = col.value().replicate(1, row.cols());
  out.rowwise() += row.value().row(0);
  return make_op(std::move(out), {col, row}, [](Node& self) {
    push(self, 0, self.grad.rowwise().sum());
    push(self, 1, self.grad.colwise().sum());
  });
}

Var sum(const Var& a) {
  const Eigen::Index r = a.rows(), c = a.cols();
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [r, c](Node& self) {
    push(self, 0, Matrix::Constant(r, c, self.grad(0, 0)));
  });
}

Var mean_rows(const Var& a) {
  const Eigen::Index r = a.rows();
  require(r > 0, "mean_rows: empty");
  return make_op(a.value().colwise().mean(), {a}, [r](Node& self) {
    push(self, 0, self.grad.replicate(r, 1) / static_cast<double>(r));
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    offsets.push_back(off);
    off += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_op(std::move(out), inputs, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      if (self.parents[i]->requires_grad)
        self.parents[i]->accumulate(self.grad.middleRows(offsets[i], self.parents[i]->value.rows()));
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_op(std::move(out), inputs, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      if (self.parents[i]->requires_grad)
        self.parents[i]->accumulate(self.grad.middleCols(offsets[i], self.parents[i]->value.cols()));
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  const Eigen::Index r = a.rows(), c = a.cols();
  return make_op(a.value().middleRows(start, count), {a}, [r, c, start, count](Node& self) {
    Matrix g = Matrix::Zero(r, c);
    g.middleRows(start, count) = self.grad;
    push(self, 0, g);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  const Eigen::Index r = a.rows(), c = a.cols();
  return make_op(a.value().middleCols(start, count), {a}, [r, c, start, count](Node& self) {
    Matrix g = Matrix::Zero(r, c);
    g.middleCols(start, count) = self.grad;
    push(self, 0, g);
  });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  const Eigen::Index n = table.rows();
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= n)
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(n));
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  const Eigen::Index c = table.cols();
  return make_op(std::move(out), {table}, [idx, n, c](Node& self) {
    Matrix g = Matrix::Zero(n, c);
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    push(self, 0, g);
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_op(std::move(out), {a}, [a](Node& self) {
    push(self, 0, self.grad.cwiseProduct((a.value().array() > 0.0).cast<double>().matrix()));
  });
}

Var leaky_relu(const Var& a, double slope) {
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return make_op(std::move(out), {a}, [a, slope](Node& self) {
    Matrix d = a.value().unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
    push(self, 0, self.grad.cwiseProduct(d));
  });
}

Var elu(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  return make_op(std::move(out), {a}, [a](Node& self) {
    Matrix d = a.value().unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
    push(self, 0, self.grad.cwiseProduct(d));
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  return make_op(out, {a}, [out](Node& self) {
    push(self, 0, self.grad.cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return make_op(out, {a}, [out](Node& self) {
    push(self, 0, self.grad.cwiseProduct((out.array() * (1.0 - out.array())).matrix()));
  });
}

Var softmax_rows(const Var& a, const Matrix* additive_mask) {
  Matrix z = a.value();
  if (additive_mask) {
    require(additive_mask->rows() == z.rows() && additive_mask->cols() == z.cols(),
            "softmax_rows: mask shape mismatch");
    z += *additive_mask;
  }
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    auto e = (z.row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  return make_op(out, {a}, [out](Node& self) {
    Matrix g(out.rows(), out.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double dot = self.grad.row(i).dot(out.row(i));
      g.row(i) = out.row(i).cwiseProduct((self.grad.row(i).array() - dot).matrix());
    }
    push(self, 0, g);
  });
}

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = a.cols();
  require(gamma.rows() == 1 && gamma.cols() == n && beta.rows() == 1 && beta.cols() == n,
          "layer_norm_rows: gamma/beta shape mismatch");
  Matrix xhat(a.rows(), n);
  Eigen::VectorXd inv_std(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double mu = a.value().row(i).mean();
    auto centered = a.value().row(i).array() - mu;
    const double var = centered.square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std(i);
  }
  Matrix out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make_op(std::move(out), {a, gamma, beta}, [xhat, inv_std, gamma, n](Node& self) {
    if (self.parents[0]->requires_grad) {
      Matrix dxhat = self.grad;
      dxhat.array().rowwise() *= gamma.value().row(0).array();
      Matrix dx(dxhat.rows(), n);
      for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
        const double m1 = dxhat.row(i).mean();
        const double m2 = dxhat.row(i).dot(xhat.row(i)) / static_cast<double>(n);
        dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
      }
      push(self, 0, dx);
    }
    push(self, 1, self.grad.cwiseProduct(xhat).colwise().sum());
    push(self, 2, self.grad.colwise().sum());
  });
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
  require(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "cross_entropy: target count");
  const Matrix& z = logits.value();
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  int counted = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    auto e = (z.row(i).array() - m).exp();
    const double s = e.sum();
    probs.row(i) = e / s;
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0) continue;
    require(t < z.cols(), "cross_entropy: target outside vocabulary");
    total += -(z(i, t) - m - std::log(s));
    ++counted;
  }
  const double loss = counted > 0 ? total / counted : 0.0;
  std::vector<int> tg(targets.begin(), targets.end());
  return make_op(Matrix::Constant(1, 1, loss), {logits}, [probs, tg, counted](Node& self) {
    Matrix g = Matrix::Zero(probs.rows(), probs.cols());
    if (counted > 0) {
      const double k = self.grad(0, 0) / counted;
      for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const int t = tg[static_cast<std::size_t>(i)];
        if (t < 0) continue;
        g.row(i) = probs.row(i) * k;
        g(i, t) -= k;
      }
    }
    push(self, 0, g);
  });
}

Var cosine_similarity(const Var& a, const Var& b) {
  require(a.rows() == 1 && b.rows() == 1 && a.cols() == b.cols(), "cosine_similarity: shape mismatch");
  const double na = a.value().norm(), nb = b.value().norm();
  const double dot = a.value().row(0).dot(b.value().row(0));
  const double cos = dot / (na * nb);
  return make_op(Matrix::Constant(1, 1, cos), {a, b}, [a, b, na, nb, cos](Node& self) {
    const double g = self.grad(0, 0);
    if (a.requires_grad()) push(self, 0, g * (b.value() / (na * nb) - cos * a.value() / (na * na)));
    if (b.requires_grad()) push(self, 1, g * (a.value() / (na * nb) - cos * b.value() / (nb * nb)));
  });
}

Var im2col(const Var& a, int height, int width, int kernel, int stride, int pad) {
  require(a.cols() == static_cast<Eigen::Index>(height) * width, "im2col: spatial size mismatch");
  const int channels = static_cast<int>(a.rows());
  const int oh = conv_out_size(height, kernel, stride, pad);
  const int ow = conv_out_size(width, kernel, stride, pad);
  require(oh > 0 && ow > 0, "im2col: kernel larger than padded input");
  const Matrix& x = a.value();
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(channels) * kernel * kernel,
                             static_cast<Eigen::Index>(oh) * ow);
  for (int c = 0; c < channels; ++c)
    for (int ki = 0; ki < kernel; ++ki)
      for (int kj = 0; kj < kernel; ++kj) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * kernel + ki) * kernel + kj;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= height) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix < 0 || ix >= width) continue;
            cols(row, static_cast<Eigen::Index>(oy) * ow + ox) = x(c, static_cast<Eigen::Index>(iy) * width + ix);
          }
        }
      }
  return make_op(std::move(cols), {a}, [=](Node& self) {
    Matrix g = Matrix::Zero(channels, static_cast<Eigen::Index>(height) * width);
    for (int c = 0; c < channels; ++c)
      for (int ki = 0; ki < kernel; ++ki)
        for (int kj = 0; kj < kernel; ++kj) {
          const Eigen::Index row = (static_cast<Eigen::Index>(c) * kernel + ki) * kernel + kj;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= height) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kj;
              if (ix < 0 || ix >= width) continue;
              g(c, static_cast<Eigen::Index>(iy) * width + ix) += self.grad(row, static_cast<Eigen::Index>(oy) * ow + ox);
            }
          }
        }
    push(self, 0, g);
  });
}

}  // namespace orid::ag

namespace orid::ag {

Var avg_pool(const Var& a, int height, int width, int factor) {
  require(factor >= 1, "avg_pool: factor must be >= 1");
  require(a.cols() == static_cast<Eigen::Index>(height) * width, "avg_pool: spatial size mismatch");
  require(height % factor == 0 && width % factor == 0, "avg_pool: size not divisible by factor");
  if (factor == 1) return a;
  const int oh = height / factor, ow = width / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(a.rows(), static_cast<Eigen::Index>(oh) * ow);
  for (int y = 0; y < height; ++y)
    for (int xx = 0; xx < width; ++xx)
      out.col((y / factor) * ow + xx / factor) += x.col(static_cast<Eigen::Index>(y) * width + xx);
  out *= inv;
  return make_op(std::move(out), {a}, [=](Node& self) {
    Matrix g(self.grad.rows(), static_cast<Eigen::Index>(height) * width);
    for (int y = 0; y < height; ++y)
      for (int xx = 0; xx < width; ++xx)
        g.col(static_cast<Eigen::Index>(y) * width + xx) = self.grad.col((y / factor) * ow + xx / factor) * inv;
    push(self, 0, g);
  });
}

}  // namespace orid::ag

namespace orid::ag {

Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads, const Matrix* additive_mask,
                         std::vector<Matrix>* weights) {
  require(heads >= 1 && q.cols() % heads == 0, "attention: width not divisible by heads");
  require(k.cols() == q.cols() && v.cols() == q.cols(), "attention: q/k/v widths differ");
  require(k.rows() == v.rows() && k.rows() > 0, "attention: key/value row mismatch");
  require(!additive_mask || (additive_mask->rows() == q.rows() && additive_mask->cols() == k.rows()),
          "attention: mask shape mismatch");
  const Eigen::Index dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  Matrix out(q.rows(), q.cols());
  for (int h = 0; h < heads; ++h) {
    Matrix s = q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose() * scale;
    if (additive_mask) s += *additive_mask;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const double m = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - m).exp().matrix();
      s.row(i) /= s.row(i).sum();
    }
    out.middleCols(h * dh, dh) = s * v.value().middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  if (weights) *weights = probs;
  return make_op(std::move(out), {q, k, v}, [probs = std::move(probs), q, k, v, heads, dh, scale](Node& self) {
    Matrix gq = Matrix::Zero(q.rows(), q.cols());
    Matrix gk = Matrix::Zero(k.rows(), k.cols());
    Matrix gv = Matrix::Zero(v.rows(), v.cols());
    for (int h = 0; h < heads; ++h) {
      const Matrix& a = probs[static_cast<std::size_t>(h)];
      const auto go = self.grad.middleCols(h * dh, dh);
      gv.middleCols(h * dh, dh) = a.transpose() * go;
      Matrix ga = go * v.value().middleCols(h * dh, dh).transpose();
      for (Eigen::Index i = 0; i < ga.rows(); ++i) {
        const double dot = ga.row(i).dot(a.row(i));
        ga.row(i) = a.row(i).cwiseProduct((ga.row(i).array() - dot).matrix());
      }
      ga *= scale;
      gq.middleCols(h * dh, dh) = ga * k.value().middleCols(h * dh, dh);
      gk.middleCols(h * dh, dh) = ga.transpose() * q.value().middleCols(h * dh, dh);
    }
    push(self, 0, gq);
    push(self, 1, gk);
    push(self, 2, gv);
  });
}

}  // namespace orid::ag
