#pragma once

// Minimal reverse-mode automatic differentiation over dense 64-bit matrices.
// Every value is rank 2 (rows x cols); vectors are 1 x n or n x 1 and scalars
// 1 x 1. A Tensor is a shared handle to a graph node; ops record their inputs
// and a backward rule, and backward() walks the recorded graph in reverse
// topological order.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace evolunet::nn {

using Matrix = Eigen::MatrixXd;

struct Node {
  Matrix value;
  Matrix grad;  // empty until the first gradient contribution arrives
  bool requires_grad = false;
  bool leaf = true;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // pushes this->grad into inputs' grads

  bool has_grad() const { return grad.rows() == value.rows() && grad.cols() == value.cols(); }

  Matrix& grad_buffer() {
    if (!has_grad()) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }

  /// grad += contribution; the first contribution is assigned directly.
  template <class Expr>
  void accumulate(const Expr& contribution) {
    if (has_grad()) grad += contribution;
    else grad = contribution;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad_buffer(); }
  Matrix& mutable_grad() { return node_->grad_buffer(); }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const {
    if (rows() != 1 || cols() != 1) throw std::invalid_argument("item: tensor is " + shape_string());
    return node_->value(0, 0);
  }
  std::string shape_string() const { return std::to_string(rows()) + "x" + std::to_string(cols()); }
  void zero_grad() { node_->grad = Matrix::Zero(rows(), cols()); }
  const std::shared_ptr<Node>& node() const { return node_; }
  bool same_object(const Tensor& o) const { return node_ == o.node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf that does not take gradients.
inline Tensor constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Tensor(std::move(n));
}

/// Leaf whose gradient accumulates across backward calls until zero_grad.
inline Tensor parameter(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  return Tensor(std::move(n));
}

inline Tensor scalar(double x) { return constant(Matrix::Constant(1, 1, x)); }

/// Builds an op node. The backward rule is only kept when some input needs a gradient.
inline Tensor make_op(std::string op, Matrix value, std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->leaf = false;
  n->op = std::move(op);
  for (const auto& t : inputs) {
    n->requires_grad = n->requires_grad || t.requires_grad();
    n->inputs.push_back(t.node());
  }
  if (n->requires_grad) n->backward = std::move(backward);
  else n->inputs.clear();
  return Tensor(std::move(n));
}

/// Reverse pass from a 1x1 loss. Gradients of intermediate nodes are reset;
/// parameter gradients accumulate.
inline void backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw std::invalid_argument("backward: loss must be 1x1, got " + loss.shape_string());
  if (!loss.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (!n->leaf) n->grad.resize(0, 0);
  loss.node()->grad_buffer()(0, 0) += 1.0;
  // A node that received no contribution has zero gradient and is skipped.
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (!(*it)->leaf && (*it)->backward && (*it)->has_grad()) (*it)->backward(**it);
}

namespace detail {

/// exp(x) with arguments below -600 mapped to exactly 0. Keeps saturated
/// softmax weights out of the subnormal range, where arithmetic is very slow;
/// the discarded mass is below 1e-260.
template <class Array>
inline auto truncated_exp(const Array& x) {
  return (x < -600.0).select(0.0, x.exp());
}

inline void require(bool ok, const std::string& op, const std::string& what) {
  if (!ok) throw std::invalid_argument(op + ": shape mismatch, " + what);
}

inline std::string shapes(const Tensor& a, const Tensor& b) { return a.shape_string() + " vs " + b.shape_string(); }

inline bool wants(const std::shared_ptr<Node>& n) { return n->requires_grad; }

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require(a.cols() == b.rows(), "matmul", detail::shapes(a, b));
  return make_op("matmul", a.value() * b.value(), {a, b}, [](Node& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad * y.value.transpose());
    if (y.requires_grad) y.accumulate(x.value.transpose() * self.grad);
  });
}

/// Elementwise sum; b may also be a 1 x cols row broadcast over a's rows.
inline Tensor add(const Tensor& a, const Tensor& b) {
  const bool broadcast = b.rows() == 1 && a.rows() != 1 && a.cols() == b.cols();
  detail::require(broadcast || (a.rows() == b.rows() && a.cols() == b.cols()), "add", detail::shapes(a, b));
  Matrix out = a.value();
  if (broadcast) out.rowwise() += b.value().row(0);
  else out += b.value();
  return make_op("add", std::move(out), {a, b}, [broadcast](Node& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad);
    if (y.requires_grad) {
      if (broadcast) y.accumulate(self.grad.colwise().sum());
      else y.accumulate(self.grad);
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  return make_op("scale", s * a.value(), {a}, [s](Node& self) { self.inputs[0]->accumulate(s * self.grad); });
}

inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

inline Tensor relu(const Tensor& a) {
  return make_op("relu", a.value().cwiseMax(0.0), {a}, [](Node& self) {
    auto& x = *self.inputs[0];
    x.accumulate((x.value.array() > 0.0).select(self.grad, 0.0));
  });
}

inline Matrix softmax_rows_value(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    out.row(r) = detail::truncated_exp(x.row(r).array() - mx);
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

inline Tensor softmax_rows(const Tensor& a) {
  return make_op("softmax_rows", softmax_rows_value(a.value()), {a}, [](Node& self) {
    const Matrix& s = self.value;
    const Eigen::VectorXd dots = (self.grad.array() * s.array()).rowwise().sum();
    self.inputs[0]->accumulate((s.array() * (self.grad.colwise() - dots).array()).matrix());
  });
}

inline Tensor log(const Tensor& a) {
  return make_op("log", a.value().array().log().matrix(), {a}, [](Node& self) {
    auto& x = *self.inputs[0];
    x.accumulate((self.grad.array() / x.value.array()).matrix());
  });
}

/// Mean of all entries, as a 1x1 tensor.
inline Tensor mean(const Tensor& a) {
  const double count = static_cast<double>(a.value().size());
  return make_op("mean", Matrix::Constant(1, 1, a.value().mean()), {a}, [count](Node& self) {
    auto& x = *self.inputs[0];
    x.grad_buffer().array() += self.grad(0, 0) / count;
  });
}

/// Sum of all entries, as a 1x1 tensor.
inline Tensor sum(const Tensor& a) {
  return make_op("sum", Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    self.inputs[0]->grad_buffer().array() += self.grad(0, 0);
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == parts[0].cols(), "concat_rows", detail::shapes(parts[0], p));
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_op("concat_rows", std::move(out), parts, [](Node& self) {
    Eigen::Index at = 0;
    for (auto& in : self.inputs) {
      const Eigen::Index r = in->value.rows();
      if (in->requires_grad) in->accumulate(self.grad.middleRows(at, r));
      at += r;
    }
  });
}

/// out.row(k) = a.row(index[k]); indices may repeat.
inline Tensor gather_rows(const Tensor& a, const std::vector<Eigen::Index>& index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= a.rows())
      throw std::invalid_argument("gather_rows: row " + std::to_string(index[k]) + " out of range for " +
                                  a.shape_string());
    out.row(static_cast<Eigen::Index>(k)) = a.value().row(index[k]);
  }
  return make_op("gather_rows", std::move(out), {a}, [index](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t k = 0; k < index.size(); ++k) g.row(index[k]) += self.grad.row(static_cast<Eigen::Index>(k));
  });
}

inline Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows())
    throw std::invalid_argument("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                                ") out of range for " + a.shape_string());
  return make_op("slice_rows", a.value().middleRows(begin, count), {a}, [begin, count](Node& self) {
    self.inputs[0]->grad_buffer().middleRows(begin, count) += self.grad;
  });
}

inline Tensor transpose(const Tensor& a) {
  return make_op("transpose", a.value().transpose(), {a},
                 [](Node& self) { self.inputs[0]->accumulate(self.grad.transpose()); });
}

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// A constant sparse operator together with its transpose, built once.
struct SparseOperator {
  SparseMatrix forward;
  SparseMatrix transposed;

  explicit SparseOperator(SparseMatrix m) : forward(std::move(m)), transposed(forward.transpose()) {}
  Eigen::Index rows() const { return forward.rows(); }
  Eigen::Index cols() const { return forward.cols(); }
};

/// Constant sparse matrix times tensor; only the dense operand takes gradients.
inline Tensor spmm(std::shared_ptr<const SparseOperator> s, const Tensor& a) {
  detail::require(s->cols() == a.rows(), "spmm",
                  std::to_string(s->rows()) + "x" + std::to_string(s->cols()) + " vs " + a.shape_string());
  Matrix out = s->forward * a.value();
  return make_op("spmm", std::move(out), {a}, [s](Node& self) {
    self.inputs[0]->accumulate(s->transposed * self.grad);
  });
}

/// Gradient reversal: forward is the identity, backward scales by -lambda.
inline Tensor grl(const Tensor& x, double lambda) {
  return make_op("grl", x.value(), {x}, [lambda](Node& self) { self.inputs[0]->accumulate(-lambda * self.grad); });
}

/// Mean over labeled rows of -log softmax(logits)[label]. Rows absent from
/// `labels` contribute nothing to the value or the gradient.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::pair<Eigen::Index, int>>& labels) {
  if (labels.empty()) throw std::invalid_argument("cross_entropy: empty label set");
  for (const auto& [row, label] : labels) {
    if (row < 0 || row >= logits.rows())
      throw std::invalid_argument("cross_entropy: labeled row " + std::to_string(row) + " out of range for " +
                                  logits.shape_string());
    if (label < 0 || label >= logits.cols())
      throw std::invalid_argument("cross_entropy: label " + std::to_string(label) + " out of range for " +
                                  std::to_string(logits.cols()) + " classes");
  }
  const double count = static_cast<double>(labels.size());
  Matrix probs(static_cast<Eigen::Index>(labels.size()), logits.cols());
  double total = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto x = logits.value().row(labels[k].first);
    const double mx = x.maxCoeff();
    const double lse = mx + std::log((x.array() - mx).exp().sum());
    total += lse - x(labels[k].second);
    probs.row(static_cast<Eigen::Index>(k)) = detail::truncated_exp(x.array() - lse);
  }
  return make_op("cross_entropy", Matrix::Constant(1, 1, total / count), {logits},
                 [labels, probs = std::move(probs), count](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   const double up = self.grad(0, 0) / count;
                   for (std::size_t k = 0; k < labels.size(); ++k) {
                     auto row = g.row(labels[k].first);
                     row += up * probs.row(static_cast<Eigen::Index>(k));
                     row(labels[k].second) -= up;
                   }
                 });
}

/// Attention within groups of rows. Rows are laid out step-major: row
/// i * group_count + v belongs to group v at step i, with `steps` steps. Each
/// group attends over its own steps with softmax(q k^T / sqrt(d)) and the
/// output row takes the weighted sum of that group's value rows.
inline Tensor grouped_attention(const Tensor& q, const Tensor& k, const Tensor& v, Eigen::Index steps) {
  detail::require(q.rows() == k.rows() && q.rows() == v.rows() && q.cols() == k.cols(), "grouped_attention",
                  "q " + q.shape_string() + ", k " + k.shape_string() + ", v " + v.shape_string());
  if (steps < 1 || q.rows() % steps != 0)
    throw std::invalid_argument("grouped_attention: " + std::to_string(q.rows()) + " rows do not split into " +
                                std::to_string(steps) + " steps");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index groups = q.rows() / steps;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  auto qr = std::make_shared<RowMajor>(q.value());
  auto kr = std::make_shared<RowMajor>(k.value());
  auto vr = std::make_shared<RowMajor>(v.value());
  // weights(g, i*steps + j): attention of step i on step j within group g.
  auto weights = std::make_shared<RowMajor>(groups, steps * steps);
  RowMajor out = RowMajor::Zero(q.rows(), v.cols());
  Eigen::VectorXd scores(steps);
  for (Eigen::Index g = 0; g < groups; ++g)
    for (Eigen::Index i = 0; i < steps; ++i) {
      const auto qi = qr->row(i * groups + g);
      for (Eigen::Index j = 0; j < steps; ++j) scores(j) = inv_sqrt_d * qi.dot(kr->row(j * groups + g));
      const double mx = scores.maxCoeff();
      scores = detail::truncated_exp(scores.array() - mx);
      scores /= scores.sum();
      auto o = out.row(i * groups + g);
      for (Eigen::Index j = 0; j < steps; ++j) {
        (*weights)(g, i * steps + j) = scores(j);
        o += scores(j) * vr->row(j * groups + g);
      }
    }
  return make_op("grouped_attention", Matrix(out), {q, k, v},
                 [qr, kr, vr, weights, steps, groups, inv_sqrt_d](Node& self) {
    auto& qn = *self.inputs[0];
    auto& kn = *self.inputs[1];
    auto& vn = *self.inputs[2];
    const RowMajor up_all = self.grad;
    RowMajor gq = RowMajor::Zero(qr->rows(), qr->cols()), gk = RowMajor::Zero(kr->rows(), kr->cols()),
             gv = RowMajor::Zero(vr->rows(), vr->cols());
    Eigen::VectorXd dw(steps);
    for (Eigen::Index g = 0; g < groups; ++g)
      for (Eigen::Index i = 0; i < steps; ++i) {
        const Eigen::Index ri = i * groups + g;
        const auto up = up_all.row(ri);
        const double* w = &(*weights)(g, i * steps);
        double centered = 0.0;
        for (Eigen::Index j = 0; j < steps; ++j) {
          dw(j) = up.dot(vr->row(j * groups + g));
          gv.row(j * groups + g) += w[j] * up;
          centered += w[j] * dw(j);
        }
        for (Eigen::Index j = 0; j < steps; ++j) {
          const double ds = w[j] * (dw(j) - centered) * inv_sqrt_d;
          gq.row(ri) += ds * kr->row(j * groups + g);
          gk.row(j * groups + g) += ds * qr->row(ri);
        }
      }
    if (qn.requires_grad) qn.accumulate(gq);
    if (kn.requires_grad) kn.accumulate(gk);
    if (vn.requires_grad) vn.accumulate(gv);
  });
}

/// Attention weights of grouped_attention, one steps x steps matrix per group.
inline std::vector<Matrix> grouped_attention_weights(const Matrix& q, const Matrix& k, Eigen::Index steps) {
  const Eigen::Index groups = q.rows() / steps;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  std::vector<Matrix> out;
  for (Eigen::Index g = 0; g < groups; ++g) {
    Matrix s(steps, steps);
    for (Eigen::Index i = 0; i < steps; ++i)
      for (Eigen::Index j = 0; j < steps; ++j) s(i, j) = inv_sqrt_d * q.row(i * groups + g).dot(k.row(j * groups + g));
    out.push_back(softmax_rows_value(s));
  }
  return out;
}

/// Averages the `steps` step-major rows of each group: [steps*groups x d] -> [groups x d].
inline Tensor group_mean(const Tensor& a, Eigen::Index steps) {
  if (steps < 1 || a.rows() % steps != 0)
    throw std::invalid_argument("group_mean: " + std::to_string(a.rows()) + " rows do not split into " +
                                std::to_string(steps) + " steps");
  const Eigen::Index groups = a.rows() / steps;
  Matrix out = Matrix::Zero(groups, a.cols());
  for (Eigen::Index i = 0; i < steps; ++i) out += a.value().middleRows(i * groups, groups);
  out /= static_cast<double>(steps);
  return make_op("group_mean", std::move(out), {a}, [steps, groups](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (Eigen::Index i = 0; i < steps; ++i) g.middleRows(i * groups, groups) += self.grad / static_cast<double>(steps);
  });
}

/// Sums the `steps` step-major rows of each group.
inline Tensor group_sum(const Tensor& a, Eigen::Index steps) { return scale(group_mean(a, steps), static_cast<double>(steps)); }

}  // namespace evolunet::nn
