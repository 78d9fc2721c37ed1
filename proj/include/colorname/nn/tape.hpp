#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every primitive applied during a forward pass together with
// its local backward rule. Tape::backward walks the record in reverse and
// accumulates dLoss/dParam into a Gradients buffer. Columns are batch
// entries throughout: an activation for a batch of B examples is (dim x B).

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "colorname/nn/param_store.hpp"

namespace colorname::nn {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Var constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  /// Leaf bound to a stored parameter; the value is referenced, not copied,
  /// so the store must outlive the tape.
  Var parameter(const ParamStore& store, ParamId id) {
    Node n;
    n.ref = &store.value(id);
    n.param = static_cast<std::ptrdiff_t>(id.index);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  const Matrix& value(Var v) const {
    const Node& n = node(v);
    return n.ref ? *n.ref : n.value;
  }

  bool requires_grad(Var v) const { return node(v).requires_grad; }

  std::size_t size() const { return nodes_.size(); }

  /// Records an op output. `backward` is dropped when no input needs a grad.
  Var record(Matrix value, bool requires_grad, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  /// grad(v) += delta, skipped for nodes that need no gradient.
  template <class Expr>
  void accumulate(Var v, const Expr& delta) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  /// Seeds d(loss)/d(loss) = 1 and back-propagates into `out`, which must be
  /// shaped like the store the parameters came from. Gradients are added to
  /// whatever `out` already holds.
  void backward(Var loss, Gradients& out) {
    if (nodes_.empty()) throw std::logic_error("backward called on an empty tape");
    if (backward_done_) throw std::logic_error("backward already ran on this tape");
    Node& root = node(loss);
    if (value(loss).rows() != 1 || value(loss).cols() != 1) {
      throw DimensionError("backward needs a scalar (1x1) loss");
    }
    backward_done_ = true;
    if (!root.requires_grad) return;
    root.grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.param >= 0) {
        out.at(static_cast<std::size_t>(n.param)) += n.grad;
      } else if (n.backward) {
        n.backward(*this, n.grad);
      }
      n.grad.resize(0, 0);
    }
  }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    BackwardFn backward;
    std::ptrdiff_t param = -1;
    bool requires_grad = false;
  };

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw std::out_of_range("variable does not belong to this tape");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("variable does not belong to this tape");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
}

}  // namespace detail

inline Var matmul(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.rows()) throw DimensionError("matmul: inner dimensions differ");
  Matrix out;
  out.noalias() = A * B;
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Matrix& g) {
                    if (t.requires_grad(a)) t.accumulate(a, (g * t.value(b).transpose()).eval());
                    if (t.requires_grad(b)) t.accumulate(b, (t.value(a).transpose() * g).eval());
                  });
}

inline Var add(Tape& t, Var a, Var b) {
  detail::require_same_shape(t.value(a), t.value(b), "add");
  return t.record(t.value(a) + t.value(b), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Matrix& g) {
                    t.accumulate(a, g);
                    t.accumulate(b, g);
                  });
}

inline Var sub(Tape& t, Var a, Var b) {
  detail::require_same_shape(t.value(a), t.value(b), "sub");
  return t.record(t.value(a) - t.value(b), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Matrix& g) {
                    t.accumulate(a, g);
                    t.accumulate(b, (-g).eval());
                  });
}

/// a + bias, with the column vector `bias` broadcast across columns.
inline Var add_bias(Tape& t, Var a, Var bias) {
  const Matrix& A = t.value(a);
  const Matrix& b = t.value(bias);
  if (b.cols() != 1 || b.rows() != A.rows()) throw DimensionError("add_bias: bias must be a matching column");
  Matrix out = A.colwise() + b.col(0);
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(bias),
                  [a, bias](Tape& t, const Matrix& g) {
                    t.accumulate(a, g);
                    if (t.requires_grad(bias)) t.accumulate(bias, g.rowwise().sum().eval());
                  });
}

/// W x + b.
inline Var affine(Tape& t, Var W, Var x, Var b) { return add_bias(t, matmul(t, W, x), b); }

inline Var hadamard(Tape& t, Var a, Var b) {
  detail::require_same_shape(t.value(a), t.value(b), "hadamard");
  Matrix out = t.value(a).cwiseProduct(t.value(b));
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Matrix& g) {
                    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)).eval());
                    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)).eval());
                  });
}

inline Var scale(Tape& t, Var a, double s) {
  return t.record(t.value(a) * s, t.requires_grad(a),
                  [a, s](Tape& t, const Matrix& g) { t.accumulate(a, (g * s).eval()); });
}

inline Var add_scalar(Tape& t, Var a, double s) {
  Matrix out = t.value(a).array() + s;
  return t.record(std::move(out), t.requires_grad(a),
                  [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

inline Var tanh(Tape& t, Var a) {
  Matrix out = t.value(a).array().tanh();
  const std::size_t self = t.size();
  return t.record(std::move(out), t.requires_grad(a), [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(Var{self});
    t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix().eval());
  });
}

inline Matrix logistic(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

inline Var sigmoid(Tape& t, Var a) {
  const std::size_t self = t.size();
  return t.record(logistic(t.value(a)), t.requires_grad(a), [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(Var{self});
    t.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix().eval());
  });
}

inline Var exp(Tape& t, Var a) {
  Matrix out = t.value(a).array().exp();
  const std::size_t self = t.size();
  return t.record(std::move(out), t.requires_grad(a), [a, self](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(t.value(Var{self})).eval());
  });
}

inline Var square(Tape& t, Var a) {
  Matrix out = t.value(a).array().square();
  return t.record(std::move(out), t.requires_grad(a), [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (2.0 * g.cwiseProduct(t.value(a))).eval());
  });
}

/// Sum of all entries, as a 1x1 matrix.
inline Var sum(Tape& t, Var a) {
  Matrix out(1, 1);
  out(0, 0) = t.value(a).sum();
  const Eigen::Index rows = t.value(a).rows(), cols = t.value(a).cols();
  return t.record(std::move(out), t.requires_grad(a), [a, rows, cols](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(rows, cols, g(0, 0)));
  });
}

inline Var slice_rows(Tape& t, Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& A = t.value(a);
  if (start < 0 || count <= 0 || start + count > A.rows()) throw DimensionError("slice_rows: out of range");
  Matrix out = A.middleRows(start, count);
  const Eigen::Index rows = A.rows();
  return t.record(std::move(out), t.requires_grad(a), [a, start, count, rows](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(rows, g.cols());
    full.middleRows(start, count) = g;
    t.accumulate(a, full);
  });
}

inline Var concat_rows(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.cols()) throw DimensionError("concat_rows: column counts differ");
  Matrix out(A.rows() + B.rows(), A.cols());
  out << A, B;
  const Eigen::Index ra = A.rows(), rb = B.rows();
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b, ra, rb](Tape& t, const Matrix& g) {
                    if (t.requires_grad(a)) t.accumulate(a, g.topRows(ra).eval());
                    if (t.requires_grad(b)) t.accumulate(b, g.bottomRows(rb).eval());
                  });
}

/// Weighted bag of table columns: out(:, j) = sum_k w_jk * table(:, idx_jk).
/// With one (index, 1.0) entry per column this is an embedding lookup.
using Bag = std::vector<std::pair<int, double>>;

inline Var gather_bags(Tape& t, Var table, std::vector<Bag> bags) {
  const Matrix& T = t.value(table);
  Matrix out = Matrix::Zero(T.rows(), static_cast<Eigen::Index>(bags.size()));
  for (std::size_t j = 0; j < bags.size(); ++j) {
    for (const auto& [idx, w] : bags[j]) {
      if (idx < 0 || idx >= T.cols()) throw DimensionError("gather_bags: index out of range");
      out.col(static_cast<Eigen::Index>(j)) += w * T.col(idx);
    }
  }
  return t.record(std::move(out), t.requires_grad(table),
                  [table, bags = std::move(bags)](Tape& t, const Matrix& g) {
                    const Matrix& T = t.value(table);
                    Matrix dT = Matrix::Zero(T.rows(), T.cols());
                    for (std::size_t j = 0; j < bags.size(); ++j) {
                      for (const auto& [idx, w] : bags[j]) dT.col(idx) += w * g.col(static_cast<Eigen::Index>(j));
                    }
                    t.accumulate(table, dT);
                  });
}

inline Var embed(Tape& t, Var table, const std::vector<int>& indices) {
  std::vector<Bag> bags;
  bags.reserve(indices.size());
  for (int i : indices) bags.push_back({{i, 1.0}});
  return gather_bags(t, table, std::move(bags));
}

/// Column-wise select: column j comes from `taken` where keep[j] is true,
/// otherwise from `held`. Used to freeze the state of finished sequences.
inline Var select_columns(Tape& t, const std::vector<bool>& keep, Var taken, Var held) {
  const Matrix& A = t.value(taken);
  const Matrix& B = t.value(held);
  detail::require_same_shape(A, B, "select_columns");
  if (static_cast<Eigen::Index>(keep.size()) != A.cols()) throw DimensionError("select_columns: mask size");
  Matrix out = B;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    if (keep[static_cast<std::size_t>(j)]) out.col(j) = A.col(j);
  }
  return t.record(std::move(out), t.requires_grad(taken) || t.requires_grad(held),
                  [keep, taken, held](Tape& t, const Matrix& g) {
                    Matrix ga = g, gb = g;
                    for (Eigen::Index j = 0; j < g.cols(); ++j) {
                      if (keep[static_cast<std::size_t>(j)]) {
                        gb.col(j).setZero();
                      } else {
                        ga.col(j).setZero();
                      }
                    }
                    t.accumulate(taken, ga);
                    t.accumulate(held, gb);
                  });
}

/// Column-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - m).exp();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

inline Vector softmax(const Vector& logits) {
  Matrix m = logits;
  return softmax(m).col(0);
}

/// sum_j weight_j * -log softmax(logits(:, j))[target_j], as 1x1.
/// Columns with weight 0 contribute nothing (padding).
inline Var softmax_cross_entropy(Tape& t, Var logits, const std::vector<int>& targets,
                                 const std::vector<double>& weights) {
  const Matrix& Z = t.value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != Z.cols() || weights.size() != targets.size()) {
    throw DimensionError("softmax_cross_entropy: target count must equal column count");
  }
  Matrix probs = softmax(Z);
  Matrix out(1, 1);
  out(0, 0) = 0.0;
  for (Eigen::Index j = 0; j < Z.cols(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    if (weights[k] == 0.0) continue;
    if (targets[k] < 0 || targets[k] >= Z.rows()) throw DimensionError("softmax_cross_entropy: target out of range");
    const double m = Z.col(j).maxCoeff();
    const double lse = m + std::log((Z.col(j).array() - m).exp().sum());
    out(0, 0) += weights[k] * (lse - Z(targets[k], j));
  }
  return t.record(std::move(out), t.requires_grad(logits),
                  [logits, targets, weights, probs = std::move(probs)](Tape& t, const Matrix& g) {
                    Matrix d = probs;
                    for (Eigen::Index j = 0; j < d.cols(); ++j) {
                      const auto k = static_cast<std::size_t>(j);
                      if (weights[k] == 0.0) {
                        d.col(j).setZero();
                        continue;
                      }
                      d(targets[k], j) -= 1.0;
                      d.col(j) *= weights[k] * g(0, 0);
                    }
                    t.accumulate(logits, d);
                  });
}

/// sum of squared differences between `pred` and a constant target, as 1x1.
inline Var squared_error(Tape& t, Var pred, const Matrix& target) {
  detail::require_same_shape(t.value(pred), target, "squared_error");
  Matrix diff = t.value(pred) - target;
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm();
  return t.record(std::move(out), t.requires_grad(pred),
                  [pred, diff = std::move(diff)](Tape& t, const Matrix& g) {
                    t.accumulate(pred, (2.0 * g(0, 0) * diff).eval());
                  });
}

}  // namespace colorname::nn
