#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "colorname/random.hpp"

namespace colorname::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ParamId {
  std::size_t index = 0;
  friend bool operator==(ParamId, ParamId) = default;
};

/// One gradient matrix per parameter, indexed like the owning store.
using Gradients = std::vector<Matrix>;

/// Named parameter arrays with same-shape gradient buffers.
class ParamStore {
 public:
  ParamId add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (by_name_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("parameter " + name + " has an empty shape");
    ParamId id{values_.size()};
    names_.push_back(name);
    values_.push_back(Matrix::Zero(rows, cols));
    grads_.push_back(Matrix::Zero(rows, cols));
    by_name_.emplace(name, id.index);
    return id;
  }

  std::size_t size() const { return values_.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  const std::string& name(ParamId id) const { return names_.at(id.index); }
  const std::vector<std::string>& names() const { return names_; }

  bool contains(const std::string& name) const { return by_name_.contains(name); }

  ParamId find(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
    return ParamId{it->second};
  }

  Matrix& value(ParamId id) { return values_.at(id.index); }
  const Matrix& value(ParamId id) const { return values_.at(id.index); }
  Matrix& grad(ParamId id) { return grads_.at(id.index); }
  const Matrix& grad(ParamId id) const { return grads_.at(id.index); }

  Gradients& grads() { return grads_; }
  const Gradients& grads() const { return grads_; }
  const std::vector<Matrix>& values() const { return values_; }

  void zero_grad() {
    for (auto& g : grads_) g.setZero();
  }

  /// Replaces all values; shapes must match.
  void assign_values(const std::vector<Matrix>& values) {
    if (values.size() != values_.size()) throw std::invalid_argument("parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].rows() != values_[i].rows() || values[i].cols() != values_[i].cols()) {
        throw std::invalid_argument("shape mismatch for parameter " + names_[i]);
      }
      values_[i] = values[i];
    }
  }

  double grad_norm() const {
    double sq = 0.0;
    for (const auto& g : grads_) sq += g.squaredNorm();
    return std::sqrt(sq);
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  Gradients grads_;
  std::map<std::string, std::size_t> by_name_;
};

// Initializers. All draw from the portable Rng so initial weights are
// reproducible everywhere.

inline void init_glorot_uniform(Matrix& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
  }
}

inline void init_uniform(Matrix& m, double limit, Rng& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
  }
}

}  // namespace colorname::nn
