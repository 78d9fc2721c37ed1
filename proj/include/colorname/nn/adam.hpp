#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "colorname/nn/param_store.hpp"

namespace colorname::nn {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long long step = 0;

  AdamState() = default;
  AdamState(const ParamStore& ps, AdamConfig cfg) : config(cfg) {
    for (const auto& value : ps.values()) {
      m.push_back(Matrix::Zero(value.rows(), value.cols()));
      v.push_back(Matrix::Zero(value.rows(), value.cols()));
    }
  }
};

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(ParamStore& ps, double max_norm) {
  const double norm = ps.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : ps.grads()) g *= s;
  }
  return norm;
}

/// One bias-corrected Adam update from the gradients held in `ps`, which are
/// zeroed afterwards. A non-finite gradient aborts before anything changes.
inline void adam_step(ParamStore& ps, AdamState& state) {
  if (state.m.size() != ps.size()) throw std::invalid_argument("Adam state does not match parameter store");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Matrix& g = ps.grads()[i];
    if (!g.allFinite()) {
      std::ostringstream os;
      os << "non-finite gradient in parameter '" << ps.names()[i] << "' (max |g| = "
         << g.cwiseAbs().maxCoeff() << ") at Adam step " << state.step + 1;
      throw NonFiniteError(os.str());
    }
  }
  ++state.step;
  const AdamConfig& c = state.config;
  const double corr1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Matrix& g = ps.grads()[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    Matrix& theta = ps.value(ParamId{i});
    theta.array() -= c.learning_rate * (m.array() / corr1) / ((v.array() / corr2).sqrt() + c.epsilon);
  }
  ps.zero_grad();
}

}  // namespace colorname::nn
