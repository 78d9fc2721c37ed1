#pragma once

// Recurrent cells.
//
// LSTM (no peepholes), gate rows stacked as [input; forget; output; candidate]:
//   pre = Wx x + Wh h + b
//   i, f, o = logistic(pre_i), logistic(pre_f), logistic(pre_o)
//   g = tanh(pre_g)
//   c' = f*c + i*g,  h' = o*tanh(c')
// Elman RNN: h' = tanh(Wx x + Wh h + b).

#include <string>

#include "colorname/nn/param_store.hpp"
#include "colorname/nn/tape.hpp"

namespace colorname::nn {

struct CellState {
  Vector h;
  Vector c;
};

/// Batched state on a tape; `c` is unused by the RNN.
struct TapeState {
  Var h;
  Var c;
};

struct LstmLayer {
  ParamId wx, wh, b;
  Eigen::Index input_dim = 0;
  Eigen::Index hidden_dim = 0;

  static LstmLayer create(ParamStore& ps, const std::string& prefix, Eigen::Index input_dim,
                          Eigen::Index hidden_dim) {
    LstmLayer l;
    l.input_dim = input_dim;
    l.hidden_dim = hidden_dim;
    l.wx = ps.add(prefix + ".wx", 4 * hidden_dim, input_dim);
    l.wh = ps.add(prefix + ".wh", 4 * hidden_dim, hidden_dim);
    l.b = ps.add(prefix + ".b", 4 * hidden_dim, 1);
    return l;
  }

  static LstmLayer bind(const ParamStore& ps, const std::string& prefix) {
    LstmLayer l;
    l.wx = ps.find(prefix + ".wx");
    l.wh = ps.find(prefix + ".wh");
    l.b = ps.find(prefix + ".b");
    l.input_dim = ps.value(l.wx).cols();
    l.hidden_dim = ps.value(l.wh).cols();
    return l;
  }

  /// Glorot matrices, zero bias except forget-gate rows at +1.
  void initialize(ParamStore& ps, Rng& rng) const {
    init_glorot_uniform(ps.value(wx), rng);
    init_glorot_uniform(ps.value(wh), rng);
    ps.value(b).setZero();
    ps.value(b).middleRows(hidden_dim, hidden_dim).setOnes();
  }
};

struct RnnLayer {
  ParamId wx, wh, b;
  Eigen::Index input_dim = 0;
  Eigen::Index hidden_dim = 0;

  static RnnLayer create(ParamStore& ps, const std::string& prefix, Eigen::Index input_dim,
                         Eigen::Index hidden_dim) {
    RnnLayer l;
    l.input_dim = input_dim;
    l.hidden_dim = hidden_dim;
    l.wx = ps.add(prefix + ".wx", hidden_dim, input_dim);
    l.wh = ps.add(prefix + ".wh", hidden_dim, hidden_dim);
    l.b = ps.add(prefix + ".b", hidden_dim, 1);
    return l;
  }

  static RnnLayer bind(const ParamStore& ps, const std::string& prefix) {
    RnnLayer l;
    l.wx = ps.find(prefix + ".wx");
    l.wh = ps.find(prefix + ".wh");
    l.b = ps.find(prefix + ".b");
    l.input_dim = ps.value(l.wx).cols();
    l.hidden_dim = ps.value(l.wh).cols();
    return l;
  }

  void initialize(ParamStore& ps, Rng& rng) const {
    init_glorot_uniform(ps.value(wx), rng);
    init_glorot_uniform(ps.value(wh), rng);
    ps.value(b).setZero();
  }
};

/// Parameter leaves of one layer, created once per tape and reused per step.
struct LayerVars {
  Var wx, wh, b;
};

template <class Layer>
LayerVars bind_vars(Tape& t, const ParamStore& ps, const Layer& layer) {
  return {t.parameter(ps, layer.wx), t.parameter(ps, layer.wh), t.parameter(ps, layer.b)};
}

inline TapeState lstm_step(Tape& t, const LayerVars& p, Var x, const TapeState& s) {
  const Eigen::Index H = t.value(p.wh).cols();
  if (t.value(p.wx).cols() != t.value(x).rows()) throw DimensionError("lstm_step: input size mismatch");
  if (t.value(s.h).rows() != H || t.value(s.c).rows() != H) throw DimensionError("lstm_step: state size mismatch");
  Var pre = add_bias(t, add(t, matmul(t, p.wx, x), matmul(t, p.wh, s.h)), p.b);
  Var i = sigmoid(t, slice_rows(t, pre, 0, H));
  Var f = sigmoid(t, slice_rows(t, pre, H, H));
  Var o = sigmoid(t, slice_rows(t, pre, 2 * H, H));
  Var g = tanh(t, slice_rows(t, pre, 3 * H, H));
  Var c = add(t, hadamard(t, f, s.c), hadamard(t, i, g));
  Var h = hadamard(t, o, tanh(t, c));
  return {h, c};
}

inline Var rnn_step(Tape& t, const LayerVars& p, Var x, Var h) {
  const Eigen::Index H = t.value(p.wh).cols();
  if (t.value(p.wx).cols() != t.value(x).rows()) throw DimensionError("rnn_step: input size mismatch");
  if (t.value(h).rows() != H) throw DimensionError("rnn_step: state size mismatch");
  return tanh(t, add_bias(t, add(t, matmul(t, p.wx, x), matmul(t, p.wh, h)), p.b));
}

/// Single-example LSTM step outside of training.
inline CellState lstm_step(const ParamStore& ps, const LstmLayer& layer, const Vector& x,
                           const CellState& s) {
  Tape t;
  const LayerVars p = bind_vars(t, ps, layer);
  TapeState next = lstm_step(t, p, t.constant(x), {t.constant(s.h), t.constant(s.c)});
  return {t.value(next.h).col(0), t.value(next.c).col(0)};
}

inline Vector rnn_step(const ParamStore& ps, const RnnLayer& layer, const Vector& x, const Vector& h) {
  Tape t;
  const LayerVars p = bind_vars(t, ps, layer);
  return t.value(rnn_step(t, p, t.constant(x), t.constant(h))).col(0);
}

}  // namespace colorname::nn
