#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "colorname/nn/adam.hpp"
#include "colorname/nn/cells.hpp"
#include "colorname/nn/checkpoint.hpp"
#include "colorname/nn/grad_check.hpp"
#include "colorname/nn/tape.hpp"

namespace colorname::nn {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

TEST(ParamStore, NamesAreUniqueAndCounted) {
  ParamStore ps;
  ps.add("w", 3, 4);
  ps.add("b", 3, 1);
  EXPECT_EQ(ps.parameter_count(), 15u);
  EXPECT_TRUE(ps.contains("w"));
  EXPECT_EQ(ps.grad(ps.find("w")).rows(), 3);
  EXPECT_EQ(ps.grad(ps.find("w")).cols(), 4);
  EXPECT_THROW(ps.add("w", 1, 1), std::invalid_argument);
  EXPECT_THROW(ps.find("nope"), std::out_of_range);
}

TEST(Tape, MatmulShapeMismatchIsRejected) {
  Tape t;
  Var a = t.constant(Matrix::Ones(2, 3));
  Var b = t.constant(Matrix::Ones(2, 3));
  EXPECT_THROW(matmul(t, a, b), DimensionError);
}

TEST(Tape, ZeroResidualGivesZeroGradient) {
  ParamStore ps;
  const ParamId w = ps.add("w", 3, 1);
  ps.value(w) << 1, 2, 3;
  Tape t;
  Var loss = scale(t, squared_error(t, t.parameter(ps, w), ps.value(w)), 0.5);
  t.backward(loss, ps.grads());
  EXPECT_EQ(ps.grad(w).norm(), 0.0);
}

TEST(Tape, UntouchedParametersGetZeroGradient) {
  ParamStore ps;
  const ParamId used = ps.add("used", 2, 1);
  const ParamId idle = ps.add("idle", 2, 1);
  ps.value(used) << 1, -1;
  ps.value(idle) << 5, 5;
  Tape t;
  t.backward(sum(t, square(t, t.parameter(ps, used))), ps.grads());
  EXPECT_DOUBLE_EQ(ps.grad(used)(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(ps.grad(used)(1, 0), -2.0);
  EXPECT_EQ(ps.grad(idle).norm(), 0.0);
}

TEST(Tape, BackwardRequiresScalarLoss) {
  Tape t;
  ParamStore ps;
  const ParamId w = ps.add("w", 2, 1);
  Var v = t.parameter(ps, w);
  EXPECT_THROW(t.backward(v, ps.grads()), DimensionError);
}

TEST(Softmax, IsStableForLargeLogits) {
  Vector z(3);
  z << 1000.0, 1000.0, -1000.0;
  const Vector p = softmax(z);
  EXPECT_NEAR(p(0), 0.5, 1e-12);
  EXPECT_NEAR(p(2), 0.0, 1e-12);
  EXPECT_TRUE(p.allFinite());
}

TEST(SoftmaxCrossEntropy, UniformLogitsCostLogV) {
  Tape t;
  Var z = t.constant(Matrix::Zero(5, 2));
  Var loss = softmax_cross_entropy(t, z, {1, 3}, {1.0, 1.0});
  EXPECT_NEAR(t.value(loss)(0, 0), 2.0 * std::log(5.0), 1e-12);
}

TEST(LstmCell, ZeroWeightsGiveHalfGatesAndZeroCandidate) {
  ParamStore ps;
  const LstmLayer layer = LstmLayer::create(ps, "l", 3, 4);
  const CellState s{Vector::Ones(4), Vector::Ones(4)};
  const CellState next = lstm_step(ps, layer, Vector::Ones(3), s);
  // i = f = o = 0.5, g = 0: c' = 0.5 * c, h' = 0.5 * tanh(c').
  for (int k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(next.c(k), 0.5);
    EXPECT_DOUBLE_EQ(next.h(k), 0.5 * std::tanh(0.5));
  }
}

TEST(LstmCell, ForgetBiasStartsAtOne) {
  ParamStore ps;
  Rng rng(3);
  const LstmLayer layer = LstmLayer::create(ps, "l", 2, 3);
  layer.initialize(ps, rng);
  const Matrix& b = ps.value(layer.b);
  EXPECT_EQ(b.middleRows(0, 3).norm(), 0.0);
  EXPECT_EQ(b.middleRows(3, 3), Matrix::Ones(3, 1));
  EXPECT_EQ(b.middleRows(6, 6).norm(), 0.0);
}

TEST(LstmCell, RejectsWrongInputSize) {
  ParamStore ps;
  const LstmLayer layer = LstmLayer::create(ps, "l", 3, 4);
  EXPECT_THROW(lstm_step(ps, layer, Vector::Ones(2), {Vector::Zero(4), Vector::Zero(4)}), DimensionError);
}

TEST(RnnCell, MatchesClosedForm) {
  ParamStore ps;
  Rng rng(5);
  const RnnLayer layer = RnnLayer::create(ps, "r", 2, 3);
  layer.initialize(ps, rng);
  ps.value(layer.b) = random_matrix(3, 1, rng);
  const Vector x = random_matrix(2, 1, rng).col(0);
  const Vector h = random_matrix(3, 1, rng).col(0);
  const Vector expected =
      (ps.value(layer.wx) * x + ps.value(layer.wh) * h + ps.value(layer.b).col(0)).array().tanh().matrix();
  EXPECT_LT((rnn_step(ps, layer, x, h) - expected).norm(), 1e-14);
}

// Two-step LSTM plus RNN over a batch of three with a masked column, scored by
// cross entropy and squared error: exercises every tape op used by the models.
TEST(GradCheck, RecurrentCompositePasses) {
  ParamStore ps;
  Rng rng(17);
  const LstmLayer lstm = LstmLayer::create(ps, "lstm", 4, 5);
  const RnnLayer rnn = RnnLayer::create(ps, "rnn", 5, 3);
  const ParamId table = ps.add("embed", 4, 6);
  const ParamId head = ps.add("head", 6, 3);
  lstm.initialize(ps, rng);
  rnn.initialize(ps, rng);
  init_uniform(ps.value(table), 0.5, rng);
  init_glorot_uniform(ps.value(head), rng);
  ps.value(lstm.b) += random_matrix(20, 1, rng, 0.1);
  const Matrix target = random_matrix(3, 3, rng);

  const LossBuilder loss = [&](Tape& t) {
    const LayerVars pl = bind_vars(t, ps, lstm);
    const LayerVars pr = bind_vars(t, ps, rnn);
    Var E = t.parameter(ps, table);
    TapeState s{t.constant(Matrix::Zero(5, 3)), t.constant(Matrix::Zero(5, 3))};
    Var h = t.constant(Matrix::Zero(3, 3));
    const std::vector<std::vector<int>> steps{{0, 1, 2}, {3, 4, 5}};
    const std::vector<std::vector<bool>> live{{true, true, true}, {true, false, true}};
    for (std::size_t k = 0; k < steps.size(); ++k) {
      Var x = embed(t, E, steps[k]);
      TapeState n = lstm_step(t, pl, x, s);
      s = {select_columns(t, live[k], n.h, s.h), select_columns(t, live[k], n.c, s.c)};
      h = select_columns(t, live[k], rnn_step(t, pr, s.h, h), h);
    }
    Var logits = matmul(t, t.parameter(ps, head), h);
    Var ce = softmax_cross_entropy(t, logits, {0, 5, 2}, {1.0, 0.5, 1.0});
    Var se = squared_error(t, sigmoid(t, h), target);
    Var extra = sum(t, exp(t, scale(t, concat_rows(t, h, h), 0.1)));
    return add(t, add(t, ce, se), add_scalar(t, extra, 1.0));
  };
  const GradCheckReport r = grad_check(ps, loss, 1e-4);
  EXPECT_TRUE(r.passed) << r.to_string();
}

TEST(GradCheck, CorruptedGradientFails) {
  ParamStore ps;
  Rng rng(2);
  const ParamId w = ps.add("w", 3, 2);
  init_glorot_uniform(ps.value(w), rng);
  const Matrix x = random_matrix(2, 4, rng);
  const LossBuilder loss = [&](Tape& t) {
    return sum(t, tanh(t, matmul(t, t.parameter(ps, w), t.constant(x))));
  };
  Gradients g = analytic_gradients(ps, loss);
  EXPECT_TRUE(compare_with_finite_differences(ps, loss, g, 1e-4).passed);
  g[0](1, 1) += 0.01;
  EXPECT_FALSE(compare_with_finite_differences(ps, loss, g, 1e-4).passed);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore ps;
  const ParamId w = ps.add("w", 2, 2);
  ps.value(w) << 1, 2, 3, 4;
  const Matrix before = ps.value(w);
  AdamState st(ps, AdamConfig{});
  adam_step(ps, st);
  EXPECT_EQ(ps.value(w), before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore ps;
  const ParamId w = ps.add("w", 1, 2);
  ps.value(w) << 1, 1;
  ps.grad(w) << 0.3, -7.0;
  AdamState st(ps, AdamConfig{});
  adam_step(ps, st);
  // Bias-corrected first step is -lr * g / (|g| + eps).
  EXPECT_NEAR(ps.value(w)(0, 0), 1 - 1e-3 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(ps.value(w)(0, 1), 1 + 1e-3 * 7.0 / (7.0 + 1e-8), 1e-15);
  EXPECT_EQ(ps.grad(w).norm(), 0.0);
}

TEST(Adam, MinimizesAQuadratic) {
  ParamStore ps;
  const ParamId w = ps.add("w", 3, 1);
  Matrix target(3, 1);
  target << 0.5, -1.5, 2.0;
  AdamState st(ps, AdamConfig{0.05, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 2000; ++i) {
    Tape t;
    t.backward(squared_error(t, t.parameter(ps, w), target), ps.grads());
    adam_step(ps, st);
  }
  EXPECT_LT((ps.value(w) - target).norm(), 1e-3);
}

TEST(Adam, NonFiniteGradientAbortsWithParameterName) {
  ParamStore ps;
  const ParamId w = ps.add("decoder.wx", 1, 1);
  ps.grad(w)(0, 0) = std::nan("");
  AdamState st(ps, AdamConfig{});
  try {
    adam_step(ps, st);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.wx"), std::string::npos);
  }
  EXPECT_EQ(ps.value(w)(0, 0), 0.0);
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  ParamStore ps;
  const ParamId a = ps.add("a", 1, 1);
  const ParamId b = ps.add("b", 1, 1);
  ps.grad(a)(0, 0) = 6.0;
  ps.grad(b)(0, 0) = 8.0;
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 5.0), 10.0);
  EXPECT_NEAR(ps.grad_norm(), 5.0, 1e-12);
  EXPECT_NEAR(ps.grad(a)(0, 0), 3.0, 1e-12);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  ParamStore ps;
  Rng rng(9);
  ps.add("embed", 4, 7);
  ps.add("out.b", 7, 1);
  for (std::size_t i = 0; i < ps.size(); ++i) ps.value(ParamId{i}) = random_matrix(ps.values()[i].rows(), ps.values()[i].cols(), rng);
  Checkpoint ck;
  ck.header = {{"kind", "lstm1"}, {"hidden", 8}};
  append_params(ck, ps);
  const std::string bytes = serialize_checkpoint(ck);
  const Checkpoint back = parse_checkpoint(bytes);
  EXPECT_EQ(back.header, ck.header);
  EXPECT_EQ(serialize_checkpoint(back), bytes);

  ParamStore fresh;
  fresh.add("embed", 4, 7);
  fresh.add("out.b", 7, 1);
  restore_params(back, fresh);
  for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_EQ(fresh.values()[i], ps.values()[i]);

  const auto path = std::filesystem::temp_directory_path() / "colorname_ckpt_test.bin";
  save_checkpoint(path.string(), ck);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path.string())), bytes);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruption) {
  Checkpoint ck;
  ck.arrays.emplace_back("w", Matrix::Ones(2, 2));
  std::string bytes = serialize_checkpoint(ck);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  EXPECT_THROW(parse_checkpoint(bytes + "x"), CheckpointError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad), CheckpointError);

  ParamStore wrong;
  wrong.add("w", 3, 2);
  EXPECT_THROW(restore_params(parse_checkpoint(bytes), wrong), CheckpointError);
  ParamStore missing;
  missing.add("v", 2, 2);
  EXPECT_THROW(restore_params(parse_checkpoint(bytes), missing), CheckpointError);
}

}  // namespace
}  // namespace colorname::nn
