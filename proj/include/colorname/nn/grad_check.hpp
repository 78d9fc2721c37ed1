#pragma once

// Central finite-difference check of tape gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "colorname/nn/param_store.hpp"
#include "colorname/nn/tape.hpp"

namespace colorname::nn {

/// Builds a scalar loss on the tape from the parameters of a fixed store.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;

  std::string to_string() const {
    std::ostringstream os;
    os.precision(3);
    for (const auto& p : params) {
      os << "  " << p.name << ": max rel err " << std::scientific << p.max_rel_error << " at (" << p.worst_row
         << "," << p.worst_col << ") analytic " << p.analytic << " numeric " << p.numeric << '\n';
    }
    os << (passed ? "PASS" : "FAIL") << " max rel err " << std::scientific << max_rel_error << " (tolerance "
       << tolerance << ")";
    return os.str();
  }
};

/// Entries whose gradient magnitude is below this are compared absolutely.
inline constexpr double kGradCheckFloor = 1e-4;

inline double evaluate_loss(const LossBuilder& loss) {
  Tape t;
  return t.value(loss(t))(0, 0);
}

inline Gradients analytic_gradients(ParamStore& ps, const LossBuilder& loss) {
  Gradients g;
  for (const auto& v : ps.values()) g.push_back(Matrix::Zero(v.rows(), v.cols()));
  Tape t;
  t.backward(loss(t), g);
  return g;
}

/// Compares `analytic` against central differences of `loss`, perturbing
/// every entry of every parameter by +-h. Parameters are restored.
inline GradCheckReport compare_with_finite_differences(ParamStore& ps, const LossBuilder& loss,
                                                       const Gradients& analytic, double tolerance,
                                                       double h = 1e-5) {
  GradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t p = 0; p < ps.size(); ++p) {
    Matrix& theta = ps.value(ParamId{p});
    GradCheckEntry entry;
    entry.name = ps.names()[p];
    for (Eigen::Index j = 0; j < theta.cols(); ++j) {
      for (Eigen::Index i = 0; i < theta.rows(); ++i) {
        const double saved = theta(i, j);
        theta(i, j) = saved + h;
        const double up = evaluate_loss(loss);
        theta(i, j) = saved - h;
        const double down = evaluate_loss(loss);
        theta(i, j) = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[p](i, j);
        const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
        const double rel = std::abs(a - numeric) / denom;
        if (rel > entry.max_rel_error || !std::isfinite(rel)) {
          entry.max_rel_error = std::isfinite(rel) ? rel : HUGE_VAL;
          entry.worst_row = i;
          entry.worst_col = j;
          entry.analytic = a;
          entry.numeric = numeric;
        }
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.params.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

inline GradCheckReport grad_check(ParamStore& ps, const LossBuilder& loss, double tolerance, double h = 1e-5) {
  const Gradients analytic = analytic_gradients(ps, loss);
  return compare_with_finite_differences(ps, loss, analytic, tolerance, h);
}

}  // namespace colorname::nn
