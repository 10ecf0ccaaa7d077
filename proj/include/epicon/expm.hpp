#pragma once

#include "epicon/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace epicon {

namespace detail {

// Truncated-Taylor action of exp(Op * h) on a nonnegative vector, where Op is
// presented in shifted form: apply_shifted(x, y) computes y = (Op + mu I) x
// and must map nonnegative vectors to nonnegative vectors exactly (true for
// Metzler Op with mu >= max_i(-Op_ii) when the shifted products are formed
// from nonnegative summands). one_norm_shifted is an upper bound on
// ||Op + mu I||_1 and controls the substep count.
template <class Op>
void expm_action_nonneg(const Op& op, double mu, double one_norm_shifted, double h, Vec& v,
                        double tol) {
  if (h == 0.0) return;
  const double eta = one_norm_shifted * h;
  const int substeps = std::max(1, static_cast<int>(std::ceil(eta)));
  const double tau = h / substeps;
  const double term_tol = tol / (2.0 * substeps);
  const double decay = std::exp(-mu * tau);
  constexpr int kMaxTerms = 120;

  Vec term = v;
  Vec next(v.size());
  for (int s = 0; s < substeps; ++s) {
    term = v;
    double acc_norm = v.template lpNorm<Eigen::Infinity>();
    if (acc_norm == 0.0) return;  // exp of anything applied to 0 stays 0
    for (int k = 1; k <= kMaxTerms; ++k) {
      op.apply_shifted(term, next);
      term = (tau / k) * next;
      v += term;
      acc_norm = v.template lpNorm<Eigen::Infinity>();
      if (term.template lpNorm<Eigen::Infinity>() <= term_tol * acc_norm) break;
    }
    v *= decay;
  }
  v = v.cwiseMax(0.0);
}

struct DenseShiftedOp {
  Mat shifted;  // M + mu I, entrywise nonnegative for Metzler M
  void apply_shifted(const Vec& x, Vec& y) const { y.noalias() = shifted * x; }
};

}  // namespace detail

/// w = exp(M h) v for a Metzler matrix M and nonnegative v, with relative
/// error at most `tol` in the max norm. The result is entrywise nonnegative;
/// round-off below zero is clamped (exp of a Metzler matrix is nonnegative).
inline Vec expm_action(const Mat& m, double h, const Vec& v, double tol) {
  if (m.rows() != m.cols()) throw DimensionError("expm_action: matrix must be square");
  if (m.rows() != v.size()) throw DimensionError("expm_action: vector length mismatch");
  if (!(tol > 0.0 && tol <= 1e-6))
    throw ContractError("expm_action: tol must lie in (0, 1e-6]");
  if (!(h >= 0.0) || !m.allFinite() || !v.allFinite())
    throw ContractError("expm_action: inputs must be finite and h >= 0");
  if ((v.array() < 0.0).any()) throw ContractError("expm_action: v must be nonnegative");

  double mu = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) mu = std::max(mu, -m(i, i));
  detail::DenseShiftedOp op{m + mu * Mat::Identity(m.rows(), m.cols())};
  double norm1 = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) norm1 = std::max(norm1, op.shifted.col(j).sum());

  Vec w = v;
  detail::expm_action_nonneg(op, mu, norm1, h, w, tol);
  return w;
}

}  // namespace epicon
