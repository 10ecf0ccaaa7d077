#pragma once

#include "epicon/common.hpp"
#include "epicon/expm.hpp"
#include "epicon/temporal_network.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace epicon {

/// Per-node tuning intervals for transmission and recovery rates, plus the
/// recovery-rate ceiling delta_hat used by the log-space change of variables.
struct RateBounds {
  Vec beta_lo, beta_hi, delta_lo, delta_hi;
  double delta_hat = 0.0;

  int n() const { return static_cast<int>(beta_lo.size()); }

  static RateBounds uniform(int n, double beta_lo, double beta_hi, double delta_lo,
                            double delta_hi, double delta_hat) {
    RateBounds b;
    b.beta_lo = Vec::Constant(n, beta_lo);
    b.beta_hi = Vec::Constant(n, beta_hi);
    b.delta_lo = Vec::Constant(n, delta_lo);
    b.delta_hi = Vec::Constant(n, delta_hi);
    b.delta_hat = delta_hat;
    b.validate();
    return b;
  }

  void validate() const {
    const int m = n();
    if (beta_hi.size() != m || delta_lo.size() != m || delta_hi.size() != m)
      throw DimensionError("rate bound vectors disagree in length");
    for (int i = 0; i < m; ++i) {
      if (!(0.0 < beta_lo[i] && beta_lo[i] <= beta_hi[i]))
        throw ConfigError("need 0 < beta_lo <= beta_hi per node");
      if (!(0.0 < delta_lo[i] && delta_lo[i] <= delta_hi[i]))
        throw ConfigError("need 0 < delta_lo <= delta_hi per node");
    }
    if (!(delta_hat > delta_hi.maxCoeff()))
      throw ConfigError("delta_hat must exceed every delta_hi");
  }
};

/// Per-node transmission and recovery rates; the decision variables.
struct Allocation {
  Vec beta;
  Vec delta;

  int n() const { return static_cast<int>(beta.size()); }

  bool within(const RateBounds& bounds, double rtol = 1e-9) const {
    if (n() != bounds.n() || delta.size() != beta.size()) return false;
    for (int i = 0; i < n(); ++i) {
      double bs = rtol * bounds.beta_hi[i];
      double ds = rtol * bounds.delta_hi[i];
      if (beta[i] < bounds.beta_lo[i] - bs || beta[i] > bounds.beta_hi[i] + bs) return false;
      if (delta[i] < bounds.delta_lo[i] - ds || delta[i] > bounds.delta_hi[i] + ds) return false;
    }
    return true;
  }
};

/// The bound trajectory sampled at requested times. Values are the upper
/// bound on infection probabilities and may exceed 1 by design.
struct BoundTrajectory {
  std::vector<double> sample_times;
  std::vector<Vec> values;
  Vec p0;
};

/// Parameter sensitivities of the sampled bound: for each sample time an
/// n x 2n matrix whose columns 0..n-1 are d p / d beta_j and columns
/// n..2n-1 are d p / d delta_j.
struct SensitivityBlock {
  std::vector<Mat> d_samples;
};

/// M = diag(beta) * A - diag(delta); Metzler for any nonnegative rates.
inline Mat generator(const Mat& adjacency, const Allocation& alloc) {
  const int n = alloc.n();
  if (adjacency.rows() != n || adjacency.cols() != n || alloc.delta.size() != n)
    throw DimensionError("generator: adjacency/rate dimension mismatch");
  if (!alloc.beta.allFinite() || !alloc.delta.allFinite() ||
      (alloc.beta.array() < 0.0).any() || (alloc.delta.array() < 0.0).any())
    throw ContractError("generator: rates must be finite and nonnegative");
  Mat m = alloc.beta.asDiagonal() * adjacency;
  m.diagonal() -= alloc.delta;
  return m;
}

namespace detail {

// Edge-list form of M = B A - D for one snapshot. apply_shifted forms
// (M + mu I) x from nonnegative summands only (mu = max delta), so it maps
// nonnegative vectors to exactly nonnegative vectors.
struct SnapshotOp {
  const std::vector<std::pair<int, int>>* edges = nullptr;
  const Vec* beta = nullptr;
  Vec shifted_diag;  // mu - delta
  double mu = 0.0;
  double one_norm_shifted = 0.0;
  double one_norm = 0.0;  // ||M||_1

  SnapshotOp(const Snapshot& snap, const Vec& beta_in, const Vec& delta_in)
      : edges(&snap.edges), beta(&beta_in) {
    mu = delta_in.size() > 0 ? delta_in.maxCoeff() : 0.0;
    shifted_diag = Vec::Constant(delta_in.size(), mu) - delta_in;
    Vec col_beta_sum = Vec::Zero(delta_in.size());
    for (auto [i, j] : snap.edges) {
      col_beta_sum[j] += beta_in[i];
      col_beta_sum[i] += beta_in[j];
    }
    one_norm_shifted = (col_beta_sum + shifted_diag).maxCoeff();
    one_norm = (col_beta_sum + delta_in).maxCoeff();
  }

  void apply_shifted(const Vec& x, Vec& y) const {
    y = shifted_diag.cwiseProduct(x);
    for (auto [i, j] : *edges) {
      y[i] += (*beta)[i] * x[j];
      y[j] += (*beta)[j] * x[i];
    }
  }
};

inline void check_propagation_inputs(const TemporalNetwork& net, const Allocation& alloc,
                                     const Vec& p0, std::span<const double> sample_times) {
  net.validate();
  if (alloc.n() != net.n || alloc.delta.size() != net.n || p0.size() != net.n)
    throw DimensionError("propagation: allocation/p0 dimension mismatch");
  if (!alloc.beta.allFinite() || !alloc.delta.allFinite() ||
      (alloc.beta.array() < 0.0).any() || (alloc.delta.array() < 0.0).any())
    throw ContractError("propagation: rates must be finite and nonnegative");
  if (!p0.allFinite() || (p0.array() < 0.0).any())
    throw ContractError("propagation: p0 must be finite and nonnegative");
  double prev = 0.0;
  for (double t : sample_times) {
    if (!(t >= 0.0 && t <= net.horizon))
      throw ContractError("propagation: sample time outside [0, T]");
    if (t < prev) throw ContractError("propagation: sample times must be nondecreasing");
    prev = t;
  }
}

// Walks the snapshot partition, splitting at sample times. step(snap, h)
// advances the state by h > 0 inside the given snapshot; emit(k) records the
// state as sample k. Samples at boundaries are emitted without zero steps.
template <class StepFn, class EmitFn>
void walk_segments(const TemporalNetwork& net, std::span<const double> sample_times,
                   StepFn&& step, EmitFn&& emit) {
  std::size_t k = 0;
  double cursor = 0.0;
  for (const Snapshot& snap : net.snapshots) {
    while (k < sample_times.size() && sample_times[k] <= snap.t_end) {
      double h = sample_times[k] - cursor;
      if (h > 0.0) {
        step(snap, h);
        cursor = sample_times[k];
      }
      emit(k);
      ++k;
    }
    if (cursor < snap.t_end) {
      step(snap, snap.t_end - cursor);
      cursor = snap.t_end;
    }
  }
  while (k < sample_times.size()) emit(k++);  // samples equal to the horizon
}

}  // namespace detail

/// Integrates d p / dt = (B A(t) - D) p across the snapshot sequence via
/// matrix-exponential actions and returns p at the requested times.
inline BoundTrajectory propagate_bound(const TemporalNetwork& net, const Allocation& alloc,
                                       const Vec& p0, std::span<const double> sample_times,
                                       double tol = 1e-12) {
  detail::check_propagation_inputs(net, alloc, p0, sample_times);
  if (!(tol > 0.0 && tol <= 1e-6)) throw ContractError("propagation: tol in (0, 1e-6]");

  BoundTrajectory traj;
  traj.p0 = p0;
  traj.sample_times.assign(sample_times.begin(), sample_times.end());
  traj.values.resize(sample_times.size());

  Vec state = p0;
  // Split the per-call budget across snapshots so composed relative errors
  // stay within tol overall.
  const double step_tol =
      std::clamp(tol / static_cast<double>(2 * net.snapshots.size() + 2), 1e-300, 1e-6);
  detail::walk_segments(
      net, sample_times,
      [&](const Snapshot& snap, double h) {
        detail::SnapshotOp op(snap, alloc.beta, alloc.delta);
        detail::expm_action_nonneg(op, op.mu, op.one_norm_shifted, h, state, step_tol);
      },
      [&](std::size_t k) { traj.values[k] = state; });
  return traj;
}

/// Propagates the bound jointly with its forward sensitivities. The state
/// and the n x 2n sensitivity matrix are integrated together per snapshot;
/// internally the sensitivity columns are scaled by the parameter magnitudes
/// to keep the coupled Taylor recursion well conditioned.
inline std::pair<BoundTrajectory, SensitivityBlock> propagate_with_sensitivity(
    const TemporalNetwork& net, const Allocation& alloc, const Vec& p0,
    std::span<const double> sample_times, double tol = 1e-12) {
  detail::check_propagation_inputs(net, alloc, p0, sample_times);
  if (!(tol > 0.0 && tol <= 1e-6)) throw ContractError("propagation: tol in (0, 1e-6]");

  const int n = net.n;
  const int cols = 2 * n + 1;
  Vec sigma_beta(n), sigma_delta(n);
  for (int j = 0; j < n; ++j) {
    sigma_beta[j] = alloc.beta[j] > 0.0 ? alloc.beta[j] : 1.0;
    sigma_delta[j] = alloc.delta[j] > 0.0 ? alloc.delta[j] : 1.0;
  }

  // State transposed: row 0 holds p, row 1+j the scaled beta_j sensitivity,
  // row 1+n+j the scaled delta_j sensitivity; columns index nodes, so the
  // per-edge neighbor sums below are contiguous column operations.
  Mat state = Mat::Zero(cols, n);
  state.row(0) = p0.transpose();

  BoundTrajectory traj;
  traj.p0 = p0;
  traj.sample_times.assign(sample_times.begin(), sample_times.end());
  traj.values.resize(sample_times.size());
  SensitivityBlock sens;
  sens.d_samples.resize(sample_times.size());

  const double step_tol =
      std::clamp(tol / static_cast<double>(2 * net.snapshots.size() + 2), 1e-300, 1e-6);
  constexpr int kMaxTerms = 150;

  Mat term(cols, n), nbr(cols, n), next(cols, n);
  auto step = [&](const Snapshot& snap, double h) {
    detail::SnapshotOp op(snap, alloc.beta, alloc.delta);
    // Coupling operator 1-norm: column k receives sigma_beta[j] from each
    // neighbor j of k (via the A y0 term) and sigma_delta[k] directly.
    Vec couple = sigma_delta;
    for (auto [i, j] : snap.edges) {
      couple[j] += sigma_beta[i];
      couple[i] += sigma_beta[j];
    }
    const double eta = (op.one_norm + couple.maxCoeff()) * h;
    const int substeps = std::max(1, static_cast<int>(std::ceil(eta)));
    const double tau = h / substeps;
    const double term_tol = step_tol / (2.0 * substeps);

    for (int s = 0; s < substeps; ++s) {
      term = state;
      int small_streak = 0;
      for (int k = 1; k <= kMaxTerms; ++k) {
        // next = L(term): generator action plus the parameter coupling rows.
        nbr.setZero();
        for (auto [i, j] : snap.edges) {
          nbr.col(i) += term.col(j);
          nbr.col(j) += term.col(i);
        }
        for (int c = 0; c < n; ++c)
          next.col(c) = alloc.beta[c] * nbr.col(c) - alloc.delta[c] * term.col(c);
        for (int j = 0; j < n; ++j) {
          next(1 + j, j) += sigma_beta[j] * nbr(0, j);
          next(1 + n + j, j) -= sigma_delta[j] * term(0, j);
        }
        term = (tau / k) * next;
        state += term;
        double tn = term.template lpNorm<Eigen::Infinity>();
        double sn = state.template lpNorm<Eigen::Infinity>();
        small_streak = tn <= term_tol * sn ? small_streak + 1 : 0;
        if (small_streak >= 2) break;
      }
    }
  };
  auto emit = [&](std::size_t k) {
    traj.values[k] = state.row(0).transpose().cwiseMax(0.0);
    Mat s(n, 2 * n);
    for (int j = 0; j < n; ++j) {
      s.col(j) = state.row(1 + j).transpose() / sigma_beta[j];
      s.col(n + j) = state.row(1 + n + j).transpose() / sigma_delta[j];
    }
    sens.d_samples[k] = std::move(s);
  };
  detail::walk_segments(net, sample_times, step, emit);
  return {std::move(traj), std::move(sens)};
}

}  // namespace epicon
