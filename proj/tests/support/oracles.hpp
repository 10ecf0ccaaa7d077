#pragma once

// Test-only reference implementations. These are deliberately independent of
// the library's exponential-action and propagation code paths: different
// precision, different scaling policy, different integrators.

#include "epicon/bound_dynamics.hpp"
#include "epicon/temporal_network.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracles {

using epicon::Allocation;
using epicon::Mat;
using epicon::TemporalNetwork;
using epicon::Vec;

using LongMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LongVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

/// exp(M h) v via a long-double scaled Taylor series: power-of-two time
/// splitting until ||M tau||_1 <= 1/4, then 48 terms per substep.
inline Vec expm_vec_reference(const Mat& m, double h, const Vec& v) {
  LongMat M = m.cast<long double>() * static_cast<long double>(h);
  long double norm1 = 0.0L;
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    long double col = M.col(j).cwiseAbs().sum();
    norm1 = std::max(norm1, col);
  }
  int splits = 0;
  while (norm1 > 0.25L && splits < 64) {
    M *= 0.5L;
    norm1 *= 0.5L;
    ++splits;
  }
  LongVec w = v.cast<long double>();
  // Apply exp(M) (1 << splits) times.
  const std::int64_t reps = std::int64_t{1} << splits;
  for (std::int64_t r = 0; r < reps; ++r) {
    LongVec term = w;
    LongVec acc = w;
    for (int k = 1; k <= 48; ++k) {
      term = (M * term) / static_cast<long double>(k);
      acc += term;
    }
    w = acc;
  }
  return w.cast<double>();
}

/// Product-of-snapshot-exponentials evaluation of the bound at time t
/// (the boundary formula), in long double.
inline Vec product_formula_reference(const TemporalNetwork& net, const Allocation& alloc,
                                     const Vec& p0, double t) {
  Vec state = p0;
  double cursor = 0.0;
  for (const auto& snap : net.snapshots) {
    if (cursor >= t) break;
    double h = std::min(snap.t_end, t) - cursor;
    if (h > 0.0) {
      Mat m = epicon::generator(net.adjacency_dense(&snap - net.snapshots.data()), alloc);
      state = expm_vec_reference(m, h, state);
      cursor += h;
    }
  }
  return state;
}

/// Classic fixed-step RK4 on dp/dt = A(t_k) p over the snapshot sequence,
/// sampling at the requested times. `max_step` bounds the step size.
inline std::vector<Vec> rk4_reference(const TemporalNetwork& net, const Allocation& alloc,
                                      const Vec& p0, const std::vector<double>& sample_times,
                                      double max_step) {
  std::vector<Vec> out;
  Vec p = p0;
  double cursor = 0.0;
  std::size_t k = 0;

  auto integrate = [&](const Mat& m, double len) {
    int steps = std::max(1, static_cast<int>(std::ceil(len / max_step)));
    double dt = len / steps;
    for (int s = 0; s < steps; ++s) {
      Vec k1 = m * p;
      Vec k2 = m * (p + 0.5 * dt * k1);
      Vec k3 = m * (p + 0.5 * dt * k2);
      Vec k4 = m * (p + dt * k3);
      p += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  };

  for (std::size_t si = 0; si < net.snapshots.size(); ++si) {
    const auto& snap = net.snapshots[si];
    Mat m = epicon::generator(net.adjacency_dense(si), alloc);
    while (k < sample_times.size() && sample_times[k] <= snap.t_end) {
      if (sample_times[k] > cursor) {
        integrate(m, sample_times[k] - cursor);
        cursor = sample_times[k];
      }
      out.push_back(p);
      ++k;
    }
    if (cursor < snap.t_end) {
      integrate(m, snap.t_end - cursor);
      cursor = snap.t_end;
    }
  }
  while (k < sample_times.size()) {
    out.push_back(p);
    ++k;
  }
  return out;
}

/// Dense 2^n master-equation generator for one snapshot (columns = source
/// states), for small-n RK4 cross-checks.
inline Mat master_generator_dense(const TemporalNetwork& net, std::size_t snap_index,
                                  const Allocation& alloc) {
  const int n = net.n;
  const Eigen::Index nstates = Eigen::Index{1} << n;
  std::vector<std::uint64_t> nbr(n, 0);
  for (auto [i, j] : net.snapshots[snap_index].edges) {
    nbr[i] |= std::uint64_t{1} << j;
    nbr[j] |= std::uint64_t{1} << i;
  }
  Mat q = Mat::Zero(nstates, nstates);
  for (Eigen::Index s = 0; s < nstates; ++s) {
    for (int i = 0; i < n; ++i) {
      double rate;
      Eigen::Index target;
      if (s >> i & 1) {
        rate = alloc.delta[i];
        target = s & ~(Eigen::Index{1} << i);
      } else {
        int infected = 0;
        for (int j = 0; j < n; ++j)
          if ((nbr[i] >> j & 1) && (s >> j & 1)) ++infected;
        rate = alloc.beta[i] * infected;
        target = s | (Eigen::Index{1} << i);
      }
      if (rate > 0.0) {
        q(target, s) += rate;
        q(s, s) -= rate;
      }
    }
  }
  return q;
}

/// RK4 integration of the full master equation; returns marginals at the
/// requested times.
inline std::vector<Vec> master_marginals_rk4(const TemporalNetwork& net, const Allocation& alloc,
                                             const Vec& q0, const std::vector<double>& times,
                                             double max_step) {
  const int n = net.n;
  std::vector<Vec> out;
  Vec q = q0;
  double cursor = 0.0;
  std::size_t k = 0;

  auto marginals = [&]() {
    Vec p = Vec::Zero(n);
    for (Eigen::Index s = 0; s < q.size(); ++s)
      for (int i = 0; i < n; ++i)
        if (s >> i & 1) p[i] += q[s];
    return p;
  };
  auto integrate = [&](const Mat& m, double len) {
    int steps = std::max(1, static_cast<int>(std::ceil(len / max_step)));
    double dt = len / steps;
    for (int s = 0; s < steps; ++s) {
      Vec k1 = m * q;
      Vec k2 = m * (q + 0.5 * dt * k1);
      Vec k3 = m * (q + 0.5 * dt * k2);
      Vec k4 = m * (q + dt * k3);
      q += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  };

  for (std::size_t si = 0; si < net.snapshots.size(); ++si) {
    Mat m = master_generator_dense(net, si, alloc);
    const auto& snap = net.snapshots[si];
    while (k < times.size() && times[k] <= snap.t_end) {
      if (times[k] > cursor) {
        integrate(m, times[k] - cursor);
        cursor = times[k];
      }
      out.push_back(marginals());
      ++k;
    }
    if (cursor < snap.t_end) {
      integrate(m, snap.t_end - cursor);
      cursor = snap.t_end;
    }
  }
  while (k < times.size()) {
    out.push_back(marginals());
    ++k;
  }
  return out;
}

/// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x, double eps) {
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

// --- random instance helpers -------------------------------------------------

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

/// Random temporal network: L snapshots of Erdos-Renyi-ish adjacency with
/// snapshot lengths in [len_lo, len_hi].
inline TemporalNetwork random_network(std::mt19937_64& rng, int n, int snapshots,
                                      double edge_prob, double len_lo, double len_hi) {
  TemporalNetwork net;
  net.n = n;
  for (int i = 0; i < n; ++i) net.node_labels.push_back("n" + std::to_string(i));
  double t = 0.0;
  for (int s = 0; s < snapshots; ++s) {
    epicon::Snapshot snap;
    snap.t_start = t;
    t += uniform(rng, len_lo, len_hi);
    snap.t_end = t;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (uniform(rng, 0.0, 1.0) < edge_prob) snap.edges.emplace_back(i, j);
    // nudge consecutive duplicates apart so merge-minimality is irrelevant here
    net.snapshots.push_back(std::move(snap));
  }
  net.horizon = t;
  // merge any accidentally identical neighbors to keep validate() honest
  std::vector<epicon::Snapshot> merged;
  for (auto& s : net.snapshots) {
    if (!merged.empty() && merged.back().edges == s.edges)
      merged.back().t_end = s.t_end;
    else
      merged.push_back(std::move(s));
  }
  net.snapshots = std::move(merged);
  net.validate();
  return net;
}

/// Rates drawn uniformly from the standard study ranges
/// beta in [5e-4, 5e-3], delta in [1e-4, 1e-3].
inline Allocation random_rates(std::mt19937_64& rng, int n) {
  Allocation alloc;
  alloc.beta.resize(n);
  alloc.delta.resize(n);
  for (int i = 0; i < n; ++i) {
    alloc.beta[i] = uniform(rng, 5e-4, 5e-3);
    alloc.delta[i] = uniform(rng, 1e-4, 1e-3);
  }
  return alloc;
}

inline Vec random_p0(std::mt19937_64& rng, int n) {
  Vec p0(n);
  for (int i = 0; i < n; ++i) p0[i] = uniform(rng, 0.0, 1.0);
  return p0;
}

/// Random Metzler matrix with off-diagonal magnitudes ~ `scale`.
inline Mat random_metzler(std::mt19937_64& rng, int n, double scale) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      m(i, j) = i == j ? -uniform(rng, 0.0, 4.0 * scale) : uniform(rng, 0.0, scale);
  return m;
}

}  // namespace oracles
