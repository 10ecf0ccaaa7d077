#pragma once

#include "epicon/bound_dynamics.hpp"
#include "epicon/common.hpp"
#include "epicon/expm.hpp"
#include "epicon/objectives.hpp"
#include "epicon/temporal_network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace epicon {

/// Joint node states at a moment in time (1 = infected).
struct EpidemicState {
  std::vector<std::uint8_t> x;
  double t = 0.0;
};

/// Independent Bernoulli marginals for the initial condition.
struct InitialDistribution {
  Vec p0;

  void validate() const {
    if (p0.size() == 0 || !p0.allFinite() ||
        (p0.array() < 0.0).any() || (p0.array() > 1.0).any())
      throw ConfigError("initial distribution entries must lie in [0, 1]");
  }
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long trials = 0;
  std::uint64_t seed = 0;
};

/// State path recorded at selected times (cadlag evaluation: the state shown
/// at time t includes every event with event time <= t).
struct StatePath {
  std::vector<double> times;
  std::vector<std::vector<std::uint8_t>> states;
};

namespace detail {

inline std::vector<std::vector<int>> adjacency_lists(const Snapshot& snap, int n) {
  std::vector<std::vector<int>> adj(n);
  for (auto [i, j] : snap.edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  return adj;
}

// Statistically exact SIS simulation over the snapshot sequence. Within a
// snapshot all rates are constant so standard Gillespie applies; when a
// waiting time crosses the snapshot end we advance to the boundary and
// redraw under the new rates, which is valid by the memoryless property.
// on_sample(k) is invoked once per requested time, in order.
template <class OnSample>
void run_sis(const TemporalNetwork& net, const Allocation& alloc, std::vector<std::uint8_t>& x,
             std::mt19937_64& rng, std::span<const double> sample_times, OnSample&& on_sample) {
  const int n = net.n;
  std::size_t k = 0;
  double now = 0.0;
  auto emit_until = [&](double t) {
    while (k < sample_times.size() && sample_times[k] <= t) on_sample(k++);
  };
  emit_until(0.0);
  for (const Snapshot& snap : net.snapshots) {
    auto adj = adjacency_lists(snap, n);
    while (now < snap.t_end) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        if (x[i]) {
          total += alloc.delta[i];
        } else {
          int infected = 0;
          for (int j : adj[i]) infected += x[j];
          total += alloc.beta[i] * infected;
        }
      }
      if (total <= 0.0) {
        now = snap.t_end;
        break;
      }
      double wait = exponential(rng, total);
      if (now + wait >= snap.t_end) {
        emit_until(std::min(snap.t_end, std::nextafter(snap.t_end, 0.0)));
        now = snap.t_end;
        break;
      }
      now += wait;
      emit_until(std::nextafter(now, 0.0));  // samples strictly before the event
      double pick = canonical(rng) * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        double rate;
        if (x[i]) {
          rate = alloc.delta[i];
        } else {
          int infected = 0;
          for (int j : adj[i]) infected += x[j];
          rate = alloc.beta[i] * infected;
        }
        acc += rate;
        if (pick < acc || i == n - 1) {
          if (rate > 0.0) x[i] ^= 1;
          break;
        }
      }
      emit_until(now);  // samples exactly at the event time see the new state
    }
    emit_until(snap.t_end);
  }
  while (k < sample_times.size()) on_sample(k++);
}

// 2^n-state master-equation generator for one snapshot, in the shifted
// nonnegative form used by the exponential-action engine. Columns of the
// shifted operator sum to exactly mu, so ||Q + mu I||_1 = mu.
struct MasterOp {
  int n = 0;
  std::size_t nstates = 0;
  std::vector<std::uint64_t> nbr_mask;
  const Vec* beta = nullptr;
  const Vec* delta = nullptr;
  Vec out_rate;
  double mu = 0.0;

  MasterOp(const Snapshot& snap, const Vec& beta_in, const Vec& delta_in)
      : n(static_cast<int>(beta_in.size())),
        nstates(std::size_t{1} << n),
        nbr_mask(n, 0),
        beta(&beta_in),
        delta(&delta_in) {
    for (auto [i, j] : snap.edges) {
      nbr_mask[i] |= std::uint64_t{1} << j;
      nbr_mask[j] |= std::uint64_t{1} << i;
    }
    out_rate.resize(static_cast<Eigen::Index>(nstates));
    for (std::size_t s = 0; s < nstates; ++s) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        if (s >> i & 1) {
          total += delta_in[i];
        } else {
          total += beta_in[i] * std::popcount(s & nbr_mask[i]);
        }
      }
      out_rate[static_cast<Eigen::Index>(s)] = total;
    }
    mu = out_rate.maxCoeff();
  }

  void apply_shifted(const Vec& q, Vec& y) const {
    y = (mu - out_rate.array()).matrix().cwiseProduct(q);
    for (std::size_t s = 0; s < nstates; ++s) {
      double qs = q[static_cast<Eigen::Index>(s)];
      if (qs == 0.0) continue;
      for (int i = 0; i < n; ++i) {
        if (s >> i & 1) {
          y[static_cast<Eigen::Index>(s & ~(std::uint64_t{1} << i))] += (*delta)[i] * qs;
        } else {
          int infected = std::popcount(s & nbr_mask[i]);
          if (infected)
            y[static_cast<Eigen::Index>(s | (std::uint64_t{1} << i))] += (*beta)[i] * infected * qs;
        }
      }
    }
  }
};

inline Vec bernoulli_product_distribution(const Vec& p0) {
  const int n = static_cast<int>(p0.size());
  const std::size_t nstates = std::size_t{1} << n;
  Vec q(static_cast<Eigen::Index>(nstates));
  for (std::size_t s = 0; s < nstates; ++s) {
    double prob = 1.0;
    for (int i = 0; i < n; ++i) prob *= (s >> i & 1) ? p0[i] : 1.0 - p0[i];
    q[static_cast<Eigen::Index>(s)] = prob;
  }
  return q;
}

}  // namespace detail

/// One exact stochastic SIS path; deterministic given the seed. The path is
/// recorded at all snapshot boundaries plus the requested times.
inline StatePath gillespie_run(const TemporalNetwork& net, const Allocation& alloc,
                               const EpidemicState& x0, std::uint64_t rng_seed,
                               std::span<const double> sample_times = {}) {
  net.validate();
  if (static_cast<int>(x0.x.size()) != net.n || alloc.n() != net.n)
    throw DimensionError("gillespie: state/allocation dimension mismatch");
  for (auto v : x0.x)
    if (v > 1) throw ContractError("gillespie: states must be 0/1");

  std::vector<double> times{0.0};
  for (const Snapshot& s : net.snapshots) times.push_back(s.t_end);
  times.insert(times.end(), sample_times.begin(), sample_times.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  StatePath path;
  path.times = times;
  path.states.resize(times.size());
  std::vector<std::uint8_t> x = x0.x;
  std::mt19937_64 rng(detail::mix_seed(rng_seed, 0x915e));
  detail::run_sis(net, alloc, x, rng, times, [&](std::size_t k) { path.states[k] = x; });
  return path;
}

/// Full 2^n master-equation distribution sampled at the requested times.
/// Exact up to the exponential-action tolerance; n is capped at 14.
inline std::vector<Vec> master_equation_distribution(const TemporalNetwork& net,
                                                     const Allocation& alloc, const Vec& q0,
                                                     std::span<const double> sample_times,
                                                     double tol = 1e-12) {
  net.validate();
  if (net.n > 14) throw ResourceError("master equation is limited to n <= 14 nodes");
  if (alloc.n() != net.n) throw DimensionError("master equation: allocation mismatch");
  if (q0.size() != (Eigen::Index{1} << net.n))
    throw DimensionError("master equation: distribution must have 2^n entries");

  std::vector<Vec> out(sample_times.size());
  Vec q = q0;
  const double step_tol =
      std::clamp(tol / static_cast<double>(2 * net.snapshots.size() + 2), 1e-300, 1e-6);
  detail::walk_segments(
      net, sample_times,
      [&](const Snapshot& snap, double h) {
        detail::MasterOp op(snap, alloc.beta, alloc.delta);
        detail::expm_action_nonneg(op, op.mu, op.mu, h, q, step_tol);
      },
      [&](std::size_t k) { out[k] = q; });
  return out;
}

/// Exact infection-probability marginals p_i(t) from the 2^n-state master
/// equation, packaged like a sampled trajectory so objectives can evaluate
/// them directly.
inline BoundTrajectory master_equation_marginals(const TemporalNetwork& net,
                                                 const Allocation& alloc,
                                                 const InitialDistribution& init,
                                                 std::span<const double> sample_times,
                                                 double tol = 1e-12) {
  init.validate();
  if (init.p0.size() != net.n)
    throw DimensionError("master equation: p0 dimension mismatch");
  Vec q0 = detail::bernoulli_product_distribution(init.p0);
  std::vector<Vec> dists = master_equation_distribution(net, alloc, q0, sample_times, tol);

  BoundTrajectory traj;
  traj.p0 = init.p0;
  traj.sample_times.assign(sample_times.begin(), sample_times.end());
  traj.values.resize(dists.size());
  for (std::size_t k = 0; k < dists.size(); ++k) {
    Vec p = Vec::Zero(net.n);
    const Vec& q = dists[k];
    for (Eigen::Index s = 0; s < q.size(); ++s) {
      if (q[s] == 0.0) continue;
      for (int i = 0; i < net.n; ++i)
        if (s >> i & 1) p[i] += q[s];
    }
    traj.values[k] = p;
  }
  return traj;
}

/// Monte Carlo estimate of J(p) under an allocation: indicator trajectories
/// are ensemble-averaged at the objective's sample times and J is evaluated
/// on the empirical marginals. The standard error comes from batch means
/// over 20 batches. Reproducible per seed.
inline McEstimate mc_estimate_objective(const TemporalNetwork& net, const Allocation& alloc,
                                        const InitialDistribution& init,
                                        const ObjectiveSpec& objective, long trials,
                                        std::uint64_t seed) {
  net.validate();
  init.validate();
  if (trials < 100) throw ConfigError("Monte Carlo estimation needs at least 100 trials");
  if (init.p0.size() != net.n || alloc.n() != net.n)
    throw DimensionError("Monte Carlo: dimension mismatch");
  if (objective.max_node() >= net.n)
    throw DimensionError("Monte Carlo: objective references node beyond network");

  const auto& times = objective.sample_times();
  const int n = net.n;
  const int batches = 20;
  std::vector<std::vector<Vec>> batch_sums(
      batches, std::vector<Vec>(times.size(), Vec::Zero(n)));
  std::vector<long> batch_count(batches, 0);

  std::vector<std::uint8_t> x(n);
  for (long trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(detail::mix_seed(seed, static_cast<std::uint64_t>(trial)));
    for (int i = 0; i < n; ++i) x[i] = detail::canonical(rng) < init.p0[i] ? 1 : 0;
    int b = static_cast<int>(trial * batches / trials);
    ++batch_count[b];
    detail::run_sis(net, alloc, x, rng, times, [&](std::size_t k) {
      for (int i = 0; i < n; ++i) batch_sums[b][k][i] += x[i];
    });
  }

  auto traj_from = [&](const std::vector<Vec>& sums, double count) {
    BoundTrajectory traj;
    traj.p0 = init.p0;
    traj.sample_times = times;
    traj.values.resize(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) traj.values[k] = sums[k] / count;
    return traj;
  };

  std::vector<Vec> total(times.size(), Vec::Zero(n));
  for (int b = 0; b < batches; ++b)
    for (std::size_t k = 0; k < times.size(); ++k) total[k] += batch_sums[b][k];

  McEstimate est;
  est.trials = trials;
  est.seed = seed;
  est.mean = evaluate(objective, traj_from(total, static_cast<double>(trials)));

  double mean_b = 0.0;
  std::vector<double> jb(batches);
  for (int b = 0; b < batches; ++b) {
    jb[b] = evaluate(objective, traj_from(batch_sums[b], static_cast<double>(batch_count[b])));
    mean_b += jb[b] / batches;
  }
  double var = 0.0;
  for (int b = 0; b < batches; ++b) var += (jb[b] - mean_b) * (jb[b] - mean_b);
  est.std_error = std::sqrt(var / (batches * (batches - 1.0)));
  return est;
}

}  // namespace epicon
