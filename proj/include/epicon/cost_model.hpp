#pragma once

#include "epicon/bound_dynamics.hpp"
#include "epicon/common.hpp"

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace epicon {

/// One posynomial term c * x^a (c > 0, a any real).
struct PosyTerm {
  double coef = 1.0;
  double exponent = 0.0;
};

/// Posynomial-plus-constant decomposition of the per-node tuning costs:
///   phi_i(beta_i)  = phi_plus_i(beta_i) - phi_minus_i,
///   psi_i(delta_i) = psi_plus_tilde_i(delta_hat - delta_i) - psi_minus_i,
/// with phi_plus and psi_plus_tilde posynomials and the minus parts
/// nonnegative constants. The split is what makes the log-space budget
/// function a convex log-sum-exp.
struct CostModel {
  struct NodeCost {
    std::vector<PosyTerm> phi_plus;        // in beta_i
    std::vector<PosyTerm> psi_plus_tilde;  // in delta_hat - delta_i
    double phi_minus = 0.0;
    double psi_minus = 0.0;
  };

  std::vector<NodeCost> nodes;
  double delta_hat = 0.0;
  double lambda = 1.0;  // shape parameter of the power family

  int n() const { return static_cast<int>(nodes.size()); }

  double r_minus() const {
    double sum = 0.0;
    for (const auto& node : nodes) sum += node.phi_minus + node.psi_minus;
    return sum;
  }

  double phi(int i, double beta) const {
    double plus = 0.0;
    for (const auto& t : nodes[i].phi_plus) plus += t.coef * std::pow(beta, t.exponent);
    return plus - nodes[i].phi_minus;
  }

  double psi(int i, double delta) const {
    double plus = 0.0;
    for (const auto& t : nodes[i].psi_plus_tilde)
      plus += t.coef * std::pow(delta_hat - delta, t.exponent);
    return plus - nodes[i].psi_minus;
  }

  void validate() const {
    if (nodes.empty()) throw ConfigError("cost model has no nodes");
    for (const auto& node : nodes) {
      if (node.phi_minus < 0.0 || node.psi_minus < 0.0)
        throw ConfigError("cost constants phi_minus/psi_minus must be >= 0");
      for (const auto& t : node.phi_plus)
        if (!(t.coef > 0.0)) throw ConfigError("posynomial coefficients must be > 0");
      for (const auto& t : node.psi_plus_tilde)
        if (!(t.coef > 0.0)) throw ConfigError("posynomial coefficients must be > 0");
    }
  }
};

/// Builds the power-family cost model
///   phi_i(beta)  = c1_i + c2_i / beta^lambda,
///   psi_i(delta) = c3_i + c4_i / (delta_hat - delta)^lambda,
/// with the constants chosen so phi_i(beta_lo) = 1, phi_i(beta_hi) = 0,
/// psi_i(delta_lo) = 0, psi_i(delta_hi) = 1.
inline CostModel normalize_costs(const RateBounds& bounds, double lambda) {
  bounds.validate();
  if (!(lambda > 0.0)) throw ConfigError("cost shape parameter lambda must be > 0");

  CostModel model;
  model.delta_hat = bounds.delta_hat;
  model.lambda = lambda;
  model.nodes.resize(bounds.n());
  for (int i = 0; i < bounds.n(); ++i) {
    if (bounds.beta_lo[i] == bounds.beta_hi[i] || bounds.delta_lo[i] == bounds.delta_hi[i])
      throw DegenerateBoundsError("cost normalization needs beta_lo < beta_hi and delta_lo < delta_hi");
    double span_beta =
        std::pow(bounds.beta_lo[i], -lambda) - std::pow(bounds.beta_hi[i], -lambda);
    double c2 = 1.0 / span_beta;
    double dt_lo = bounds.delta_hat - bounds.delta_hi[i];  // smallest delta_tilde
    double dt_hi = bounds.delta_hat - bounds.delta_lo[i];
    double span_delta = std::pow(dt_lo, -lambda) - std::pow(dt_hi, -lambda);
    double c4 = 1.0 / span_delta;

    auto& node = model.nodes[i];
    node.phi_plus = {{c2, -lambda}};
    node.phi_minus = c2 * std::pow(bounds.beta_hi[i], -lambda);  // = -c1_i
    node.psi_plus_tilde = {{c4, -lambda}};
    node.psi_minus = c4 * std::pow(dt_hi, -lambda);  // = -c3_i
  }
  model.validate();
  return model;
}

/// R(beta, delta) = sum_i (phi_i(beta_i) + psi_i(delta_i)). Computed for any
/// allocation; bounds enforcement is the allocator's job.
inline double total_cost(const CostModel& model, const Allocation& alloc) {
  if (alloc.n() != model.n() || alloc.delta.size() != model.n())
    throw DimensionError("total_cost: allocation does not match cost model");
  double sum = 0.0;
  for (int i = 0; i < model.n(); ++i) sum += model.phi(i, alloc.beta[i]) + model.psi(i, alloc.delta[i]);
  return sum;
}

struct RPlusResult {
  double value = 0.0;
  Vec gradient;  // 2n: d/db then d/d d_tilde
};

/// Log-space budget function r+(b, d~) = log R+(exp[b], delta_hat - exp[d~])
/// with its analytic gradient. As a log-sum-exp of affine forms it is convex
/// on all of R^{2n}.
inline RPlusResult r_plus_logspace(const CostModel& model, const Vec& b, const Vec& d_tilde) {
  const int n = model.n();
  if (b.size() != n || d_tilde.size() != n)
    throw DimensionError("r_plus_logspace: vector length mismatch");
  if (!b.allFinite() || !d_tilde.allFinite())
    throw ContractError("r_plus_logspace: inputs must be finite");

  // Collect the affine exponents log(c) + a * z of every term, shift by the
  // max for a stable log-sum-exp, and assemble the gradient from the same pass.
  struct Entry {
    int var;  // index into (b, d_tilde) stacked as 2n
    double a;
    double log_term;
  };
  std::vector<Entry> entries;
  double shift = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    for (const auto& t : model.nodes[i].phi_plus) {
      double lt = std::log(t.coef) + t.exponent * b[i];
      entries.push_back({i, t.exponent, lt});
      shift = std::max(shift, lt);
    }
    for (const auto& t : model.nodes[i].psi_plus_tilde) {
      double lt = std::log(t.coef) + t.exponent * d_tilde[i];
      entries.push_back({n + i, t.exponent, lt});
      shift = std::max(shift, lt);
    }
  }
  if (entries.empty()) throw ConfigError("cost model has no posynomial terms");

  double total = 0.0;
  Vec grad = Vec::Zero(2 * n);
  for (const auto& e : entries) {
    double w = std::exp(e.log_term - shift);
    total += w;
    grad[e.var] += e.a * w;
  }
  RPlusResult out;
  out.value = shift + std::log(total);
  out.gradient = grad / total;
  return out;
}

}  // namespace epicon
