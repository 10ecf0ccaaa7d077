#pragma once

#include "epicon/bound_dynamics.hpp"
#include "epicon/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace epicon {

/// One factor p_node(time)^exponent of a monomial; exponents are >= 0.
struct MonomialFactor {
  int node = 0;
  double time = 0.0;
  double exponent = 1.0;
};

/// c * prod_f p_{node_f}(t_f)^{a_f} with c > 0 and all a_f >= 0.
struct MonomialTerm {
  double coefficient = 1.0;
  std::vector<MonomialFactor> factors;
};

/// A performance functional built from finite-posynomial leaves (sums of
/// monomial terms over trajectory samples) combined by sum, product,
/// positive power, and max. Every such functional is monotone in the
/// trajectory samples and log-log convex in the rates.
class ObjectiveSpec {
 public:
  enum class Kind { Posynomial, Sum, Product, Power, Max };

  struct Node {
    Kind kind = Kind::Posynomial;
    std::vector<Node> children;
    std::vector<MonomialTerm> terms;  // Posynomial only
    double exponent = 1.0;            // Power only
  };

  static ObjectiveSpec posynomial(std::vector<MonomialTerm> terms) {
    Node node;
    node.kind = Kind::Posynomial;
    node.terms = std::move(terms);
    return ObjectiveSpec(std::move(node));
  }
  static ObjectiveSpec sum(std::vector<ObjectiveSpec> parts) {
    return combine(Kind::Sum, std::move(parts));
  }
  static ObjectiveSpec product(std::vector<ObjectiveSpec> parts) {
    return combine(Kind::Product, std::move(parts));
  }
  static ObjectiveSpec max_of(std::vector<ObjectiveSpec> parts) {
    return combine(Kind::Max, std::move(parts));
  }
  static ObjectiveSpec power(ObjectiveSpec base, double exponent) {
    if (!(exponent > 0.0)) throw ConfigError("power node exponent must be > 0");
    Node node;
    node.kind = Kind::Power;
    node.exponent = exponent;
    node.children.push_back(std::move(base.root_));
    return ObjectiveSpec(std::move(node));
  }

  const Node& root() const { return root_; }

  /// Sorted unique times the functional reads from a trajectory.
  const std::vector<double>& sample_times() const { return times_; }

  /// Largest node index referenced, or -1 for a constant-zero spec.
  int max_node() const { return max_node_; }

 private:
  explicit ObjectiveSpec(Node root) : root_(std::move(root)) {
    validate(root_);
    collect(root_);
    std::sort(times_.begin(), times_.end());
    times_.erase(std::unique(times_.begin(), times_.end()), times_.end());
  }

  static ObjectiveSpec combine(Kind kind, std::vector<ObjectiveSpec> parts) {
    if (parts.empty()) throw ConfigError("objective combinator needs at least one child");
    Node node;
    node.kind = kind;
    node.children.reserve(parts.size());
    for (auto& p : parts) node.children.push_back(std::move(p.root_));
    return ObjectiveSpec(std::move(node));
  }

  static void validate(const Node& node) {
    switch (node.kind) {
      case Kind::Posynomial:
        if (!node.children.empty()) throw ConfigError("posynomial leaf cannot have children");
        for (const auto& term : node.terms) {
          if (!(term.coefficient > 0.0) || !std::isfinite(term.coefficient))
            throw ConfigError("monomial coefficient must be positive and finite");
          for (const auto& f : term.factors) {
            if (f.node < 0) throw ConfigError("monomial factor node index must be >= 0");
            if (!(f.time >= 0.0) || !std::isfinite(f.time))
              throw ConfigError("monomial factor time must be finite and >= 0");
            if (!(f.exponent >= 0.0) || !std::isfinite(f.exponent))
              throw ConfigError("monomial factor exponent must be >= 0");
          }
        }
        return;
      case Kind::Power:
        if (node.children.size() != 1) throw ConfigError("power node needs exactly one child");
        if (!(node.exponent > 0.0)) throw ConfigError("power node exponent must be > 0");
        break;
      case Kind::Sum:
      case Kind::Product:
      case Kind::Max:
        if (node.children.empty()) throw ConfigError("combinator node needs children");
        break;
    }
    for (const auto& child : node.children) validate(child);
  }

  void collect(const Node& node) {
    for (const auto& term : node.terms) {
      for (const auto& f : term.factors) {
        times_.push_back(f.time);
        max_node_ = std::max(max_node_, f.node);
      }
    }
    for (const auto& child : node.children) collect(child);
  }

  Node root_;
  std::vector<double> times_;
  int max_node_ = -1;
};

/// Riemann-sum data for integral objectives: k cells of width h = T/k with
/// per-node weight samples at the left endpoints t_l = l h, l = 0..k-1.
struct QuadratureSpec {
  double horizon = 0.0;
  int cells = 0;
  std::vector<Vec> weight_samples;  // size cells, each an n-vector >= 0

  double step() const { return horizon / cells; }

  static QuadratureSpec uniform(double horizon, int cells, const Vec& weights) {
    QuadratureSpec q;
    q.horizon = horizon;
    q.cells = cells;
    q.weight_samples.assign(static_cast<std::size_t>(cells), weights);
    q.validate();
    return q;
  }

  void validate() const {
    if (cells < 1) throw ConfigError("quadrature needs k >= 1 cells");
    if (!(horizon > 0.0)) throw ConfigError("quadrature horizon must be > 0");
    if (weight_samples.size() != static_cast<std::size_t>(cells))
      throw ConfigError("quadrature needs one weight sample per cell");
    for (const Vec& w : weight_samples) {
      if (w.size() == 0 || !w.allFinite() || (w.array() < 0.0).any())
        throw ConfigError("quadrature weights must be finite and >= 0");
    }
  }
};

/// Weighted l_q terminal objective (sum_i (w_i p_i(t))^q)^(1/q). Nodes with
/// zero weight contribute no term; at least one weight must be positive.
inline ObjectiveSpec make_terminal_lq(const Vec& weights, double q, double t) {
  if (!(q > 0.0)) throw ConfigError("terminal_lq: q must be > 0");
  if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("terminal_lq: invalid time");
  if (weights.size() == 0 || !weights.allFinite() || (weights.array() < 0.0).any())
    throw ConfigError("terminal_lq: weights must be finite and >= 0");
  if ((weights.array() > 0.0).count() == 0)
    throw ConfigError("terminal_lq: at least one weight must be positive");
  std::vector<MonomialTerm> terms;
  for (int i = 0; i < weights.size(); ++i) {
    if (weights[i] == 0.0) continue;
    MonomialTerm term;
    term.coefficient = std::pow(weights[i], q);
    term.factors.push_back({i, t, q});
    terms.push_back(std::move(term));
  }
  ObjectiveSpec base = ObjectiveSpec::posynomial(std::move(terms));
  return q == 1.0 ? base : ObjectiveSpec::power(std::move(base), 1.0 / q);
}

/// Left-endpoint Riemann surrogate of the integral objective
/// int_0^T w(t)' p(t) dt: J_k = sum_{l=0}^{k-1} h w(l h)' p(l h).
inline ObjectiveSpec make_integral(const QuadratureSpec& quad) {
  quad.validate();
  const double h = quad.step();
  std::vector<MonomialTerm> terms;
  for (int cell = 0; cell < quad.cells; ++cell) {
    const Vec& w = quad.weight_samples[cell];
    const double t = cell * h;
    for (int i = 0; i < w.size(); ++i) {
      if (w[i] == 0.0) continue;
      MonomialTerm term;
      term.coefficient = h * w[i];
      term.factors.push_back({i, t, 1.0});
      terms.push_back(std::move(term));
    }
  }
  return ObjectiveSpec::posynomial(std::move(terms));
}

namespace detail {

// Resolves a referenced time against the trajectory's sample grid.
inline std::size_t sample_index(const BoundTrajectory& traj, double t) {
  const auto& times = traj.sample_times;
  auto it = std::lower_bound(times.begin(), times.end(), t);
  const double tol = 1e-12 * std::max(1.0, std::abs(t));
  if (it != times.end() && std::abs(*it - t) <= tol)
    return static_cast<std::size_t>(it - times.begin());
  if (it != times.begin() && std::abs(*(it - 1) - t) <= tol)
    return static_cast<std::size_t>(it - times.begin() - 1);
  throw ContractError("objective references time " + std::to_string(t) +
                      " not present in the trajectory");
}

inline double sample_value(const BoundTrajectory& traj, int node, double t) {
  std::size_t k = sample_index(traj, t);
  const Vec& v = traj.values[k];
  if (node >= v.size()) throw DimensionError("objective references node beyond trajectory");
  return v[node];
}

struct Evaluated {
  double value = 0.0;
  std::vector<Evaluated> children;
};

inline Evaluated eval_tree(const ObjectiveSpec::Node& node, const BoundTrajectory& traj) {
  Evaluated out;
  switch (node.kind) {
    case ObjectiveSpec::Kind::Posynomial: {
      double sum = 0.0;
      for (const auto& term : node.terms) {
        double v = term.coefficient;
        for (const auto& f : term.factors) v *= std::pow(sample_value(traj, f.node, f.time), f.exponent);
        sum += v;
      }
      out.value = sum;
      return out;
    }
    case ObjectiveSpec::Kind::Sum: {
      double sum = 0.0;
      for (const auto& c : node.children) {
        out.children.push_back(eval_tree(c, traj));
        sum += out.children.back().value;
      }
      out.value = sum;
      return out;
    }
    case ObjectiveSpec::Kind::Product: {
      double prod = 1.0;
      for (const auto& c : node.children) {
        out.children.push_back(eval_tree(c, traj));
        prod *= out.children.back().value;
      }
      out.value = prod;
      return out;
    }
    case ObjectiveSpec::Kind::Power: {
      out.children.push_back(eval_tree(node.children[0], traj));
      out.value = std::pow(out.children[0].value, node.exponent);
      return out;
    }
    case ObjectiveSpec::Kind::Max: {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& c : node.children) {
        out.children.push_back(eval_tree(c, traj));
        best = std::max(best, out.children.back().value);
      }
      out.value = best;
      return out;
    }
  }
  throw Error("unreachable objective node kind");
}

// Accumulates adjoint * dJ/dp into per-sample gradients. Max nodes route the
// adjoint to the first child attaining the maximum (lowest-index tie-break).
inline void backprop_tree(const ObjectiveSpec::Node& node, const Evaluated& eval, double adjoint,
                          const BoundTrajectory& traj, std::vector<Vec>& grads) {
  if (adjoint == 0.0) return;
  switch (node.kind) {
    case ObjectiveSpec::Kind::Posynomial: {
      for (const auto& term : node.terms) {
        for (std::size_t f = 0; f < term.factors.size(); ++f) {
          const auto& factor = term.factors[f];
          if (factor.exponent == 0.0) continue;
          double partial = term.coefficient * factor.exponent *
                           std::pow(sample_value(traj, factor.node, factor.time),
                                    factor.exponent - 1.0);
          for (std::size_t g = 0; g < term.factors.size(); ++g) {
            if (g == f) continue;
            const auto& other = term.factors[g];
            partial *= std::pow(sample_value(traj, other.node, other.time), other.exponent);
          }
          grads[sample_index(traj, factor.time)][factor.node] += adjoint * partial;
        }
      }
      return;
    }
    case ObjectiveSpec::Kind::Sum: {
      for (std::size_t c = 0; c < node.children.size(); ++c)
        backprop_tree(node.children[c], eval.children[c], adjoint, traj, grads);
      return;
    }
    case ObjectiveSpec::Kind::Product: {
      for (std::size_t c = 0; c < node.children.size(); ++c) {
        double others = 1.0;
        for (std::size_t d = 0; d < node.children.size(); ++d)
          if (d != c) others *= eval.children[d].value;
        backprop_tree(node.children[c], eval.children[c], adjoint * others, traj, grads);
      }
      return;
    }
    case ObjectiveSpec::Kind::Power: {
      double inner = eval.children[0].value;
      double d = node.exponent * std::pow(inner, node.exponent - 1.0);
      backprop_tree(node.children[0], eval.children[0], adjoint * d, traj, grads);
      return;
    }
    case ObjectiveSpec::Kind::Max: {
      for (std::size_t c = 0; c < node.children.size(); ++c) {
        if (eval.children[c].value == eval.value) {
          backprop_tree(node.children[c], eval.children[c], adjoint, traj, grads);
          return;
        }
      }
      return;
    }
  }
}

}  // namespace detail

/// Value of the functional at a sampled trajectory. The trajectory must
/// contain every time the spec references.
inline double evaluate(const ObjectiveSpec& spec, const BoundTrajectory& traj) {
  return detail::eval_tree(spec.root(), traj).value;
}

/// Value plus dJ/dp(t_k) for every trajectory sample time (n-vectors aligned
/// with traj.sample_times).
inline std::pair<double, std::vector<Vec>> evaluate_with_sample_gradient(
    const ObjectiveSpec& spec, const BoundTrajectory& traj) {
  const int n = traj.p0.size() > 0
                    ? static_cast<int>(traj.p0.size())
                    : (traj.values.empty() ? 0 : static_cast<int>(traj.values[0].size()));
  std::vector<Vec> grads(traj.sample_times.size(), Vec::Zero(n));
  detail::Evaluated eval = detail::eval_tree(spec.root(), traj);
  detail::backprop_tree(spec.root(), eval, 1.0, traj, grads);
  return {eval.value, std::move(grads)};
}

/// Chain rule through the trajectory: gradient of F(beta, delta) as a
/// 2n-vector (d/d beta_1..n, then d/d delta_1..n). At max-node ties this is
/// the subgradient selected by the lowest-index branch.
inline Vec gradient(const ObjectiveSpec& spec, const BoundTrajectory& traj,
                    const SensitivityBlock& sens) {
  if (sens.d_samples.size() != traj.sample_times.size())
    throw DimensionError("sensitivity block does not match trajectory sampling");
  auto [value, grads] = evaluate_with_sample_gradient(spec, traj);
  (void)value;
  if (grads.empty()) return Vec();
  const int n = static_cast<int>(grads[0].size());
  Vec out = Vec::Zero(2 * n);
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (sens.d_samples[k].rows() != n || sens.d_samples[k].cols() != 2 * n)
      throw DimensionError("sensitivity matrix has wrong shape");
    out.noalias() += sens.d_samples[k].transpose() * grads[k];
  }
  return out;
}

}  // namespace epicon
