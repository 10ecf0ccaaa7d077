#include "epicon/allocator.hpp"

#include "support/oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace epicon;

namespace {

struct Instance {
  TemporalNetwork net;
  RateBounds bounds;
  CostModel cost;
  ObjectiveSpec objective;
  Vec p0;

  double unprotected_J() const {
    Allocation nominal{bounds.beta_hi, bounds.delta_lo};
    return verify_allocation(net, p0, objective, cost, bounds, nominal).J_bound;
  }
  double full_protection_J() const {
    Allocation full{bounds.beta_lo, bounds.delta_hi};
    return verify_allocation(net, p0, objective, cost, bounds, full).J_bound;
  }
};

// A small instance with meaningful dynamics: delta_hat close to delta_hi so
// the recovery variables actually matter, lambda = 1 for well-scaled costs.
Instance small_instance(std::uint64_t seed, int n = 4, double lambda = 1.0,
                        double delta_hat = 2e-3) {
  std::mt19937_64 rng(seed);
  TemporalNetwork net = oracles::random_network(rng, n, 3, 0.6, 500.0, 2000.0);
  RateBounds bounds = RateBounds::uniform(n, 5e-4, 5e-3, 1e-4, 1e-3, delta_hat);
  CostModel cost = normalize_costs(bounds, lambda);
  ObjectiveSpec objective = make_terminal_lq(Vec::Ones(n), 1.0, net.horizon);
  Vec p0 = oracles::random_p0(rng, n).array() * 0.5 + 0.1;
  return Instance{std::move(net), std::move(bounds), std::move(cost), std::move(objective),
                  std::move(p0)};
}

}  // namespace

TEST_CASE("feasibility: generous targets are feasible at the protective corner") {
  auto inst = small_instance(1);
  double J_huge = 10.0 * inst.unprotected_J();
  auto rep = solve_feasibility(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds, J_huge,
                               2.0 * inst.bounds.n());
  CHECK(rep.status == SolveStatus::feasible);
  for (double r : rep.constraint_residuals) CHECK(r <= 1e-9);
  CHECK(rep.guaranteed_J <= J_huge * (1 + 1e-9));
}

TEST_CASE("feasibility: zero budget with a tight target is certified infeasible") {
  auto inst = small_instance(2);
  // With R_bar = 0 the only zero-cost point is (beta_hi, delta_lo); demanding
  // a J below that point's value is impossible.
  double J_bar = 0.5 * inst.unprotected_J();
  REQUIRE(J_bar > inst.full_protection_J());
  auto rep = solve_feasibility(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds, J_bar,
                               0.0);
  CHECK(rep.status == SolveStatus::infeasible);
}

TEST_CASE("feasibility with a mid target and half budget certifies one way") {
  auto inst = small_instance(3);
  double Jmid = std::sqrt(inst.unprotected_J() * inst.full_protection_J());
  auto rep = solve_feasibility(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds, Jmid,
                               inst.bounds.n());
  CHECK(rep.status != SolveStatus::max_iter);
  if (rep.status == SolveStatus::feasible) {
    CHECK(rep.guaranteed_J <= Jmid * (1 + 1e-8));
    CHECK(rep.cost_used <= inst.bounds.n() + 1e-6);
  }
}

TEST_CASE("budget solve with R_bar >= 2n reaches the full-protection corner") {
  auto inst = small_instance(4);
  auto rep = solve_budget_constrained(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds,
                                      2.0 * inst.bounds.n() + 1.0);
  REQUIRE(rep.status == SolveStatus::feasible);
  double corner = inst.full_protection_J();
  CHECK(rep.guaranteed_J == Catch::Approx(corner).epsilon(1e-6));
  for (int i = 0; i < inst.bounds.n(); ++i) {
    CHECK(rep.allocation.beta[i] == Catch::Approx(inst.bounds.beta_lo[i]).epsilon(1e-9));
    CHECK(rep.allocation.delta[i] == Catch::Approx(inst.bounds.delta_hi[i]).epsilon(1e-9));
  }
}

TEST_CASE("budget solve with R_bar = 0 returns the forced zero-cost corner") {
  auto inst = small_instance(5);
  auto rep = solve_budget_constrained(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds,
                                      0.0);
  REQUIRE(rep.status == SolveStatus::feasible);
  CHECK(rep.cost_used <= 1e-8);
  for (int i = 0; i < inst.bounds.n(); ++i) {
    CHECK(rep.allocation.beta[i] == Catch::Approx(inst.bounds.beta_hi[i]).epsilon(1e-6));
    CHECK(rep.allocation.delta[i] == Catch::Approx(inst.bounds.delta_lo[i]).epsilon(1e-6));
  }
}

TEST_CASE("the reported allocation is exactly the exp-map of the log point") {
  auto inst = small_instance(6);
  auto rep = solve_budget_constrained(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds,
                                      inst.bounds.n());
  const int n = inst.bounds.n();
  for (int i = 0; i < n; ++i) {
    CHECK(rep.allocation.beta[i] == std::exp(rep.logspace_point[i]));
    CHECK(rep.allocation.delta[i] ==
          inst.cost.delta_hat - std::exp(rep.logspace_point[n + i]));
  }
}

TEST_CASE("certificate soundness: guaranteed_J is reproducible independently") {
  auto inst = small_instance(7);
  auto rep = solve_budget_constrained(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds,
                                      inst.bounds.n());
  auto check = verify_allocation(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds,
                                 rep.allocation);
  CHECK(rep.guaranteed_J == Catch::Approx(check.J_bound).epsilon(1e-9));
  CHECK(check.in_box);
  CHECK(check.cost <= inst.bounds.n() + 1e-9);
}

TEST_CASE("verify_allocation flags out-of-box allocations") {
  auto inst = small_instance(8);
  Allocation outside{inst.bounds.beta_hi * 2.0, inst.bounds.delta_lo};
  auto check = verify_allocation(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds,
                                 outside);
  CHECK_FALSE(check.in_box);
}

TEST_CASE("performance solve with a loose target spends nothing") {
  auto inst = small_instance(9);
  double J_bar = 2.0 * inst.unprotected_J();
  auto rep = solve_performance_constrained(inst.net, inst.p0, inst.objective, inst.cost,
                                           inst.bounds, J_bar);
  REQUIRE(rep.status == SolveStatus::feasible);
  CHECK(rep.cost_used <= 1e-6);
  for (int i = 0; i < inst.bounds.n(); ++i) {
    CHECK(rep.allocation.beta[i] == Catch::Approx(inst.bounds.beta_hi[i]).epsilon(1e-5));
    CHECK(rep.allocation.delta[i] == Catch::Approx(inst.bounds.delta_lo[i]).epsilon(1e-5));
  }
}

TEST_CASE("performance solve below full protection is infeasible") {
  auto inst = small_instance(10);
  double J_bar = 0.5 * inst.full_protection_J();
  auto rep = solve_performance_constrained(inst.net, inst.p0, inst.objective, inst.cost,
                                           inst.bounds, J_bar);
  CHECK(rep.status == SolveStatus::infeasible);
}

TEST_CASE("performance-to-budget round trip preserves the target") {
  for (std::uint64_t seed : {11, 12, 13}) {
    auto inst = small_instance(seed);
    double J_bar = std::sqrt(inst.unprotected_J() * inst.full_protection_J());
    auto perf = solve_performance_constrained(inst.net, inst.p0, inst.objective, inst.cost,
                                              inst.bounds, J_bar);
    REQUIRE(perf.status == SolveStatus::feasible);
    auto budget = solve_budget_constrained(inst.net, inst.p0, inst.objective, inst.cost,
                                           inst.bounds, perf.cost_used);
    REQUIRE(budget.status == SolveStatus::feasible);
    CHECK(budget.guaranteed_J <= J_bar * (1 + 1e-6));
  }
}

TEST_CASE("guaranteed_J is nonincreasing in the budget") {
  auto inst = small_instance(14);
  const double full = 2.0 * inst.bounds.n();
  double prev = std::numeric_limits<double>::infinity();
  for (double frac : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    auto rep = solve_budget_constrained(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds,
                                        frac * full);
    REQUIRE(rep.status == SolveStatus::feasible);
    CHECK(rep.guaranteed_J <= prev * (1 + 1e-8) + 1e-12);
    prev = rep.guaranteed_J;
  }
}

TEST_CASE("multi-start: random interior starts agree on the optimum") {
  auto inst = small_instance(15);
  LogBox box = LogBox::from_bounds(inst.bounds);
  std::mt19937_64 rng(99);
  double reference = -1.0;
  for (int start = 0; start < 5; ++start) {
    SolveOptions opts;
    Vec z0(box.lo.size());
    for (int i = 0; i < z0.size(); ++i) z0[i] = oracles::uniform(rng, box.lo[i], box.hi[i]);
    opts.initial_point = z0;
    auto rep = solve_budget_constrained(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds,
                                        inst.bounds.n(), opts);
    REQUIRE(rep.status == SolveStatus::feasible);
    if (reference < 0)
      reference = rep.guaranteed_J;
    else
      CHECK(rep.guaranteed_J == Catch::Approx(reference).epsilon(1e-5));
  }
}

TEST_CASE("static baseline on the empty graph spends nothing on transmission") {
  const int n = 3;
  RateBounds bounds = RateBounds::uniform(n, 5e-4, 5e-3, 1e-4, 1e-3, 2e-3);
  CostModel cost = normalize_costs(bounds, 1.0);
  WeightedStaticGraph agg;
  agg.n = n;
  agg.weights = Mat::Zero(n, n);
  auto rep = solve_static_baseline(agg, cost, bounds, 0.5 * n);
  REQUIRE(rep.status == SolveStatus::feasible);
  for (int i = 0; i < n; ++i) CHECK(cost.phi(i, rep.allocation.beta[i]) <= 1e-6);
  // lambda_max of -diag(delta) is -min(delta)
  CHECK(rep.spectral_abscissa ==
        Catch::Approx(-rep.allocation.delta.minCoeff()).epsilon(1e-5));
}

TEST_CASE("static baseline on a symmetric pair invests symmetrically") {
  const int n = 2;
  RateBounds bounds = RateBounds::uniform(n, 5e-4, 5e-3, 1e-4, 1e-3, 2e-3);
  CostModel cost = normalize_costs(bounds, 1.0);
  WeightedStaticGraph agg;
  agg.n = n;
  agg.weights = Mat::Zero(n, n);
  agg.weights(0, 1) = agg.weights(1, 0) = 0.8;
  auto rep = solve_static_baseline(agg, cost, bounds, 1.0);
  REQUIRE(rep.status == SolveStatus::feasible);
  CHECK(rep.allocation.beta[0] == Catch::Approx(rep.allocation.beta[1]).margin(1e-6 * 5e-3));
  CHECK(rep.allocation.delta[0] == Catch::Approx(rep.allocation.delta[1]).margin(1e-6 * 1e-3));
  CHECK(rep.cost_used <= 1.0 + 1e-6);
}

TEST_CASE("static baseline level matches the true dominant eigenvalue") {
  std::mt19937_64 rng(101);
  const int n = 4;
  RateBounds bounds = RateBounds::uniform(n, 5e-4, 5e-3, 1e-4, 1e-3, 2e-3);
  CostModel cost = normalize_costs(bounds, 1.0);
  WeightedStaticGraph agg;
  agg.n = n;
  agg.weights = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double w = oracles::uniform(rng, 0.0, 1.0);
      if (w > 0.4) agg.weights(i, j) = agg.weights(j, i) = w;
    }
  auto rep = solve_static_baseline(agg, cost, bounds, n);
  REQUIRE(rep.status == SolveStatus::feasible);

  Mat m = rep.allocation.beta.asDiagonal() * agg.weights;
  m.diagonal() -= rep.allocation.delta;
  Eigen::EigenSolver<Mat> eig(m);
  double lam = eig.eigenvalues().real().maxCoeff();
  CHECK(rep.spectral_abscissa >= lam - 1e-9);
  CHECK(rep.spectral_abscissa == Catch::Approx(lam).margin(1e-5 * std::abs(lam)));
}

TEST_CASE("an unsatisfiable budget corner is reported before solving") {
  auto inst = small_instance(16);
  double bad_budget = -inst.cost.r_minus() - 1.0;  // R_bar + R^- < 0
  auto rep = solve_budget_constrained(inst.net, inst.p0, inst.objective, inst.cost, inst.bounds,
                                      bad_budget);
  CHECK(rep.status == SolveStatus::infeasible);
}
