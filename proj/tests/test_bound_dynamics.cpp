#include "epicon/bound_dynamics.hpp"

#include "support/oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace epicon;

namespace {

TemporalNetwork empty_graph(int n, double T) {
  TemporalNetwork net;
  net.n = n;
  for (int i = 0; i < n; ++i) net.node_labels.push_back("n" + std::to_string(i));
  Snapshot s;
  s.t_start = 0.0;
  s.t_end = T;
  net.snapshots.push_back(s);
  net.horizon = T;
  return net;
}

TemporalNetwork path3_two_snapshots() {
  TemporalNetwork net;
  net.n = 3;
  net.node_labels = {"a", "b", "c"};
  Snapshot s1;
  s1.t_start = 0.0;
  s1.t_end = 700.0;
  s1.edges = {{0, 1}};
  Snapshot s2;
  s2.t_start = 700.0;
  s2.t_end = 1500.0;
  s2.edges = {{0, 1}, {1, 2}};
  net.snapshots = {s1, s2};
  net.horizon = 1500.0;
  return net;
}

}  // namespace

TEST_CASE("generator on the empty graph is -diag(delta)") {
  Allocation alloc;
  alloc.beta = Vec::Constant(3, 2e-3);
  alloc.delta = Vec::Constant(3, 5e-4);
  Mat m = generator(Mat::Zero(3, 3), alloc);
  CHECK((m + Mat(alloc.delta.asDiagonal())).norm() == 0.0);
}

TEST_CASE("generator matches the 2-node closed form") {
  Allocation alloc;
  alloc.beta = Vec(2);
  alloc.beta << 1e-3, 2e-3;
  alloc.delta = Vec(2);
  alloc.delta << 3e-4, 4e-4;
  Mat a(2, 2);
  a << 0, 1, 1, 0;
  Mat m = generator(a, alloc);
  CHECK(m(0, 0) == -3e-4);
  CHECK(m(0, 1) == 1e-3);
  CHECK(m(1, 0) == 2e-3);
  CHECK(m(1, 1) == -4e-4);
}

TEST_CASE("generator is Metzler on random inputs") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    int n = 2 + static_cast<int>(rng() % 6);
    auto net = oracles::random_network(rng, n, 1, 0.5, 1.0, 2.0);
    auto alloc = oracles::random_rates(rng, n);
    Mat m = generator(net.adjacency_dense(0), alloc);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) CHECK(m(i, j) >= 0.0);
  }
}

TEST_CASE("propagate_bound decays exponentially on the empty graph") {
  auto net = empty_graph(4, 1000.0);
  Allocation alloc;
  alloc.beta = Vec::Constant(4, 3e-3);
  alloc.delta = Vec::Constant(4, 1e-3);
  Vec p0 = Vec::Ones(4);
  std::vector<double> times{0.0, 1000.0};
  auto traj = propagate_bound(net, alloc, p0, times);
  CHECK(traj.values[0].isApprox(p0));
  for (int i = 0; i < 4; ++i)
    CHECK(traj.values[1][i] == Catch::Approx(std::exp(-1.0)).epsilon(1e-10));
}

TEST_CASE("sample at t=0 returns p0 exactly") {
  auto net = path3_two_snapshots();
  Allocation alloc;
  alloc.beta = Vec::Constant(3, 5e-3);
  alloc.delta = Vec::Constant(3, 1e-4);
  Vec p0(3);
  p0 << 1.0, 0.25, 0.01;
  std::vector<double> times{0.0};
  auto traj = propagate_bound(net, alloc, p0, times);
  CHECK((traj.values[0] - p0).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("propagate_bound matches a fine-step RK4 integrator") {
  auto net = path3_two_snapshots();
  Allocation alloc;
  alloc.beta = Vec(3);
  alloc.beta << 5e-3, 2e-3, 4e-3;
  alloc.delta = Vec(3);
  alloc.delta << 1e-4, 9e-4, 5e-4;
  Vec p0(3);
  p0 << 1.0, 0.5, 0.01;
  std::vector<double> times{350.0, 700.0, 1100.0, 1500.0};
  auto traj = propagate_bound(net, alloc, p0, times);
  auto ref = oracles::rk4_reference(net, alloc, p0, times, 0.5);
  for (std::size_t k = 0; k < times.size(); ++k) {
    double scale = ref[k].lpNorm<Eigen::Infinity>();
    CHECK((traj.values[k] - ref[k]).lpNorm<Eigen::Infinity>() / scale < 1e-6);
  }
}

TEST_CASE("boundary values equal the product-of-exponentials formula") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    int n = 2 + static_cast<int>(rng() % 5);
    auto net = oracles::random_network(rng, n, 3, 0.4, 200.0, 1500.0);
    auto alloc = oracles::random_rates(rng, n);
    Vec p0 = oracles::random_p0(rng, n);
    std::vector<double> times;
    for (const auto& s : net.snapshots) times.push_back(s.t_end);
    auto traj = propagate_bound(net, alloc, p0, times);
    for (std::size_t k = 0; k < times.size(); ++k) {
      Vec ref = oracles::product_formula_reference(net, alloc, p0, times[k]);
      double scale = std::max(ref.lpNorm<Eigen::Infinity>(), 1e-300);
      CHECK((traj.values[k] - ref).lpNorm<Eigen::Infinity>() / scale < 1e-10);
    }
  }
}

TEST_CASE("positivity holds for any nonnegative initial condition") {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    int n = 2 + static_cast<int>(rng() % 6);
    auto net = oracles::random_network(rng, n, 4, 0.5, 100.0, 1000.0);
    auto alloc = oracles::random_rates(rng, n);
    Vec p0 = oracles::random_p0(rng, n);
    std::vector<double> times{0.3 * net.horizon, net.horizon};
    auto traj = propagate_bound(net, alloc, p0, times);
    for (const auto& v : traj.values) CHECK(v.minCoeff() >= 0.0);
  }
}

TEST_CASE("semigroup property of the propagated bound") {
  std::mt19937_64 rng(29);
  for (int rep = 0; rep < 8; ++rep) {
    int n = 2 + static_cast<int>(rng() % 5);
    auto net = oracles::random_network(rng, n, 3, 0.5, 200.0, 900.0);
    auto alloc = oracles::random_rates(rng, n);
    Vec p0 = oracles::random_p0(rng, n);
    double t1 = 0.4 * net.horizon;
    double t2 = net.horizon;
    std::vector<double> both{t1, t2};
    auto direct = propagate_bound(net, alloc, p0, both);

    // Restart from p(t1) on the time-shifted remainder of the network.
    TemporalNetwork rest;
    rest.n = net.n;
    rest.node_labels = net.node_labels;
    for (const auto& s : net.snapshots) {
      if (s.t_end <= t1) continue;
      Snapshot clipped = s;
      clipped.t_start = std::max(s.t_start, t1) - t1;
      clipped.t_end = s.t_end - t1;
      rest.snapshots.push_back(clipped);
    }
    rest.horizon = t2 - t1;
    std::vector<double> tail{t2 - t1};
    auto resumed = propagate_bound(rest, alloc, direct.values[0], tail);
    double scale = std::max(direct.values[1].lpNorm<Eigen::Infinity>(), 1e-300);
    CHECK((resumed.values[0] - direct.values[1]).lpNorm<Eigen::Infinity>() / scale < 1e-10);
  }
}

TEST_CASE("sample times outside the horizon are rejected") {
  auto net = empty_graph(2, 10.0);
  Allocation alloc;
  alloc.beta = Vec::Constant(2, 1e-3);
  alloc.delta = Vec::Constant(2, 1e-3);
  std::vector<double> bad{11.0};
  CHECK_THROWS_AS(propagate_bound(net, alloc, Vec::Ones(2), bad), ContractError);
  std::vector<double> unsorted{5.0, 2.0};
  CHECK_THROWS_AS(propagate_bound(net, alloc, Vec::Ones(2), unsorted), ContractError);
}

TEST_CASE("sensitivities on the empty graph match the closed form") {
  auto net = empty_graph(3, 800.0);
  Allocation alloc;
  alloc.beta = Vec::Constant(3, 2e-3);
  alloc.delta = Vec(3);
  alloc.delta << 1e-3, 5e-4, 2e-4;
  Vec p0(3);
  p0 << 1.0, 0.7, 0.2;
  std::vector<double> times{0.0, 800.0};
  auto [traj, sens] = propagate_with_sensitivity(net, alloc, p0, times);

  CHECK(sens.d_samples[0].cwiseAbs().maxCoeff() == 0.0);  // zero at t = 0
  const double t = 800.0;
  for (int i = 0; i < 3; ++i) {
    double expected = -t * std::exp(-alloc.delta[i] * t) * p0[i];
    CHECK(sens.d_samples[1](i, 3 + i) == Catch::Approx(expected).epsilon(1e-9));
    for (int j = 0; j < 3; ++j) {
      CHECK(sens.d_samples[1](i, j) == 0.0);  // no beta influence without edges
      if (j != i) CHECK(sens.d_samples[1](i, 3 + j) == 0.0);
    }
  }
}

TEST_CASE("sensitivities agree with central finite differences") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 6; ++rep) {
    int n = 4;
    auto net = oracles::random_network(rng, n, 3, 0.5, 200.0, 900.0);
    auto alloc = oracles::random_rates(rng, n);
    Vec p0 = oracles::random_p0(rng, n);
    std::vector<double> times{0.5 * net.horizon, net.horizon};
    auto [traj, sens] = propagate_with_sensitivity(net, alloc, p0, times);

    for (int param = 0; param < 2 * n; ++param) {
      double base = param < n ? alloc.beta[param] : alloc.delta[param - n];
      double eps = 1e-6 * base;
      Allocation hi = alloc, lo = alloc;
      (param < n ? hi.beta[param] : hi.delta[param - n]) += eps;
      (param < n ? lo.beta[param] : lo.delta[param - n]) -= eps;
      auto up = propagate_bound(net, hi, p0, times);
      auto dn = propagate_bound(net, lo, p0, times);
      for (std::size_t k = 0; k < times.size(); ++k) {
        Vec fd = (up.values[k] - dn.values[k]) / (2.0 * eps);
        for (int i = 0; i < n; ++i) {
          double got = sens.d_samples[k](i, param);
          double want = fd[i];
          double scale = std::max({std::abs(want), std::abs(got), 1e-9});
          CHECK(std::abs(got - want) / scale < 1e-4);
        }
      }
    }
  }
}

TEST_CASE("monotonicity: raising beta or lowering delta never decreases the bound") {
  std::mt19937_64 rng(37);
  for (int rep = 0; rep < 6; ++rep) {
    int n = 3 + static_cast<int>(rng() % 4);
    auto net = oracles::random_network(rng, n, 3, 0.6, 200.0, 900.0);
    auto alloc = oracles::random_rates(rng, n);
    Vec p0 = oracles::random_p0(rng, n).array() + 0.05;
    std::vector<double> times{0.5 * net.horizon, net.horizon};
    auto base = propagate_bound(net, alloc, p0, times);

    int j = static_cast<int>(rng() % n);
    Allocation more_beta = alloc;
    more_beta.beta[j] *= 1.5;
    auto up = propagate_bound(net, more_beta, p0, times);
    Allocation less_delta = alloc;
    less_delta.delta[j] *= 0.5;
    auto dn = propagate_bound(net, less_delta, p0, times);
    for (std::size_t k = 0; k < times.size(); ++k) {
      CHECK((up.values[k] - base.values[k]).minCoeff() >= -1e-12);
      CHECK((dn.values[k] - base.values[k]).minCoeff() >= -1e-12);
    }
  }
}

TEST_CASE("sensitivity signs match the positive-system monotonicity") {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 5; ++rep) {
    int n = 4;
    auto net = oracles::random_network(rng, n, 2, 0.7, 300.0, 800.0);
    auto alloc = oracles::random_rates(rng, n);
    Vec p0 = oracles::random_p0(rng, n).array() + 0.05;
    std::vector<double> times{net.horizon};
    auto [traj, sens] = propagate_with_sensitivity(net, alloc, p0, times);
    const Mat& s = sens.d_samples[0];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        CHECK(s(i, j) >= -1e-12);       // d p / d beta_j >= 0
        CHECK(s(i, n + j) <= 1e-12);    // d p / d delta_j <= 0
      }
  }
}
