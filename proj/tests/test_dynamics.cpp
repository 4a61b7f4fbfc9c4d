#include "closeness/dynamics.hpp"
#include "closeness/error.hpp"

#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>

using namespace closeness;

TEST_CASE("Henon pair one step matches hand computation") {
  const auto model = SystemModel::henon_henon(0.4);
  const std::array<double, 4> z{0.7, 0.1, -0.2, 0.3};
  std::array<double, 4> out{};
  model.step_map(z, out);
  CHECK(out[0] == doctest::Approx(0.94).epsilon(1e-15));
  CHECK(out[1] == 0.7);
  CHECK(out[2] == doctest::Approx(1.522).epsilon(1e-15));
  CHECK(out[3] == -0.2);
}

TEST_CASE("iterate_map discards the transient and excludes the initial state") {
  const auto model = SystemModel::henon_henon(0.0);
  const auto x0 = model.default_initial_condition();
  const auto full = iterate_map(model, x0, 20, 0);
  const auto cut = iterate_map(model, x0, 10, 10);
  CHECK(full.length() == 20);
  CHECK(cut.transient_discarded == 10);
  CHECK((cut.samples - full.samples.bottomRows(10)).cwiseAbs().maxCoeff() == 0.0);
  std::array<double, 4> first{};
  model.step_map(std::span<const double>(x0.data(), 4), first);
  CHECK(full.samples(0, 0) == first[0]);
}

TEST_CASE("iterate_map reports divergence") {
  const auto model = SystemModel::henon_henon(0.0);
  Vector x0(4);
  x0 << 5.0, 0.0, 5.0, 0.0;
  CHECK_THROWS_AS(iterate_map(model, x0, 100, 0), DivergenceError);
}

TEST_CASE("adaptive integration of exponential decay") {
  const OdeRhs rhs = [](double, std::span<const double> z, std::span<double> dz) { dz[0] = -z[0]; };
  Vector x0(1);
  x0 << 1.0;
  const Matrix s = integrate_ode(rhs, x0, 0.1, 30, 0, {1e-10, 1e-12});
  CHECK(s(0, 0) == doctest::Approx(0.904837418035960).epsilon(1e-9));
  for (Eigen::Index k = 0; k < s.rows(); ++k) {
    CHECK(s(k, 0) == doctest::Approx(std::exp(-0.1 * static_cast<double>(k + 1))).epsilon(1e-8));
  }
}

TEST_CASE("fixed-step Dormand-Prince converges at high order") {
  const OdeRhs rhs = [](double, std::span<const double> z, std::span<double> dz) {
    dz[0] = z[1];
    dz[1] = -z[0];
  };
  Vector x0(2);
  x0 << 1.0, 0.0;
  auto err = [&](std::size_t n) {
    const Vector z = integrate_fixed_step(rhs, x0, 2.0, n);
    return std::hypot(z[0] - std::cos(2.0), z[1] + std::sin(2.0));
  };
  const double ratio = err(20) / err(40);
  CHECK(ratio > 16.0);
}

TEST_CASE("Rossler-Lorenz flow stays bounded and is reproducible") {
  SimulationSpec spec;
  spec.kind = SystemKind::RosslerLorenz;
  spec.n_samples = 400;
  spec.n_transient = 100;
  const auto a = simulate(spec, 1.0, 6);
  const auto b = simulate(spec, 1.0, 6);
  a.trajectory.validate();
  CHECK(a.trajectory.n_x == 3);
  CHECK(a.trajectory.n_y == 3);
  CHECK(a.trajectory.dt == doctest::Approx(0.025));
  CHECK(a.trajectory.samples.cwiseAbs().maxCoeff() < 100.0);
  CHECK((a.trajectory.samples - b.trajectory.samples).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear propagation matches the matrix exponential") {
  const auto bench = example1_system(7, 20, 1.0);
  const auto traj = simulate_linear(bench.system, bench.initial_state, 1.0, 5);
  const Eigen::MatrixXd A = bench.system.matrix();
  for (int k = 1; k <= 5; ++k) {
    const Eigen::MatrixXd E = (A * static_cast<double>(k)).exp();
    const Vector expect = E * bench.initial_state;
    const Vector got = traj.samples.row(k - 1).transpose();
    CHECK((got - expect).norm() < 1e-10 * (1.0 + expect.norm()));
  }
}

TEST_CASE("system names round-trip") {
  for (auto k : {SystemKind::HenonHenon, SystemKind::RosslerLorenz, SystemKind::RosslerRossler,
                 SystemKind::LinearForced}) {
    CHECK(parse_system_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_system_kind("Lorenz96"), ValidationError);
}

TEST_CASE("trajectory validation rejects non-finite samples") {
  Trajectory t;
  t.samples = Matrix::Zero(3, 2);
  t.n_x = 1;
  t.n_y = 1;
  CHECK_NOTHROW(t.validate());
  t.samples(1, 1) = std::nan("");
  CHECK_THROWS_AS(t.validate(), ValidationError);
  t.samples(1, 1) = 0.0;
  t.n_y = 2;
  CHECK_THROWS_AS(t.validate(), ValidationError);
}

TEST_CASE("uncoupled Henon step from a hand-evaluated state") {
  const auto model = SystemModel::henon_henon(0.0);
  const std::array<double, 4> z{0.7, 0.0, 0.91, 0.7};
  std::array<double, 4> out{};
  model.step_map(z, out);
  CHECK(out[0] == doctest::Approx(0.91).epsilon(1e-15));
  CHECK(out[1] == 0.7);
  CHECK(out[2] == doctest::Approx(0.7819).epsilon(1e-14));
  CHECK(out[3] == 0.91);
}

TEST_CASE("identical Henon states stay synchronised for any coupling") {
  Vector x0(4);
  x0 << 0.3, -0.2, 0.3, -0.2;
  for (double C : {0.0, 0.35, 0.8}) {
    const auto t = iterate_map(SystemModel::henon_henon(C), x0, 500, 0);
    CHECK((t.x_block() - t.y_block()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("linear propagation keeps modal magnitudes") {
  const auto bench = example1_system(2, 10, 1.0);
  const auto traj = simulate_linear(bench.system, bench.initial_state, 1.0, 2000);
  const Eigen::MatrixXcd Vinv = bench.system.modes().inverse();
  for (Eigen::Index k = 0; k < 2000; k += 97) {
    const Eigen::VectorXcd c = Vinv * traj.samples.row(k).transpose().cast<std::complex<double>>();
    for (Eigen::Index i = 0; i < c.size(); ++i) CHECK(std::abs(std::abs(c[i]) - 1.0) < 1e-9);
  }
}

TEST_CASE("forced structure: x block ignores the coupling block") {
  const auto bench = example1_system(2, 10, 1.0);
  Eigen::MatrixXd Ayx(2, 2);
  Ayx << 0.4, 0.0, -0.3, 0.2;
  const auto other = bench.system.with_coupling_block(Ayx);
  const auto a = simulate_linear(bench.system, bench.initial_state, 1.0, 500);
  const auto b = simulate_linear(other, bench.initial_state, 1.0, 500);
  CHECK((a.x_block() - b.x_block()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a.y_block() - b.y_block()).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("class membership rejects an unstable extra mode") {
  const auto bench = example1_system(1, 10, 1.0);
  Eigen::MatrixXcd V = bench.system.oscillatory_modes().leftCols(2).topRows(3);
  Eigen::VectorXcd extra = Eigen::VectorXcd::Zero(3);
  extra[2] = 1.0;
  CHECK_THROWS_AS(LinearSystemAd::build(V, {1.0}, {ExtraMode{{0.1, 0.0}, extra}}, 2, 1), ValidationError);
  CHECK_NOTHROW(LinearSystemAd::build(V, {1.0}, {ExtraMode{{-0.1, 0.0}, extra}}, 2, 1));
}
