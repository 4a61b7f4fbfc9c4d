#include "closeness/dynamics.hpp"
#include "closeness/error.hpp"
#include "closeness/heuristics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace closeness;

TEST_CASE("signed-rank exact values") {
  // Reference values from an independent statistics package.
  const auto r = wilcoxon_signed_rank({1.5, -0.5, 2.0, 3.1, -2.2, 0.7, 4.0, -1.1});
  CHECK(r.exact);
  CHECK(r.w_plus == 26.0);
  CHECK(r.w_minus == 10.0);
  CHECK(r.p_one_sided == doctest::Approx(0.15625).epsilon(1e-14));
  CHECK(wilcoxon_signed_rank({1, 2, 3, 4, 5}).p_one_sided == 1.0 / 32.0);
}

TEST_CASE("signed-rank normal approximation") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.4, 1.0);
  std::vector<double> d(30);
  for (auto& v : d) v = nd(rng);
  const auto a = wilcoxon_signed_rank(d, WilcoxonMethod::Normal);
  const auto e = wilcoxon_signed_rank(d, WilcoxonMethod::Exact);
  CHECK_FALSE(a.exact);
  CHECK(e.exact);
  CHECK(std::abs(a.p_one_sided - e.p_one_sided) < 0.01);
}

TEST_CASE("signed-rank input checks") {
  CHECK_THROWS_AS(wilcoxon_signed_rank({0, 0, 0}), DegenerateInputError);
  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2, 0, 0}), ValidationError);
  const auto r = wilcoxon_signed_rank({0, 1, -1, 2, 2, 3});  // zero dropped, ties averaged
  CHECK(r.n == 5);
  CHECK(r.w_minus == 1.5);
  CHECK(average_ranks({3, -1, 1, 2}) == std::vector<double>{4, 1.5, 1.5, 3});
}

TEST_CASE("M and L on identical embeddings") {
  Matrix P = Matrix::Random(200, 3);
  const auto M = andrzejak_M(P, P, {5, 0});
  CHECK(M.M_xy == doctest::Approx(1.0));
  CHECK(M.M_yx == doctest::Approx(1.0));
  const auto L = chicharro_L(P, P, {5, 0});
  CHECK(L.L_xy == doctest::Approx(1.0));
  CHECK(L.wilcoxon.n == 0);
  CHECK(L.wilcoxon.p_one_sided == 1.0);
}

TEST_CASE("M and L near zero for independent noise") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Matrix a(600, 3), b(600, 3);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = nd(rng);
    b.data()[i] = nd(rng);
  }
  const auto M = andrzejak_M(a, b, {5, 0});
  CHECK(M.M_xy < 0.05);
  CHECK(M.M_xy >= 0.0);
  const auto L = chicharro_L(a, b, {5, 0});
  CHECK(std::abs(L.L_xy) < 0.05);
  CHECK(L.L_xy <= 1.0);
}

TEST_CASE("M rejects a point with no spread") {
  Matrix P = Matrix::Zero(20, 1);
  CHECK_THROWS_AS(andrzejak_M(P, P, {3, 0}), DegenerateInputError);
}

TEST_CASE("simplex weights") {
  const auto w = simplex_weights({1.0, 2.0, 3.0});
  const double z = std::exp(-1.0) + std::exp(-2.0) + std::exp(-3.0);
  CHECK(w[0] == doctest::Approx(std::exp(-1.0) / z));
  CHECK(w[2] == doctest::Approx(std::exp(-3.0) / z));
  const auto f = simplex_weights({0.0, 0.0, 1.0});  // floored nearest distance
  CHECK(f[0] == doctest::Approx(0.5));
  CHECK(f[2] < 1e-100);
  CHECK(pearson(Vector::LinSpaced(5, 0, 1), Vector::Constant(5, 2.0)) == 0.0);
}

TEST_CASE("CCM recovers a smooth function of the source") {
  SimulationSpec s;
  s.n_samples = 1500;
  s.n_transient = 200;
  const auto sim = simulate(s, 0.0, 2);
  Matrix src(1499, 2), tgt(1499, 1);
  for (Eigen::Index i = 0; i < 1499; ++i) {
    src(i, 0) = sim.trajectory.samples(i + 1, 0);
    src(i, 1) = sim.trajectory.samples(i, 0);
    tgt(i, 0) = sim.trajectory.samples(i + 1, 1);  // equals the lagged coordinate
  }
  CcmSpec spec{{50, 200, 1000}, 4, 0, 9};
  const auto r = ccm(src, tgt, spec);
  CHECK(r.n_neighbors == 3);
  CHECK(r.skill.back() > 0.99);
  CHECK(r.skill.back() >= r.skill.front());
  CHECK(r.max_weight_sum_error < 1e-12);
  CHECK(r.nearest_weight_maximal);
  CHECK_THROWS_AS(ccm(src, tgt, CcmSpec{{5000}, 1, 0, 1}), ValidationError);

  spec.metric = SkillMetric::Rmse;
  const auto e = ccm(src, tgt, spec);
  CHECK(e.skill.back() < 0.05);
  CHECK(e.skill.back() <= e.skill.front());
}

TEST_CASE("rmse") {
  Vector a(3), b(3);
  a << 1, 2, 3;
  b << 1, 2, 5;
  CHECK(rmse(a, b) == doctest::Approx(std::sqrt(4.0 / 3.0)));
}

TEST_CASE("continuity statistic bounds") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  Matrix a(500, 2), b(500, 2);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = nd(rng);
    b.data()[i] = nd(rng);
  }
  ContinuitySpec spec;
  spec.n_probes = 200;
  spec.seed = 4;
  const auto same = pecora_continuity(a, a, spec);
  const auto indep = pecora_continuity(a, b, spec);
  for (std::size_t e = 0; e < spec.epsilons.size(); ++e) {
    CHECK(same.theta[e] >= 0.0);
    CHECK(same.theta[e] <= 1.0);
    CHECK(same.theta_product[e] <= std::min(same.theta[e], same.theta_inverse[e]) + 1e-15);
    CHECK(indep.theta[e] < same.theta[e]);
  }
  // Wide balls on the identity map: the whole neighbour run stays inside.
  CHECK(same.theta.back() > 0.95);
  CHECK(same.probes_used == 400);
  CHECK(point_spread(a) == doctest::Approx(std::sqrt(2.0)).epsilon(0.1));
}
