#include "closeness/embedding.hpp"
#include "closeness/error.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace closeness;

TEST_CASE("delay vectors put the current value first") {
  Vector s(4);
  s << 1, 2, 3, 4;
  const auto e = delay_embed(s, 2, 1);
  REQUIRE(e.length() == 3);
  CHECK(e.base_offset == 1);
  CHECK(e.points(0, 0) == 2);
  CHECK(e.points(0, 1) == 1);
  CHECK(e.points(2, 0) == 4);
  CHECK(e.points(2, 1) == 3);

  Vector t(10);
  for (int i = 0; i < 10; ++i) t[i] = i;
  const auto f = delay_embed(t, 3, 2);
  CHECK(f.length() == 6);
  CHECK(f.points(0, 0) == 4);
  CHECK(f.points(0, 2) == 0);
  CHECK_THROWS_AS(delay_embed(t, 6, 2), ValidationError);
  CHECK_THROWS_AS(delay_embed(t, 0, 1), ValidationError);
}

TEST_CASE("align finds the shared time range") {
  Vector s(20);
  for (int i = 0; i < 20; ++i) s[i] = i;
  const auto a = delay_embed(s, 2, 1);  // offset 1
  const auto b = delay_embed(s, 3, 2);  // offset 4
  const auto r = align(a, b);
  CHECK(r.first_time == 4);
  CHECK(r.offset_a == 3);
  CHECK(r.offset_b == 0);
  CHECK(r.length == 16);
  CHECK(a.points(static_cast<Eigen::Index>(r.offset_a), 0) == b.points(static_cast<Eigen::Index>(r.offset_b), 0));
}

TEST_CASE("measurement selects the requested block") {
  Trajectory t;
  t.samples.resize(2, 4);
  t.samples << 1, 2, 3, 4, 5, 6, 7, 8;
  t.n_x = 2;
  t.n_y = 2;
  CHECK(measure(t, Measurement::projection(Domain::YOnly, 1))[1] == 8);
  Vector h(2);
  h << 1, -1;
  CHECK(measure(t, Measurement::linear(Domain::XOnly, h))[0] == -1);
  CHECK_THROWS_AS(measure(t, Measurement::projection(Domain::XOnly, 2)), ValidationError);
  CHECK_THROWS_AS(measure(t, Measurement::linear(Domain::Joint, h)), ValidationError);
}

TEST_CASE("Theiler window and query validation") {
  CHECK_FALSE(admissible(5, 5, 0));
  CHECK(admissible(5, 6, 0));
  CHECK_FALSE(admissible(5, 7, 2));
  CHECK(admissible(5, 8, 2));
  CHECK_THROWS_AS((NeighborQuery{0, 0}.validate(10)), ValidationError);
  CHECK_THROWS_AS((NeighborQuery{4, 3}.validate(10)), ValidationError);
  CHECK_NOTHROW((NeighborQuery{3, 3}.validate(10)));
}

TEST_CASE("kd-tree agrees with brute force, ties to lower index") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> grid(0, 6);  // coarse lattice forces distance ties
  for (int rep = 0; rep < 40; ++rep) {
    const Eigen::Index n = 80 + rep * 7, dim = 1 + rep % 5;
    Matrix P(n, dim);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index c = 0; c < dim; ++c) P(i, c) = grid(rng);
    NeighborIndex index(P);
    REQUIRE(index.uses_tree());
    const std::size_t W = static_cast<std::size_t>(rep % 4);
    for (std::size_t q = 0; q < static_cast<std::size_t>(n); q += 5) {
      const auto a = index.knn(q, 6, W);
      const auto b = brute_force_knn(P, q, 6, W);
      REQUIRE(a.size() == b.size());
      for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].index == b[t].index);
        CHECK(a[t].distance2 == b[t].distance2);
      }
      std::size_t expect = 0;
      for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
        if (admissible(q, j, W) && squared_distance(P, q, j) <= 2.0) ++expect;
      }
      CHECK(index.count_within(q, 2.0, W) == expect);
    }
  }
}

TEST_CASE("knn fails cleanly when too few points are admissible") {
  Matrix P = Matrix::Random(6, 2);
  CHECK_THROWS_AS(brute_force_knn(P, 0, 6, 0), ValidationError);
  Vector s = Vector::LinSpaced(8, 0.0, 1.0);
  const auto e = delay_embed(s, 2, 1);
  CHECK_THROWS_AS(knn(e, 0, NeighborQuery{4, 2}), ValidationError);
  const auto nb = knn(e, 0, NeighborQuery{2, 1});
  CHECK(nb == std::vector<std::size_t>{2, 3});
}

TEST_CASE("embedding CSV layout") {
  Vector s(4);
  s << 1, 2, 3, 4.5;
  std::ostringstream os;
  write_embedding_csv(os, delay_embed(s, 2, 1));
  CHECK(os.str() == "# m=2,tau=1,base_offset=1\nlag0,lag1\n2,1\n3,2\n4.5,3\n");
}
