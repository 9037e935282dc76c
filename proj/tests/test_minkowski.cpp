#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "minkembed/metric_core.hpp"
#include "minkembed/minkowski.hpp"

#include <cmath>
#include <random>

using namespace minkembed;

namespace {

MinkVec mv(std::initializer_list<double> pos, std::initializer_list<double> neg) {
  Eigen::VectorXd p(pos.size()), n(neg.size());
  int i = 0;
  for (double x : pos)
    p(i++) = x;
  i = 0;
  for (double x : neg)
    n(i++) = x;
  return MinkVec(p, n);
}

MinkVec random_vec(std::mt19937 &rng, int p, int q) {
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  MinkVec v = MinkVec::zero(p, q);
  for (int i = 0; i < p; ++i)
    v.pos(i) = U(rng);
  for (int i = 0; i < q; ++i)
    v.neg(i) = U(rng);
  return v;
}

} // namespace

TEST_CASE("pairing on frozen vectors") {
  CHECK(mink_pairing(mv({1.0}, {1.0}), mv({1.0}, {1.0})) == doctest::Approx(0.0));
  CHECK(mink_pairing(mv({3.0, 0.0}, {2.0}), mv({3.0, 0.0}, {2.0})) == doctest::Approx(5.0));
  CHECK_THROWS_AS(mink_pairing(mv({1.0}, {0.0}), mv({1.0, 2.0}, {0.0})),
                  std::invalid_argument);
}

TEST_CASE("pairing is bilinear and symmetric") {
  std::mt19937 rng(5u);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int rep = 0; rep < 200; ++rep) {
    MinkVec a = random_vec(rng, 3, 2), b = random_vec(rng, 3, 2), c = random_vec(rng, 3, 2);
    const double s = U(rng), t = U(rng);
    const double lhs = mink_pairing(a * s + b * t, c);
    const double rhs = s * mink_pairing(a, c) + t * mink_pairing(b, c);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    CHECK(mink_pairing(a, b) == doctest::Approx(mink_pairing(b, a)).epsilon(1e-14));
  }
}

TEST_CASE("projections split the form") {
  MinkVec v = mv({3.0, 4.0}, {2.0});
  MinkVec vp = project_pos(v), vn = project_neg(v);
  CHECK(vp.pos(0) == 3.0);
  CHECK(vp.pos(1) == 4.0);
  CHECK(vp.neg(0) == 0.0);
  CHECK(vn.pos.norm() == 0.0);
  CHECK(vn.neg(0) == 2.0);
  CHECK(mink_pairing(v, v) ==
        doctest::Approx(mink_pairing(vp, vp) + mink_pairing(vn, vn)));

  std::mt19937 rng(9u);
  for (int rep = 0; rep < 100; ++rep) {
    MinkVec w = random_vec(rng, 4, 2);
    MinkVec wp = project_pos(w), wn = project_neg(w);
    CHECK((wp.pos - w.pos).norm() == 0.0);
    CHECK(wp.neg.norm() == 0.0);
    CHECK(wn.pos.norm() == 0.0);
    CHECK((wn.neg - w.neg).norm() == 0.0);
    const double split = mink_pairing(wp, wp) + mink_pairing(wn, wn);
    CHECK(mink_pairing(w, w) == doctest::Approx(split).epsilon(1e-12));
  }
}

TEST_CASE("pl path energy") {
  SUBCASE("straight mixed segment") {
    std::vector<std::pair<double, MinkVec>> bp = {{0.0, mv({0.0}, {0.0})},
                                                  {1.0, mv({3.0}, {2.0})}};
    CHECK(pl_path_energy(bp) == doctest::Approx(5.0));
    auto split = pl_path_energy_split(bp);
    CHECK(split.positive == doctest::Approx(9.0));
    CHECK(split.negative == doctest::Approx(-4.0));
    CHECK(split.total == doctest::Approx(split.positive + split.negative));
  }
  SUBCASE("purely negative displacement") {
    std::vector<std::pair<double, MinkVec>> bp = {{0.0, mv({0.0}, {0.0})},
                                                  {2.0, mv({0.0}, {1.0})}};
    CHECK(pl_path_energy(bp) == doctest::Approx(-0.5));
  }
  SUBCASE("split is exact on random chains") {
    std::mt19937 rng(13u);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<std::pair<double, MinkVec>> bp;
      double t = 0.0;
      std::uniform_real_distribution<double> dt(0.1, 1.0);
      for (int i = 0; i < 6; ++i) {
        bp.push_back({t, random_vec(rng, 3, 1)});
        t += dt(rng);
      }
      auto s = pl_path_energy_split(bp);
      CHECK(s.total == doctest::Approx(s.positive + s.negative).epsilon(1e-14));
      CHECK(s.positive >= 0.0);
      CHECK(s.negative <= 0.0);
    }
  }
  SUBCASE("agrees with graph path energy for Euclidean images") {
    FiniteLengthSpace s({"A", "B", "C"}, {{0, 1, 1.0}, {1, 2, 1.5}});
    auto p = geodesic_path(s, Loc::at_vertex(0), Loc::at_vertex(2), 0.0, 1.0);
    const double graph_e = path_energy(s, p, 8);
    // image on a line, constant speed 2.5: vertex B is hit at t = 0.4
    std::vector<std::pair<double, MinkVec>> bp = {
        {0.0, mv({0.0}, {})}, {0.4, mv({1.0}, {})}, {1.0, mv({2.5}, {})}};
    CHECK(pl_path_energy(bp) == doctest::Approx(graph_e).epsilon(1e-12));
    CHECK(pl_path_energy(bp) == doctest::Approx(6.25));
  }
  SUBCASE("errors") {
    std::vector<std::pair<double, MinkVec>> one = {{0.0, mv({0.0}, {})}};
    CHECK_THROWS_AS(pl_path_energy(one), std::invalid_argument);
    std::vector<std::pair<double, MinkVec>> bad = {{0.0, mv({0.0}, {})},
                                                   {0.0, mv({1.0}, {})}};
    CHECK_THROWS_AS(pl_path_energy(bad), std::invalid_argument);
  }
}

TEST_CASE("lorentz orthogonal negative direction") {
  SUBCASE("already orthogonal") {
    MinkVec v = lorentz_orthogonal_negative(mv({1.0, 0.0}, {0.0}));
    CHECK(v.pos.norm() == doctest::Approx(0.0));
    CHECK(v.neg(0) == doctest::Approx(1.0));
  }
  SUBCASE("mixed 1+1 segment") {
    const double a = 2.0, b = 1.0;
    MinkVec v = lorentz_orthogonal_negative(mv({a}, {b}));
    // v proportional to (b | a) with self-pairing -1
    const double k = 1.0 / std::sqrt(a * a - b * b);
    CHECK(v.pos(0) == doctest::Approx(b * k));
    CHECK(v.neg(0) == doctest::Approx(a * k));
  }
  SUBCASE("postconditions and scale invariance on random spacelike segments") {
    std::mt19937 rng(17u);
    std::uniform_real_distribution<double> U(-2.0, 2.0), S(0.1, 5.0);
    int done = 0;
    while (done < 100) {
      MinkVec seg = random_vec(rng, 3, 1);
      if (!(mink_pairing(seg, seg) > 1e-6))
        continue;
      ++done;
      MinkVec v = lorentz_orthogonal_negative(seg);
      CHECK(std::abs(mink_pairing(v, seg)) < 1e-10);
      CHECK(mink_pairing(v, v) == doctest::Approx(-1.0).epsilon(1e-10));
      MinkVec v2 = lorentz_orthogonal_negative(seg * S(rng));
      CHECK((v2.pos - v.pos).norm() + (v2.neg - v.neg).norm() < 1e-9);
    }
  }
  SUBCASE("rejects null and timelike segments") {
    CHECK_THROWS_AS(lorentz_orthogonal_negative(mv({1.0}, {1.0})), std::invalid_argument);
    CHECK_THROWS_AS(lorentz_orthogonal_negative(mv({1.0}, {2.0})), std::invalid_argument);
    CHECK_THROWS_AS(lorentz_orthogonal_negative(mv({1.0}, {})), std::invalid_argument);
  }
}

TEST_CASE("pl map storage") {
  PLMap m;
  m.set(3, mv({1.0}, {0.0}));
  CHECK(m.has(3));
  CHECK_FALSE(m.has(4));
  CHECK(m.image(3).pos(0) == 1.0);
  CHECK_THROWS_AS(m.image(4), std::invalid_argument);
}

TEST_CASE("ambient norm uses the full coordinate vector") {
  CHECK(ambient_norm(mv({3.0}, {4.0})) == doctest::Approx(5.0));
  CHECK(ambient_norm(MinkVec::zero(2, 1)) == 0.0);
}
