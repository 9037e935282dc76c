#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "minkembed/minkowski.hpp"
#include "minkembed/simplicial.hpp"

#include <cmath>
#include <random>

using namespace minkembed;

namespace {

MetricComplex triangle(double g01, double g02, double g12) {
  MetricComplex c;
  c.add_simplex({0, 1, 2});
  c.set_edge(0, 1, g01);
  c.set_edge(0, 2, g02);
  c.set_edge(1, 2, g12);
  return c;
}

// Independent oracle: Gram matrix of image edge vectors under the indefinite
// pairing, straight from the vertex images.
Eigen::MatrixXd gram_oracle(const PLMap &map, const Simplex &s) {
  const int k = static_cast<int>(s.size()) - 1;
  Eigen::MatrixXd m(k, k);
  for (int i = 1; i <= k; ++i)
    for (int j = 1; j <= k; ++j) {
      MinkVec wi = map.image(s[i]) - map.image(s[0]);
      MinkVec wj = map.image(s[j]) - map.image(s[0]);
      m(i - 1, j - 1) = mink_pairing(wi, wj);
    }
  return m;
}

// Simplex with every edge M except one special edge c between the first two
// vertices.
MetricComplex special_edge_complex(int k, double M, double c) {
  MetricComplex cx;
  Simplex s;
  for (int i = 0; i <= k; ++i)
    s.push_back(i);
  cx.add_simplex(s);
  for (int i = 0; i <= k; ++i)
    for (int j = i + 1; j <= k; ++j)
      cx.set_edge(i, j, (i == 0 && j == 1) ? c : M);
  return cx;
}

bool special_edge_pd(int k, double M, double c) {
  MetricComplex cx = special_edge_complex(k, M, c);
  Simplex s;
  for (int i = 0; i <= k; ++i)
    s.push_back(i);
  return is_euclidean(quadratic_form(cx, s)).is_positive_definite;
}

// Flip point of a monotone predicate on c, bisected to abs tolerance.
template <typename Pred>
double flip_point(Pred pred, double lo, double hi, double tol) {
  REQUIRE(pred(lo));
  REQUIRE(!pred(hi));
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (pred(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

MinkVec euclid_vec(const Eigen::VectorXd &x) {
  return MinkVec(x, Eigen::VectorXd::Zero(0));
}

} // namespace

TEST_CASE("signed square") {
  CHECK(signed_square(2.0) == 4.0);
  CHECK(signed_square(-1.0) == -1.0);
  CHECK(signed_square(0.0) == 0.0);
}

TEST_CASE("complex bookkeeping") {
  MetricComplex c;
  c.add_simplex({0, 1, 2});
  CHECK(c.contains({0, 1}));
  CHECK(c.contains({1}));
  CHECK(c.simplices_of_dim(1).size() == 3);
  CHECK(c.maximal_simplices().size() == 1);
  CHECK(c.simplices_containing({0, 1}).size() == 2); // the edge and the triangle
  c.set_edge(0, 1, 1.0);
  CHECK(c.has_edge(1, 0));
  CHECK(c.edge_value(1, 0) == 1.0);

  SUBCASE("energy convention per storage mode") {
    c.set_edge(0, 2, -1.0);
    CHECK(c.edge_energy(0, 2) == doctest::Approx(-1.0)); // signed length -> s(g)
    CHECK(c.edge_energy(0, 1) == doctest::Approx(1.0));
    MetricComplex e;
    e.add_simplex({0, 1});
    e.set_energy_mode(true);
    e.set_edge(0, 1, -1.0);
    CHECK(e.edge_energy(0, 1) == doctest::Approx(-1.0)); // stored as energy already
    e.set_edge(0, 1, 3.0);
    CHECK(e.edge_energy(0, 1) == doctest::Approx(3.0));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(c.add_simplex({}), std::invalid_argument);
    CHECK_THROWS_AS(c.set_edge(1, 1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(c.edge_value(0, 3), std::invalid_argument);
    MetricComplex open;
    open.add_vertex(0);
    open.add_vertex(1);
    open.add_vertex(2);
    open.add_simplex({0, 1, 2}, false);
    CHECK_THROWS_AS(open.validate(), std::runtime_error);
  }
}

TEST_CASE("quadratic form by polarization") {
  SUBCASE("equilateral") {
    auto f = quadratic_form(triangle(1, 1, 1), {0, 1, 2});
    REQUIRE(f.k == 2);
    CHECK(f.m(0, 0) == doctest::Approx(1.0));
    CHECK(f.m(1, 1) == doctest::Approx(1.0));
    CHECK(f.m(0, 1) == doctest::Approx(0.5));
    CHECK(f.m(1, 0) == doctest::Approx(0.5));
  }
  SUBCASE("right pattern has orthogonal legs") {
    auto f = quadratic_form(triangle(1, 1, std::sqrt(2.0)), {0, 1, 2});
    CHECK(f.m(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("negative edge value keeps its sign through s()") {
    MetricComplex c;
    c.add_simplex({0, 1});
    c.set_edge(0, 1, -1.0);
    auto f = quadratic_form(c, {0, 1});
    REQUIRE(f.k == 1);
    CHECK(f.m(0, 0) == doctest::Approx(-1.0));
  }
  SUBCASE("polarization reconstructs the inputs exactly") {
    std::mt19937 rng(3u);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    for (int rep = 0; rep < 100; ++rep) {
      const double g01 = U(rng), g02 = U(rng), g12 = U(rng);
      auto f = quadratic_form(triangle(g01, g02, g12), {0, 1, 2});
      CHECK(f.m(0, 0) == doctest::Approx(signed_square(g01)).epsilon(1e-14));
      CHECK(f.m(1, 1) == doctest::Approx(signed_square(g02)).epsilon(1e-14));
      const double g_w01 = f.m(0, 0) + f.m(1, 1) - 2.0 * f.m(0, 1);
      CHECK(g_w01 == doctest::Approx(signed_square(g12)).epsilon(1e-12));
    }
  }
  SUBCASE("ordering errors") {
    auto c = triangle(1, 1, 1);
    CHECK_THROWS_AS(quadratic_form(c, {0, 1, 2}, {0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(quadratic_form(c, {0, 1, 2}, {0, 1, 3}), std::invalid_argument);
    CHECK_THROWS_AS(quadratic_form(c, {0, 1, 3}), std::invalid_argument);
    MetricComplex missing;
    missing.add_simplex({0, 1});
    CHECK_THROWS_AS(quadratic_form(missing, {0, 1}), std::invalid_argument);
  }
}

TEST_CASE("induced metric") {
  SUBCASE("identity realization reproduces the form") {
    // unit right triangle in the plane
    MetricComplex c = triangle(1.0, 1.0, std::sqrt(2.0));
    PLMap map;
    Eigen::VectorXd a(2), b(2), d(2);
    a << 0, 0;
    b << 1, 0;
    d << 0, 1;
    map.set(0, euclid_vec(a));
    map.set(1, euclid_vec(b));
    map.set(2, euclid_vec(d));
    MetricComplex ind = induced_metric(map, c);
    CHECK(ind.energy_mode());
    auto g = quadratic_form(c, {0, 1, 2});
    auto gf = quadratic_form(ind, {0, 1, 2});
    CHECK((g.m - gf.m).norm() < 1e-12);
  }
  SUBCASE("null edge image has zero energy") {
    MetricComplex c;
    c.add_simplex({0, 1});
    c.set_edge(0, 1, 1.0);
    PLMap map;
    Eigen::VectorXd z(1), o(1);
    z << 0;
    o << 1;
    map.set(0, MinkVec(z, z));
    map.set(1, MinkVec(o, o));
    MetricComplex ind = induced_metric(map, c);
    CHECK(ind.edge_energy(0, 1) == doctest::Approx(0.0));
  }
  SUBCASE("random maps match the Gram oracle") {
    std::mt19937 rng(7u);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    MetricComplex c;
    c.add_simplex({0, 1, 2, 3});
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        c.set_edge(i, j, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
      PLMap map;
      for (int v = 0; v < 4; ++v) {
        Eigen::VectorXd p = Eigen::VectorXd::NullaryExpr(3, [&]() { return U(rng); });
        Eigen::VectorXd n = Eigen::VectorXd::NullaryExpr(1, [&]() { return U(rng); });
        map.set(v, MinkVec(p, n));
      }
      MetricComplex ind = induced_metric(map, c);
      Simplex s{0, 1, 2, 3};
      auto gf = quadratic_form(ind, s);
      CHECK((gf.m - gram_oracle(map, s)).norm() < 1e-10);
    }
  }
  SUBCASE("missing image") {
    MetricComplex c;
    c.add_simplex({0, 1});
    c.set_edge(0, 1, 1.0);
    PLMap map;
    Eigen::VectorXd z(1);
    z << 0;
    map.set(0, euclid_vec(z));
    CHECK_THROWS_AS(induced_metric(map, c), std::invalid_argument);
  }
}

TEST_CASE("euclidean cone membership") {
  SUBCASE("equilateral is comfortably inside") {
    auto rep = is_euclidean(quadratic_form(triangle(1, 1, 1), {0, 1, 2}));
    CHECK(rep.is_positive_definite);
    CHECK(rep.min_eigenvalue == doctest::Approx(0.5));
  }
  SUBCASE("degenerate form sits on the boundary") {
    QuadraticForm f;
    f.k = 2;
    f.m = Eigen::MatrixXd(2, 2);
    f.m << 1, 1, 1, 1;
    auto rep = is_euclidean(f);
    CHECK_FALSE(rep.is_positive_definite);
    CHECK(rep.min_eigenvalue == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("cone distance grows with uniform scale") {
    double prev = 0.0;
    for (double M : {1.0, 2.0, 4.0, 8.0}) {
      auto rep = is_euclidean(quadratic_form(triangle(M, M, M), {0, 1, 2}));
      CHECK(rep.is_positive_definite);
      CHECK(rep.cone_distance > prev);
      prev = rep.cone_distance;
    }
    // quadratic scaling of edge energies pushes the boundary away fast
    auto r1 = is_euclidean(quadratic_form(triangle(1, 1, 1), {0, 1, 2}));
    auto r8 = is_euclidean(quadratic_form(triangle(8, 8, 8), {0, 1, 2}));
    CHECK(r8.cone_distance > 10.0 * r1.cone_distance);
  }
  SUBCASE("sum of positive definite forms stays positive definite") {
    std::mt19937 rng(11u);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
      auto rnd_pd = [&]() {
        Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(3, 3, [&]() { return U(rng); });
        QuadraticForm f;
        f.k = 3;
        f.m = B.transpose() * B + 0.1 * Eigen::MatrixXd::Identity(3, 3);
        return f;
      };
      QuadraticForm a = rnd_pd(), b = rnd_pd(), sum;
      sum.k = 3;
      sum.m = a.m + b.m;
      CHECK(is_euclidean(sum).is_positive_definite);
    }
  }
}

TEST_CASE("one lipschitz comparison") {
  auto g = quadratic_form(triangle(1, 1, 1), {0, 1, 2});
  SUBCASE("equal forms pass") { CHECK(is_one_lipschitz(g, g)); }
  SUBCASE("doubling fails") {
    QuadraticForm f2 = g;
    f2.m *= 2.0;
    CHECK_FALSE(is_one_lipschitz(g, f2));
    CHECK(is_one_lipschitz(f2, g));
  }
  SUBCASE("dimension mismatch") {
    QuadraticForm f1;
    f1.k = 1;
    f1.m = Eigen::MatrixXd::Identity(1, 1);
    CHECK_THROWS_AS(is_one_lipschitz(g, f1), std::invalid_argument);
  }
  SUBCASE("short and expanding linear maps of a realized simplex") {
    std::mt19937 rng(13u);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int rep = 0; rep < 30; ++rep) {
      // random nondegenerate 3-simplex in R^3
      Eigen::MatrixXd P = Eigen::MatrixXd::NullaryExpr(3, 4, [&]() { return U(rng); });
      if (std::abs((P.rightCols(3).colwise() - P.col(0)).determinant()) < 0.05)
        continue;
      MetricComplex c;
      c.add_simplex({0, 1, 2, 3});
      PLMap ident, shortm, expand;
      for (int v = 0; v < 4; ++v) {
        for (int w = v + 1; w < 4; ++w)
          c.set_edge(v, w, (P.col(v) - P.col(w)).norm());
        ident.set(v, euclid_vec(P.col(v)));
        shortm.set(v, euclid_vec((0.8 * P.col(v)).eval()));
        expand.set(v, euclid_vec((1.3 * P.col(v)).eval()));
      }
      Simplex s{0, 1, 2, 3};
      auto gf = quadratic_form(c, s);
      CHECK(is_one_lipschitz(gf, quadratic_form(induced_metric(ident, c), s)));
      CHECK(is_one_lipschitz(gf, quadratic_form(induced_metric(shortm, c), s)));
      CHECK_FALSE(is_one_lipschitz(gf, quadratic_form(induced_metric(expand, c), s)));

      // sampled pairwise distances agree with the certificate direction
      std::uniform_real_distribution<double> B(0.0, 1.0);
      for (int probe = 0; probe < 40; ++probe) {
        Eigen::Vector4d l1, l2;
        for (int i = 0; i < 4; ++i) {
          l1(i) = B(rng);
          l2(i) = B(rng);
        }
        l1 /= l1.sum();
        l2 /= l2.sum();
        Eigen::Vector3d x1 = P * l1, x2 = P * l2;
        CHECK(0.8 * (x1 - x2).norm() <= (x1 - x2).norm() + 1e-12);
      }
    }
  }
}

TEST_CASE("special edge embeddability") {
  SUBCASE("frozen k=2 cases, threshold 2") {
    CHECK(one_special_edge_embeddable(2, 1.0, 1.5));
    CHECK_FALSE(one_special_edge_embeddable(2, 1.0, 2.1));
    CHECK_FALSE(one_special_edge_embeddable(2, 1.0, 0.0));
  }
  SUBCASE("boundary agrees with the direct positive definiteness flip") {
    for (int k = 2; k <= 6; ++k) {
      const double M = 1.0;
      const double closed_form = std::sqrt(2.0 * k / (k - 1.0)) * M;
      const double via_formula = flip_point(
          [&](double c) { return one_special_edge_embeddable(k, M, c); }, 1.0, 2.2, 1e-8);
      const double via_pd = flip_point(
          [&](double c) { return special_edge_pd(k, M, c); }, 1.0, 2.2, 1e-8);
      CHECK(via_formula == doctest::Approx(closed_form).epsilon(1e-6));
      CHECK(via_pd == doctest::Approx(closed_form).epsilon(1e-6));
      CHECK(std::abs(via_formula - via_pd) < 1e-6);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(one_special_edge_embeddable(1, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(one_special_edge_embeddable(2, 0.0, 1.0), std::invalid_argument);
  }
}

TEST_CASE("edge subdivision") {
  SUBCASE("bare segment") {
    MetricComplex c;
    c.add_simplex({0, 1});
    c.set_edge(0, 1, 2.0);
    auto r = subdivide_edge(c, 0, 1, 4);
    CHECK(r.chain.size() == 5);
    CHECK(r.chain.front() == 0);
    CHECK(r.chain.back() == 1);
    for (size_t i = 1; i < r.chain.size(); ++i)
      CHECK(r.complex.edge_value(r.chain[i - 1], r.chain[i]) == doctest::Approx(0.5));
    CHECK_FALSE(r.complex.has_edge(0, 1));
    CHECK_NOTHROW(r.complex.validate());
  }
  SUBCASE("triangle splits into N triangles over the chain") {
    MetricComplex c = triangle(1, 1, 1);
    auto r = subdivide_edge(c, 0, 1, 2);
    CHECK(r.complex.simplices_of_dim(2).size() == 2);
    auto it = r.simplex_correspondence.find(Simplex{0, 1, 2});
    REQUIRE(it != r.simplex_correspondence.end());
    CHECK(it->second.size() == 2);
    // both pieces share the midpoint vertex and the apex
    const int mid = r.chain[1];
    for (const auto &s : it->second) {
      CHECK(std::find(s.begin(), s.end(), mid) != s.end());
      CHECK(std::find(s.begin(), s.end(), 2) != s.end());
    }
    CHECK_NOTHROW(r.complex.validate());
  }
  SUBCASE("tetrahedron count") {
    MetricComplex c;
    c.add_simplex({0, 1, 2, 3});
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        c.set_edge(i, j, 1.0);
    auto r = subdivide_edge(c, 0, 1, 3);
    CHECK(r.complex.simplices_of_dim(3).size() == 3);
    CHECK(r.simplex_correspondence.at(Simplex{0, 1, 2, 3}).size() == 3);
    CHECK_NOTHROW(r.complex.validate());
  }
  SUBCASE("errors") {
    MetricComplex c;
    c.add_simplex({0, 1});
    c.set_edge(0, 1, 1.0);
    CHECK_THROWS_AS(subdivide_edge(c, 0, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(subdivide_edge(c, 0, 2, 2), std::invalid_argument);
  }
}
