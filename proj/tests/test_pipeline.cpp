#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "minkembed/pipeline.hpp"

#include <cmath>
#include <string>

using namespace minkembed;

namespace {

FiniteLengthSpace tripod() {
  return FiniteLengthSpace({"o", "x", "y", "z"},
                           {{0, 1, 1.0}, {0, 2, 1.0}, {0, 3, 1.0}});
}

FiniteLengthSpace theta() {
  return FiniteLengthSpace({"A", "B"}, {{0, 1, 2.0}, {0, 1, 2.0}, {0, 1, 3.0}});
}

// four terminals a,b,c,d with junctions e,f so that the six geodesics share
// segments [a,e], [b,f], [f,d] and cross transversally at f
FiniteLengthSpace junction_graph() {
  const double r2 = std::sqrt(2.0), r5 = std::sqrt(5.0);
  return FiniteLengthSpace({"a", "b", "c", "d", "e", "f"},
                           {{0, 4, 2.0},
                            {4, 1, 1.0},
                            {0, 2, 3.0},
                            {2, 3, r5},
                            {4, 5, 1.0},
                            {5, 3, 1.0},
                            {1, 5, r2},
                            {5, 2, 2.0 * r2}});
}

GeodesicRecord hand_route(const FiniteLengthSpace &space, int edge, const Loc &a,
                          const Loc &b, double len) {
  GeodesicRecord r;
  r.a = a;
  r.b = b;
  r.route = {{edge, 0.0, len, 0.0}};
  r.length = len;
  (void)space;
  return r;
}

const ReportEntry *entry_named(const VerificationReport &rep, const std::string &name) {
  for (const auto &e : rep.entries)
    if (e.name == name)
      return &e;
  return nullptr;
}

void check_all_ok(const VerificationReport &rep) {
  REQUIRE_FALSE(rep.entries.empty());
  for (const auto &e : rep.entries) {
    CAPTURE(e.name);
    CAPTURE(e.value);
    CAPTURE(e.detail);
    CHECK(e.ok);
  }
  CHECK(rep.all_ok());
}

} // namespace

TEST_CASE("intersection classes") {
  SUBCASE("disjoint") {
    FiniteLengthSpace s({"A", "B", "C", "D", "E"},
                        {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {3, 4, 1.0}});
    auto g1 = trace_route(s, Loc::at_vertex(0), Loc::at_vertex(1));
    auto g2 = trace_route(s, Loc::at_vertex(3), Loc::at_vertex(4));
    CHECK(intersection_class(s, g1, g2) == 0);
  }
  SUBCASE("single point") {
    FiniteLengthSpace s = tripod();
    auto g1 = trace_route(s, Loc::at_vertex(1), Loc::at_vertex(2));
    auto g2 = trace_route(s, Loc::at_vertex(3), Loc::at_vertex(0));
    CHECK(intersection_class(s, g1, g2) == 1);
  }
  SUBCASE("shared interval") {
    FiniteLengthSpace s({"A", "B", "C", "D"}, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}});
    auto g1 = trace_route(s, Loc::at_vertex(0), Loc::at_vertex(2));
    auto g2 = trace_route(s, Loc::at_vertex(1), Loc::at_vertex(3));
    CHECK(intersection_class(s, g1, g2) == 2);
  }
  SUBCASE("two isolated contacts") {
    FiniteLengthSpace s = theta();
    auto g1 = trace_route(s, Loc::at_vertex(0), Loc::at_vertex(1));
    auto g2 = hand_route(s, 1, Loc::at_vertex(0), Loc::at_vertex(1), 2.0);
    CHECK(intersection_class(s, g1, g2) == 3);
  }
}

TEST_CASE("intersection repair") {
  SUBCASE("broken pair is rerouted onto the kept geodesic") {
    FiniteLengthSpace s = theta();
    GeodesicFamily fam;
    fam.space = &s;
    fam.D = {Loc::at_vertex(0), Loc::at_vertex(1)};
    fam.stage_of_point = {1, 1};
    FamilyGeodesic g1;
    g1.a = 0;
    g1.b = 1;
    g1.route = trace_route(s, Loc::at_vertex(0), Loc::at_vertex(1));
    FamilyGeodesic g2 = g1;
    g2.route = hand_route(s, 1, Loc::at_vertex(0), Loc::at_vertex(1), 2.0);
    g2.route.orig = 1;
    fam.gamma = {g1, g2};
    REQUIRE(intersection_class(s, fam.gamma[0].route, fam.gamma[1].route) == 3);

    GeodesicFamily fixed = fix_intersections(fam);
    CHECK(intersection_class(s, fixed.gamma[0].route, fixed.gamma[1].route) == 2);
    CHECK(fixed.gamma[1].route.length == doctest::Approx(2.0));
    CHECK(fixed.gamma[0].route.route[0].edge == fam.gamma[0].route.route[0].edge);
    CHECK(fixed.gamma[1].route.route[0].edge == fixed.gamma[0].route.route[0].edge);
  }
  SUBCASE("disjoint family is untouched") {
    FiniteLengthSpace s({"A", "B", "C", "D", "E"},
                        {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {3, 4, 1.0}});
    GeodesicFamily fam = make_family(s, {{Loc::at_vertex(0), Loc::at_vertex(4)}});
    GeodesicFamily fixed = fix_intersections(fam);
    CHECK(fixed.gamma.size() == 1);
    CHECK(fixed.gamma[0].route.length == doctest::Approx(4.0));
  }
  SUBCASE("four-terminal families end up pairwise allowable") {
    FiniteLengthSpace s = junction_graph();
    GeodesicFamily fam = fix_intersections(make_family(
        s, {{Loc::at_vertex(0), Loc::at_vertex(1), Loc::at_vertex(2), Loc::at_vertex(3)}}));
    for (size_t i = 0; i < fam.gamma.size(); ++i)
      for (size_t j = i + 1; j < fam.gamma.size(); ++j)
        CHECK(intersection_class(s, fam.gamma[i].route, fam.gamma[j].route) <= 2);
  }
}

TEST_CASE("derived marked points and primed pieces") {
  SUBCASE("junction graph grows two points and eight pieces") {
    FiniteLengthSpace s = junction_graph();
    GeodesicFamily fam = derive_prime(fix_intersections(make_family(
        s, {{Loc::at_vertex(0), Loc::at_vertex(1), Loc::at_vertex(2), Loc::at_vertex(3)}})));
    CHECK(fam.gamma.size() == 6);
    REQUIRE(fam.Dprime.size() == 6);
    bool has_e = false, has_f = false;
    for (const auto &p : fam.Dprime) {
      if (s.same_point(p, Loc::at_vertex(4)))
        has_e = true;
      if (s.same_point(p, Loc::at_vertex(5)))
        has_f = true;
    }
    CHECK(has_e);
    CHECK(has_f);
    REQUIRE(fam.gamma_prime.size() == 8);

    const double r2 = std::sqrt(2.0), r5 = std::sqrt(5.0);
    double total = 0.0;
    for (const auto &pg : fam.gamma_prime) {
      CHECK(pg.route.length > 0.0);
      CHECK(pg.a != pg.b);
      total += pg.route.length;
    }
    CHECK(total == doctest::Approx(8.0 + 3.0 * r2 + r5));
    for (size_t i = 0; i < fam.gamma_prime.size(); ++i)
      for (size_t j = i + 1; j < fam.gamma_prime.size(); ++j)
        CHECK(intersection_class(s, fam.gamma_prime[i].route,
                                 fam.gamma_prime[j].route) <= 1);
  }
  SUBCASE("no intersections leaves the family alone") {
    FiniteLengthSpace s({"A", "B", "C"}, {{0, 1, 1.0}, {1, 2, 1.0}});
    GeodesicFamily fam =
        derive_prime(make_family(s, {{Loc::at_vertex(0), Loc::at_vertex(2)}}));
    CHECK(fam.Dprime.size() == 2);
    CHECK(fam.gamma_prime.size() == 1);
    CHECK(fam.gamma_prime[0].route.length == doctest::Approx(2.0));
  }
  SUBCASE("duplicate marked point") {
    FiniteLengthSpace s({"A", "B"}, {{0, 1, 1.0}});
    CHECK_THROWS_AS(make_family(s, {{Loc::at_vertex(0), Loc::at_vertex(0)}}),
                    std::runtime_error);
    CHECK_THROWS_AS(
        make_family(s, {{Loc::at_vertex(0)}, {Loc::on_edge(0, 0.0)}}),
        std::runtime_error);
  }
}

TEST_CASE("stage restriction") {
  FiniteLengthSpace s = tripod();
  GeodesicFamily fam = derive_prime(fix_intersections(make_family(
      s, {{Loc::at_vertex(1), Loc::at_vertex(2)}, {Loc::at_vertex(3)}})));

  SUBCASE("stage one sees only the first pair") {
    GeodesicFamily f1 = family_at_stage(fam, 1);
    CHECK(f1.D.size() == 2);
    CHECK(f1.gamma.size() == 1);
    CHECK(f1.Dprime.size() == 2);
    CHECK(f1.gamma_prime.size() == 1);
    CHECK(f1.gamma_prime[0].route.length == doctest::Approx(2.0));
  }
  SUBCASE("stage two splits everything at the junction") {
    GeodesicFamily f2 = family_at_stage(fam, 2);
    CHECK(f2.D.size() == 3);
    CHECK(f2.gamma.size() == 3);
    REQUIRE(f2.Dprime.size() == 4);
    CHECK(s.same_point(f2.Dprime[3], Loc::at_vertex(0)));
    CHECK(f2.stage_of_prime_point[3] == 2);
    REQUIRE(f2.gamma_prime.size() == 3);
    for (const auto &pg : f2.gamma_prime)
      CHECK(pg.route.length == doctest::Approx(1.0));
  }
  SUBCASE("later stages need the previous result") {
    StageConfig cfg;
    CHECK_THROWS_AS(build_stage(s, fam, 2, nullptr, cfg), std::runtime_error);
  }
}

TEST_CASE("single edge space embeds energy-exactly at stage one") {
  FiniteLengthSpace s({"A", "B"}, {{0, 1, 4.0}});
  GeodesicFamily fam = derive_prime(fix_intersections(
      make_family(s, {{Loc::at_vertex(0), Loc::at_vertex(1)}})));
  StageConfig cfg;
  cfg.stages = 1;
  cfg.sample_depth = 128;
  StageResult s1 = build_stage(s, fam, 1, nullptr, cfg);
  CHECK(s1.constants.epsilon < s1.constants.beta);
  CHECK(s1.constants.beta < s1.constants.alpha);
  CHECK(s1.constants.alpha < s1.constants.delta0 / 3.0);

  VerificationReport rep = verify(s, fam, {s1}, cfg);
  check_all_ok(rep);
  const ReportEntry *energy = entry_named(rep, "stage 1 energy");
  REQUIRE(energy != nullptr);
  CHECK(energy->value < 1e-6);
}

TEST_CASE("tripod single stage run") {
  FiniteLengthSpace s = tripod();
  GeodesicFamily fam = derive_prime(fix_intersections(make_family(
      s, {{Loc::at_vertex(1), Loc::at_vertex(2), Loc::at_vertex(3)}})));
  CHECK(fam.Dprime.size() == 4);
  CHECK(fam.gamma_prime.size() == 3);

  StageConfig cfg;
  cfg.stages = 1;
  cfg.sample_depth = 128;
  StageResult s1 = build_stage(s, fam, 1, nullptr, cfg);
  VerificationReport rep = verify(s, fam, {s1}, cfg);
  check_all_ok(rep);

  const ReportEntry *inj = entry_named(rep, "stage 1 injectivity");
  REQUIRE(inj != nullptr);
  CHECK(inj->value > 0.0);

  // between marked vertices the shortest chain walks the subdivision edges:
  // pieces + 1 hops per leg, each of length (1 - omega) * xi
  const auto &net = s1.net;
  const Cover &cov = net.cover;
  const double om = s1.constants.omega;
  auto leg = [&](int pi, int pj) -> const TruncatedSegment * {
    for (const auto &seg : cov.segments) {
      const auto &g = cov.geodesics[seg.geodesic];
      if ((g.d_a == pi && g.d_b == pj) || (g.d_a == pj && g.d_b == pi)) return &seg;
    }
    return nullptr;
  };
  for (size_t i = 0; i < fam.Dprime.size(); ++i)
    for (size_t j = i + 1; j < fam.Dprime.size(); ++j) {
      double expected = 0.0;
      if (const TruncatedSegment *seg = leg(static_cast<int>(i), static_cast<int>(j))) {
        expected = (seg->pieces + 1) * (1.0 - om) * seg->xi;
      } else {
        for (size_t k = 0; k < fam.Dprime.size() && expected == 0.0; ++k) {
          if (k == i || k == j) continue;
          const TruncatedSegment *a = leg(static_cast<int>(i), static_cast<int>(k));
          const TruncatedSegment *b = leg(static_cast<int>(k), static_cast<int>(j));
          if (a && b)
            expected = (a->pieces + 1) * (1.0 - om) * a->xi +
                       (b->pieces + 1) * (1.0 - om) * b->xi;
        }
      }
      REQUIRE(expected > 0.0);
      const double dx = s.distance(fam.Dprime[i], fam.Dprime[j]);
      const double dn = nerve_distance(
          s1.g_pre, vertex_point(net.u_vertex_of_point[i]),
          vertex_point(net.u_vertex_of_point[j]), 200);
      CHECK(dn == doctest::Approx(expected).epsilon(1e-9));
      CHECK(dn < (1.0 - om) * dx + 1e-12);
      CHECK(dn > 0.5 * dx);
    }
}

TEST_CASE("two stage tripod run") {
  FiniteLengthSpace s = tripod();
  GeodesicFamily fam = derive_prime(fix_intersections(make_family(
      s, {{Loc::at_vertex(1), Loc::at_vertex(2)}, {Loc::at_vertex(3)}})));

  StageConfig cfg;
  cfg.stages = 2;
  cfg.sample_depth = 128;
  StageResult s1 = build_stage(s, fam, 1, nullptr, cfg);
  StageResult s2 = build_stage(s, fam, 2, &s1, cfg);
  embed_next(s1, s2, s2.constants.rho);

  SUBCASE("verification report is clean") {
    VerificationReport rep = verify(s, fam, {s1, s2}, cfg);
    check_all_ok(rep);

    const ReportEntry *growth = entry_named(rep, "transverse growth");
    REQUIRE(growth != nullptr);
    CHECK(growth->value > 1.0);
    const ReportEntry *neg = entry_named(rep, "stage 2 negative stability");
    REQUIRE(neg != nullptr);
    CHECK(neg->value == 0.0);
  }
  SUBCASE("scales shrink between stages") {
    CHECK(s2.constants.delta0 <= s1.constants.delta);
    CHECK(s2.constants.alpha < s1.constants.alpha);
    CHECK(s2.constants.M >= 2.0 * s1.constants.M);
    CHECK(s2.constants.omega == doctest::Approx(1.0 / 16.0));
    CHECK(s1.constants.omega == doctest::Approx(1.0 / 8.0));
  }
  SUBCASE("refinement map collapses no interior vertex pair") {
    // vertices of persisting tubes land inside the previous tube chain
    const Cover &cov = s2.net.cover;
    int interior = 0;
    for (const auto &seg : cov.segments) {
      if (s2.link.geo_prev[seg.geodesic] < 0)
        continue;
      for (int k = 0; k < seg.pieces; k += 50) {
        const auto &img = s2.phi_map.vertex_images.at(seg.v_sets[k]);
        CHECK(img.support().size() <= 2);
        ++interior;
      }
    }
    CHECK(interior > 0);
  }
}
