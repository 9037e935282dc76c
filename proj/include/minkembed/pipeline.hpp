#pragma once

#include "minkembed/cover_nerve.hpp"
#include "minkembed/metric_core.hpp"
#include "minkembed/minkowski.hpp"
#include "minkembed/simplicial.hpp"
#include "minkembed/wiggle.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace minkembed {

struct FamilyGeodesic {
  int a = -1, b = -1; // indices into D
  int stage = 1;
  GeodesicRecord route;
};

// Piece of a family geodesic between consecutive marked points. Pieces shared
// by several geodesics are stored once, attributed to the earliest parent.
struct PrimedGeodesic {
  int orig = -1; // index into gamma
  int a = -1, b = -1; // indices into Dprime
  int stage = 1;
  GeodesicRecord route;
};

struct GeodesicFamily {
  const FiniteLengthSpace *space = nullptr;
  std::vector<Loc> D;
  std::vector<int> stage_of_point;
  std::vector<FamilyGeodesic> gamma;
  std::vector<Loc> Dprime;
  std::vector<int> stage_of_prime_point;
  std::vector<PrimedGeodesic> gamma_prime;
};

GeodesicFamily make_family(const FiniteLengthSpace &space,
                           const std::vector<std::vector<Loc>> &stage_points);

// 0: disjoint, 1: single point, 2: single shared interval,
// 3: broken (two or more separate components, not allowable).
int intersection_class(const FiniteLengthSpace &space, const GeodesicRecord &a,
                       const GeodesicRecord &b);

// Reroute newer geodesics through older ones until every pair is allowable.
GeodesicFamily fix_intersections(GeodesicFamily family);

// Populate Dprime / gamma_prime: marked points are the terminals plus isolated
// intersection points plus shared-interval endpoints; routes split at every
// marked point lying on them.
GeodesicFamily derive_prime(GeodesicFamily family);

// Family restricted to terminals and geodesics of stage <= s (prime data cleared).
GeodesicFamily family_at_stage(const GeodesicFamily &family, int s);

struct StageConstants {
  double delta0 = 0.0; // separation scale the cover was built against
  double alpha = 0.0, alpha_prime = 0.0;
  double beta = 0.0, beta_prime = 0.0;
  double epsilon = 0.0;
  double xi_max = 0.0;
  double omega = 0.0;
  double M = 0.0;
  double rho = 0.0;
  double rho_cap = 0.0, rho_mu_bound = 0.0, rho_delta_bound = 0.0;
  double delta = 0.0; // Lebesgue number of this stage's cover
};

// Repair record for one nerve chain edge: the subdivision vertices along it
// (uniform parameter spacing, endpoints included) and the image length the
// repaired edge realizes.
struct ChainEdgeInfo {
  std::vector<int> verts;
  double target = 0.0;
  int kind = 0; // 0 untouched, 1 zigzag, 2 wiggle
};

struct StageResult {
  int stage = 1;
  GeodesicFamily family; // restricted to this stage, primes populated
  Nerve net;
  MetricComplex g_pre; // edge values before calibration, original complex
  MetricComplex g;     // calibrated metric on the repaired complex
  PLMap h;
  StageConstants constants;
  StageLink link;    // correspondence into the previous stage (stage >= 2)
  NerveMap phi_map;  // vertex images in the previous nerve (stage >= 2)
  std::map<std::pair<int, int>, ChainEdgeInfo> chains;
  std::vector<std::string> notes;
};

struct StageConfig {
  int stages = 2;
  int pos_dim = 0; // 0 = auto: 7 for single-stage runs, 9 for staged runs
  int neg_dim = 1;
  double delta0 = 0.0; // 0 = auto: min pairwise distance over the terminals
  double rho_cap = 0.125;
  std::vector<double> omega; // per-stage override; default 2^-i / 4
  int sample_depth = 1024;
};

StageResult build_stage(const FiniteLengthSpace &space, const GeodesicFamily &family,
                        int stage, const StageResult *prev, const StageConfig &config);

// Fill next.h (and the calibrated metric) from prev via the refinement map:
// start at h_prev composed with phi, re-exactify chain edges, certify
// shortness. rho is the approximation budget.
PLMap embed_next(const StageResult &prev, StageResult &next, double rho);

// Image of a nerve point under the stage embedding (handles repaired edges).
MinkVec eval_nerve_point(const StageResult &st, const NervePoint &p);
// Composition h . psi at a space point.
MinkVec f_eval(const StageResult &st, const Loc &x);

struct ReportEntry {
  std::string name;
  bool ok = false;
  double value = 0.0;
  std::string detail;
};

struct VerificationReport {
  std::vector<ReportEntry> entries;
  bool all_ok() const;
};

VerificationReport verify(const FiniteLengthSpace &space, const GeodesicFamily &family,
                          const std::vector<StageResult> &stages,
                          const StageConfig &config);

} // namespace minkembed
