#pragma once

#include "minkembed/metric_core.hpp"
#include "minkembed/simplicial.hpp"

#include <map>
#include <optional>
#include <vector>

namespace minkembed {

// Oriented piece of a route: arc coordinates a0 -> a1 on one edge (a0 > a1
// when traversed against the edge orientation). cum is the route arc length
// at the start of the piece.
struct RoutePiece {
  int edge = -1;
  double a0 = 0.0, a1 = 0.0;
  double cum = 0.0;
};

struct GeodesicRecord {
  int orig = -1; // id shared by pieces split off the same original geodesic
  Loc a, b;
  int d_a = -1, d_b = -1; // endpoint indices into the cover's point list
  std::vector<RoutePiece> route;
  double length = 0.0;
};

GeodesicRecord trace_route(const FiniteLengthSpace &space, const Loc &a, const Loc &b);
Loc route_point(const FiniteLengthSpace &space, const GeodesicRecord &g, double s);
std::optional<double> route_locate(const FiniteLengthSpace &space, const GeodesicRecord &g,
                                   const Loc &x);

// Open interval (lo, hi) in arc length on an edge.
struct SetInterval {
  int edge = -1;
  double lo = 0.0, hi = 0.0;
};

enum class SetTag { U, V, W };

struct CoverSet {
  SetTag tag = SetTag::W;
  std::vector<SetInterval> intervals;
  Loc anchor;
  double anchor_arc = 0.0; // V: arc position of the subinterval midpoint
  int geodesic = -1;       // V: index into Cover::geodesics
  int sub_index = -1;      // V: subinterval number along the segment
  int point = -1;          // U: index into Cover::points
};

struct TruncatedSegment {
  int geodesic = -1;
  double s0 = 0.0, s1 = 0.0; // window on the geodesic with the end balls removed
  int pieces = 0;
  double xi = 0.0;
  std::vector<int> v_sets;
  int u_start = -1, u_end = -1;
  double mid_arc(int k) const { return s0 + (k + 0.5) * xi; }
};

struct Cover {
  const FiniteLengthSpace *space = nullptr;
  std::vector<CoverSet> sets;
  std::vector<GeodesicRecord> geodesics;
  std::vector<Loc> points;
  std::vector<int> u_set_of_point;
  std::vector<TruncatedSegment> segments;
  int stage = 1;
  double delta_prev = 0.0;
  double alpha = 0.0, alpha_prime = 0.0;
  double beta = 0.0, beta_prime = 0.0;
  double epsilon = 0.0;
  double max_xi = 0.0;
};

// Persisting-midpoint constraint for one geodesic: midpoints of the previous
// stage sit at anchor + k * spacing (arc coordinates of this stage's record)
// inside [lo, hi] and must remain subinterval midpoints.
struct SubdivisionPlan {
  int geodesic = -1;
  double spacing = 0.0;
  double anchor = 0.0;
  double lo = 0.0, hi = 0.0;
};

Cover build_U(const FiniteLengthSpace &space, const std::vector<Loc> &points,
              const std::vector<GeodesicRecord> &geodesics, double delta0);
Cover build_V(Cover cover, double beta_cap, const std::vector<SubdivisionPlan> &plans);
Cover build_W(Cover cover, double epsilon);

struct CoverStats {
  int order = 0;
  double mesh = 0.0;
  double lebesgue = 0.0;
  bool covers_space = false;
};
CoverStats cover_stats(const Cover &cover);

struct Nerve {
  MetricComplex complex;
  Cover cover;
  std::vector<int> u_vertex_of_point;
};
Nerve nerve(const Cover &cover);

// stage-1 values (omega == 0): edges inside the protected families get the
// space distance between their anchors; any edge touching a W vertex gets M.
// Later stages (omega > 0): protected edges get (1 - omega) * xi instead.
MetricComplex metrize_nerve(const Nerve &n, int stage, double M, double omega);

struct PartitionOfUnity {
  const Cover *cover = nullptr;
  std::vector<std::pair<int, double>> weights(const Loc &x) const;
};
PartitionOfUnity make_partition(const Cover &cover);

struct NervePoint {
  Simplex simplex;
  Eigen::VectorXd bary;
  Simplex support(double tol = 1e-12) const;
};
NervePoint vertex_point(int v);

NervePoint psi(const Loc &x, const Cover &cover, const PartitionOfUnity &pu);

struct NerveMap {
  std::map<int, NervePoint> vertex_images;
};
struct StageLink {
  std::vector<int> point_prev;       // next D' index -> prev D' index or -1
  std::vector<int> geo_prev;         // next geodesic -> prev geodesic or -1
  std::vector<double> geo_arc_offset; // next arc + offset = prev arc
};
NerveMap phi(const Nerve &next, const Nerve &prev, const StageLink &link);

struct ChainWitness {
  std::vector<Simplex> simplices;
  std::vector<NervePoint> points;
  double length = 0.0;
};
double nerve_distance(const MetricComplex &complex, const NervePoint &x,
                      const NervePoint &y, int cap, ChainWitness *witness = nullptr);

double point_distance_in_simplex(const MetricComplex &complex, const Simplex &s,
                                 const NervePoint &x, const NervePoint &y);
double barycenter_boundary_distance(const QuadraticForm &form);

// Exact 1-D set machinery (unions of open edge intervals).
std::vector<SetInterval> tube_intervals(const FiniteLengthSpace &space,
                                        const std::vector<SetInterval> &core, double r);
std::vector<SetInterval> ball_intervals(const FiniteLengthSpace &space, const Loc &center,
                                        double r);
bool point_in_intervals(const FiniteLengthSpace &space, const std::vector<SetInterval> &s,
                        const Loc &x, bool open);
double distance_to_set(const FiniteLengthSpace &space, const std::vector<SetInterval> &s,
                       const Loc &x);
double distance_to_complement(const FiniteLengthSpace &space,
                              const std::vector<SetInterval> &s, const Loc &x);
double set_distance(const FiniteLengthSpace &space, const std::vector<SetInterval> &a,
                    const std::vector<SetInterval> &b);
double set_diameter(const FiniteLengthSpace &space, const std::vector<SetInterval> &s);
bool interval_union_contains(const FiniteLengthSpace &space,
                             const std::vector<SetInterval> &big,
                             const std::vector<SetInterval> &small);

} // namespace minkembed
