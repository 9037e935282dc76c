#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace minkembed {

// A point of a metric graph: a vertex, or a position along an edge.
struct Loc {
  int vertex = -1;   // >= 0 when the point is a vertex
  int edge = -1;     // >= 0 when the point lies on an edge
  double frac = 0.0; // position along the edge, 0 at edge.u, 1 at edge.v

  static Loc at_vertex(int v) { return Loc{v, -1, 0.0}; }
  static Loc on_edge(int e, double t) { return Loc{-1, e, t}; }
  bool is_vertex() const { return vertex >= 0; }
};

struct GraphEdge {
  int u = 0, v = 0;
  double w = 0.0;
};

// Finite connected weighted graph carrying the shortest-path length metric.
// Interior edge points are addressable, so the space is a genuine length
// space, not just a finite metric.
class FiniteLengthSpace {
public:
  FiniteLengthSpace(std::vector<std::string> names, std::vector<GraphEdge> edges);

  int vertex_count() const { return static_cast<int>(names_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  const GraphEdge &edge(int i) const { return edges_.at(i); }
  const std::string &name(int i) const { return names_.at(i); }
  int index_of(const std::string &name) const;

  double vertex_distance(int a, int b) const;
  double distance(const Loc &x, const Loc &y) const;

  // Shortest edge-path between vertices, as the vertex sequence a .. b.
  std::vector<int> witness(int a, int b) const;
  // Shortest route between arbitrary points: x, intermediate vertices, y.
  std::vector<Loc> witness_locs(const Loc &x, const Loc &y) const;

  // Canonical form: edge endpoints become vertex locs, vertex-valued edge
  // fractions snap to the endpoint.
  Loc canonical(const Loc &x, double tol = 1e-12) const;
  bool same_point(const Loc &x, const Loc &y, double tol = 1e-9) const;

private:
  std::vector<std::string> names_;
  std::vector<GraphEdge> edges_;
  Eigen::MatrixXd dist_;
  Eigen::MatrixXi next_; // next-hop table for witness reconstruction
};

// Path as ordered (t, point) samples; between samples the path follows the
// shortest route at constant speed.
struct ParamPath {
  std::vector<double> times;
  std::vector<Loc> locs;

  double a() const { return times.front(); }
  double b() const { return times.back(); }
  void validate() const;
};

struct Geodesic {
  ParamPath path;
  double velocity = 0.0;
};

// Pre-resolved routes between consecutive samples, for fast evaluation.
class CompiledPath {
public:
  CompiledPath(const FiniteLengthSpace &space, const ParamPath &path);
  Loc eval(double t) const;
  double domain_a() const { return path_.a(); }
  double domain_b() const { return path_.b(); }

private:
  struct Leg {
    std::vector<Loc> nodes;
    std::vector<double> cum; // cumulative length at each node
    double t0 = 0.0, t1 = 0.0;
  };
  const FiniteLengthSpace &space_;
  ParamPath path_;
  std::vector<Leg> legs_;
  Loc point_on_leg(const Leg &leg, double arc) const;
};

ParamPath geodesic_path(const FiniteLengthSpace &space, const Loc &x, const Loc &y,
                        double a, double b);
Geodesic make_geodesic(const FiniteLengthSpace &space, const Loc &x, const Loc &y,
                       double a, double b);

double path_length(const FiniteLengthSpace &space, const ParamPath &path, int n);
double path_energy(const FiniteLengthSpace &space, const ParamPath &path, int n);

// One refinement step of the energy triangle inequality:
// d(p,r)^2/eps <= d(p,q)^2/delta + d(q,r)^2/(eps-delta).
struct EnergyStep {
  bool holds = false;
  bool equality = false;
};
EnergyStep energy_step_triangle(double dpq, double dqr, double dpr, double delta,
                                double eps);

double geodesic_energy(double d, double a, double b);

double perturbation_constant(double C1, int n, double a, double b);

using AmbientMap = std::function<Eigen::VectorXd(const Loc &)>;

// Checks the perturbed-energy inequality E_f < C * E_g + lambda at subdivision
// depth n, after verifying the sup-distance precondition.
bool check_perturbed_energy(const FiniteLengthSpace &space, const AmbientMap &f,
                            const AmbientMap &g, const ParamPath &path, double C,
                            double lambda, double delta, int n = 256);

struct NormSampler {
  std::function<double(const Eigen::VectorXd &)> eval;
};

double parallelogram_defect(const NormSampler &norm, const Eigen::VectorXd &x,
                            const Eigen::VectorXd &y);

} // namespace minkembed
