#pragma once

#include <Eigen/Dense>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "minkembed/minkowski.hpp"

namespace minkembed {

// Signed square: x^2 for x >= 0, -x^2 otherwise.
inline double signed_square(double x) { return x >= 0.0 ? x * x : -(x * x); }

using Simplex = std::vector<int>; // sorted vertex ids

// Simplicial complex with a real value per edge. Values are signed lengths by
// default; induced complexes store energies directly (energy_mode).
class MetricComplex {
public:
  MetricComplex() = default;

  void add_vertex(int v);
  void add_simplex(Simplex s, bool close_faces = true);
  void set_edge(int u, int v, double value);
  bool has_edge(int u, int v) const;
  double edge_value(int u, int v) const;
  // Edge value as an energy, honoring the storage mode.
  double edge_energy(int u, int v) const;

  const std::set<int> &vertices() const { return vertices_; }
  const std::set<Simplex> &simplices() const { return simplices_; }
  std::vector<Simplex> simplices_of_dim(int k) const;
  std::vector<Simplex> maximal_simplices() const;
  std::vector<Simplex> simplices_containing(const Simplex &face) const;
  bool contains(const Simplex &s) const;

  bool energy_mode() const { return energy_mode_; }
  void set_energy_mode(bool m) { energy_mode_ = m; }

  void validate() const;

private:
  std::set<int> vertices_;
  std::set<Simplex> simplices_;
  std::map<std::pair<int, int>, double> edge_metric_;
  bool energy_mode_ = false;
};

struct QuadraticForm {
  int k = 0;
  Eigen::MatrixXd m; // pairings <w_i, w_j>, w_i = v_i - v_0
};

struct ConeReport {
  bool is_positive_definite = false;
  double min_eigenvalue = 0.0;
  double cone_distance = 0.0;
};

QuadraticForm quadratic_form(const MetricComplex &complex, const Simplex &simplex,
                             const std::vector<int> &ordering);
QuadraticForm quadratic_form(const MetricComplex &complex, const Simplex &simplex);

MetricComplex induced_metric(const PLMap &map, const MetricComplex &complex);

ConeReport is_euclidean(const QuadraticForm &form, double tol = 1e-9);

bool is_one_lipschitz(const QuadraticForm &g_form, const QuadraticForm &f_form,
                      double tol = 1e-9);

// Euclidean embeddability of the equilateral-M simplex with one special edge c.
bool one_special_edge_embeddable(int k, double M, double c);

struct SubdivisionResult {
  MetricComplex complex;
  std::vector<int> chain; // vertex chain replacing the edge, endpoints included
  std::map<Simplex, std::vector<Simplex>> simplex_correspondence;
};

SubdivisionResult subdivide_edge(const MetricComplex &complex, int eu, int ev, int N);

} // namespace minkembed
