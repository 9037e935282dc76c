#pragma once

#include "minkembed/minkowski.hpp"
#include "minkembed/simplicial.hpp"

#include <map>
#include <vector>

namespace minkembed {

// Result of repairing an over-long edge: the edge is subdivided into N equal
// parts and the odd chain vertices are pushed in a negative direction so every
// subedge carries exactly the target energy.
struct WiggleResult {
  MetricComplex complex;  // subdivided complex, edge target installed
  PLMap new_map;          // images on the subdivided complex
  std::vector<int> chain; // vertex ids along the subdivided edge
  int N = 0;
  double M_required = 0.0; // scale certifying shortness on the edge star, 0 if vacuous
  std::map<Simplex, std::vector<Simplex>> correspondence;
};

// Smallest even N with sqrt(beta^2 - alpha^2)/N <= epsilon.
int choose_N(double alpha, double beta, double epsilon);

// Subdivide edge (e0,e1) into N equal parts and offset odd vertices by
// (sqrt(beta^2 - alpha^2)/N) * v, v Lorentz-orthogonal to the image segment
// with <v,v> = -1. Every subedge's induced energy becomes alpha^2/N^2 and no
// vertex moves farther than epsilon.
WiggleResult lorentz_wiggle(const MetricComplex &complex, const PLMap &map, int e0,
                            int e1, double alpha, double epsilon);

// Smallest M such that setting every non-chain edge of the star to length M
// makes `map` 1-Lipschitz on every star simplex. Doubling search then
// bisection to 1e-3 * M. Returns 0 when the star has no simplex of dimension
// >= 2. Throws if the search cap is exceeded.
double required_M(const MetricComplex &subdivided, const PLMap &map,
                  const std::vector<Simplex> &edge_star, const std::vector<int> &chain,
                  double alpha);

// Refine a polygonal chain (zero negative part) into a zigzag of total
// Euclidean length target_length, staying within epsilon of the input and
// fixing both endpoints. The offsets use the lowest-index coordinate on which
// the whole chain is constant.
std::vector<MinkVec> euclid_zigzag(const std::vector<MinkVec> &segment_images,
                                   double target_length, double epsilon);

} // namespace minkembed
