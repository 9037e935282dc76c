#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

namespace minkembed {

// Vector in R^{p,q}: p spacelike coordinates, q timelike coordinates.
struct MinkVec {
  Eigen::VectorXd pos;
  Eigen::VectorXd neg;

  MinkVec() = default;
  MinkVec(Eigen::VectorXd p, Eigen::VectorXd n)
      : pos(std::move(p)), neg(std::move(n)) {}
  static MinkVec zero(int p, int q) {
    return MinkVec(Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(q));
  }
  int p() const { return static_cast<int>(pos.size()); }
  int q() const { return static_cast<int>(neg.size()); }

  MinkVec operator+(const MinkVec &o) const { return {pos + o.pos, neg + o.neg}; }
  MinkVec operator-(const MinkVec &o) const { return {pos - o.pos, neg - o.neg}; }
  MinkVec operator*(double s) const { return {pos * s, neg * s}; }
};

double mink_pairing(const MinkVec &u, const MinkVec &v);
MinkVec project_pos(const MinkVec &v);
MinkVec project_neg(const MinkVec &v);

// Euclidean norm of the full coordinate vector (approximation distances).
double ambient_norm(const MinkVec &v);

struct PLPathEnergy {
  double total = 0.0;
  double positive = 0.0;
  double negative = 0.0;
};

PLPathEnergy pl_path_energy_split(const std::vector<std::pair<double, MinkVec>> &breakpoints);
double pl_path_energy(const std::vector<std::pair<double, MinkVec>> &breakpoints);

// Unit-timelike vector Lorentz-orthogonal to a spacelike segment.
MinkVec lorentz_orthogonal_negative(const MinkVec &segment);

// PL map on a simplicial complex: images of vertices, affine on simplices.
struct PLMap {
  std::map<int, MinkVec> vertex_images;

  const MinkVec &image(int v) const;
  void set(int v, MinkVec img) { vertex_images[v] = std::move(img); }
  bool has(int v) const { return vertex_images.count(v) > 0; }
};

} // namespace minkembed
