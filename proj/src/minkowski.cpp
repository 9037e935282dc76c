#include "minkembed/minkowski.hpp"

#include <cmath>
#include <stdexcept>

namespace minkembed {

double mink_pairing(const MinkVec &u, const MinkVec &v) {
  if (u.p() != v.p() || u.q() != v.q())
    throw std::invalid_argument("signature mismatch");
  return u.pos.dot(v.pos) - u.neg.dot(v.neg);
}

MinkVec project_pos(const MinkVec &v) {
  return {v.pos, Eigen::VectorXd::Zero(v.q())};
}

MinkVec project_neg(const MinkVec &v) {
  return {Eigen::VectorXd::Zero(v.p()), v.neg};
}

double ambient_norm(const MinkVec &v) {
  return std::sqrt(v.pos.squaredNorm() + v.neg.squaredNorm());
}

PLPathEnergy pl_path_energy_split(
    const std::vector<std::pair<double, MinkVec>> &breakpoints) {
  if (breakpoints.size() < 2)
    throw std::invalid_argument("need at least 2 breakpoints");
  PLPathEnergy e;
  for (size_t i = 1; i < breakpoints.size(); ++i) {
    const double dt = breakpoints[i].first - breakpoints[i - 1].first;
    if (!(dt > 0.0))
      throw std::invalid_argument("breakpoint parameters must be strictly increasing");
    const MinkVec d = breakpoints[i].second - breakpoints[i - 1].second;
    e.positive += d.pos.squaredNorm() / dt;
    e.negative -= d.neg.squaredNorm() / dt;
  }
  e.total = e.positive + e.negative;
  return e;
}

double pl_path_energy(const std::vector<std::pair<double, MinkVec>> &breakpoints) {
  return pl_path_energy_split(breakpoints).total;
}

MinkVec lorentz_orthogonal_negative(const MinkVec &segment) {
  if (segment.q() < 1)
    throw std::invalid_argument("target needs at least one negative coordinate");
  const double ss = mink_pairing(segment, segment);
  if (!(ss > 0.0))
    throw std::invalid_argument("segment must be spacelike");

  const double a2 = segment.pos.squaredNorm();
  const double b2 = segment.neg.squaredNorm();
  MinkVec v = MinkVec::zero(segment.p(), segment.q());
  if (b2 <= 0.0) {
    v.neg(0) = 1.0;
    return v;
  }
  // In the plane spanned by (pos-part, neg-part): v = x a_hat + y b_hat with
  // <v,seg> = x|a| - y|b| = 0 and <v,v> = x^2 - y^2 = -1.
  const double na = std::sqrt(a2), nb = std::sqrt(b2);
  const double denom = std::sqrt(a2 - b2);
  const double x = nb / denom, y = na / denom;
  v.pos = segment.pos * (x / na);
  v.neg = segment.neg * (y / nb);
  return v;
}

const MinkVec &PLMap::image(int v) const {
  auto it = vertex_images.find(v);
  if (it == vertex_images.end())
    throw std::invalid_argument("vertex without image: " + std::to_string(v));
  return it->second;
}

} // namespace minkembed
