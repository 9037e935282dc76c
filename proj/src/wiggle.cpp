#include "minkembed/wiggle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace minkembed {

int choose_N(double alpha, double beta, double epsilon) {
  if (!(beta > alpha) || !(alpha > 0.0))
    throw std::invalid_argument("need beta > alpha > 0");
  if (!(epsilon > 0.0))
    throw std::invalid_argument("epsilon must be positive");
  const double gap = std::sqrt(beta * beta - alpha * alpha);
  int n = static_cast<int>(std::ceil(gap / epsilon - 1e-12));
  if (n < 2)
    n = 2;
  if (n % 2 == 1)
    ++n;
  return n;
}

namespace {

QuadraticForm induced_form(const PLMap &map, const std::vector<int> &ordering) {
  const int k = static_cast<int>(ordering.size()) - 1;
  QuadraticForm f;
  f.k = k;
  f.m = Eigen::MatrixXd::Zero(k, k);
  const MinkVec &base = map.image(ordering[0]);
  for (int i = 1; i <= k; ++i) {
    const MinkVec di = map.image(ordering[i]) - base;
    for (int j = i; j <= k; ++j) {
      const MinkVec dj = map.image(ordering[j]) - base;
      const double val = mink_pairing(di, dj);
      f.m(i - 1, j - 1) = val;
      f.m(j - 1, i - 1) = val;
    }
  }
  return f;
}

} // namespace

double required_M(const MetricComplex &subdivided, const PLMap &map,
                  const std::vector<Simplex> &edge_star, const std::vector<int> &chain,
                  double alpha) {
  std::vector<Simplex> tops;
  for (const auto &s : edge_star)
    if (s.size() >= 3)
      tops.push_back(s);
  if (tops.empty())
    return 0.0;

  auto is_chain_edge = [&](int u, int v) {
    for (size_t i = 0; i + 1 < chain.size(); ++i)
      if ((chain[i] == u && chain[i + 1] == v) || (chain[i] == v && chain[i + 1] == u))
        return true;
    return false;
  };

  auto holds_at = [&](double M) {
    MetricComplex trial;
    trial.set_energy_mode(subdivided.energy_mode());
    for (const auto &s : tops)
      trial.add_simplex(s);
    for (const auto &e : trial.simplices_of_dim(1)) {
      if (is_chain_edge(e[0], e[1]))
        trial.set_edge(e[0], e[1], subdivided.edge_value(e[0], e[1]));
      else
        trial.set_edge(e[0], e[1], trial.energy_mode() ? M * M : M);
    }
    for (const auto &s : tops) {
      const QuadraticForm g = quadratic_form(trial, s);
      const QuadraticForm f = induced_form(map, s);
      if (!is_one_lipschitz(g, f))
        return false;
    }
    return true;
  };

  double hi = std::max(alpha, 1.0);
  int doublings = 0;
  while (!holds_at(hi)) {
    hi *= 2.0;
    if (++doublings > 60)
      throw std::runtime_error("required_M: doubling search cap exceeded");
  }
  double lo = hi / 2.0;
  if (doublings == 0)
    lo = 0.0;
  for (int it = 0; it < 60 && (hi - lo) > 1e-3 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (holds_at(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

WiggleResult lorentz_wiggle(const MetricComplex &complex, const PLMap &map, int e0,
                            int e1, double alpha, double epsilon) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("alpha must be positive");
  if (!(epsilon > 0.0))
    throw std::invalid_argument("epsilon must be positive");
  const MinkVec seg = map.image(e1) - map.image(e0);
  const double beta_sq = mink_pairing(seg, seg);
  if (beta_sq <= 1e-12)
    throw std::invalid_argument("edge image is not spacelike");
  const double beta = std::sqrt(beta_sq);
  if (beta < alpha - 1e-9 * std::max(1.0, alpha))
    throw std::invalid_argument("edge energy already below target, nothing to repair");

  MetricComplex fixed = complex;
  fixed.set_edge(e0, e1, fixed.energy_mode() ? alpha * alpha : alpha);

  WiggleResult res;
  if (std::abs(beta - alpha) <= 1e-9 * std::max(1.0, alpha)) {
    res.complex = fixed;
    res.new_map = map;
    res.chain = {e0, e1};
    res.N = 1;
    for (const auto &s : fixed.simplices_containing({std::min(e0, e1), std::max(e0, e1)}))
      res.correspondence[s] = {s};
    const auto star = fixed.simplices_containing({std::min(e0, e1), std::max(e0, e1)});
    res.M_required = required_M(fixed, map, star, res.chain, alpha);
    return res;
  }

  const int N = choose_N(alpha, beta, epsilon);
  SubdivisionResult sub = subdivide_edge(fixed, e0, e1, N);
  res.complex = std::move(sub.complex);
  res.chain = std::move(sub.chain);
  res.correspondence = std::move(sub.simplex_correspondence);
  res.N = N;

  const double offset = std::sqrt(beta_sq - alpha * alpha) / N;
  const MinkVec vbar = lorentz_orthogonal_negative(seg);

  res.new_map = map;
  const MinkVec &base = map.image(e0);
  for (int i = 1; i < N; ++i) {
    MinkVec w = base + seg * (static_cast<double>(i) / N);
    if (i % 2 == 1)
      w = w + vbar * offset;
    res.new_map.set(res.chain[i], w);
  }

  for (int i = 1; i <= N; ++i) {
    const MinkVec d = res.new_map.image(res.chain[i]) - res.new_map.image(res.chain[i - 1]);
    const double e = mink_pairing(d, d);
    const double want = alpha * alpha / (N * static_cast<double>(N));
    if (std::abs(e - want) > 1e-9 * std::max(1.0, want))
      throw std::runtime_error("wiggle failed to hit the target subedge energy");
  }

  std::vector<Simplex> star;
  for (size_t i = 0; i + 1 < res.chain.size(); ++i) {
    const Simplex e{std::min(res.chain[i], res.chain[i + 1]),
                    std::max(res.chain[i], res.chain[i + 1])};
    for (const auto &s : res.complex.simplices_containing(e))
      if (std::find(star.begin(), star.end(), s) == star.end())
        star.push_back(s);
  }
  res.M_required = required_M(res.complex, res.new_map, star, res.chain, alpha);
  return res;
}

std::vector<MinkVec> euclid_zigzag(const std::vector<MinkVec> &segment_images,
                                   double target_length, double epsilon) {
  if (segment_images.size() < 2)
    throw std::invalid_argument("need at least two breakpoints");
  if (!(epsilon > 0.0))
    throw std::invalid_argument("epsilon must be positive");
  const int p = static_cast<int>(segment_images.front().pos.size());
  for (const auto &v : segment_images) {
    if (v.pos.size() != p)
      throw std::invalid_argument("inconsistent ambient dimension");
    if (v.neg.size() > 0 && v.neg.norm() > 1e-12)
      throw std::invalid_argument("chain has nonzero negative part");
  }

  const size_t m = segment_images.size() - 1;
  std::vector<double> lens(m);
  double total = 0.0;
  for (size_t i = 0; i < m; ++i) {
    lens[i] = (segment_images[i + 1].pos - segment_images[i].pos).norm();
    total += lens[i];
  }
  const double chord = (segment_images.back().pos - segment_images.front().pos).norm();
  const double scale = std::max(1.0, target_length);
  if (target_length < chord - 1e-12 * scale)
    throw std::invalid_argument("target length below endpoint distance");
  if (target_length < total - 1e-12 * scale)
    throw std::invalid_argument("target length below current chain length");
  if (std::abs(target_length - total) <= 1e-15 * scale)
    return segment_images;

  int spare = -1;
  for (int d = 0; d < p && spare < 0; ++d) {
    bool flat = true;
    for (const auto &v : segment_images)
      if (std::abs(v.pos(d) - segment_images.front().pos(d)) > 1e-12) {
        flat = false;
        break;
      }
    if (flat)
      spare = d;
  }
  if (spare < 0)
    throw std::invalid_argument("no spare coordinate for zigzag offsets");

  std::vector<double> targets(m);
  if (total > 0.0) {
    for (size_t i = 0; i < m; ++i)
      targets[i] = lens[i] * target_length / total;
  } else {
    for (size_t i = 0; i < m; ++i)
      targets[i] = target_length / static_cast<double>(m);
  }

  std::vector<MinkVec> out;
  out.push_back(segment_images.front());
  for (size_t i = 0; i < m; ++i) {
    const MinkVec &a = segment_images[i];
    const MinkVec &b = segment_images[i + 1];
    const double l = lens[i];
    const double t = targets[i];
    const double excess_sq = t * t - l * l;
    if (excess_sq <= 1e-30) {
      out.push_back(b);
      continue;
    }
    const double excess = std::sqrt(excess_sq);
    int k = static_cast<int>(std::ceil(excess / epsilon - 1e-12));
    if (k < 2)
      k = 2;
    if (k % 2 == 1)
      ++k;
    const double h = excess / k;
    for (int j = 1; j < k; ++j) {
      MinkVec w = a;
      const double frac = static_cast<double>(j) / k;
      w.pos = a.pos + frac * (b.pos - a.pos);
      if (j % 2 == 1)
        w.pos(spare) += h;
      out.push_back(w);
    }
    out.push_back(b);
  }
  return out;
}

} // namespace minkembed
