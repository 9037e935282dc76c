#include "minkembed/simplicial.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace minkembed {

namespace {
std::pair<int, int> ekey(int u, int v) { return {std::min(u, v), std::max(u, v)}; }
} // namespace

void MetricComplex::add_vertex(int v) {
  vertices_.insert(v);
  simplices_.insert(Simplex{v});
}

void MetricComplex::add_simplex(Simplex s, bool close_faces) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  if (s.empty())
    throw std::invalid_argument("empty simplex");
  for (int v : s)
    vertices_.insert(v);
  if (close_faces) {
    const int n = static_cast<int>(s.size());
    for (int mask = 1; mask < (1 << n); ++mask) {
      Simplex face;
      for (int i = 0; i < n; ++i)
        if (mask & (1 << i))
          face.push_back(s[i]);
      simplices_.insert(face);
    }
  } else {
    simplices_.insert(s);
  }
}

void MetricComplex::set_edge(int u, int v, double value) {
  if (u == v)
    throw std::invalid_argument("degenerate edge");
  edge_metric_[ekey(u, v)] = value;
}

bool MetricComplex::has_edge(int u, int v) const {
  return edge_metric_.count(ekey(u, v)) > 0;
}

double MetricComplex::edge_value(int u, int v) const {
  auto it = edge_metric_.find(ekey(u, v));
  if (it == edge_metric_.end())
    throw std::invalid_argument("missing edge metric (" + std::to_string(u) + "," +
                                std::to_string(v) + ")");
  return it->second;
}

double MetricComplex::edge_energy(int u, int v) const {
  const double g = edge_value(u, v);
  return energy_mode_ ? g : signed_square(g);
}

std::vector<Simplex> MetricComplex::simplices_of_dim(int k) const {
  std::vector<Simplex> out;
  for (const auto &s : simplices_)
    if (static_cast<int>(s.size()) == k + 1)
      out.push_back(s);
  return out;
}

std::vector<Simplex> MetricComplex::maximal_simplices() const {
  std::vector<Simplex> out;
  for (const auto &s : simplices_) {
    bool maximal = true;
    for (const auto &t : simplices_) {
      if (t.size() > s.size() && std::includes(t.begin(), t.end(), s.begin(), s.end())) {
        maximal = false;
        break;
      }
    }
    if (maximal)
      out.push_back(s);
  }
  return out;
}

std::vector<Simplex> MetricComplex::simplices_containing(const Simplex &face) const {
  std::vector<Simplex> out;
  for (const auto &s : simplices_)
    if (std::includes(s.begin(), s.end(), face.begin(), face.end()))
      out.push_back(s);
  return out;
}

bool MetricComplex::contains(const Simplex &s) const {
  Simplex t = s;
  std::sort(t.begin(), t.end());
  return simplices_.count(t) > 0;
}

void MetricComplex::validate() const {
  for (const auto &s : simplices_) {
    for (int v : s)
      if (!vertices_.count(v))
        throw std::runtime_error("simplex vertex not registered");
    const int n = static_cast<int>(s.size());
    for (int mask = 1; mask < (1 << n); ++mask) {
      Simplex face;
      for (int i = 0; i < n; ++i)
        if (mask & (1 << i))
          face.push_back(s[i]);
      if (!simplices_.count(face))
        throw std::runtime_error("complex not closed under faces");
    }
    for (size_t i = 0; i < s.size(); ++i)
      for (size_t j = i + 1; j < s.size(); ++j)
        if (!has_edge(s[i], s[j]))
          throw std::runtime_error("simplex edge without metric");
  }
}

QuadraticForm quadratic_form(const MetricComplex &complex, const Simplex &simplex,
                             const std::vector<int> &ordering) {
  if (ordering.size() != simplex.size())
    throw std::invalid_argument("ordering size mismatch");
  {
    Simplex a = simplex, b = ordering;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b)
      throw std::invalid_argument("ordering is not a permutation of the simplex");
    if (!complex.contains(a))
      throw std::invalid_argument("simplex not in complex");
  }
  const int k = static_cast<int>(ordering.size()) - 1;
  QuadraticForm f;
  f.k = k;
  f.m = Eigen::MatrixXd::Zero(k, k);
  for (int i = 1; i <= k; ++i) {
    for (int j = 1; j <= k; ++j) {
      if (i == j) {
        f.m(i - 1, j - 1) = complex.edge_energy(ordering[0], ordering[i]);
      } else {
        const double gi = complex.edge_energy(ordering[0], ordering[i]);
        const double gj = complex.edge_energy(ordering[0], ordering[j]);
        const double gij = complex.edge_energy(ordering[i], ordering[j]);
        f.m(i - 1, j - 1) = 0.5 * (gi + gj - gij);
      }
    }
  }
  return f;
}

QuadraticForm quadratic_form(const MetricComplex &complex, const Simplex &simplex) {
  Simplex s = simplex;
  std::sort(s.begin(), s.end());
  return quadratic_form(complex, s, s);
}

MetricComplex induced_metric(const PLMap &map, const MetricComplex &complex) {
  MetricComplex out;
  out.set_energy_mode(true);
  for (int v : complex.vertices()) {
    if (!map.has(v))
      throw std::invalid_argument("vertex without image: " + std::to_string(v));
    out.add_vertex(v);
  }
  for (const auto &s : complex.simplices())
    out.add_simplex(s, false);
  for (const auto &s : complex.simplices_of_dim(1)) {
    const MinkVec d = map.image(s[0]) - map.image(s[1]);
    out.set_edge(s[0], s[1], mink_pairing(d, d));
  }
  return out;
}

namespace {

double min_eig(const Eigen::MatrixXd &m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Rebuild a form from its edge-energy vector (E_{0i} then E_{ij}, i<j).
Eigen::MatrixXd form_from_energies(int k, const Eigen::VectorXd &e) {
  Eigen::MatrixXd m(k, k);
  auto pair_index = [&](int i, int j) {
    // 1-based i<j among 1..k, stored after the k diagonal entries
    int idx = k;
    for (int a = 1; a <= k; ++a)
      for (int b = a + 1; b <= k; ++b) {
        if (a == i && b == j)
          return idx;
        ++idx;
      }
    throw std::logic_error("bad pair index");
  };
  for (int i = 1; i <= k; ++i)
    m(i - 1, i - 1) = e(i - 1);
  for (int i = 1; i <= k; ++i)
    for (int j = i + 1; j <= k; ++j) {
      const double val = 0.5 * (e(i - 1) + e(j - 1) - e(pair_index(i, j)));
      m(i - 1, j - 1) = val;
      m(j - 1, i - 1) = val;
    }
  return m;
}

Eigen::VectorXd energies_from_form(const QuadraticForm &f) {
  const int k = f.k;
  Eigen::VectorXd e(k + k * (k - 1) / 2);
  for (int i = 1; i <= k; ++i)
    e(i - 1) = f.m(i - 1, i - 1);
  int idx = k;
  for (int i = 1; i <= k; ++i)
    for (int j = i + 1; j <= k; ++j)
      e(idx++) = f.m(i - 1, i - 1) + f.m(j - 1, j - 1) - 2.0 * f.m(i - 1, j - 1);
  return e;
}

} // namespace

ConeReport is_euclidean(const QuadraticForm &form, double tol) {
  ConeReport r;
  if (form.k == 0) {
    r.is_positive_definite = true;
    r.min_eigenvalue = 0.0;
    r.cone_distance = 0.0;
    return r;
  }
  r.min_eigenvalue = min_eig(form.m);
  const double scale = std::max(1.0, std::abs(form.m.trace()) / form.k);
  r.is_positive_definite = r.min_eigenvalue > tol * scale;
  if (!r.is_positive_definite) {
    r.cone_distance = 0.0;
    return r;
  }

  const Eigen::VectorXd e0 = energies_from_form(form);
  std::mt19937 rng(20240506u);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double cap = 1e9;
  double best = cap;
  for (int trial = 0; trial < 24; ++trial) {
    Eigen::VectorXd d(e0.size());
    for (int i = 0; i < d.size(); ++i)
      d(i) = gauss(rng);
    d.normalize();
    double lo = 0.0, hi = 1.0;
    while (hi < cap && min_eig(form_from_energies(form.k, e0 + hi * d)) > 0.0)
      hi *= 2.0;
    if (hi >= cap)
      continue;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (min_eig(form_from_energies(form.k, e0 + mid * d)) > 0.0)
        lo = mid;
      else
        hi = mid;
    }
    best = std::min(best, hi);
  }
  r.cone_distance = best;
  return r;
}

bool is_one_lipschitz(const QuadraticForm &g_form, const QuadraticForm &f_form,
                      double tol) {
  if (g_form.k != f_form.k)
    throw std::invalid_argument("form dimension mismatch");
  if (g_form.k == 0)
    return true;
  const Eigen::MatrixXd diff = g_form.m - f_form.m;
  const double scale =
      std::max(1.0, std::abs(g_form.m.trace()) / static_cast<double>(g_form.k));
  return min_eig(diff) >= -tol * scale;
}

bool one_special_edge_embeddable(int k, double M, double c) {
  if (k < 2)
    throw std::invalid_argument("k must be >= 2");
  if (!(M > 0.0))
    throw std::invalid_argument("M must be positive");
  return c > 0.0 && c < std::sqrt(2.0 * k / (k - 1.0)) * M;
}

SubdivisionResult subdivide_edge(const MetricComplex &complex, int eu, int ev, int N) {
  if (N < 1)
    throw std::invalid_argument("subdivision count must be >= 1");
  if (!complex.has_edge(eu, ev) || !complex.contains({std::min(eu, ev), std::max(eu, ev)}))
    throw std::invalid_argument("edge not in complex");

  SubdivisionResult res;
  MetricComplex &out = res.complex;
  out.set_energy_mode(complex.energy_mode());

  int next_id = complex.vertices().empty() ? 0 : (*complex.vertices().rbegin() + 1);
  res.chain.push_back(eu);
  for (int i = 1; i < N; ++i)
    res.chain.push_back(next_id++);
  res.chain.push_back(ev);

  const Simplex edge{std::min(eu, ev), std::max(eu, ev)};
  auto contains_edge = [&](const Simplex &s) {
    return std::includes(s.begin(), s.end(), edge.begin(), edge.end());
  };

  for (int v : complex.vertices())
    out.add_vertex(v);
  for (int i = 1; i < N; ++i)
    out.add_vertex(res.chain[i]);

  // Copy untouched simplices and edge values.
  for (const auto &s : complex.simplices())
    if (!contains_edge(s))
      out.add_simplex(s, false);
  for (const auto &s : complex.simplices_of_dim(1))
    if (!contains_edge(s))
      out.set_edge(s[0], s[1], complex.edge_value(s[0], s[1]));

  // Energies of new edges come from the affine position of the chain points:
  // w_i = eu + (i/N)(ev - eu).
  const double Euv = complex.edge_energy(eu, ev);
  auto chain_energy = [&](int i, int j) {
    const double t = static_cast<double>(j - i) / N;
    return t * t * Euv;
  };
  auto store = [&](int a, int b, double energy) {
    if (out.has_edge(a, b))
      return;
    out.set_edge(a, b, out.energy_mode()
                           ? energy
                           : (energy >= 0.0 ? std::sqrt(energy) : -std::sqrt(-energy)));
  };

  for (size_t i = 0; i + 1 < res.chain.size(); ++i)
    store(res.chain[i], res.chain[i + 1], chain_energy(static_cast<int>(i),
                                                       static_cast<int>(i) + 1));

  for (const auto &s : complex.simplices()) {
    if (!contains_edge(s) || s.size() < 2)
      continue;
    Simplex rest;
    for (int v : s)
      if (v != eu && v != ev)
        rest.push_back(v);
    // Energy of (w_i, r): |u_r - (i/N) u_1|^2 expanded via polarization.
    for (int r : rest) {
      const double Er = complex.edge_energy(eu, r);
      const double Ev = complex.edge_energy(eu, ev);
      const double Evr = complex.edge_energy(ev, r);
      const double dot_uv_ur = 0.5 * (Ev + Er - Evr); // <ev-eu, r-eu>
      for (int i = 1; i < N; ++i) {
        const double t = static_cast<double>(i) / N;
        const double energy = Er - 2.0 * t * dot_uv_ur + t * t * Ev;
        store(res.chain[i], r, energy);
      }
    }
    std::vector<Simplex> pieces;
    for (int i = 0; i < N; ++i) {
      Simplex piece = rest;
      piece.push_back(res.chain[i]);
      piece.push_back(res.chain[i + 1]);
      std::sort(piece.begin(), piece.end());
      out.add_simplex(piece);
      pieces.push_back(piece);
    }
    res.simplex_correspondence[s] = pieces;
  }
  return res;
}

} // namespace minkembed
