#include "minkembed/metric_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace minkembed {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

FiniteLengthSpace::FiniteLengthSpace(std::vector<std::string> names,
                                     std::vector<GraphEdge> edges)
    : names_(std::move(names)), edges_(std::move(edges)) {
  const int n = static_cast<int>(names_.size());
  if (n == 0)
    throw std::invalid_argument("space needs at least one point");
  for (const auto &e : edges_) {
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n)
      throw std::invalid_argument("edge endpoint out of range");
    if (!(e.w > 0.0))
      throw std::invalid_argument("edge weights must be strictly positive");
    if (e.u == e.v)
      throw std::invalid_argument("self-loops not supported");
  }

  dist_ = Eigen::MatrixXd::Constant(n, n, kInf);
  next_ = Eigen::MatrixXi::Constant(n, n, -1);
  for (int i = 0; i < n; ++i) {
    dist_(i, i) = 0.0;
    next_(i, i) = i;
  }
  for (int k = 0; k < static_cast<int>(edges_.size()); ++k) {
    const auto &e = edges_[k];
    if (e.w < dist_(e.u, e.v)) {
      dist_(e.u, e.v) = dist_(e.v, e.u) = e.w;
      next_(e.u, e.v) = e.v;
      next_(e.v, e.u) = e.u;
    }
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (dist_(i, k) + dist_(k, j) < dist_(i, j)) {
          dist_(i, j) = dist_(i, k) + dist_(k, j);
          next_(i, j) = next_(i, k);
        }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (!std::isfinite(dist_(i, j)))
        throw std::invalid_argument("graph is not connected");
}

int FiniteLengthSpace::index_of(const std::string &name) const {
  for (int i = 0; i < vertex_count(); ++i)
    if (names_[i] == name)
      return i;
  throw std::invalid_argument("unknown point id: " + name);
}

double FiniteLengthSpace::vertex_distance(int a, int b) const {
  if (a < 0 || b < 0 || a >= vertex_count() || b >= vertex_count())
    throw std::invalid_argument("vertex index out of range");
  return dist_(a, b);
}

Loc FiniteLengthSpace::canonical(const Loc &x, double tol) const {
  if (x.is_vertex()) {
    if (x.vertex >= vertex_count())
      throw std::invalid_argument("vertex index out of range");
    return x;
  }
  if (x.edge < 0 || x.edge >= edge_count())
    throw std::invalid_argument("edge index out of range");
  if (x.frac < -tol || x.frac > 1.0 + tol)
    throw std::invalid_argument("edge fraction outside [0,1]");
  const auto &e = edges_[x.edge];
  if (x.frac <= tol)
    return Loc::at_vertex(e.u);
  if (x.frac >= 1.0 - tol)
    return Loc::at_vertex(e.v);
  return x;
}

double FiniteLengthSpace::distance(const Loc &xin, const Loc &yin) const {
  const Loc x = canonical(xin), y = canonical(yin);
  if (x.is_vertex() && y.is_vertex())
    return dist_(x.vertex, y.vertex);
  if (x.is_vertex()) {
    const auto &e = edges_[y.edge];
    return std::min(dist_(x.vertex, e.u) + y.frac * e.w,
                    dist_(x.vertex, e.v) + (1.0 - y.frac) * e.w);
  }
  if (y.is_vertex())
    return distance(y, x);
  const auto &ex = edges_[x.edge];
  const auto &ey = edges_[y.edge];
  double best = kInf;
  if (x.edge == y.edge)
    best = std::abs(x.frac - y.frac) * ex.w;
  const double xu = x.frac * ex.w, xv = (1.0 - x.frac) * ex.w;
  const double yu = y.frac * ey.w, yv = (1.0 - y.frac) * ey.w;
  best = std::min(best, xu + dist_(ex.u, ey.u) + yu);
  best = std::min(best, xu + dist_(ex.u, ey.v) + yv);
  best = std::min(best, xv + dist_(ex.v, ey.u) + yu);
  best = std::min(best, xv + dist_(ex.v, ey.v) + yv);
  return best;
}

bool FiniteLengthSpace::same_point(const Loc &x, const Loc &y, double tol) const {
  return distance(x, y) <= tol;
}

std::vector<int> FiniteLengthSpace::witness(int a, int b) const {
  if (a < 0 || b < 0 || a >= vertex_count() || b >= vertex_count())
    throw std::invalid_argument("vertex index out of range");
  std::vector<int> out{a};
  int cur = a;
  while (cur != b) {
    cur = next_(cur, b);
    if (cur < 0)
      throw std::runtime_error("no witness path");
    out.push_back(cur);
  }
  return out;
}

std::vector<Loc> FiniteLengthSpace::witness_locs(const Loc &xin, const Loc &yin) const {
  const Loc x = canonical(xin), y = canonical(yin);
  if (same_point(x, y, 1e-15))
    return {x, y};

  // Candidate routes: stay on a shared edge, or exit through edge endpoints.
  struct Route {
    double len;
    int exit_x; // vertex where x's edge is left (-1 if x is a vertex)
    int exit_y;
  };
  Route best{kInf, -1, -1};
  auto consider = [&](double len, int ex_, int ey_) {
    if (len < best.len)
      best = Route{len, ex_, ey_};
  };

  if (!x.is_vertex() && !y.is_vertex() && x.edge == y.edge) {
    consider(std::abs(x.frac - y.frac) * edges_[x.edge].w, -2, -2);
  }
  const auto ends = [&](const Loc &p) {
    std::vector<std::pair<int, double>> r;
    if (p.is_vertex())
      r.push_back({p.vertex, 0.0});
    else {
      const auto &e = edges_[p.edge];
      r.push_back({e.u, p.frac * e.w});
      r.push_back({e.v, (1.0 - p.frac) * e.w});
    }
    return r;
  };
  for (const auto &[vx, lx] : ends(x))
    for (const auto &[vy, ly] : ends(y))
      consider(lx + dist_(vx, vy) + ly, x.is_vertex() ? -1 : vx,
               y.is_vertex() ? -1 : vy);

  std::vector<Loc> out;
  out.push_back(x);
  if (best.exit_x == -2) {
    out.push_back(y);
    return out;
  }
  int va = x.is_vertex() ? x.vertex : best.exit_x;
  int vb = y.is_vertex() ? y.vertex : best.exit_y;
  for (int v : witness(va, vb)) {
    if (!out.back().is_vertex() || out.back().vertex != v)
      out.push_back(Loc::at_vertex(v));
  }
  if (!(y.is_vertex() && out.back().is_vertex() && out.back().vertex == y.vertex))
    out.push_back(y);
  return out;
}

void ParamPath::validate() const {
  if (times.size() != locs.size())
    throw std::invalid_argument("times/locs size mismatch");
  if (times.size() < 2)
    throw std::invalid_argument("path needs at least 2 samples");
  for (size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("path parameters must be strictly increasing");
}

CompiledPath::CompiledPath(const FiniteLengthSpace &space, const ParamPath &path)
    : space_(space), path_(path) {
  path_.validate();
  for (size_t i = 0; i + 1 < path_.locs.size(); ++i) {
    Leg leg;
    leg.t0 = path_.times[i];
    leg.t1 = path_.times[i + 1];
    leg.nodes = space_.witness_locs(path_.locs[i], path_.locs[i + 1]);
    leg.cum.resize(leg.nodes.size(), 0.0);
    for (size_t k = 1; k < leg.nodes.size(); ++k)
      leg.cum[k] = leg.cum[k - 1] + space_.distance(leg.nodes[k - 1], leg.nodes[k]);
    legs_.push_back(std::move(leg));
  }
}

Loc CompiledPath::point_on_leg(const Leg &leg, double arc) const {
  const double total = leg.cum.back();
  if (total <= 0.0)
    return leg.nodes.front();
  arc = std::clamp(arc, 0.0, total);
  size_t k = 1;
  while (k + 1 < leg.cum.size() && leg.cum[k] < arc)
    ++k;
  const Loc &a = leg.nodes[k - 1];
  const Loc &b = leg.nodes[k];
  const double seg = leg.cum[k] - leg.cum[k - 1];
  if (seg <= 0.0)
    return a;
  const double s = (arc - leg.cum[k - 1]) / seg;
  if (s <= 0.0)
    return a;
  if (s >= 1.0)
    return b;
  // Both nodes sit on one edge (witness chains alternate vertices/edge points).
  auto edge_pos = [&](const Loc &p, int e) -> double {
    const Loc c = space_.canonical(p);
    if (!c.is_vertex()) {
      if (c.edge != e)
        throw std::runtime_error("leg node off edge");
      return c.frac;
    }
    const auto &ed = space_.edge(e);
    if (c.vertex == ed.u)
      return 0.0;
    if (c.vertex == ed.v)
      return 1.0;
    throw std::runtime_error("leg node not on edge");
  };
  int e = -1;
  const Loc ca = space_.canonical(a), cb = space_.canonical(b);
  if (!ca.is_vertex())
    e = ca.edge;
  else if (!cb.is_vertex())
    e = cb.edge;
  else {
    for (int i = 0; i < space_.edge_count(); ++i) {
      const auto &ed = space_.edge(i);
      if (((ed.u == ca.vertex && ed.v == cb.vertex) ||
           (ed.v == ca.vertex && ed.u == cb.vertex)) &&
          std::abs(ed.w - seg) <= 1e-9 * std::max(1.0, ed.w)) {
        e = i;
        break;
      }
    }
    if (e < 0)
      throw std::runtime_error("no edge joins consecutive witness vertices");
  }
  const double fa = edge_pos(a, e), fb = edge_pos(b, e);
  return Loc::on_edge(e, fa + (fb - fa) * s);
}

Loc CompiledPath::eval(double t) const {
  if (t <= path_.a())
    return path_.locs.front();
  if (t >= path_.b())
    return path_.locs.back();
  size_t i = 0;
  while (i + 1 < legs_.size() && legs_[i].t1 < t)
    ++i;
  const Leg &leg = legs_[i];
  const double span = leg.t1 - leg.t0;
  const double s = span > 0.0 ? (t - leg.t0) / span : 0.0;
  return point_on_leg(leg, s * leg.cum.back());
}

ParamPath geodesic_path(const FiniteLengthSpace &space, const Loc &x, const Loc &y,
                        double a, double b) {
  if (!(b > a))
    throw std::invalid_argument("domain must satisfy b > a");
  const auto nodes = space.witness_locs(x, y);
  std::vector<double> cum(nodes.size(), 0.0);
  for (size_t k = 1; k < nodes.size(); ++k)
    cum[k] = cum[k - 1] + space.distance(nodes[k - 1], nodes[k]);
  const double total = cum.back();
  ParamPath p;
  for (size_t k = 0; k < nodes.size(); ++k) {
    const double t =
        total > 0.0 ? a + (b - a) * cum[k] / total : a + (b - a) * (k ? 1.0 : 0.0);
    if (!p.times.empty() && t <= p.times.back())
      continue;
    p.times.push_back(t);
    p.locs.push_back(nodes[k]);
  }
  if (p.times.size() < 2) {
    p.times = {a, b};
    p.locs = {x, y};
  }
  p.times.back() = b;
  return p;
}

Geodesic make_geodesic(const FiniteLengthSpace &space, const Loc &x, const Loc &y,
                       double a, double b) {
  Geodesic g;
  g.path = geodesic_path(space, x, y, a, b);
  g.velocity = space.distance(x, y) / (b - a);
  return g;
}

double path_length(const FiniteLengthSpace &space, const ParamPath &path, int n) {
  if (n < 1)
    throw std::invalid_argument("subdivision count must be >= 1");
  CompiledPath cp(space, path);
  const double a = path.a(), b = path.b();
  double sum = 0.0;
  Loc prev = cp.eval(a);
  for (int k = 1; k <= n; ++k) {
    const Loc cur = cp.eval(a + (b - a) * k / n);
    sum += space.distance(prev, cur);
    prev = cur;
  }
  return sum;
}

double path_energy(const FiniteLengthSpace &space, const ParamPath &path, int n) {
  if (n < 1)
    throw std::invalid_argument("subdivision count must be >= 1");
  CompiledPath cp(space, path);
  const double a = path.a(), b = path.b();
  const double dt = (b - a) / n;
  double sum = 0.0;
  Loc prev = cp.eval(a);
  for (int k = 1; k <= n; ++k) {
    const Loc cur = cp.eval(a + (b - a) * k / n);
    const double d = space.distance(prev, cur);
    sum += d * d / dt;
    prev = cur;
  }
  return sum;
}

EnergyStep energy_step_triangle(double dpq, double dqr, double dpr, double delta,
                                double eps) {
  if (!(delta > 0.0) || !(delta < eps))
    throw std::invalid_argument("need 0 < delta < eps");
  if (dpq < 0.0 || dqr < 0.0 || dpr < 0.0 || dpr > dpq + dqr + 1e-12)
    throw std::invalid_argument("inputs violate the triangle inequality");
  const double lhs = dpr * dpr / eps;
  const double rhs = dpq * dpq / delta + dqr * dqr / (eps - delta);
  const double scale = std::max({1.0, lhs, rhs});
  EnergyStep r;
  r.holds = lhs <= rhs + 1e-9 * scale;
  const bool additive = std::abs(dpr - (dpq + dqr)) <= 1e-9 * std::max(1.0, dpr);
  const bool same_speed =
      std::abs(dpq / delta - dqr / (eps - delta)) <= 1e-9 * std::max(1.0, dpq / delta);
  r.equality = additive && same_speed && std::abs(lhs - rhs) <= 1e-7 * scale;
  return r;
}

double geodesic_energy(double d, double a, double b) {
  if (!(b > a))
    throw std::invalid_argument("domain must satisfy b > a");
  if (d < 0.0)
    throw std::invalid_argument("distance must be nonnegative");
  return d * d / (b - a);
}

double perturbation_constant(double C1, int n, double a, double b) {
  if (!(C1 > 1.0))
    throw std::invalid_argument("C1 must exceed 1");
  if (n < 1)
    throw std::invalid_argument("n must be >= 1");
  if (!(b > a))
    throw std::invalid_argument("domain must satisfy b > a");
  return 4.0 * n * n * C1 / ((C1 - 1.0) * (b - a));
}

namespace {
double ambient_energy(const FiniteLengthSpace &space, const AmbientMap &m,
                      const ParamPath &path, int n) {
  CompiledPath cp(space, path);
  const double a = path.a(), b = path.b();
  const double dt = (b - a) / n;
  double sum = 0.0;
  Eigen::VectorXd prev = m(cp.eval(a));
  for (int k = 1; k <= n; ++k) {
    Eigen::VectorXd cur = m(cp.eval(a + (b - a) * k / n));
    sum += (cur - prev).squaredNorm() / dt;
    prev = cur;
  }
  return sum;
}
} // namespace

bool check_perturbed_energy(const FiniteLengthSpace &space, const AmbientMap &f,
                            const AmbientMap &g, const ParamPath &path, double C,
                            double lambda, double delta, int n) {
  if (!(C > 1.0))
    throw std::invalid_argument("C must exceed 1");
  if (!(lambda > 0.0))
    throw std::invalid_argument("lambda must be positive");
  if (n < 1)
    throw std::invalid_argument("subdivision count must be >= 1");
  CompiledPath cp(space, path);
  const double a = path.a(), b = path.b();
  for (int k = 0; k <= n; ++k) {
    const Loc p = cp.eval(a + (b - a) * k / n);
    if ((f(p) - g(p)).norm() >= delta)
      throw std::invalid_argument("sup |f-g| precondition violated");
  }
  const double ef = ambient_energy(space, f, path, n);
  const double eg = ambient_energy(space, g, path, n);
  return ef <= C * eg + lambda + 1e-9 * std::max(1.0, std::abs(ef));
}

double parallelogram_defect(const NormSampler &norm, const Eigen::VectorXd &x,
                            const Eigen::VectorXd &y) {
  const double nx = norm.eval(x), ny = norm.eval(y);
  const double np = norm.eval(x + y), nm = norm.eval(x - y);
  return std::abs(2.0 * nx * nx + 2.0 * ny * ny - np * np - nm * nm);
}

} // namespace minkembed
