#include "minkembed/cover_nerve.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

namespace minkembed {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double edge_len(const FiniteLengthSpace &space, int e) { return space.edge(e).w; }

Loc arc_loc(const FiniteLengthSpace &space, int e, double t) {
  double w = edge_len(space, e);
  return space.canonical(Loc::on_edge(e, t / w));
}

// Arc coordinate of a vertex on an edge, -1 when not an endpoint.
double vertex_arc(const GraphEdge &E, int v) {
  if (E.u == v) return 0.0;
  if (E.v == v) return E.w;
  return -1.0;
}

// Normalizes a union of open intervals: sorted, strict overlaps merged.
// Touching intervals stay separate; the shared endpoint is not in the set.
std::vector<SetInterval> merge_open(std::vector<SetInterval> v) {
  std::sort(v.begin(), v.end(), [](const SetInterval &a, const SetInterval &b) {
    if (a.edge != b.edge) return a.edge < b.edge;
    if (a.lo != b.lo) return a.lo < b.lo;
    return a.hi < b.hi;
  });
  std::vector<SetInterval> out;
  for (const auto &I : v) {
    if (!(I.hi > I.lo)) continue;
    if (!out.empty() && out.back().edge == I.edge && I.lo < out.back().hi) {
      out.back().hi = std::max(out.back().hi, I.hi);
    } else {
      out.push_back(I);
    }
  }
  return out;
}

double point_interval_distance(const FiniteLengthSpace &space, const Loc &x,
                               const SetInterval &I) {
  Loc xc = space.canonical(x);
  double w = edge_len(space, I.edge);
  if (!xc.is_vertex() && xc.edge == I.edge) {
    double t = xc.frac * w;
    if (t >= I.lo - 1e-15 && t <= I.hi + 1e-15) return 0.0;
  } else if (xc.is_vertex()) {
    double a = vertex_arc(space.edge(I.edge), xc.vertex);
    if (a >= 0.0 && a >= I.lo - 1e-15 && a <= I.hi + 1e-15) return 0.0;
  }
  Loc lo_pt = arc_loc(space, I.edge, I.lo);
  Loc hi_pt = arc_loc(space, I.edge, I.hi);
  return std::min(space.distance(xc, lo_pt), space.distance(xc, hi_pt));
}

// Closed complement of a merged open union, one closed interval list per edge.
// Degenerate atoms appear where two open intervals touch. Edge-end points are
// treated as covered exactly when an interval reaches the end.
std::vector<SetInterval> complement_closed(const FiniteLengthSpace &space,
                                           const std::vector<SetInterval> &merged) {
  std::vector<std::vector<std::pair<double, double>>> per(space.edge_count());
  for (const auto &I : merged) per[I.edge].push_back({I.lo, I.hi});
  std::vector<SetInterval> out;
  for (int e = 0; e < space.edge_count(); ++e) {
    double w = edge_len(space, e);
    auto &list = per[e];
    std::sort(list.begin(), list.end());
    double cursor = 0.0;
    bool first = true;
    for (const auto &[lo, hi] : list) {
      if (lo > cursor + 1e-15) {
        out.push_back({e, cursor, lo});
      } else if (!first && lo >= cursor - 1e-15) {
        out.push_back({e, cursor, cursor});
      }
      cursor = std::max(cursor, hi);
      first = false;
    }
    if (cursor < w - 1e-15) out.push_back({e, cursor, w});
  }
  return out;
}

// Exact max of min-of-linear terms over an interval pair (graph distance is a
// min of linear route terms in the two arc coordinates, so concave; the max
// can sit at term crossings, not just at corners).
double interval_pair_max_distance(const FiniteLengthSpace &space, const SetInterval &I,
                                  const SetInterval &J) {
  const GraphEdge &Ee = space.edge(I.edge);
  const GraphEdge &Ef = space.edge(J.edge);
  struct Lin {
    double ct, cs, c0;
  };
  std::vector<Lin> base;
  const int endsE[2] = {Ee.u, Ee.v};
  const int endsF[2] = {Ef.u, Ef.v};
  const double ctv[2] = {1.0, -1.0}, ct0[2] = {0.0, Ee.w};
  const double csv[2] = {1.0, -1.0}, cs0[2] = {0.0, Ef.w};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      base.push_back(
          {ctv[a], csv[b], ct0[a] + cs0[b] + space.vertex_distance(endsE[a], endsF[b])});

  bool same = I.edge == J.edge;
  const double tol = 1e-9;
  auto region_max = [&](int region) {
    std::vector<Lin> L = base;
    if (region > 0) L.push_back({1.0, -1.0, 0.0});
    if (region < 0) L.push_back({-1.0, 1.0, 0.0});
    struct Line {
      double a, b, c;
    };
    std::vector<Line> lines;
    for (size_t i = 0; i < L.size(); ++i)
      for (size_t j = i + 1; j < L.size(); ++j)
        lines.push_back({L[i].ct - L[j].ct, L[i].cs - L[j].cs, L[j].c0 - L[i].c0});
    lines.push_back({1.0, 0.0, I.lo});
    lines.push_back({1.0, 0.0, I.hi});
    lines.push_back({0.0, 1.0, J.lo});
    lines.push_back({0.0, 1.0, J.hi});
    if (region != 0) lines.push_back({1.0, -1.0, 0.0});
    auto feasible = [&](double t, double s) {
      if (t < I.lo - tol || t > I.hi + tol) return false;
      if (s < J.lo - tol || s > J.hi + tol) return false;
      if (region > 0 && t - s < -tol) return false;
      if (region < 0 && s - t < -tol) return false;
      return true;
    };
    auto value = [&](double t, double s) {
      t = std::clamp(t, I.lo, I.hi);
      s = std::clamp(s, J.lo, J.hi);
      double m = kInf;
      for (const auto &l : L) m = std::min(m, l.ct * t + l.cs * s + l.c0);
      return m;
    };
    double best = -kInf;
    for (size_t i = 0; i < lines.size(); ++i)
      for (size_t j = i + 1; j < lines.size(); ++j) {
        double det = lines[i].a * lines[j].b - lines[j].a * lines[i].b;
        if (std::abs(det) < 1e-12) continue;
        double t = (lines[i].c * lines[j].b - lines[j].c * lines[i].b) / det;
        double s = (lines[i].a * lines[j].c - lines[j].a * lines[i].c) / det;
        if (feasible(t, s)) best = std::max(best, value(t, s));
      }
    return best;
  };
  if (same) return std::max(region_max(1), region_max(-1));
  return region_max(0);
}

double interval_pair_min_distance(const FiniteLengthSpace &space, const SetInterval &I,
                                  const SetInterval &J) {
  if (I.edge == J.edge && std::max(I.lo, J.lo) <= std::min(I.hi, J.hi) + 1e-15) return 0.0;
  Loc a0 = arc_loc(space, I.edge, I.lo), a1 = arc_loc(space, I.edge, I.hi);
  Loc b0 = arc_loc(space, J.edge, J.lo), b1 = arc_loc(space, J.edge, J.hi);
  double d = space.distance(a0, b0);
  d = std::min(d, space.distance(a0, b1));
  d = std::min(d, space.distance(a1, b0));
  d = std::min(d, space.distance(a1, b1));
  return d;
}

std::vector<SetInterval> route_intervals(const GeodesicRecord &g, double lo, double hi) {
  std::vector<SetInterval> out;
  for (const auto &p : g.route) {
    double len = std::abs(p.a1 - p.a0);
    double a = std::max(p.cum, lo), b = std::min(p.cum + len, hi);
    if (b - a <= 1e-15) continue;
    double dir = p.a1 >= p.a0 ? 1.0 : -1.0;
    double t0 = p.a0 + dir * (a - p.cum);
    double t1 = p.a0 + dir * (b - p.cum);
    out.push_back({p.edge, std::min(t0, t1), std::max(t0, t1)});
  }
  return out;
}

bool covers_open(const std::vector<std::pair<double, double>> &big, double lo, double hi) {
  double covered = lo, maxhi = lo;
  size_t k = 0;
  while (covered < hi - 1e-12) {
    while (k < big.size() && big[k].first <= covered + 1e-12) {
      maxhi = std::max(maxhi, big[k].second);
      ++k;
    }
    if (maxhi <= covered) return false;
    covered = maxhi;
  }
  return true;
}

// Interval endpoints that should coincide can drift by a few ulps when they
// are produced along different arithmetic routes.  Cluster near-equal values
// and map each onto its cluster representative so touching sets neither gain
// sliver intersections nor lose shared boundary points.
static std::vector<double> snap_reps(std::vector<double> vals, double tol) {
  std::sort(vals.begin(), vals.end());
  std::vector<double> reps;
  for (double v : vals)
    if (reps.empty() || v - reps.back() > tol) reps.push_back(v);
  return reps;
}

static double snap_to(const std::vector<double> &reps, double x) {
  auto it = std::upper_bound(reps.begin(), reps.end(), x);
  return it == reps.begin() ? reps.front() : *(it - 1);
}

static double snap_tol(double w) { return 1e-9 * std::max(1.0, w); }

// Max number of sets whose closures share a point.
int family_order(const FiniteLengthSpace &space,
                 const std::vector<const std::vector<SetInterval> *> &members) {
  int best = 0;
  for (int e = 0; e < space.edge_count(); ++e) {
    std::vector<double> vals = {0.0, edge_len(space, e)};
    for (const auto *m : members)
      for (const auto &I : *m)
        if (I.edge == e) {
          vals.push_back(I.lo);
          vals.push_back(I.hi);
        }
    auto reps = snap_reps(std::move(vals), snap_tol(edge_len(space, e)));
    // closed-merge each member's intervals on this edge
    std::vector<std::pair<double, int>> events; // (pos, 0=add/1=remove)
    for (const auto *m : members) {
      std::vector<std::pair<double, double>> iv;
      for (const auto &I : *m)
        if (I.edge == e) iv.push_back({snap_to(reps, I.lo), snap_to(reps, I.hi)});
      std::sort(iv.begin(), iv.end());
      std::vector<std::pair<double, double>> closed;
      for (const auto &p : iv) {
        if (!closed.empty() && p.first <= closed.back().second + 1e-15)
          closed.back().second = std::max(closed.back().second, p.second);
        else
          closed.push_back(p);
      }
      for (const auto &p : closed) {
        events.push_back({p.first, 0});
        events.push_back({p.second, 1});
      }
    }
    std::sort(events.begin(), events.end());
    int run = 0;
    for (const auto &[pos, kind] : events) {
      (void)pos;
      if (kind == 0) {
        ++run;
        best = std::max(best, run);
      } else {
        --run;
      }
    }
  }
  for (int v = 0; v < space.vertex_count(); ++v) {
    int count = 0;
    for (const auto *m : members) {
      bool touch = false;
      for (const auto &I : *m) {
        const GraphEdge &E = space.edge(I.edge);
        double a = vertex_arc(E, v);
        if (a < 0.0) continue;
        if (a <= 1e-15 ? I.lo <= 1e-12 : I.hi >= E.w - 1e-12) {
          touch = true;
          break;
        }
      }
      if (touch) ++count;
    }
    best = std::max(best, count);
  }
  return best;
}

NervePoint make_nerve_point(std::vector<std::pair<int, double>> terms) {
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  std::vector<std::pair<int, double>> kept;
  for (const auto &t : terms)
    if (t.second > 1e-15) {
      kept.push_back(t);
      sum += t.second;
    }
  if (kept.empty() || sum <= 0.0) throw std::runtime_error("nerve point has no support");
  NervePoint p;
  p.simplex.reserve(kept.size());
  p.bary.resize(static_cast<int>(kept.size()));
  for (size_t i = 0; i < kept.size(); ++i) {
    p.simplex.push_back(kept[i].first);
    p.bary[static_cast<int>(i)] = kept[i].second / sum;
  }
  return p;
}

NervePoint psi_at_arc(const TruncatedSegment &seg, double s) {
  double xi = seg.xi;
  double m_lo = seg.s0 - 0.5 * xi;
  double m_hi = seg.s1 + 0.5 * xi;
  int P = seg.pieces;
  if (s <= m_lo + 1e-15) return vertex_point(seg.u_start);
  if (s >= m_hi - 1e-15) return vertex_point(seg.u_end);
  double first = seg.mid_arc(0);
  double last = seg.mid_arc(P - 1);
  if (s <= first) {
    double f = (s - m_lo) / xi;
    return make_nerve_point({{seg.u_start, 1.0 - f}, {seg.v_sets[0], f}});
  }
  if (s >= last) {
    double f = (s - last) / xi;
    return make_nerve_point({{seg.v_sets[P - 1], 1.0 - f}, {seg.u_end, f}});
  }
  int k = static_cast<int>(std::floor((s - seg.s0) / xi - 0.5));
  k = std::clamp(k, 0, P - 2);
  while (k < P - 2 && seg.mid_arc(k + 1) < s) ++k;
  while (k > 0 && seg.mid_arc(k) > s) --k;
  double f = (s - seg.mid_arc(k)) / xi;
  f = std::clamp(f, 0.0, 1.0);
  return make_nerve_point({{seg.v_sets[k], 1.0 - f}, {seg.v_sets[k + 1], f}});
}

std::string set_label(const Cover &cover, int idx) {
  const CoverSet &s = cover.sets.at(idx);
  std::ostringstream os;
  os << "set " << idx << " (";
  switch (s.tag) {
  case SetTag::U:
    os << "ball of point " << s.point;
    break;
  case SetTag::V:
    os << "tube " << s.sub_index << " of geodesic " << s.geodesic;
    break;
  case SetTag::W:
    os << "gap piece";
    break;
  }
  os << ")";
  return os.str();
}

Eigen::VectorXd project_to_simplex(Eigen::VectorXd v) {
  const int n = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, tau = 0.0;
  int rho = 0;
  for (int i = 0; i < n; ++i) {
    css += u[i];
    double t = (css - 1.0) / (i + 1);
    if (u[i] - t > 0.0) {
      rho = i + 1;
      tau = t;
    }
  }
  if (rho == 0) tau = (css - 1.0) / n;
  for (int i = 0; i < n; ++i) v[i] = std::max(0.0, v[i] - tau);
  double s = v.sum();
  if (s > 0.0) v /= s;
  return v;
}

bool simplex_subset(const Simplex &small, const Simplex &big) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

// Barycentric-to-edge-vector coordinate map for vertices `verts` inside
// simplex `s` (coordinates relative to s[0]).
Eigen::MatrixXd coord_map(const Simplex &s, const Simplex &verts) {
  const int k = static_cast<int>(s.size()) - 1;
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(std::max(k, 1), static_cast<int>(verts.size()));
  for (size_t j = 0; j < verts.size(); ++j) {
    auto it = std::lower_bound(s.begin(), s.end(), verts[j]);
    if (it == s.end() || *it != verts[j])
      throw std::logic_error("chain face vertex outside its simplex");
    int idx = static_cast<int>(it - s.begin());
    if (idx > 0) B(idx - 1, static_cast<int>(j)) = 1.0;
  }
  if (k == 0) return Eigen::MatrixXd::Zero(0, static_cast<int>(verts.size()));
  return B;
}

// Length of the taut chain through the fixed simplex sequence, by projected
// gradient descent on the face points (convex problem). y == nullptr leaves
// the far end free, giving a lower bound for any extension of the sequence.
double chain_relax(const MetricComplex &complex, const std::vector<Simplex> &seq,
                   const NervePoint &x, const NervePoint *y,
                   std::vector<Simplex> *faces_out,
                   std::vector<Eigen::VectorXd> *vars_out) {
  const int m = static_cast<int>(seq.size());
  const int nseg = y ? m : m - 1;
  std::vector<Simplex> faces(m); // faces[j] joins seq[j-1], seq[j]
  for (int j = 1; j < m; ++j) {
    Simplex f;
    std::set_intersection(seq[j - 1].begin(), seq[j - 1].end(), seq[j].begin(),
                          seq[j].end(), std::back_inserter(f));
    if (f.empty()) throw std::logic_error("chain simplices do not share a face");
    faces[j] = f;
  }
  if (nseg <= 0) {
    if (faces_out) *faces_out = faces;
    if (vars_out) vars_out->clear();
    return 0.0;
  }

  std::vector<QuadraticForm> forms(nseg);
  std::vector<Eigen::MatrixXd> BL(nseg), BR(nseg);
  double scale2 = 1.0;
  for (int j = 0; j < nseg; ++j) {
    forms[j] = quadratic_form(complex, seq[j]);
    if (forms[j].k > 0) scale2 = std::max(scale2, forms[j].m.diagonal().maxCoeff());
    BL[j] = coord_map(seq[j], j == 0 ? x.simplex : faces[j]);
    BR[j] = coord_map(seq[j], (y && j == nseg - 1) ? y->simplex : faces[j + 1]);
  }
  const double mu = 1e-18 * scale2;

  std::vector<Eigen::VectorXd> lam(m); // lam[j] lives on faces[j], j = 1..m-1
  for (int j = 1; j < m; ++j)
    lam[j] = Eigen::VectorXd::Constant(static_cast<int>(faces[j].size()),
                                       1.0 / faces[j].size());

  auto left_vec = [&](int j) -> Eigen::VectorXd {
    return j == 0 ? Eigen::VectorXd(BL[0] * x.bary) : Eigen::VectorXd(BL[j] * lam[j]);
  };
  auto right_vec = [&](int j) -> Eigen::VectorXd {
    if (y && j == nseg - 1) return BR[j] * y->bary;
    return BR[j] * lam[j + 1];
  };
  auto objective = [&](bool smooth) {
    double f = 0.0;
    for (int j = 0; j < nseg; ++j) {
      Eigen::VectorXd d = right_vec(j) - left_vec(j);
      double q = forms[j].k > 0 ? d.dot(forms[j].m * d) : 0.0;
      f += std::sqrt(std::max(q, 0.0) + (smooth ? mu : 0.0));
    }
    return f;
  };

  if (m >= 2) {
    double f = objective(true);
    double step = 0.5;
    for (int iter = 0; iter < 4000 && step > 1e-16; ++iter) {
      std::vector<Eigen::VectorXd> grad(m);
      for (int j = 1; j < m; ++j)
        grad[j] = Eigen::VectorXd::Zero(lam[j].size());
      for (int j = 0; j < nseg; ++j) {
        Eigen::VectorXd d = right_vec(j) - left_vec(j);
        double q = forms[j].k > 0 ? d.dot(forms[j].m * d) : 0.0;
        double len = std::sqrt(std::max(q, 0.0) + mu);
        if (len <= 0.0 || forms[j].k == 0) continue;
        Eigen::VectorXd g = forms[j].m * d / len;
        if (!(y && j == nseg - 1)) grad[j + 1] += BR[j].transpose() * g;
        if (j > 0) grad[j] -= BL[j].transpose() * g;
      }
      double gnorm = 0.0;
      for (int j = 1; j < m; ++j) gnorm += grad[j].squaredNorm();
      if (gnorm < 1e-24) break;
      std::vector<Eigen::VectorXd> trial(m);
      bool accepted = false;
      while (step > 1e-16) {
        for (int j = 1; j < m; ++j)
          trial[j] = project_to_simplex(lam[j] - step * grad[j]);
        std::swap(lam, trial);
        double ft = objective(true);
        if (ft < f - 1e-18) {
          f = ft;
          step *= 1.25;
          accepted = true;
          break;
        }
        std::swap(lam, trial);
        step *= 0.5;
      }
      if (!accepted) break;
    }
  }
  if (faces_out) *faces_out = faces;
  if (vars_out) {
    vars_out->assign(lam.begin(), lam.end());
  }
  return objective(false);
}

} // namespace

Simplex NervePoint::support(double tol) const {
  Simplex out;
  for (size_t i = 0; i < simplex.size(); ++i)
    if (bary[static_cast<int>(i)] > tol) out.push_back(simplex[i]);
  return out;
}

NervePoint vertex_point(int v) {
  NervePoint p;
  p.simplex = {v};
  p.bary = Eigen::VectorXd::Ones(1);
  return p;
}

GeodesicRecord trace_route(const FiniteLengthSpace &space, const Loc &a, const Loc &b) {
  GeodesicRecord g;
  g.a = space.canonical(a);
  g.b = space.canonical(b);
  auto locs = space.witness_locs(g.a, g.b);
  double cum = 0.0;
  for (size_t i = 0; i + 1 < locs.size(); ++i) {
    const Loc &p = locs[i], &q = locs[i + 1];
    double d = space.distance(p, q);
    if (d <= 1e-15) continue;
    int e = -1;
    double t0 = 0.0, t1 = 0.0;
    if (!p.is_vertex() && !q.is_vertex()) {
      if (p.edge != q.edge) throw std::runtime_error("route step spans two edges");
      e = p.edge;
      t0 = p.frac * edge_len(space, e);
      t1 = q.frac * edge_len(space, e);
    } else if (!p.is_vertex()) {
      e = p.edge;
      t0 = p.frac * edge_len(space, e);
      t1 = vertex_arc(space.edge(e), q.vertex);
      if (t1 < 0.0) throw std::runtime_error("route leaves its edge away from an endpoint");
    } else if (!q.is_vertex()) {
      e = q.edge;
      t1 = q.frac * edge_len(space, e);
      t0 = vertex_arc(space.edge(e), p.vertex);
      if (t0 < 0.0) throw std::runtime_error("route leaves its edge away from an endpoint");
    } else {
      for (int ei = 0; ei < space.edge_count(); ++ei) {
        const GraphEdge &E = space.edge(ei);
        bool match = (E.u == p.vertex && E.v == q.vertex) ||
                     (E.u == q.vertex && E.v == p.vertex);
        if (match && std::abs(E.w - d) <= 1e-9 * std::max(1.0, E.w)) {
          e = ei;
          t0 = vertex_arc(E, p.vertex);
          t1 = vertex_arc(E, q.vertex);
          break;
        }
      }
      if (e < 0) throw std::runtime_error("no edge realizes a route step");
    }
    g.route.push_back({e, t0, t1, cum});
    cum += std::abs(t1 - t0);
  }
  g.length = cum;
  if (std::abs(cum - space.distance(g.a, g.b)) > 1e-9 * std::max(1.0, cum))
    throw std::runtime_error("route length disagrees with the metric");
  return g;
}

Loc route_point(const FiniteLengthSpace &space, const GeodesicRecord &g, double s) {
  if (g.route.empty()) return g.a;
  if (s <= 0.0) return g.a;
  if (s >= g.length) return g.b;
  for (const auto &p : g.route) {
    double len = std::abs(p.a1 - p.a0);
    if (s <= p.cum + len + 1e-12) {
      double dir = p.a1 >= p.a0 ? 1.0 : -1.0;
      double t = p.a0 + dir * std::clamp(s - p.cum, 0.0, len);
      return arc_loc(space, p.edge, t);
    }
  }
  return g.b;
}

std::optional<double> route_locate(const FiniteLengthSpace &space, const GeodesicRecord &g,
                                   const Loc &x) {
  Loc xc = space.canonical(x);
  if (g.route.empty()) {
    if (space.same_point(xc, g.a)) return 0.0;
    return std::nullopt;
  }
  for (const auto &p : g.route) {
    double lo = std::min(p.a0, p.a1), hi = std::max(p.a0, p.a1);
    double t = -1.0;
    if (!xc.is_vertex() && xc.edge == p.edge) {
      t = xc.frac * edge_len(space, p.edge);
    } else if (xc.is_vertex()) {
      double a = vertex_arc(space.edge(p.edge), xc.vertex);
      if (a >= 0.0) t = a;
    }
    if (t < lo - 1e-9 || t > hi + 1e-9 || t < 0.0) continue;
    t = std::clamp(t, lo, hi);
    return p.cum + std::abs(t - p.a0);
  }
  return std::nullopt;
}

std::vector<SetInterval> tube_intervals(const FiniteLengthSpace &space,
                                        const std::vector<SetInterval> &core, double r) {
  if (!(r > 0.0)) return {};
  std::vector<SetInterval> out;
  for (int e = 0; e < space.edge_count(); ++e) {
    const GraphEdge &E = space.edge(e);
    Loc uLoc = Loc::at_vertex(E.u), vLoc = Loc::at_vertex(E.v);
    for (const auto &I : core) {
      Loc lo_pt = arc_loc(space, I.edge, I.lo);
      Loc hi_pt = arc_loc(space, I.edge, I.hi);
      auto push = [&](double lo, double hi) {
        lo = std::max(lo, 0.0);
        hi = std::min(hi, E.w);
        if (hi > lo) out.push_back({e, lo, hi});
      };
      if (I.edge == e) push(I.lo - r, I.hi + r);
      double du = std::min(space.distance(uLoc, lo_pt), space.distance(uLoc, hi_pt));
      if (du < r) push(0.0, r - du);
      double dv = std::min(space.distance(vLoc, lo_pt), space.distance(vLoc, hi_pt));
      if (dv < r) push(E.w - (r - dv), E.w);
    }
  }
  return merge_open(std::move(out));
}

std::vector<SetInterval> ball_intervals(const FiniteLengthSpace &space, const Loc &center,
                                        double r) {
  Loc c = space.canonical(center);
  std::vector<SetInterval> core;
  if (c.is_vertex()) {
    for (int e = 0; e < space.edge_count(); ++e) {
      double a = vertex_arc(space.edge(e), c.vertex);
      if (a >= 0.0) {
        core.push_back({e, a, a});
        break;
      }
    }
    if (core.empty()) return {};
  } else {
    double t = c.frac * edge_len(space, c.edge);
    core.push_back({c.edge, t, t});
  }
  return tube_intervals(space, core, r);
}

bool point_in_intervals(const FiniteLengthSpace &space, const std::vector<SetInterval> &s,
                        const Loc &x, bool open) {
  Loc xc = space.canonical(x);
  if (!xc.is_vertex()) {
    double t = xc.frac * edge_len(space, xc.edge);
    for (const auto &I : s) {
      if (I.edge != xc.edge) continue;
      if (open ? (t > I.lo && t < I.hi) : (t >= I.lo - 1e-15 && t <= I.hi + 1e-15))
        return true;
    }
    return false;
  }
  for (const auto &I : s) {
    const GraphEdge &E = space.edge(I.edge);
    double a = vertex_arc(E, xc.vertex);
    if (a < 0.0) continue;
    if (a <= 1e-15 ? I.lo <= 1e-12 : I.hi >= E.w - 1e-12) return true;
  }
  return false;
}

double distance_to_set(const FiniteLengthSpace &space, const std::vector<SetInterval> &s,
                       const Loc &x) {
  double d = kInf;
  for (const auto &I : s) d = std::min(d, point_interval_distance(space, x, I));
  return d;
}

double distance_to_complement(const FiniteLengthSpace &space,
                              const std::vector<SetInterval> &s, const Loc &x) {
  auto comp = complement_closed(space, merge_open(s));
  if (comp.empty()) return kInf;
  double d = kInf;
  for (const auto &I : comp) d = std::min(d, point_interval_distance(space, x, I));
  return d;
}

double set_distance(const FiniteLengthSpace &space, const std::vector<SetInterval> &a,
                    const std::vector<SetInterval> &b) {
  double d = kInf;
  for (const auto &I : a)
    for (const auto &J : b) d = std::min(d, interval_pair_min_distance(space, I, J));
  return d;
}

double set_diameter(const FiniteLengthSpace &space, const std::vector<SetInterval> &s) {
  double d = 0.0;
  for (size_t i = 0; i < s.size(); ++i)
    for (size_t j = i; j < s.size(); ++j)
      d = std::max(d, interval_pair_max_distance(space, s[i], s[j]));
  return d;
}

bool interval_union_contains(const FiniteLengthSpace &space,
                             const std::vector<SetInterval> &big,
                             const std::vector<SetInterval> &small) {
  auto merged = merge_open(big);
  std::vector<std::vector<std::pair<double, double>>> per(space.edge_count());
  for (const auto &I : merged) per[I.edge].push_back({I.lo, I.hi});
  for (auto &v : per) std::sort(v.begin(), v.end());
  for (const auto &I : small) {
    if (I.hi - I.lo <= 1e-12) {
      Loc mid = arc_loc(space, I.edge, 0.5 * (I.lo + I.hi));
      if (!point_in_intervals(space, merged, mid, true)) return false;
      continue;
    }
    if (!covers_open(per[I.edge], I.lo, I.hi)) return false;
  }
  return true;
}

Cover build_U(const FiniteLengthSpace &space, const std::vector<Loc> &points,
              const std::vector<GeodesicRecord> &geodesics, double delta0) {
  if (points.empty()) throw std::invalid_argument("at least one marked point is required");
  if (!(delta0 > 0.0)) throw std::invalid_argument("delta0 must be positive");
  Cover c;
  c.space = &space;
  c.delta_prev = delta0;
  for (const auto &p : points) c.points.push_back(space.canonical(p));
  c.geodesics = geodesics;

  std::vector<std::vector<SetInterval>> routes;
  for (auto &g : c.geodesics) {
    int ia = -1, ib = -1;
    for (size_t i = 0; i < c.points.size(); ++i) {
      if (space.same_point(g.a, c.points[i])) ia = static_cast<int>(i);
      if (space.same_point(g.b, c.points[i])) ib = static_cast<int>(i);
    }
    if (ia < 0 || ib < 0)
      throw std::invalid_argument("geodesic endpoint is not a marked point");
    g.d_a = ia;
    g.d_b = ib;
    routes.push_back(route_intervals(g, 0.0, g.length));
  }

  double eta = kInf;
  for (size_t i = 0; i < c.points.size(); ++i) {
    for (size_t gi = 0; gi < c.geodesics.size(); ++gi) {
      const auto &g = c.geodesics[gi];
      bool incident = space.same_point(c.points[i], g.a) || space.same_point(c.points[i], g.b);
      if (incident) continue;
      double d = distance_to_set(space, routes[gi], c.points[i]);
      if (d <= 1e-12) {
        std::ostringstream os;
        os << "geodesic " << gi << " passes through unregistered point " << i;
        throw std::runtime_error(os.str());
      }
      eta = std::min(eta, d);
    }
  }
  c.alpha = 0.5 * std::min(eta, delta0 / 3.0);
  c.alpha_prime = 0.5 * c.alpha;

  c.u_set_of_point.assign(c.points.size(), -1);
  for (size_t i = 0; i < c.points.size(); ++i) {
    CoverSet s;
    s.tag = SetTag::U;
    s.intervals = ball_intervals(space, c.points[i], c.alpha_prime);
    if (s.intervals.empty()) throw std::runtime_error("marked point ball is empty");
    s.anchor = c.points[i];
    s.point = static_cast<int>(i);
    c.u_set_of_point[i] = static_cast<int>(c.sets.size());
    c.sets.push_back(std::move(s));
  }
  for (size_t i = 0; i < c.points.size(); ++i)
    for (size_t j = i + 1; j < c.points.size(); ++j)
      if (set_distance(space, c.sets[c.u_set_of_point[i]].intervals,
                       c.sets[c.u_set_of_point[j]].intervals) <= 0.0)
        throw std::runtime_error("point balls are not disjoint");
  for (size_t i = 0; i < c.points.size(); ++i)
    for (size_t gi = 0; gi < c.geodesics.size(); ++gi) {
      const auto &g = c.geodesics[gi];
      if (space.same_point(c.points[i], g.a) || space.same_point(c.points[i], g.b)) continue;
      if (set_distance(space, c.sets[c.u_set_of_point[i]].intervals, routes[gi]) <= 0.0)
        throw std::runtime_error("point ball touches a geodesic it must avoid");
    }
  return c;
}

Cover build_V(Cover cover, double beta_cap, const std::vector<SubdivisionPlan> &plans) {
  const FiniteLengthSpace &space = *cover.space;
  if (cover.sets.empty()) throw std::invalid_argument("ball family missing");
  const double ap = cover.alpha_prime;

  const int G = static_cast<int>(cover.geodesics.size());
  std::vector<double> s0(G), s1(G);
  std::vector<std::vector<SetInterval>> trunc(G);
  for (int gi = 0; gi < G; ++gi) {
    const auto &g = cover.geodesics[gi];
    s0[gi] = ap;
    s1[gi] = g.length - ap;
    if (s1[gi] - s0[gi] <= ap)
      throw std::runtime_error("geodesic too short for its end balls");
    trunc[gi] = route_intervals(g, s0[gi], s1[gi]);
  }
  double mu = kInf;
  for (int i = 0; i < G; ++i)
    for (int j = i + 1; j < G; ++j) {
      double d = set_distance(space, trunc[i], trunc[j]);
      if (d <= 1e-12) throw std::runtime_error("truncated geodesic segments intersect");
      mu = std::min(mu, d);
    }
  double beta = std::min(mu, cover.alpha) / 3.0;
  if (beta_cap > 0.0) beta = std::min(beta, beta_cap);
  cover.beta = beta;
  cover.beta_prime = beta / 3.0;
  const double bprime = cover.beta_prime;

  for (int gi = 0; gi < G; ++gi) {
    const auto &g = cover.geodesics[gi];
    const SubdivisionPlan *plan = nullptr;
    for (const auto &p : plans)
      if (p.geodesic == gi) plan = &p;

    double xi = 0.0;
    int pieces = 0;
    if (plan) {
      double klo = std::ceil((std::max(plan->lo, s0[gi]) - plan->anchor) / plan->spacing - 1e-9);
      double khi = std::floor((std::min(plan->hi, s1[gi]) - plan->anchor) / plan->spacing + 1e-9);
      while (plan->anchor + klo * plan->spacing <= s0[gi] + 1e-12) klo += 1.0;
      while (plan->anchor + khi * plan->spacing >= s1[gi] - 1e-12) khi -= 1.0;
      if (klo > khi) plan = nullptr;
      if (plan) {
        int K = static_cast<int>(std::floor(plan->spacing / bprime)) + 1;
        xi = plan->spacing / K;
        double first_m = plan->anchor + klo * plan->spacing;
        double last_m = plan->anchor + khi * plan->spacing;
        double Ea = first_m - 0.5 * xi - s0[gi];
        double Eb = s1[gi] - (last_m + 0.5 * xi);
        if (Ea < -1e-12 || Eb < -1e-12)
          throw std::runtime_error("persisting midpoint sits inside an end ball");
        int qa = static_cast<int>(std::floor(std::max(Ea, 0.0) / xi + 1e-9));
        int qb = static_cast<int>(std::floor(std::max(Eb, 0.0) / xi + 1e-9));
        double new_s0 = first_m - (qa + 0.5) * xi;
        double new_s1 = last_m + (qb + 0.5) * xi;
        auto enlarge = [&](int point_idx, double at, double radius) {
          if (radius <= 1e-12) return;
          if (radius >= xi) throw std::runtime_error("end ball enlargement too large");
          Loc z = route_point(space, g, at);
          auto extra = ball_intervals(space, z, radius);
          for (int gj = 0; gj < G; ++gj) {
            if (gj == gi) continue;
            if (set_distance(space, extra, trunc[gj]) <= 0.0)
              throw std::runtime_error("end ball enlargement touches another segment");
          }
          auto &uset = cover.sets[cover.u_set_of_point.at(point_idx)];
          auto joined = uset.intervals;
          joined.insert(joined.end(), extra.begin(), extra.end());
          uset.intervals = merge_open(std::move(joined));
        };
        enlarge(g.d_a, s0[gi], new_s0 - s0[gi]);
        enlarge(g.d_b, s1[gi], s1[gi] - new_s1);
        s0[gi] = new_s0;
        s1[gi] = new_s1;
        pieces = static_cast<int>(std::llround(khi - klo)) * K + qa + qb + 1;
        if (std::abs(pieces * xi - (s1[gi] - s0[gi])) > 1e-9 * std::max(1.0, g.length))
          throw std::runtime_error("subinterval grid does not fill the segment");
        for (double k = klo; k <= khi + 0.5; k += 1.0) {
          double mid = plan->anchor + k * plan->spacing;
          double j = std::round((mid - s0[gi]) / xi - 0.5);
          if (std::abs(s0[gi] + (j + 0.5) * xi - mid) > 1e-9)
            throw std::runtime_error("persisting midpoint lost by the new grid");
        }
      }
    }
    if (!plan) {
      double Lw = s1[gi] - s0[gi];
      pieces = static_cast<int>(std::floor(Lw / bprime)) + 1;
      xi = Lw / pieces;
    }
    if (!(xi < bprime + 1e-15))
      throw std::runtime_error("subinterval length failed its bound");

    TruncatedSegment seg;
    seg.geodesic = gi;
    seg.s0 = s0[gi];
    seg.s1 = s1[gi];
    seg.pieces = pieces;
    seg.xi = xi;
    seg.u_start = cover.u_set_of_point.at(g.d_a);
    seg.u_end = cover.u_set_of_point.at(g.d_b);
    for (int k = 0; k < pieces; ++k) {
      auto core = route_intervals(g, s0[gi] + k * xi, s0[gi] + (k + 1) * xi);
      CoverSet s;
      s.tag = SetTag::V;
      s.intervals = tube_intervals(space, core, 0.5 * xi);
      s.anchor_arc = seg.mid_arc(k);
      s.anchor = route_point(space, g, s.anchor_arc);
      s.geodesic = gi;
      s.sub_index = k;
      seg.v_sets.push_back(static_cast<int>(cover.sets.size()));
      cover.sets.push_back(std::move(s));
    }
    cover.segments.push_back(std::move(seg));
    cover.max_xi = std::max(cover.max_xi, xi);
  }

  for (int i : cover.u_set_of_point)
    cover.alpha = std::max(cover.alpha, set_diameter(space, cover.sets[i].intervals));
  if (cover.alpha >= cover.delta_prev / 3.0)
    throw std::runtime_error("ball mesh exceeds a third of the separation scale");
  return cover;
}

Cover build_W(Cover cover, double epsilon) {
  const FiniteLengthSpace &space = *cover.space;
  if (!(epsilon > 0.0) || epsilon >= cover.beta)
    throw std::invalid_argument("epsilon must lie in (0, beta)");
  cover.epsilon = epsilon;

  std::vector<SetInterval> covered;
  for (const auto &s : cover.sets)
    covered.insert(covered.end(), s.intervals.begin(), s.intervals.end());
  covered = merge_open(std::move(covered));
  auto zgaps = complement_closed(space, covered);

  std::vector<std::vector<SetInterval>> routes;
  for (const auto &g : cover.geodesics) routes.push_back(route_intervals(g, 0.0, g.length));
  auto dist_to_routes = [&](const SetInterval &I) {
    double d = kInf;
    for (const auto &r : routes) {
      for (const auto &J : r) d = std::min(d, interval_pair_min_distance(space, I, J));
    }
    return d;
  };

  // connected components of the gap region (intervals joined through shared
  // uncovered vertices)
  std::vector<bool> zvert(space.vertex_count(), false);
  for (int v = 0; v < space.vertex_count(); ++v)
    zvert[v] = !point_in_intervals(space, covered, Loc::at_vertex(v), true);
  std::vector<int> comp(zgaps.size());
  std::vector<int> vcomp(space.vertex_count(), -1);
  {
    std::vector<int> parent(zgaps.size() + space.vertex_count());
    for (size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int a) {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
    for (size_t i = 0; i < zgaps.size(); ++i) {
      const GraphEdge &E = space.edge(zgaps[i].edge);
      if (zgaps[i].lo <= 1e-12 && zvert[E.u]) unite(static_cast<int>(i),
                                                    static_cast<int>(zgaps.size()) + E.u);
      if (zgaps[i].hi >= E.w - 1e-12 && zvert[E.v])
        unite(static_cast<int>(i), static_cast<int>(zgaps.size()) + E.v);
    }
    for (size_t i = 0; i < zgaps.size(); ++i) comp[i] = find(static_cast<int>(i));
    for (int v = 0; v < space.vertex_count(); ++v)
      if (zvert[v]) vcomp[v] = find(static_cast<int>(zgaps.size()) + v);
  }
  auto cross_gap = [&](const SetInterval &I, int my_comp) {
    double d = kInf;
    for (size_t j = 0; j < zgaps.size(); ++j) {
      if (comp[j] == my_comp) continue;
      d = std::min(d, interval_pair_min_distance(space, I, zgaps[j]));
    }
    return d;
  };

  std::vector<double> hub_radius(space.vertex_count(), 0.0);
  int first_w = static_cast<int>(cover.sets.size());
  for (int v = 0; v < space.vertex_count(); ++v) {
    if (!zvert[v]) continue;
    Loc vl = Loc::at_vertex(v);
    double dgeo = kInf;
    for (const auto &r : routes) dgeo = std::min(dgeo, distance_to_set(space, r, vl));
    if (dgeo <= 1e-12) throw std::runtime_error("uncovered vertex sits on a geodesic");
    double dv = kInf;
    for (int u = 0; u < space.vertex_count(); ++u)
      if (u != v && zvert[u]) dv = std::min(dv, space.vertex_distance(v, u));
    double h = std::min({epsilon / 4.0, dgeo / 2.0, dv / 3.0});
    double dcross = kInf;
    for (size_t j = 0; j < zgaps.size(); ++j) {
      if (comp[j] == vcomp[v]) continue;
      dcross = std::min(dcross, point_interval_distance(space, vl, zgaps[j]));
    }
    h = std::min(h, dcross / 3.0);
    if (!(h > 0.0)) throw std::runtime_error("gap piece radius collapsed to zero");
    hub_radius[v] = h;
    CoverSet s;
    s.tag = SetTag::W;
    s.intervals = ball_intervals(space, vl, h);
    s.anchor = vl;
    cover.sets.push_back(std::move(s));
  }

  for (size_t zi = 0; zi < zgaps.size(); ++zi) {
    const SetInterval &Z = zgaps[zi];
    const GraphEdge &E = space.edge(Z.edge);
    double start = Z.lo, end = Z.hi;
    double hub_lo = 0.0, hub_hi = 0.0;
    if (Z.lo <= 1e-12 && zvert[E.u]) {
      hub_lo = hub_radius[E.u];
      start = hub_lo;
    }
    if (Z.hi >= E.w - 1e-12 && zvert[E.v]) {
      hub_hi = hub_radius[E.v];
      end = E.w - hub_hi;
    }
    if (end - start <= 1e-15 && (hub_lo > 0.0 || hub_hi > 0.0)) continue;
    if (end < start) continue;
    int n = std::max(1, static_cast<int>(std::ceil((end - start) / (epsilon / 4.0) - 1e-12)));
    double plen = (end - start) / n;
    for (int k = 0; k < n; ++k) {
      SetInterval core{Z.edge, start + k * plen, start + (k + 1) * plen};
      double dgeo = dist_to_routes(core);
      if (dgeo <= 1e-12) throw std::runtime_error("uncovered piece touches a geodesic");
      double h = std::min({epsilon / 16.0, dgeo / 2.0, cross_gap(core, comp[zi]) / 3.0});
      if (plen > 1e-15) h = std::min(h, plen / 4.0);
      if (k == 0 && hub_lo > 0.0) h = std::min(h, hub_lo / 4.0);
      if (k == n - 1 && hub_hi > 0.0) h = std::min(h, hub_hi / 4.0);
      if (!(h > 0.0)) throw std::runtime_error("gap piece radius collapsed to zero");
      CoverSet s;
      s.tag = SetTag::W;
      s.intervals = tube_intervals(space, {core}, h);
      s.anchor = arc_loc(space, Z.edge, 0.5 * (core.lo + core.hi));
      cover.sets.push_back(std::move(s));
    }
  }

  // the new family must cover the gaps, keep order two, and stay under epsilon
  std::vector<SetInterval> wall;
  std::vector<const std::vector<SetInterval> *> wmembers;
  for (size_t i = first_w; i < cover.sets.size(); ++i) {
    wall.insert(wall.end(), cover.sets[i].intervals.begin(), cover.sets[i].intervals.end());
    wmembers.push_back(&cover.sets[i].intervals);
  }
  auto wmerged = merge_open(wall);
  for (const auto &Z : zgaps) {
    bool inside = true;
    if (Z.hi - Z.lo > 1e-12)
      inside = interval_union_contains(space, wmerged, {Z});
    if (inside) {
      inside = point_in_intervals(space, wmerged, arc_loc(space, Z.edge, Z.lo), true) &&
               point_in_intervals(space, wmerged, arc_loc(space, Z.edge, Z.hi), true);
    }
    if (!inside) throw std::runtime_error("gap region left uncovered");
  }
  if (family_order(space, wmembers) > 2)
    throw std::runtime_error("gap pieces overlap three deep");
  for (size_t i = first_w; i < cover.sets.size(); ++i) {
    if (set_diameter(space, cover.sets[i].intervals) >= epsilon)
      throw std::runtime_error("gap piece exceeds epsilon");
    bool exclusive = false;
    Loc probe = cover.sets[i].anchor;
    if (point_in_intervals(space, cover.sets[i].intervals, probe, true)) {
      exclusive = true;
      for (size_t j = 0; j < cover.sets.size(); ++j) {
        if (j == i) continue;
        if (point_in_intervals(space, cover.sets[j].intervals, probe, true)) {
          exclusive = false;
          break;
        }
      }
    }
    if (!exclusive) throw std::runtime_error("redundant gap piece");
  }
  return cover;
}

CoverStats cover_stats(const Cover &cover) {
  const FiniteLengthSpace &space = *cover.space;
  CoverStats st;
  std::vector<const std::vector<SetInterval> *> members;
  for (const auto &s : cover.sets) members.push_back(&s.intervals);
  st.order = family_order(space, members);
  for (const auto &s : cover.sets)
    st.mesh = std::max(st.mesh, set_diameter(space, s.intervals));

  struct Cell {
    SetInterval span;
    std::vector<int> mem;
  };
  std::vector<std::vector<Cell>> cells(space.edge_count());
  bool covers = true;
  for (int e = 0; e < space.edge_count(); ++e) {
    double w = edge_len(space, e);
    struct Ev {
      double pos;
      int kind; // 0 close, 1 open
      int set;
    };
    std::vector<Ev> evs;
    std::vector<double> bps = {0.0, w};
    std::vector<double> vals = {0.0, w};
    for (const auto &cs : cover.sets)
      for (const auto &I : cs.intervals)
        if (I.edge == e) {
          vals.push_back(I.lo);
          vals.push_back(I.hi);
        }
    auto reps = snap_reps(std::move(vals), snap_tol(w));
    for (size_t si = 0; si < cover.sets.size(); ++si)
      for (const auto &I : cover.sets[si].intervals)
        if (I.edge == e) {
          double lo = snap_to(reps, I.lo), hi = snap_to(reps, I.hi);
          if (hi <= lo) continue;
          evs.push_back({hi, 0, static_cast<int>(si)});
          evs.push_back({lo, 1, static_cast<int>(si)});
          bps.push_back(lo);
          bps.push_back(hi);
        }
    std::sort(bps.begin(), bps.end());
    bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
    std::sort(evs.begin(), evs.end(), [](const Ev &a, const Ev &b) {
      if (a.pos != b.pos) return a.pos < b.pos;
      return a.kind < b.kind;
    });
    std::multiset<int> active;
    size_t ei = 0;
    for (size_t bi = 0; bi < bps.size(); ++bi) {
      double p = bps[bi];
      while (ei < evs.size() && (evs[ei].pos < p || (evs[ei].pos == p && evs[ei].kind == 0))) {
        if (evs[ei].kind == 0)
          active.erase(active.find(evs[ei].set));
        else
          active.insert(evs[ei].set);
        ++ei;
      }
      if (p > 1e-15 && p < w - 1e-15) {
        Cell cell;
        cell.span = {e, p, p};
        cell.mem.assign(active.begin(), active.end());
        cell.mem.erase(std::unique(cell.mem.begin(), cell.mem.end()), cell.mem.end());
        if (cell.mem.empty()) covers = false;
        cells[e].push_back(std::move(cell));
      }
      while (ei < evs.size() && evs[ei].pos == p) {
        if (evs[ei].kind == 0)
          active.erase(active.find(evs[ei].set));
        else
          active.insert(evs[ei].set);
        ++ei;
      }
      if (bi + 1 < bps.size()) {
        Cell cell;
        cell.span = {e, p, bps[bi + 1]};
        cell.mem.assign(active.begin(), active.end());
        cell.mem.erase(std::unique(cell.mem.begin(), cell.mem.end()), cell.mem.end());
        if (cell.mem.empty()) covers = false;
        cells[e].push_back(std::move(cell));
      }
    }
  }
  for (int v = 0; v < space.vertex_count(); ++v) {
    std::vector<int> mem;
    for (size_t si = 0; si < cover.sets.size(); ++si)
      if (point_in_intervals(space, cover.sets[si].intervals, Loc::at_vertex(v), true))
        mem.push_back(static_cast<int>(si));
    if (mem.empty()) covers = false;
    for (int e = 0; e < space.edge_count(); ++e) {
      double a = vertex_arc(space.edge(e), v);
      if (a >= 0.0) {
        cells[e].push_back({{e, a, a}, mem});
        break;
      }
    }
  }
  st.covers_space = covers;
  if (!covers) {
    st.lebesgue = 0.0;
    return st;
  }

  auto disjoint = [](const std::vector<int> &a, const std::vector<int> &b) {
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
      if (a[i] == b[j]) return false;
      if (a[i] < b[j])
        ++i;
      else
        ++j;
    }
    return true;
  };

  double best = kInf;
  for (auto &ce : cells)
    std::sort(ce.begin(), ce.end(),
              [](const Cell &a, const Cell &b) { return a.span.lo < b.span.lo; });
  double prev_best;
  do {
    prev_best = best;
    for (int e = 0; e < space.edge_count(); ++e) {
      const auto &ce = cells[e];
      for (size_t i = 0; i < ce.size(); ++i) {
        for (size_t j = i + 1; j < ce.size(); ++j) {
          double gap = ce[j].span.lo - ce[i].span.hi;
          if (gap >= best) break;
          if (!disjoint(ce[i].mem, ce[j].mem)) continue;
          best = std::min(best, interval_pair_min_distance(space, ce[i].span, ce[j].span));
        }
      }
    }
    // around-route candidates through edge ends
    std::vector<std::pair<int, size_t>> near_end;
    for (int e = 0; e < space.edge_count(); ++e) {
      double w = edge_len(space, e);
      for (size_t i = 0; i < cells[e].size(); ++i) {
        double dend = std::min(cells[e][i].span.lo, w - cells[e][i].span.hi);
        if (dend < best) near_end.push_back({e, i});
      }
    }
    for (size_t a = 0; a < near_end.size(); ++a)
      for (size_t b = a + 1; b < near_end.size(); ++b) {
        const Cell &ca = cells[near_end[a].first][near_end[a].second];
        const Cell &cb = cells[near_end[b].first][near_end[b].second];
        if (!disjoint(ca.mem, cb.mem)) continue;
        best = std::min(best, interval_pair_min_distance(space, ca.span, cb.span));
      }
  } while (best < prev_best - 1e-15);
  st.lebesgue = best;
  return st;
}

Nerve nerve(const Cover &cover) {
  const FiniteLengthSpace &space = *cover.space;
  Nerve n;
  n.cover = cover;
  std::set<Simplex> memberships;
  for (int e = 0; e < space.edge_count(); ++e) {
    double w = edge_len(space, e);
    struct Ev {
      double pos;
      int kind;
      int set;
    };
    std::vector<Ev> evs;
    std::vector<double> bps = {0.0, w};
    std::vector<double> vals = {0.0, w};
    for (const auto &cs : cover.sets)
      for (const auto &I : cs.intervals)
        if (I.edge == e) {
          vals.push_back(I.lo);
          vals.push_back(I.hi);
        }
    auto reps = snap_reps(std::move(vals), snap_tol(w));
    for (size_t si = 0; si < cover.sets.size(); ++si)
      for (const auto &I : cover.sets[si].intervals)
        if (I.edge == e) {
          double lo = snap_to(reps, I.lo), hi = snap_to(reps, I.hi);
          if (hi <= lo) continue;
          evs.push_back({hi, 0, static_cast<int>(si)});
          evs.push_back({lo, 1, static_cast<int>(si)});
          bps.push_back(lo);
          bps.push_back(hi);
        }
    std::sort(bps.begin(), bps.end());
    bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
    std::sort(evs.begin(), evs.end(), [](const Ev &a, const Ev &b) {
      if (a.pos != b.pos) return a.pos < b.pos;
      return a.kind < b.kind;
    });
    std::multiset<int> active;
    size_t ei = 0;
    auto snapshot = [&]() {
      Simplex s(active.begin(), active.end());
      s.erase(std::unique(s.begin(), s.end()), s.end());
      if (!s.empty()) memberships.insert(std::move(s));
    };
    for (size_t bi = 0; bi < bps.size(); ++bi) {
      double p = bps[bi];
      while (ei < evs.size() && (evs[ei].pos < p || (evs[ei].pos == p && evs[ei].kind == 0))) {
        if (evs[ei].kind == 0)
          active.erase(active.find(evs[ei].set));
        else
          active.insert(evs[ei].set);
        ++ei;
      }
      if (p > 1e-15 && p < w - 1e-15) snapshot();
      while (ei < evs.size() && evs[ei].pos == p) {
        if (evs[ei].kind == 0)
          active.erase(active.find(evs[ei].set));
        else
          active.insert(evs[ei].set);
        ++ei;
      }
      if (bi + 1 < bps.size()) snapshot();
    }
  }
  for (int v = 0; v < space.vertex_count(); ++v) {
    Simplex s;
    for (size_t si = 0; si < cover.sets.size(); ++si)
      if (point_in_intervals(space, cover.sets[si].intervals, Loc::at_vertex(v), true))
        s.push_back(static_cast<int>(si));
    if (!s.empty()) memberships.insert(std::move(s));
  }
  for (size_t si = 0; si < cover.sets.size(); ++si)
    n.complex.add_vertex(static_cast<int>(si));
  for (const auto &s : memberships) n.complex.add_simplex(s);
  n.u_vertex_of_point = cover.u_set_of_point;
  return n;
}

MetricComplex metrize_nerve(const Nerve &n, int stage, double M, double omega) {
  if (stage < 1) throw std::invalid_argument("stage must be positive");
  if (omega < 0.0 || omega >= 1.0) throw std::invalid_argument("omega must lie in [0, 1)");
  if (M < n.cover.alpha)
    throw std::invalid_argument("edge scale M must be at least the ball scale");
  const FiniteLengthSpace &space = *n.cover.space;

  std::map<int, int> seg_of_geod;
  for (size_t i = 0; i < n.cover.segments.size(); ++i)
    seg_of_geod[n.cover.segments[i].geodesic] = static_cast<int>(i);

  MetricComplex g = n.complex;
  g.set_energy_mode(false);
  for (const auto &s : g.simplices_of_dim(1)) {
    const CoverSet &A = n.cover.sets.at(s[0]);
    const CoverSet &B = n.cover.sets.at(s[1]);
    double val;
    if (A.tag == SetTag::W || B.tag == SetTag::W) {
      val = M;
    } else if (A.tag == SetTag::U && B.tag == SetTag::U) {
      throw std::runtime_error("two point balls overlap");
    } else if (omega == 0.0) {
      val = space.distance(A.anchor, B.anchor);
    } else {
      const CoverSet &vs = A.tag == SetTag::V ? A : B;
      if (A.tag == SetTag::V && B.tag == SetTag::V && A.geodesic != B.geodesic)
        throw std::runtime_error("tubes of different geodesics overlap");
      double xi = n.cover.segments.at(seg_of_geod.at(vs.geodesic)).xi;
      val = (1.0 - omega) * xi;
    }
    if (!(val > 0.0)) throw std::runtime_error("nonpositive nerve edge value");
    g.set_edge(s[0], s[1], val);
  }
  for (const auto &s : g.simplices()) {
    if (s.size() < 3) continue;
    QuadraticForm f = quadratic_form(g, s);
    ConeReport rep = is_euclidean(f);
    if (!rep.is_positive_definite) {
      std::ostringstream os;
      os << "nerve metric is not Euclidean on simplex {";
      for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
      os << "}; raise M";
      throw std::runtime_error(os.str());
    }
  }
  return g;
}

std::vector<std::pair<int, double>> PartitionOfUnity::weights(const Loc &x) const {
  const FiniteLengthSpace &space = *cover->space;
  std::vector<std::pair<int, double>> out;
  double sum = 0.0;
  for (size_t i = 0; i < cover->sets.size(); ++i) {
    double d = distance_to_complement(space, cover->sets[i].intervals, x);
    if (d > 0.0) {
      if (std::isinf(d)) d = 1.0;
      out.push_back({static_cast<int>(i), d});
      sum += d;
    }
  }
  if (out.empty()) throw std::runtime_error("point lies outside the cover");
  for (auto &p : out) p.second /= sum;
  return out;
}

PartitionOfUnity make_partition(const Cover &cover) {
  PartitionOfUnity p;
  p.cover = &cover;
  return p;
}

NervePoint psi(const Loc &x, const Cover &cover, const PartitionOfUnity &pu) {
  const FiniteLengthSpace &space = *cover.space;
  for (const auto &seg : cover.segments) {
    const auto &g = cover.geodesics[seg.geodesic];
    auto s = route_locate(space, g, x);
    if (s) return psi_at_arc(seg, *s);
  }
  return make_nerve_point(pu.weights(x));
}

NerveMap phi(const Nerve &next, const Nerve &prev, const StageLink &link) {
  const FiniteLengthSpace &space = *prev.cover.space;
  std::map<int, int> prev_seg_of_geod;
  for (size_t i = 0; i < prev.cover.segments.size(); ++i)
    prev_seg_of_geod[prev.cover.segments[i].geodesic] = static_cast<int>(i);

  NerveMap out;
  for (size_t vi = 0; vi < next.cover.sets.size(); ++vi) {
    const CoverSet &cs = next.cover.sets[vi];
    if (cs.tag == SetTag::U && link.point_prev.at(cs.point) >= 0) {
      int pp = link.point_prev[cs.point];
      out.vertex_images[static_cast<int>(vi)] =
          vertex_point(prev.u_vertex_of_point.at(pp));
      continue;
    }
    if (cs.tag == SetTag::V && link.geo_prev.at(cs.geodesic) >= 0) {
      int pg = link.geo_prev[cs.geodesic];
      double arc = cs.anchor_arc + link.geo_arc_offset.at(cs.geodesic);
      const auto &seg = prev.cover.segments.at(prev_seg_of_geod.at(pg));
      out.vertex_images[static_cast<int>(vi)] = psi_at_arc(seg, arc);
      continue;
    }
    Simplex J;
    for (size_t pi = 0; pi < prev.cover.sets.size(); ++pi)
      if (interval_union_contains(space, prev.cover.sets[pi].intervals, cs.intervals))
        J.push_back(static_cast<int>(pi));
    if (J.empty()) {
      throw std::runtime_error("star refinement violated: " + set_label(next.cover,
                                                                        static_cast<int>(vi)) +
                               " fits in no previous set");
    }
    if (!prev.complex.contains(J))
      throw std::runtime_error("containing sets do not span a nerve simplex");
    std::vector<std::pair<int, double>> terms;
    for (int v : J) terms.push_back({v, 1.0 / J.size()});
    out.vertex_images[static_cast<int>(vi)] = make_nerve_point(terms);
  }
  return out;
}

double point_distance_in_simplex(const MetricComplex &complex, const Simplex &s,
                                 const NervePoint &x, const NervePoint &y) {
  QuadraticForm f = quadratic_form(complex, s);
  Eigen::MatrixXd Bx = coord_map(s, x.simplex);
  Eigen::MatrixXd By = coord_map(s, y.simplex);
  if (f.k == 0) return 0.0;
  Eigen::VectorXd d = By * y.bary - Bx * x.bary;
  return std::sqrt(std::max(0.0, d.dot(f.m * d)));
}

double barycenter_boundary_distance(const QuadraticForm &form) {
  const int k = form.k;
  if (k <= 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(form.m);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd U = es.eigenvectors() * ev.asDiagonal();
  std::vector<Eigen::VectorXd> pts(k + 1, Eigen::VectorXd::Zero(k));
  for (int i = 1; i <= k; ++i) pts[i] = U.row(i - 1).transpose();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(k);
  for (const auto &p : pts) c += p;
  c /= (k + 1);
  double best = kInf;
  for (int drop = 0; drop <= k; ++drop) {
    std::vector<int> keep;
    for (int i = 0; i <= k; ++i)
      if (i != drop) keep.push_back(i);
    Eigen::VectorXd base = pts[keep[0]];
    if (keep.size() == 1) {
      best = std::min(best, (c - base).norm());
      continue;
    }
    Eigen::MatrixXd A(k, static_cast<int>(keep.size()) - 1);
    for (size_t j = 1; j < keep.size(); ++j) A.col(static_cast<int>(j) - 1) = pts[keep[j]] - base;
    Eigen::VectorXd r = c - base;
    Eigen::VectorXd mu = A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(r);
    best = std::min(best, (r - A * mu).norm());
  }
  return best;
}

double nerve_distance(const MetricComplex &complex, const NervePoint &x,
                      const NervePoint &y, int cap, ChainWitness *witness) {
  auto maximal = complex.maximal_simplices();
  if (maximal.empty()) throw std::invalid_argument("empty complex");
  Simplex supx = x.support(), supy = y.support();
  std::vector<int> starts;
  bool y_ok = false;
  for (size_t i = 0; i < maximal.size(); ++i) {
    if (simplex_subset(supx, maximal[i])) starts.push_back(static_cast<int>(i));
    if (simplex_subset(supy, maximal[i])) y_ok = true;
  }
  if (starts.empty() || !y_ok)
    throw std::invalid_argument("chain endpoint is not supported in the complex");

  std::vector<std::vector<int>> adj(maximal.size());
  for (size_t i = 0; i < maximal.size(); ++i)
    for (size_t j = 0; j < maximal.size(); ++j) {
      if (i == j) continue;
      Simplex f;
      std::set_intersection(maximal[i].begin(), maximal[i].end(), maximal[j].begin(),
                            maximal[j].end(), std::back_inserter(f));
      if (!f.empty()) adj[i].push_back(static_cast<int>(j));
    }

  auto to_simplices = [&](const std::vector<int> &seq) {
    std::vector<Simplex> out;
    for (int i : seq) out.push_back(maximal[i]);
    return out;
  };

  struct Node {
    double bound;
    std::vector<int> seq;
    bool operator>(const Node &o) const { return bound > o.bound; }
  };
  std::priority_queue<Node, std::vector<Node>, std::greater<Node>> pq;

  double best = kInf;
  std::vector<int> best_seq;
  std::vector<Simplex> best_faces;
  std::vector<Eigen::VectorXd> best_vars;
  auto try_terminal = [&](const std::vector<int> &seq) {
    if (!simplex_subset(supy, maximal[seq.back()])) return;
    std::vector<Simplex> faces;
    std::vector<Eigen::VectorXd> vars;
    double total = chain_relax(complex, to_simplices(seq), x, &y, &faces, &vars);
    if (total < best) {
      best = total;
      best_seq = seq;
      best_faces = faces;
      best_vars = vars;
    }
  };
  for (int s : starts) {
    std::vector<int> seq = {s};
    try_terminal(seq);
    pq.push({0.0, seq});
  }
  long pops = 0;
  while (!pq.empty()) {
    Node top = pq.top();
    pq.pop();
    if (top.bound >= best - 1e-12) break;
    if (++pops > 200000)
      throw std::runtime_error("taut chain search exhausted its node budget");
    if (static_cast<int>(top.seq.size()) >= cap) continue;
    for (int nb : adj[top.seq.back()]) {
      if (top.seq.size() >= 2 && nb == top.seq[top.seq.size() - 2]) continue;
      std::vector<int> child = top.seq;
      child.push_back(nb);
      double b = chain_relax(complex, to_simplices(child), x, nullptr, nullptr, nullptr);
      if (b >= best + 1e-9 * (1.0 + std::min(best, 1e18))) continue;
      try_terminal(child);
      pq.push({b, child});
    }
  }
  if (!std::isfinite(best))
    throw std::runtime_error("no taut chain within the simplex cap; raise the cap");
  if (witness) {
    witness->simplices = to_simplices(best_seq);
    witness->points.clear();
    witness->points.push_back(x);
    for (size_t j = 1; j < best_seq.size(); ++j) {
      NervePoint p;
      p.simplex = best_faces[j];
      p.bary = best_vars[j];
      witness->points.push_back(make_nerve_point([&] {
        std::vector<std::pair<int, double>> t;
        for (size_t i = 0; i < p.simplex.size(); ++i)
          t.push_back({p.simplex[i], p.bary[static_cast<int>(i)]});
        return t;
      }()));
    }
    witness->points.push_back(y);
    witness->length = best;
  }
  return best;
}

} // namespace minkembed
