#include "minkembed/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "minkembed/wiggle.hpp"

namespace minkembed {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::pair<int, int> ekey(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

double piece_len(const RoutePiece &p) { return std::abs(p.a1 - p.a0); }

double piece_arc(const RoutePiece &p, double epos) {
  return p.cum + (p.a1 >= p.a0 ? epos - p.a0 : p.a0 - epos);
}

GeodesicRecord sub_route(const FiniteLengthSpace &space, const GeodesicRecord &g,
                         double s0, double s1) {
  s0 = std::clamp(s0, 0.0, g.length);
  s1 = std::clamp(s1, 0.0, g.length);
  if (s1 < s0) throw std::runtime_error("sub_route expects s0 <= s1");
  GeodesicRecord r;
  r.orig = g.orig;
  r.a = space.canonical(route_point(space, g, s0));
  r.b = space.canonical(route_point(space, g, s1));
  double cum = 0.0;
  for (const auto &p : g.route) {
    double len = piece_len(p);
    double lo = std::max(s0, p.cum), hi = std::min(s1, p.cum + len);
    if (hi - lo <= 1e-15) continue;
    double dir = p.a1 >= p.a0 ? 1.0 : -1.0;
    r.route.push_back({p.edge, p.a0 + dir * (lo - p.cum), p.a0 + dir * (hi - p.cum), cum});
    cum += hi - lo;
  }
  r.length = cum;
  return r;
}

GeodesicRecord reverse_route(const GeodesicRecord &g) {
  GeodesicRecord r;
  r.orig = g.orig;
  r.a = g.b;
  r.b = g.a;
  r.d_a = g.d_b;
  r.d_b = g.d_a;
  double cum = 0.0;
  for (auto it = g.route.rbegin(); it != g.route.rend(); ++it) {
    r.route.push_back({it->edge, it->a1, it->a0, cum});
    cum += piece_len(*it);
  }
  r.length = cum;
  return r;
}

GeodesicRecord concat_routes(const FiniteLengthSpace &space, const GeodesicRecord &g1,
                             const GeodesicRecord &g2) {
  if (!space.same_point(g1.b, g2.a))
    throw std::runtime_error("concatenated routes do not meet");
  GeodesicRecord r;
  r.orig = g1.orig;
  r.a = g1.a;
  r.b = g2.b;
  r.route = g1.route;
  double cum = g1.length;
  for (const auto &p : g2.route) {
    r.route.push_back({p.edge, p.a0, p.a1, cum});
    cum += piece_len(p);
  }
  r.length = cum;
  return r;
}

struct ContactSpan {
  double a_lo = 0.0, a_hi = 0.0;
  double b_lo = 0.0, b_hi = 0.0;
};

void add_route_vertices(const FiniteLengthSpace &space, const GeodesicRecord &g,
                        std::map<int, double> &arcs) {
  for (const auto &p : g.route) {
    const GraphEdge &e = space.edge(p.edge);
    for (double t : {p.a0, p.a1}) {
      int v = -1;
      if (std::abs(t) <= 1e-9 * std::max(1.0, e.w)) v = e.u;
      else if (std::abs(t - e.w) <= 1e-9 * std::max(1.0, e.w)) v = e.v;
      if (v >= 0 && !arcs.count(v)) arcs[v] = piece_arc(p, t);
    }
  }
}

std::vector<ContactSpan> merge_spans(std::vector<ContactSpan> spans) {
  std::sort(spans.begin(), spans.end(),
            [](const ContactSpan &x, const ContactSpan &y) { return x.a_lo < y.a_lo; });
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < spans.size() && !changed; ++i) {
      for (size_t j = i + 1; j < spans.size() && !changed; ++j) {
        const ContactSpan &s = spans[j];
        ContactSpan &m = spans[i];
        bool ova = s.a_lo <= m.a_hi + 1e-9 && m.a_lo <= s.a_hi + 1e-9;
        bool ovb = s.b_lo <= m.b_hi + 1e-9 && m.b_lo <= s.b_hi + 1e-9;
        if (!ova || !ovb) continue;
        m.a_lo = std::min(m.a_lo, s.a_lo);
        m.a_hi = std::max(m.a_hi, s.a_hi);
        m.b_lo = std::min(m.b_lo, s.b_lo);
        m.b_hi = std::max(m.b_hi, s.b_hi);
        spans.erase(spans.begin() + j);
        changed = true;
      }
    }
  }
  return spans;
}

std::vector<ContactSpan> intersection_spans(const FiniteLengthSpace &space,
                                            const GeodesicRecord &a,
                                            const GeodesicRecord &b) {
  std::vector<ContactSpan> spans;
  for (const auto &pa : a.route) {
    for (const auto &pb : b.route) {
      if (pa.edge != pb.edge) continue;
      double alo = std::min(pa.a0, pa.a1), ahi = std::max(pa.a0, pa.a1);
      double blo = std::min(pb.a0, pb.a1), bhi = std::max(pb.a0, pb.a1);
      double lo = std::max(alo, blo), hi = std::min(ahi, bhi);
      if (hi < lo - 1e-12) continue;
      hi = std::max(hi, lo);
      ContactSpan s;
      double a1 = piece_arc(pa, lo), a2 = piece_arc(pa, hi);
      s.a_lo = std::min(a1, a2);
      s.a_hi = std::max(a1, a2);
      double b1 = piece_arc(pb, lo), b2 = piece_arc(pb, hi);
      s.b_lo = std::min(b1, b2);
      s.b_hi = std::max(b1, b2);
      spans.push_back(s);
    }
  }
  std::map<int, double> va, vb;
  add_route_vertices(space, a, va);
  add_route_vertices(space, b, vb);
  for (const auto &[v, arc] : va) {
    auto it = vb.find(v);
    if (it != vb.end()) spans.push_back({arc, arc, it->second, it->second});
  }
  return merge_spans(std::move(spans));
}

std::vector<GeodesicRecord> prime_records(const GeodesicFamily &f) {
  std::vector<GeodesicRecord> out;
  out.reserve(f.gamma_prime.size());
  for (const auto &g : f.gamma_prime) out.push_back(g.route);
  return out;
}

StageLink make_stage_link(const FiniteLengthSpace &space, const GeodesicFamily &next,
                          const GeodesicFamily &prev) {
  StageLink link;
  link.point_prev.assign(next.Dprime.size(), -1);
  for (size_t i = 0; i < next.Dprime.size(); ++i)
    for (size_t j = 0; j < prev.Dprime.size(); ++j)
      if (space.same_point(next.Dprime[i], prev.Dprime[j])) {
        link.point_prev[i] = static_cast<int>(j);
        break;
      }
  link.geo_prev.assign(next.gamma_prime.size(), -1);
  link.geo_arc_offset.assign(next.gamma_prime.size(), 0.0);
  for (size_t i = 0; i < next.gamma_prime.size(); ++i) {
    const GeodesicRecord &g = next.gamma_prime[i].route;
    double tol = 1e-9 * std::max(1.0, g.length);
    for (size_t j = 0; j < prev.gamma_prime.size(); ++j) {
      const GeodesicRecord &h = prev.gamma_prime[j].route;
      auto t0 = route_locate(space, h, g.a);
      auto t1 = route_locate(space, h, g.b);
      if (!t0 || !t1) continue;
      if (std::abs(std::abs(*t1 - *t0) - g.length) > tol) continue;
      auto tm = route_locate(space, h, route_point(space, g, 0.5 * g.length));
      if (!tm) continue;
      if (*t1 < *t0) {
        if (std::abs(*t0 - 0.5 * g.length - *tm) <= tol)
          throw std::runtime_error("persisting geodesic reversed between stages");
        continue;
      }
      if (std::abs(*t0 + 0.5 * g.length - *tm) > tol) continue;
      link.geo_prev[i] = static_cast<int>(j);
      link.geo_arc_offset[i] = *t0;
      break;
    }
  }
  return link;
}

std::map<int, int> segment_of_geodesic(const Cover &cov) {
  std::map<int, int> m;
  for (size_t s = 0; s < cov.segments.size(); ++s)
    m[cov.segments[s].geodesic] = static_cast<int>(s);
  return m;
}

// Chain edge with its calibrated length target. Window durations follow the
// parameterization law: interior edges span one subinterval, end edges span
// the whole run from the geodesic endpoint to the first (last) midpoint, so
// their targets are the geometric mean of xi and that duration.
struct PlanEdge {
  int u = -1, v = -1;
  double target = 0.0;
  double xi = 0.0;
  bool negative_ok = false;
  int seg = -1;
};

std::vector<PlanEdge> plan_edges(const Cover &cov, const std::vector<int> &geo_prev) {
  std::vector<PlanEdge> out;
  for (size_t si = 0; si < cov.segments.size(); ++si) {
    const TruncatedSegment &seg = cov.segments[si];
    const GeodesicRecord &rec = cov.geodesics[seg.geodesic];
    bool neg_ok = !geo_prev.empty() && geo_prev[seg.geodesic] < 0;
    double w_head = seg.mid_arc(0);
    double w_tail = rec.length - seg.mid_arc(seg.pieces - 1);
    if (w_head <= 0.0 || w_tail <= 0.0)
      throw std::runtime_error("degenerate segment window");
    out.push_back({seg.u_start, seg.v_sets[0], std::sqrt(seg.xi * w_head), seg.xi,
                   neg_ok, static_cast<int>(si)});
    for (int k = 0; k + 1 < seg.pieces; ++k)
      out.push_back({seg.v_sets[k], seg.v_sets[k + 1], seg.xi, seg.xi, neg_ok,
                     static_cast<int>(si)});
    out.push_back({seg.v_sets[seg.pieces - 1], seg.u_end, std::sqrt(seg.xi * w_tail),
                   seg.xi, neg_ok, static_cast<int>(si)});
  }
  return out;
}

QuadraticForm image_form(const PLMap &h, const Simplex &s) {
  QuadraticForm f;
  f.k = static_cast<int>(s.size()) - 1;
  f.m.resize(f.k, f.k);
  std::vector<MinkVec> w;
  for (int i = 1; i <= f.k; ++i) w.push_back(h.image(s[i]) - h.image(s[0]));
  for (int i = 0; i < f.k; ++i)
    for (int j = 0; j < f.k; ++j) f.m(i, j) = mink_pairing(w[i], w[j]);
  return f;
}

struct CertSummary {
  bool ok = true;
  int checked = 0;
  double worst = 0.0;
  Simplex offender;
};

CertSummary certify_short(const MetricComplex &g, const PLMap &h, double tol = 1e-9) {
  CertSummary cs;
  for (const auto &s : g.simplices()) {
    if (s.size() < 2) continue;
    ++cs.checked;
    if (s.size() == 2) {
      MinkVec d = h.image(s[1]) - h.image(s[0]);
      double excess = mink_pairing(d, d) - signed_square(g.edge_value(s[0], s[1]));
      double scale = std::max(1.0, std::abs(signed_square(g.edge_value(s[0], s[1]))));
      if (excess > tol * scale) {
        cs.ok = false;
        if (excess > cs.worst) {
          cs.worst = excess;
          cs.offender = s;
        }
      }
      continue;
    }
    if (!is_one_lipschitz(quadratic_form(g, s), image_form(h, s), tol)) {
      cs.ok = false;
      cs.offender = s;
    }
  }
  return cs;
}

std::string simplex_str(const Simplex &s) {
  std::ostringstream os;
  os << "{";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "}";
  return os.str();
}

void check_calibrated_pd(const MetricComplex &base) {
  for (const auto &s : base.simplices()) {
    if (s.size() < 3) continue;
    ConeReport rep = is_euclidean(quadratic_form(base, s));
    if (!rep.is_positive_definite)
      throw std::runtime_error("calibrated nerve metric is not Euclidean on simplex " +
                               simplex_str(s) + "; raise M");
  }
}

struct RepairOutcome {
  MetricComplex g;
  PLMap h;
  std::map<std::pair<int, int>, ChainEdgeInfo> chains;
  double max_required = 0.0;
  int zigzags = 0, wiggles = 0, untouched = 0;
  int new_vertices = 0;
};

struct Patch {
  std::pair<int, int> key;
  std::vector<int> chain;
  std::vector<std::tuple<int, int, double>> edges;
  std::vector<Simplex> cells;
};

// Run one edge repair inside the closed star of (u,v), with local ids, and
// translate the result back to global ids.
Patch run_mini(const MetricComplex &base, PLMap &h, int &next_id,
               const std::vector<Simplex> &star, int u, int v, double target,
               double eps, bool wiggle_mode, double &required) {
  std::set<int> mv{u, v};
  for (const auto &s : star) mv.insert(s.begin(), s.end());
  std::map<int, int> loc;
  std::vector<int> back;
  for (int gv : mv) {
    loc[gv] = static_cast<int>(back.size());
    back.push_back(gv);
  }
  int nloc = static_cast<int>(back.size());
  MetricComplex mini;
  mini.add_simplex({std::min(loc[u], loc[v]), std::max(loc[u], loc[v])});
  for (const auto &s : star) {
    Simplex ls;
    for (int gv : s) ls.push_back(loc[gv]);
    std::sort(ls.begin(), ls.end());
    mini.add_simplex(ls);
  }
  for (int a = 0; a < nloc; ++a)
    for (int b = a + 1; b < nloc; ++b)
      if (base.has_edge(back[a], back[b]))
        mini.set_edge(a, b, base.edge_value(back[a], back[b]));
  PLMap mh;
  for (int a = 0; a < nloc; ++a) mh.set(a, h.image(back[a]));

  MetricComplex repaired;
  PLMap rmap;
  std::vector<int> lchain;
  if (wiggle_mode) {
    WiggleResult res = lorentz_wiggle(mini, mh, loc[u], loc[v], target, eps);
    repaired = std::move(res.complex);
    rmap = std::move(res.new_map);
    lchain = std::move(res.chain);
    required = res.M_required;
  } else {
    std::vector<MinkVec> zz = euclid_zigzag({h.image(u), h.image(v)}, target, eps);
    int n = static_cast<int>(zz.size()) - 1;
    if (n < 2) throw std::runtime_error("zigzag produced no subdivision");
    SubdivisionResult sub = subdivide_edge(mini, loc[u], loc[v], n);
    repaired = std::move(sub.complex);
    rmap = mh;
    lchain = std::move(sub.chain);
    for (int i = 1; i < n; ++i) rmap.set(lchain[i], zz[i]);
    std::vector<Simplex> substar;
    for (size_t i = 0; i + 1 < lchain.size(); ++i) {
      Simplex e{std::min(lchain[i], lchain[i + 1]), std::max(lchain[i], lchain[i + 1])};
      for (const auto &s : repaired.simplices_containing(e))
        if (std::find(substar.begin(), substar.end(), s) == substar.end())
          substar.push_back(s);
    }
    required = required_M(repaired, rmap, substar, lchain, target);
  }

  Patch p;
  p.key = ekey(u, v);
  std::map<int, int> lg;
  for (int a = 0; a < nloc; ++a) lg[a] = back[a];
  for (int lv : lchain)
    if (!lg.count(lv)) {
      lg[lv] = next_id++;
      h.set(lg[lv], rmap.image(lv));
    }
  for (int lv : lchain) p.chain.push_back(lg[lv]);
  for (const auto &s : repaired.simplices()) {
    bool fresh = false;
    for (int lv : s)
      if (lv >= nloc) fresh = true;
    if (!fresh) continue;
    if (s.size() == 2) {
      p.edges.emplace_back(lg[s[0]], lg[s[1]], repaired.edge_value(s[0], s[1]));
    } else {
      Simplex gs;
      for (int lv : s) gs.push_back(lg.at(lv));
      std::sort(gs.begin(), gs.end());
      p.cells.push_back(std::move(gs));
    }
  }
  return p;
}

RepairOutcome repair_chains(const MetricComplex &base, const PLMap &h0,
                            const std::vector<PlanEdge> &plans, double rho) {
  RepairOutcome out;
  out.h = h0;
  std::set<std::pair<int, int>> plan_keys;
  for (const auto &p : plans) plan_keys.insert(ekey(p.u, p.v));
  std::map<std::pair<int, int>, std::vector<Simplex>> star;
  for (const auto &s : base.simplices()) {
    if (s.size() < 3) continue;
    for (size_t i = 0; i < s.size(); ++i)
      for (size_t j = i + 1; j < s.size(); ++j) {
        auto key = ekey(s[i], s[j]);
        if (plan_keys.count(key)) star[key].push_back(s);
      }
  }
  int next_id = base.vertices().empty() ? 0 : *base.vertices().rbegin() + 1;
  int first_new = next_id;
  std::vector<Patch> patches;
  for (const auto &plan : plans) {
    auto key = ekey(plan.u, plan.v);
    if (out.chains.count(key)) throw std::runtime_error("duplicate chain edge plan");
    MinkVec d = out.h.image(plan.v) - out.h.image(plan.u);
    double c2 = mink_pairing(d, d);
    double chord = c2 > 0.0 ? std::sqrt(c2) : 0.0;
    double eps = std::min({plan.xi / 8.0, rho / 4.0, plan.target / 4.0});
    ChainEdgeInfo info;
    info.target = plan.target;
    if (std::abs(chord - plan.target) <= 1e-12 * std::max(1.0, plan.target)) {
      info.kind = 0;
      info.verts = {plan.u, plan.v};
      ++out.untouched;
    } else if (chord < plan.target) {
      double req = 0.0;
      const auto sit = star.find(key);
      if (sit == star.end() || sit->second.empty()) {
        std::vector<MinkVec> zz = euclid_zigzag({out.h.image(plan.u), out.h.image(plan.v)},
                                                plan.target, eps);
        int n = static_cast<int>(zz.size()) - 1;
        Patch p;
        p.key = key;
        p.chain.push_back(plan.u);
        double sub = plan.target / n;
        for (int i = 1; i < n; ++i) {
          out.h.set(next_id, zz[i]);
          p.chain.push_back(next_id++);
        }
        p.chain.push_back(plan.v);
        for (size_t i = 0; i + 1 < p.chain.size(); ++i)
          p.edges.emplace_back(p.chain[i], p.chain[i + 1], sub);
        info.verts = p.chain;
        patches.push_back(std::move(p));
      } else {
        Patch p = run_mini(base, out.h, next_id, sit->second, plan.u, plan.v,
                           plan.target, eps, false, req);
        if (p.chain.front() != plan.u) std::reverse(p.chain.begin(), p.chain.end());
        info.verts = p.chain;
        patches.push_back(std::move(p));
      }
      out.max_required = std::max(out.max_required, req);
      info.kind = 1;
      ++out.zigzags;
    } else {
      if (!plan.negative_ok)
        throw std::runtime_error("persisting chain edge exceeds its length target");
      double req = 0.0;
      std::vector<Simplex> st;
      const auto sit = star.find(key);
      if (sit != star.end()) st = sit->second;
      Patch p = run_mini(base, out.h, next_id, st, plan.u, plan.v, plan.target, eps,
                         true, req);
      if (p.chain.front() != plan.u) std::reverse(p.chain.begin(), p.chain.end());
      info.verts = p.chain;
      out.max_required = std::max(out.max_required, req);
      info.kind = 2;
      ++out.wiggles;
      patches.push_back(std::move(p));
    }
    out.chains[key] = std::move(info);
  }

  std::map<std::pair<int, int>, const Patch *> patched;
  for (const auto &p : patches) patched[p.key] = &p;
  MetricComplex g;
  for (const auto &s : base.simplices()) {
    const Patch *hit = nullptr;
    for (size_t i = 0; i < s.size() && !hit; ++i)
      for (size_t j = i + 1; j < s.size() && !hit; ++j) {
        auto it = patched.find(ekey(s[i], s[j]));
        if (it != patched.end()) hit = it->second;
      }
    if (!hit) g.add_simplex(s, false);
  }
  for (const auto &p : patches) {
    for (size_t i = 0; i + 1 < p.chain.size(); ++i)
      g.add_simplex({std::min(p.chain[i], p.chain[i + 1]),
                     std::max(p.chain[i], p.chain[i + 1])},
                    false);
    for (const auto &cell : p.cells) g.add_simplex(cell);
  }
  for (const auto &s : base.simplices())
    if (s.size() == 2 && g.contains(s))
      g.set_edge(s[0], s[1], base.edge_value(s[0], s[1]));
  for (const auto &p : patches)
    for (const auto &[a, b, val] : p.edges) g.set_edge(a, b, val);
  out.g = std::move(g);
  out.new_vertices = next_id - first_new;
  return out;
}

// Distance-profile placement of the stage-1 nerve vertices: coordinates are
// scaled distances to a thinned reference set, which keeps every chord
// strictly below its chain target so the zigzag pass can supply the
// remaining length with the positive coordinates alone.
PLMap place_stage_one(const StageResult &st, int p, int q) {
  const Cover &cov = st.net.cover;
  const FiniteLengthSpace &space = *cov.space;
  std::vector<Loc> refs;
  {
    std::vector<int> chosen;
    int nv = space.vertex_count();
    if (nv <= p - 1) {
      for (int i = 0; i < nv; ++i) chosen.push_back(i);
    } else {
      chosen.push_back(0);
      while (static_cast<int>(chosen.size()) < p - 1) {
        int best = -1;
        double bestd = -1.0;
        for (int c = 0; c < nv; ++c) {
          double dmin = kInf;
          for (int got : chosen) dmin = std::min(dmin, space.vertex_distance(c, got));
          if (dmin > bestd) {
            bestd = dmin;
            best = c;
          }
        }
        if (best < 0 || bestd <= 0.0) break;
        chosen.push_back(best);
      }
    }
    for (int c : chosen) refs.push_back(Loc::at_vertex(c));
  }
  double sfac = 0.9;
  for (const auto &seg : cov.segments) {
    const auto &rec = cov.geodesics[seg.geodesic];
    double w_head = seg.mid_arc(0);
    double w_tail = rec.length - seg.mid_arc(seg.pieces - 1);
    sfac = std::min({sfac, 0.9 * std::sqrt(seg.xi / w_head),
                     0.9 * std::sqrt(seg.xi / w_tail)});
  }
  int m = static_cast<int>(refs.size());
  double root = std::sqrt(static_cast<double>(m));
  PLMap h;
  for (int v = 0; v < static_cast<int>(cov.sets.size()); ++v) {
    MinkVec img = MinkVec::zero(p, q);
    for (int j = 0; j < m; ++j)
      img.pos(j) = sfac * space.distance(cov.sets[v].anchor, refs[j]) / root;
    h.set(v, std::move(img));
  }
  double rb = kInf;
  for (int e = 0; e < space.edge_count(); ++e) rb = std::min(rb, space.edge(e).w);
  rb *= 0.5;
  MinkVec c = MinkVec::zero(p, q);
  for (const auto &[v, img] : h.vertex_images) c = c + img;
  c = c * (1.0 / static_cast<double>(h.vertex_images.size()));
  double r = 0.0;
  for (const auto &[v, img] : h.vertex_images)
    r = std::max(r, ambient_norm(img - c));
  if (r > rb) {
    double s = rb / r;
    for (auto &[v, img] : h.vertex_images) img = c + (img - c) * s;
  }
  return h;
}

struct SegmentCurve {
  int prime = -1;
  double length = 0.0;
  std::vector<double> times;
  std::vector<MinkVec> points;
  std::vector<double> window;
};

void append_edge(const StageResult &st, SegmentCurve &c, int a, int b, double t0,
                 double t1) {
  auto it = st.chains.find(ekey(a, b));
  if (it == st.chains.end()) throw std::runtime_error("missing chain edge record");
  std::vector<int> walk = it->second.verts;
  if (walk.front() != a) std::reverse(walk.begin(), walk.end());
  if (walk.front() != a || walk.back() != b)
    throw std::runtime_error("chain orientation mismatch");
  int k = static_cast<int>(walk.size()) - 1;
  for (int i = 1; i <= k; ++i) {
    c.times.push_back(t0 + (t1 - t0) * i / k);
    c.points.push_back(st.h.image(walk[i]));
  }
}

SegmentCurve image_curve(const StageResult &st, int seg_index) {
  const Cover &cov = st.net.cover;
  const TruncatedSegment &seg = cov.segments[seg_index];
  const GeodesicRecord &rec = cov.geodesics[seg.geodesic];
  SegmentCurve c;
  c.prime = seg.geodesic;
  c.length = rec.length;
  double m_lo = seg.s0 - 0.5 * seg.xi;
  double m_hi = seg.s1 + 0.5 * seg.xi;
  c.times = {0.0, m_lo};
  c.points = {st.h.image(seg.u_start), st.h.image(seg.u_start)};
  c.window.push_back(0.0);
  int prev = seg.u_start;
  double tprev = m_lo;
  for (int k = 0; k < seg.pieces; ++k) {
    append_edge(st, c, prev, seg.v_sets[k], tprev, seg.mid_arc(k));
    prev = seg.v_sets[k];
    tprev = seg.mid_arc(k);
    c.window.push_back(tprev);
  }
  append_edge(st, c, prev, seg.u_end, tprev, m_hi);
  c.times.push_back(c.length);
  c.points.push_back(st.h.image(seg.u_end));
  c.window.push_back(c.length);
  return c;
}

MinkVec curve_at(const SegmentCurve &c, double t) {
  auto it = std::lower_bound(c.times.begin(), c.times.end(), t);
  size_t j = it - c.times.begin();
  if (j == 0) return c.points.front();
  if (j >= c.times.size()) return c.points.back();
  double t0 = c.times[j - 1], t1 = c.times[j];
  if (t1 - t0 <= 1e-18) return c.points[j];
  double lam = (t - t0) / (t1 - t0);
  return c.points[j - 1] * (1.0 - lam) + c.points[j] * lam;
}

double window_energy(const SegmentCurve &c, double a, double b) {
  std::vector<std::pair<double, MinkVec>> bp;
  bp.emplace_back(a, curve_at(c, a));
  for (size_t i = 0; i < c.times.size(); ++i)
    if (c.times[i] > a + 1e-15 && c.times[i] < b - 1e-15)
      bp.emplace_back(c.times[i], c.points[i]);
  bp.emplace_back(b, curve_at(c, b));
  return pl_path_energy_split(bp).total;
}

struct AuditResult {
  double max_rel = 0.0;
  std::string worst;
};

void audit_window(const SegmentCurve &c, double a, double b, AuditResult &ar,
                  const std::string &tag) {
  if (b - a <= 1e-12) return;
  double e = window_energy(c, a, b);
  double rel = std::abs(e - (b - a)) / (b - a);
  if (rel > ar.max_rel) {
    ar.max_rel = rel;
    std::ostringstream os;
    os << tag << " [" << a << "," << b << "] energy " << e;
    ar.worst = os.str();
  }
}

AuditResult audit_energy(const StageResult &st, std::mt19937 &rng) {
  AuditResult ar;
  const Cover &cov = st.net.cover;
  std::map<int, double> parent_sum, parent_len;
  for (size_t si = 0; si < cov.segments.size(); ++si) {
    SegmentCurve c = image_curve(st, static_cast<int>(si));
    std::ostringstream tag;
    tag << "geodesic " << c.prime;
    audit_window(c, 0.0, c.length, ar, tag.str());
    for (size_t j = 0; j + 1 < c.window.size(); ++j)
      audit_window(c, c.window[j], c.window[j + 1], ar, tag.str());
    size_t half = c.window.size() / 2;
    audit_window(c, 0.0, c.window[half], ar, tag.str());
    audit_window(c, c.window[half], c.length, ar, tag.str());
    std::uniform_int_distribution<size_t> pick(0, c.window.size() - 1);
    for (int t = 0; t < 16; ++t) {
      size_t a = pick(rng), b = pick(rng);
      if (a == b) continue;
      audit_window(c, c.window[std::min(a, b)], c.window[std::max(a, b)], ar, tag.str());
    }
    int orig = cov.geodesics[c.prime].orig;
    parent_sum[orig] += window_energy(c, 0.0, c.length);
    parent_len[orig] += c.length;
  }
  for (const auto &[orig, len] : parent_len) {
    double rel = std::abs(parent_sum[orig] - len) / len;
    if (rel > ar.max_rel) {
      ar.max_rel = rel;
      std::ostringstream os;
      os << "family geodesic " << orig << " total energy " << parent_sum[orig];
      ar.worst = os.str();
    }
  }
  return ar;
}

MinkVec f_eval_with(const StageResult &st, const PartitionOfUnity &pu, const Loc &x) {
  return eval_nerve_point(st, psi(x, st.net.cover, pu));
}

std::vector<Loc> sample_locs(const FiniteLengthSpace &space, int n, std::mt19937 &rng) {
  std::vector<double> cum;
  double total = 0.0;
  for (int e = 0; e < space.edge_count(); ++e) {
    total += space.edge(e).w;
    cum.push_back(total);
  }
  std::uniform_real_distribution<double> uni(0.0, total);
  std::vector<Loc> pts;
  for (int i = 0; i < n; ++i) {
    double t = uni(rng);
    int e = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), t) - cum.begin());
    e = std::min(e, space.edge_count() - 1);
    double lo = e == 0 ? 0.0 : cum[e - 1];
    pts.push_back(space.canonical(
        Loc::on_edge(e, std::clamp((t - lo) / space.edge(e).w, 0.0, 1.0))));
  }
  return pts;
}

double measure_separation(const FiniteLengthSpace &space, const StageResult &st,
                          double dmin, int n, std::mt19937 &rng) {
  std::vector<Loc> pts = sample_locs(space, n, rng);
  PartitionOfUnity pu = make_partition(st.net.cover);
  std::vector<MinkVec> imgs;
  imgs.reserve(pts.size());
  for (const auto &x : pts) imgs.push_back(f_eval_with(st, pu, x));
  double mu = kInf;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j)
      if (space.distance(pts[i], pts[j]) >= dmin)
        mu = std::min(mu, ambient_norm(imgs[i] - imgs[j]));
  return mu == kInf ? 0.0 : mu;
}

struct DevAudit {
  double interior = 0.0;
  double overall = 0.0;
  int end_zone = 0;
};

DevAudit audit_phi_deviation(const StageResult &prev, const StageResult &st) {
  const Cover &cov = st.net.cover;
  const Cover &pcov = prev.net.cover;
  const FiniteLengthSpace &space = *cov.space;
  std::map<int, std::vector<double>> junction;
  for (size_t i = 0; i < st.family.Dprime.size(); ++i) {
    if (st.link.point_prev[i] >= 0) continue;
    for (size_t pj = 0; pj < pcov.geodesics.size(); ++pj) {
      auto arc = route_locate(space, pcov.geodesics[pj], st.family.Dprime[i]);
      if (arc) junction[static_cast<int>(pj)].push_back(*arc);
    }
  }
  std::map<int, int> psegof = segment_of_geodesic(pcov);
  DevAudit d;
  for (int v = 0; v < static_cast<int>(cov.sets.size()); ++v) {
    double dev = ambient_norm(st.h.image(v) -
                              eval_nerve_point(prev, st.phi_map.vertex_images.at(v)));
    bool endzone = false;
    const CoverSet &s = cov.sets[v];
    if (s.tag == SetTag::U && st.link.point_prev[s.point] < 0) endzone = true;
    if (s.tag == SetTag::V && st.link.geo_prev[s.geodesic] >= 0) {
      int pg = st.link.geo_prev[s.geodesic];
      double parc = s.anchor_arc + st.link.geo_arc_offset[s.geodesic];
      const TruncatedSegment &ps = pcov.segments[psegof.at(pg)];
      if (parc < ps.mid_arc(0) - 1e-12 || parc > ps.mid_arc(ps.pieces - 1) + 1e-12)
        endzone = true;
      auto jit = junction.find(pg);
      if (jit != junction.end())
        for (double j : jit->second)
          if (std::abs(parc - j) <= ps.xi + 1e-12) endzone = true;
    }
    d.overall = std::max(d.overall, dev);
    if (endzone) ++d.end_zone;
    else d.interior = std::max(d.interior, dev);
  }
  return d;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

} // namespace

int intersection_class(const FiniteLengthSpace &space, const GeodesicRecord &a,
                       const GeodesicRecord &b) {
  auto spans = intersection_spans(space, a, b);
  if (spans.empty()) return 0;
  if (spans.size() > 1) return 3;
  const ContactSpan &s = spans.front();
  return (s.a_hi - s.a_lo > 1e-9 || s.b_hi - s.b_lo > 1e-9) ? 2 : 1;
}

GeodesicFamily make_family(const FiniteLengthSpace &space,
                           const std::vector<std::vector<Loc>> &stage_points) {
  GeodesicFamily fam;
  fam.space = &space;
  for (size_t s = 0; s < stage_points.size(); ++s) {
    for (const Loc &x : stage_points[s]) {
      Loc c = space.canonical(x);
      for (const Loc &got : fam.D)
        if (space.same_point(got, c))
          throw std::runtime_error("duplicate marked point");
      fam.D.push_back(c);
      fam.stage_of_point.push_back(static_cast<int>(s) + 1);
    }
  }
  for (size_t i = 0; i < fam.D.size(); ++i)
    for (size_t j = i + 1; j < fam.D.size(); ++j) {
      FamilyGeodesic g;
      g.a = static_cast<int>(i);
      g.b = static_cast<int>(j);
      g.stage = std::max(fam.stage_of_point[i], fam.stage_of_point[j]);
      g.route = trace_route(space, fam.D[i], fam.D[j]);
      fam.gamma.push_back(std::move(g));
    }
  std::stable_sort(fam.gamma.begin(), fam.gamma.end(),
                   [](const FamilyGeodesic &x, const FamilyGeodesic &y) {
                     return x.stage < y.stage;
                   });
  for (size_t i = 0; i < fam.gamma.size(); ++i)
    fam.gamma[i].route.orig = static_cast<int>(i);
  return fam;
}

GeodesicFamily fix_intersections(GeodesicFamily family) {
  const FiniteLengthSpace &space = *family.space;
  int n = static_cast<int>(family.gamma.size());
  int guard = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    if (++guard > 100 + n * n)
      throw std::runtime_error("intersection repair does not terminate");
    for (int i = 0; i < n && !changed; ++i) {
      for (int j = i + 1; j < n && !changed; ++j) {
        auto spans =
            intersection_spans(space, family.gamma[i].route, family.gamma[j].route);
        if (spans.size() <= 1) continue;
        int alt = family.gamma[j].stage >= family.gamma[i].stage ? j : i;
        int keep = alt == j ? i : j;
        FamilyGeodesic &ga = family.gamma[alt];
        const FamilyGeodesic &gk = family.gamma[keep];
        double lo = kInf, hi = -kInf;
        for (const auto &s : spans) {
          lo = std::min(lo, alt == j ? s.b_lo : s.a_lo);
          hi = std::max(hi, alt == j ? s.b_hi : s.a_hi);
        }
        Loc p_lo = space.canonical(route_point(space, ga.route, lo));
        Loc p_hi = space.canonical(route_point(space, ga.route, hi));
        auto k_lo = route_locate(space, gk.route, p_lo);
        auto k_hi = route_locate(space, gk.route, p_hi);
        if (!k_lo || !k_hi)
          throw std::runtime_error("contact point missing from the kept geodesic");
        GeodesicRecord mid =
            *k_lo <= *k_hi ? sub_route(space, gk.route, *k_lo, *k_hi)
                           : reverse_route(sub_route(space, gk.route, *k_hi, *k_lo));
        GeodesicRecord head = sub_route(space, ga.route, 0.0, lo);
        GeodesicRecord tail = sub_route(space, ga.route, hi, ga.route.length);
        GeodesicRecord reroute =
            concat_routes(space, concat_routes(space, head, mid), tail);
        if (std::abs(reroute.length - ga.route.length) >
            1e-9 * std::max(1.0, ga.route.length))
          throw std::runtime_error("reroute is no longer a geodesic");
        reroute.orig = ga.route.orig;
        ga.route = std::move(reroute);
        changed = true;
      }
    }
  }
  return family;
}

GeodesicFamily derive_prime(GeodesicFamily family) {
  const FiniteLengthSpace &space = *family.space;
  family.Dprime.clear();
  family.stage_of_prime_point.clear();
  family.gamma_prime.clear();
  for (size_t i = 0; i < family.D.size(); ++i) {
    family.Dprime.push_back(family.D[i]);
    family.stage_of_prime_point.push_back(family.stage_of_point[i]);
  }
  size_t base = family.D.size();
  struct NewPoint {
    Loc loc;
    int stage;
  };
  std::vector<NewPoint> fresh;
  auto note_point = [&](const Loc &raw, int stage) {
    Loc c = space.canonical(raw);
    for (size_t k = 0; k < base; ++k)
      if (space.same_point(family.Dprime[k], c)) return;
    for (auto &np : fresh)
      if (space.same_point(np.loc, c)) {
        np.stage = std::min(np.stage, stage);
        return;
      }
    fresh.push_back({c, stage});
  };
  int n = static_cast<int>(family.gamma.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      int stage = std::max(family.gamma[i].stage, family.gamma[j].stage);
      for (const auto &s :
           intersection_spans(space, family.gamma[i].route, family.gamma[j].route)) {
        note_point(route_point(space, family.gamma[i].route, s.a_lo), stage);
        if (s.a_hi - s.a_lo > 1e-9)
          note_point(route_point(space, family.gamma[i].route, s.a_hi), stage);
      }
    }
  std::sort(fresh.begin(), fresh.end(), [](const NewPoint &x, const NewPoint &y) {
    if (x.loc.is_vertex() != y.loc.is_vertex()) return x.loc.is_vertex();
    if (x.loc.is_vertex()) return x.loc.vertex < y.loc.vertex;
    if (x.loc.edge != y.loc.edge) return x.loc.edge < y.loc.edge;
    return x.loc.frac < y.loc.frac;
  });
  for (const auto &np : fresh) {
    family.Dprime.push_back(np.loc);
    family.stage_of_prime_point.push_back(np.stage);
  }
  auto prime_index = [&](const Loc &x) {
    for (size_t k = 0; k < family.Dprime.size(); ++k)
      if (space.same_point(family.Dprime[k], x)) return static_cast<int>(k);
    throw std::runtime_error("piece endpoint is not a derived point");
  };
  for (int gi = 0; gi < n; ++gi) {
    const FamilyGeodesic &g = family.gamma[gi];
    double len = g.route.length;
    std::vector<double> cuts{0.0, len};
    for (const Loc &m : family.Dprime) {
      auto arc = route_locate(space, g.route, m);
      if (arc && *arc > 1e-9 && *arc < len - 1e-9) cuts.push_back(*arc);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [](double x, double y) { return std::abs(x - y) <= 1e-9; }),
               cuts.end());
    for (size_t c = 0; c + 1 < cuts.size(); ++c) {
      GeodesicRecord piece = sub_route(space, g.route, cuts[c], cuts[c + 1]);
      piece.orig = gi;
      PrimedGeodesic pg;
      pg.orig = gi;
      pg.stage = g.stage;
      pg.a = prime_index(piece.a);
      pg.b = prime_index(piece.b);
      pg.route = std::move(piece);
      int lo = std::min(pg.a, pg.b), hi = std::max(pg.a, pg.b);
      bool dup = false;
      for (const auto &ex : family.gamma_prime) {
        if (std::min(ex.a, ex.b) != lo || std::max(ex.a, ex.b) != hi) continue;
        bool same_len = std::abs(ex.route.length - pg.route.length) <=
                        1e-9 * std::max(1.0, ex.route.length);
        bool same_mid =
            same_len &&
            space.same_point(route_point(space, ex.route, 0.5 * ex.route.length),
                             route_point(space, pg.route, 0.5 * pg.route.length));
        if (!same_mid)
          throw std::runtime_error("distinct primed geodesics share endpoints");
        dup = true;
        break;
      }
      if (!dup) family.gamma_prime.push_back(std::move(pg));
    }
  }
  return family;
}

GeodesicFamily family_at_stage(const GeodesicFamily &family, int s) {
  GeodesicFamily sub;
  sub.space = family.space;
  for (size_t i = 0; i < family.D.size(); ++i) {
    if (family.stage_of_point[i] > s) continue;
    sub.D.push_back(family.D[i]);
    sub.stage_of_point.push_back(family.stage_of_point[i]);
  }
  for (const auto &g : family.gamma) {
    if (g.stage > s) continue;
    if (g.a >= static_cast<int>(sub.D.size()) || g.b >= static_cast<int>(sub.D.size()))
      throw std::runtime_error("marked points are not stage-ordered");
    sub.gamma.push_back(g);
  }
  return derive_prime(std::move(sub));
}

MinkVec eval_nerve_point(const StageResult &st, const NervePoint &p) {
  std::vector<std::pair<int, double>> terms;
  for (int i = 0; i < static_cast<int>(p.simplex.size()); ++i)
    if (p.bary(i) > 1e-12) terms.emplace_back(p.simplex[i], p.bary(i));
  if (terms.empty()) throw std::runtime_error("empty nerve point");
  int ca = -1, cb = -1;
  const ChainEdgeInfo *info = nullptr;
  for (size_t i = 0; i < terms.size(); ++i)
    for (size_t j = i + 1; j < terms.size(); ++j) {
      auto it = st.chains.find(ekey(terms[i].first, terms[j].first));
      if (it == st.chains.end()) continue;
      if (info) throw std::runtime_error("nerve point spans two chain edges");
      ca = it->first.first;
      cb = it->first.second;
      info = &it->second;
    }
  const MinkVec &probe = st.h.vertex_images.begin()->second;
  MinkVec acc = MinkVec::zero(probe.p(), probe.q());
  double wa = 0.0, wb = 0.0;
  for (const auto &[v, w] : terms) {
    if (info && v == ca) {
      wa = w;
      continue;
    }
    if (info && v == cb) {
      wb = w;
      continue;
    }
    acc = acc + st.h.image(v) * w;
  }
  if (info) {
    double mu = wa + wb;
    if (mu > 0.0) {
      const std::vector<int> &chain = info->verts;
      double t = chain.front() == ca ? wb / mu : wa / mu;
      int k = static_cast<int>(chain.size()) - 1;
      double pos = t * k;
      int j = std::min(static_cast<int>(std::floor(pos)), k - 1);
      j = std::max(j, 0);
      double lam = pos - j;
      acc = acc +
            (st.h.image(chain[j]) * (1.0 - lam) + st.h.image(chain[j + 1]) * lam) * mu;
    }
  }
  return acc;
}

MinkVec f_eval(const StageResult &st, const Loc &x) {
  PartitionOfUnity pu = make_partition(st.net.cover);
  return f_eval_with(st, pu, x);
}

StageResult build_stage(const FiniteLengthSpace &space, const GeodesicFamily &family,
                        int stage, const StageResult *prev, const StageConfig &config) {
  if (stage >= 2 && prev == nullptr)
    throw std::runtime_error("later stages need the previous stage result");
  StageResult st;
  st.stage = stage;
  st.family = family_at_stage(family, stage);

  double minpair = kInf;
  for (size_t i = 0; i < st.family.Dprime.size(); ++i)
    for (size_t j = i + 1; j < st.family.Dprime.size(); ++j)
      minpair = std::min(minpair,
                         space.distance(st.family.Dprime[i], st.family.Dprime[j]));
  double delta0;
  if (stage == 1) {
    delta0 = config.delta0 > 0.0 ? config.delta0 : minpair;
  } else {
    st.link = make_stage_link(space, st.family, prev->family);
    const Cover &pcov = prev->net.cover;
    double clear = kInf;
    for (const auto &ps : pcov.segments) {
      const GeodesicRecord &rec = pcov.geodesics[ps.geodesic];
      for (int k = 0; k < ps.pieces; ++k) {
        Loc m = route_point(space, rec, ps.mid_arc(k));
        for (size_t i = 0; i < st.family.Dprime.size(); ++i) {
          if (st.link.point_prev[i] >= 0) continue;
          double d = space.distance(m, st.family.Dprime[i]);
          if (d > 1e-9) clear = std::min(clear, d);
        }
      }
    }
    delta0 = std::min({prev->constants.delta, 3.0 * clear, minpair});
  }

  Cover cov = build_U(space, st.family.Dprime, prime_records(st.family), delta0);
  std::vector<SubdivisionPlan> plans;
  if (stage >= 2) {
    std::map<int, int> psegof = segment_of_geodesic(prev->net.cover);
    for (size_t g2 = 0; g2 < st.family.gamma_prime.size(); ++g2) {
      int pg = st.link.geo_prev[g2];
      if (pg < 0) continue;
      const TruncatedSegment &ps = prev->net.cover.segments[psegof.at(pg)];
      SubdivisionPlan plan;
      plan.geodesic = static_cast<int>(g2);
      plan.spacing = ps.xi;
      plan.anchor = ps.s0 + 0.5 * ps.xi - st.link.geo_arc_offset[g2];
      plan.lo = 0.0;
      plan.hi = st.family.gamma_prime[g2].route.length;
      plans.push_back(plan);
    }
  }
  cov = build_V(std::move(cov), 0.0, plans);
  cov = build_W(std::move(cov), 0.5 * cov.beta);
  cov.stage = stage;

  CoverStats stats = cover_stats(cov);
  if (!stats.covers_space)
    throw std::runtime_error("config infeasible: cover misses part of the space");
  double mesh_cap = stage == 1 ? delta0 : delta0 / 3.0;
  if (stats.mesh >= mesh_cap)
    throw std::runtime_error("config infeasible: cover mesh " + fmt(stats.mesh) +
                             " is not below " + fmt(mesh_cap));
  if (!(cov.epsilon < cov.beta && cov.beta < cov.alpha && cov.alpha < delta0 / 3.0))
    throw std::runtime_error("config infeasible: scale ordering epsilon < beta < "
                             "alpha < delta0/3 fails");

  st.constants.delta0 = delta0;
  st.constants.alpha = cov.alpha;
  st.constants.alpha_prime = cov.alpha_prime;
  st.constants.beta = cov.beta;
  st.constants.beta_prime = cov.beta_prime;
  st.constants.epsilon = cov.epsilon;
  st.constants.xi_max = cov.max_xi;
  st.constants.delta = stats.lebesgue;
  st.constants.omega = stage <= static_cast<int>(config.omega.size())
                           ? config.omega[stage - 1]
                           : std::pow(2.0, -stage) / 4.0;
  if (!(st.constants.omega > 0.0 && st.constants.omega < 1.0))
    throw std::runtime_error("config infeasible: omega must lie in (0,1)");

  double maxpair = 0.0;
  for (size_t i = 0; i < st.family.Dprime.size(); ++i)
    for (size_t j = i + 1; j < st.family.Dprime.size(); ++j)
      maxpair = std::max(maxpair,
                         space.distance(st.family.Dprime[i], st.family.Dprime[j]));
  st.constants.M = stage == 1 ? std::max(maxpair, cov.alpha)
                              : std::max(2.0 * prev->constants.M, cov.alpha);

  st.constants.rho_cap = config.rho_cap;
  if (stage == 1) {
    st.constants.rho_mu_bound = config.rho_cap;
    st.constants.rho_delta_bound = config.rho_cap;
    st.constants.rho = config.rho_cap;
  } else {
    std::mt19937 rng(20240601u);
    double mu_prev =
        measure_separation(space, *prev, std::pow(2.0, -stage), 160, rng);
    st.constants.rho_mu_bound = mu_prev / std::pow(2.0, stage + 2);
    double rho_delta = kInf;
    for (const auto &g : st.family.gamma_prime) {
      double lambda = 1e-6 * g.route.length;
      double c2 = perturbation_constant(2.0, 1, 0.0, g.route.length);
      rho_delta = std::min(rho_delta, std::sqrt(lambda / (2.0 * c2)));
    }
    st.constants.rho_delta_bound = rho_delta;
    st.constants.rho = std::min(
        {st.constants.rho_cap, st.constants.rho_mu_bound, st.constants.rho_delta_bound});
  }

  st.net = nerve(cov);
  st.g_pre = metrize_nerve(st.net, stage, st.constants.M, st.constants.omega);
  st.g = st.g_pre;

  {
    std::ostringstream os;
    os << "stage " << stage << ": " << st.net.cover.sets.size() << " cover sets, "
       << st.net.cover.segments.size() << " chains, lebesgue " << fmt(stats.lebesgue)
       << ", mesh " << fmt(stats.mesh) << ", order " << stats.order;
    st.notes.push_back(os.str());
    std::ostringstream os2;
    os2 << "psi energy epsilon term <= "
        << fmt((1.0 - st.constants.omega) * (1.0 - st.constants.omega) * cov.max_xi);
    st.notes.push_back(os2.str());
  }

  if (stage == 1) {
    int p = config.pos_dim > 0 ? config.pos_dim : (config.stages == 1 ? 7 : 9);
    int q = config.neg_dim > 0 ? config.neg_dim : 1;
    PLMap h0 = place_stage_one(st, p, q);
    std::vector<PlanEdge> eplans = plan_edges(st.net.cover, {});
    double m = st.constants.M;
    RepairOutcome out;
    for (int attempt = 0;; ++attempt) {
      MetricComplex base = metrize_nerve(st.net, stage, m, st.constants.omega);
      for (const auto &pe : eplans) base.set_edge(pe.u, pe.v, pe.target);
      check_calibrated_pd(base);
      out = repair_chains(base, h0, eplans, st.constants.rho);
      if (out.max_required <= m * (1.0 + 1e-9)) break;
      if (attempt >= 2)
        throw std::runtime_error("required_M search failure: scale keeps growing");
      m = std::max(out.max_required * 1.05, 2.0 * m);
    }
    st.constants.M = m;
    st.g_pre = metrize_nerve(st.net, stage, m, st.constants.omega);
    CertSummary cert = certify_short(out.g, out.h);
    if (!cert.ok)
      throw std::runtime_error("shortness certificate failure on simplex " +
                               simplex_str(cert.offender));
    st.g = std::move(out.g);
    st.h = std::move(out.h);
    st.chains = std::move(out.chains);
    std::ostringstream os;
    os << "repairs: " << out.zigzags << " zigzag, " << out.wiggles << " wiggle, "
       << out.untouched << " untouched, " << out.new_vertices
       << " new vertices, required M " << fmt(out.max_required) << ", certified "
       << cert.checked << " simplices";
    st.notes.push_back(os.str());
  }
  return st;
}

PLMap embed_next(const StageResult &prev, StageResult &next, double rho) {
  const Cover &cov = next.net.cover;
  const Cover &pcov = prev.net.cover;
  next.phi_map = phi(next.net, prev.net, next.link);

  PLMap h0;
  for (int v = 0; v < static_cast<int>(cov.sets.size()); ++v)
    h0.set(v, eval_nerve_point(prev, next.phi_map.vertex_images.at(v)));

  std::vector<PlanEdge> eplans = plan_edges(cov, next.link.geo_prev);
  std::map<std::pair<int, int>, double> target_of;
  for (const auto &pe : eplans) target_of[ekey(pe.u, pe.v)] = pe.target;

  // Retrace persisting chains: walk each previous chain-edge image polyline
  // and drop the new vertices at positions proportional to their cumulative
  // length targets. Anchors at previous midpoints stay exact; stretches whose
  // polyline is longer than the available chord budget (a junction collapse
  // eats part of the arc) fall back to the straight bridge between anchors.
  std::map<int, int> nsegof = segment_of_geodesic(cov);
  std::map<int, int> psegof = segment_of_geodesic(pcov);
  std::map<int, std::vector<std::pair<double, int>>> events;
  for (size_t g2 = 0; g2 < cov.geodesics.size(); ++g2) {
    int pg = next.link.geo_prev[g2];
    if (pg < 0) continue;
    double off = next.link.geo_arc_offset[g2];
    const TruncatedSegment &seg = cov.segments.at(nsegof.at(static_cast<int>(g2)));
    auto &ev = events[pg];
    ev.emplace_back(off, seg.u_start);
    for (int k = 0; k < seg.pieces; ++k)
      ev.emplace_back(off + seg.mid_arc(k), seg.v_sets[k]);
    ev.emplace_back(off + cov.geodesics[g2].length, seg.u_end);
  }
  std::map<int, MinkVec> traced;
  auto assign = [&](int v, const MinkVec &img) {
    auto it = traced.find(v);
    if (it == traced.end()) {
      traced.emplace(v, img);
      return;
    }
    if (ambient_norm(it->second - img) > 1e-9)
      throw std::runtime_error("inconsistent traced position at a shared vertex");
  };
  int bridged = 0;
  for (auto &[pg, ev] : events) {
    std::sort(ev.begin(), ev.end());
    std::vector<std::pair<double, int>> uniq;
    for (const auto &e : ev) {
      if (!uniq.empty() && uniq.back().second == e.second &&
          std::abs(uniq.back().first - e.first) <= 1e-9)
        continue;
      uniq.push_back(e);
    }
    const TruncatedSegment &ps = pcov.segments.at(psegof.at(pg));
    double plen = pcov.geodesics[pg].length;
    if (std::abs(uniq.front().first) > 1e-9 ||
        std::abs(uniq.back().first - plen) > 1e-9)
      throw std::runtime_error("persisting geodesic is not fully covered by the "
                               "next stage");
    std::vector<double> bounds{0.0};
    std::vector<int> bverts{ps.u_start};
    for (int k = 0; k < ps.pieces; ++k) {
      bounds.push_back(ps.mid_arc(k));
      bverts.push_back(ps.v_sets[k]);
    }
    bounds.push_back(plen);
    bverts.push_back(ps.u_end);
    size_t e0 = 0;
    for (size_t j = 0; j + 1 < bounds.size(); ++j) {
      double a = bounds[j], b = bounds[j + 1];
      std::vector<size_t> mem;
      size_t i = e0;
      for (; i < uniq.size() && uniq[i].first <= b + 1e-9; ++i) mem.push_back(i);
      if (mem.size() < 2 || std::abs(uniq[mem.front()].first - a) > 1e-9 ||
          std::abs(uniq[mem.back()].first - b) > 1e-9)
        throw std::runtime_error("stretch boundary event missing");
      e0 = mem.back();
      std::vector<double> wgt;
      double tsum = 0.0;
      for (size_t t = 0; t + 1 < mem.size(); ++t) {
        auto it = target_of.find(
            ekey(uniq[mem[t]].second, uniq[mem[t + 1]].second));
        if (it == target_of.end())
          throw std::runtime_error("consecutive events are not chain neighbors");
        wgt.push_back(it->second);
        tsum += it->second;
      }
      const ChainEdgeInfo &pinfo = prev.chains.at(ekey(bverts[j], bverts[j + 1]));
      std::vector<int> walk = pinfo.verts;
      if (walk.front() != bverts[j]) std::reverse(walk.begin(), walk.end());
      std::vector<MinkVec> poly;
      std::vector<double> cumlen{0.0};
      for (int w : walk) poly.push_back(prev.h.image(w));
      for (size_t t = 0; t + 1 < poly.size(); ++t)
        cumlen.push_back(cumlen.back() + ambient_norm(poly[t + 1] - poly[t]));
      double lambda = cumlen.back();
      bool bridge = lambda > tsum * (1.0 + 1e-12);
      if (bridge) {
        ++bridged;
        if (ambient_norm(poly.back() - poly.front()) > tsum + 1e-12)
          throw std::runtime_error(
              "persisting chain cannot stay short across a junction");
      }
      auto poly_at = [&](double s) {
        s = std::clamp(s, 0.0, lambda);
        size_t t = 1;
        while (t + 1 < cumlen.size() && cumlen[t] < s) ++t;
        double seglen = cumlen[t] - cumlen[t - 1];
        if (seglen <= 1e-18) return poly[t];
        double lam = (s - cumlen[t - 1]) / seglen;
        return poly[t - 1] * (1.0 - lam) + poly[t] * lam;
      };
      double cum = 0.0;
      for (size_t t = 0; t < mem.size(); ++t) {
        int vtx = uniq[mem[t]].second;
        if (t == 0) {
          assign(vtx, poly.front());
          continue;
        }
        cum += wgt[t - 1];
        if (t + 1 == mem.size()) {
          assign(vtx, poly.back());
          continue;
        }
        double frac = cum / tsum;
        assign(vtx, bridge ? poly.front() + (poly.back() - poly.front()) * frac
                           : poly_at(lambda * frac));
      }
    }
  }
  for (const auto &[v, img] : traced) h0.set(v, img);

  double m = next.constants.M;
  RepairOutcome out;
  for (int attempt = 0;; ++attempt) {
    MetricComplex base = metrize_nerve(next.net, next.stage, m, next.constants.omega);
    for (const auto &pe : eplans) base.set_edge(pe.u, pe.v, pe.target);
    check_calibrated_pd(base);
    out = repair_chains(base, h0, eplans, rho);
    if (out.max_required <= m * (1.0 + 1e-9)) break;
    if (attempt >= 2)
      throw std::runtime_error("required_M search failure: scale keeps growing");
    m = std::max(out.max_required * 1.05, 2.0 * m);
  }
  next.constants.M = m;
  next.g_pre = metrize_nerve(next.net, next.stage, m, next.constants.omega);
  CertSummary cert = certify_short(out.g, out.h);
  if (!cert.ok)
    throw std::runtime_error("shortness certificate failure on simplex " +
                             simplex_str(cert.offender));
  next.g = std::move(out.g);
  next.h = std::move(out.h);
  next.chains = std::move(out.chains);
  {
    std::ostringstream os;
    os << "repairs: " << out.zigzags << " zigzag, " << out.wiggles << " wiggle, "
       << out.untouched << " untouched, " << out.new_vertices
       << " new vertices, required M " << fmt(out.max_required) << ", certified "
       << cert.checked << " simplices, " << bridged << " bridged stretches";
    next.notes.push_back(os.str());
    DevAudit dev = audit_phi_deviation(prev, next);
    std::ostringstream os2;
    os2 << "composition with the previous embedding: interior sup "
        << fmt(dev.interior) << ", overall sup " << fmt(dev.overall) << " over "
        << dev.end_zone << " end-zone vertices, budget rho " << fmt(rho);
    next.notes.push_back(os2.str());
  }
  return next.h;
}

bool VerificationReport::all_ok() const {
  for (const auto &e : entries)
    if (!e.ok) return false;
  return true;
}

VerificationReport verify(const FiniteLengthSpace &space, const GeodesicFamily &family,
                          const std::vector<StageResult> &stages,
                          const StageConfig &config) {
  VerificationReport rep;
  auto add = [&](std::string name, bool ok, double value, std::string detail) {
    rep.entries.push_back({std::move(name), ok, value, std::move(detail)});
  };
  auto guarded = [&](const std::string &name, auto &&fn) {
    try {
      fn();
    } catch (const std::exception &ex) {
      add(name, false, 0.0, std::string("exception: ") + ex.what());
    }
  };

  for (size_t si = 0; si < stages.size(); ++si) {
    const StageResult &st = stages[si];
    std::string pre = "stage " + std::to_string(st.stage) + " ";

    guarded(pre + "energy", [&] {
      std::mt19937 rng(20240601u + st.stage);
      AuditResult ar = audit_energy(st, rng);
      add(pre + "energy", ar.max_rel < 1e-6, ar.max_rel,
          "max relative energy error; worst " + ar.worst);
    });

    guarded(pre + "shortness", [&] {
      CertSummary cert = certify_short(st.g, st.h);
      add(pre + "shortness", cert.ok, static_cast<double>(cert.checked),
          cert.ok ? "all simplices certified"
                  : "violated on " + simplex_str(cert.offender));
    });

    guarded(pre + "scale ordering", [&] {
      const StageConstants &c = st.constants;
      bool ok = c.epsilon < c.beta && c.beta < c.alpha && c.alpha < c.delta0 / 3.0;
      add(pre + "scale ordering", ok, c.alpha,
          "epsilon " + fmt(c.epsilon) + " beta " + fmt(c.beta) + " alpha " +
              fmt(c.alpha) + " delta0 " + fmt(c.delta0));
    });

    guarded(pre + "epsilon term", [&] {
      double v = (1.0 - st.constants.omega) * (1.0 - st.constants.omega) *
                 st.constants.xi_max;
      add(pre + "epsilon term", true, v,
          "per-geodesic psi energy surplus bound (logged, not asserted)");
    });

    guarded(pre + "separation", [&] {
      std::mt19937 rng(20240601u);
      // the map separates a pair only once the cover mesh resolves its
      // distance; below that scale whole ball interiors share one image
      double mesh = cover_stats(st.net.cover).mesh;
      for (int k = 1; k <= 3; ++k) {
        double scale = std::pow(2.0, -k);
        double mu = measure_separation(space, st, scale, 120, rng);
        bool resolved = mesh < scale;
        add(pre + "separation mu(2^-" + std::to_string(k) + ")",
            !resolved || mu > 0.0, mu,
            resolved ? "minimum image separation over sampled pairs"
                     : "scale below the cover mesh " + fmt(mesh) +
                           "; separation not required yet");
        if (k == st.stage && st.stage >= 2) {
          double bound = mu / std::pow(2.0, st.stage);
          add(pre + "rho schedule", !resolved || st.constants.rho < bound,
              st.constants.rho,
              "rho " + fmt(st.constants.rho) + " against mu/2^stage " + fmt(bound));
        }
      }
    });

    if (st.stage == 1) {
      guarded(pre + "injectivity", [&] {
        std::mt19937 rng(424242u);
        std::vector<Loc> pts = sample_locs(space, 140, rng);
        // extreme pairs sit at vertices and marked points; random interior
        // samples may never reach distance delta0 on small spaces
        for (int v = 0; v < space.vertex_count(); ++v)
          pts.push_back(Loc::at_vertex(v));
        pts.insert(pts.end(), family.Dprime.begin(), family.Dprime.end());
        PartitionOfUnity pu = make_partition(st.net.cover);
        std::vector<MinkVec> imgs;
        for (const auto &x : pts) imgs.push_back(f_eval_with(st, pu, x));
        double worst = kInf;
        int pairs = 0;
        for (size_t i = 0; i < pts.size(); ++i)
          for (size_t j = i + 1; j < pts.size(); ++j) {
            if (space.distance(pts[i], pts[j]) < st.constants.delta0) continue;
            ++pairs;
            worst = std::min(worst, ambient_norm(imgs[i] - imgs[j]));
          }
        if (pairs == 0) worst = 0.0;
        add(pre + "injectivity", pairs == 0 || worst > 0.0, worst,
            "min image distance over " + std::to_string(pairs) +
                " pairs separated by delta0");
      });
    }

    if (si > 0) {
      const StageResult &pv = stages[si - 1];
      guarded(pre + "composition", [&] {
        DevAudit dev = audit_phi_deviation(pv, st);
        add(pre + "composition interior", dev.interior <= st.constants.rho,
            dev.interior, "sup |h - h_prev o phi| away from end zones, rho " +
                              fmt(st.constants.rho));
        add(pre + "composition overall", true, dev.overall,
            "sup over all vertices (" + std::to_string(dev.end_zone) +
                " end-zone vertices carry the stage-exactness correction)");
      });

      guarded(pre + "negative stability", [&] {
        std::mt19937 rng(777u);
        PartitionOfUnity pun = make_partition(st.net.cover);
        PartitionOfUnity pup = make_partition(pv.net.cover);
        double worst = 0.0;
        for (const auto &pg : pv.net.cover.geodesics) {
          for (int t = 0; t <= 24; ++t) {
            double arc = pg.length * t / 24.0;
            Loc x = space.canonical(route_point(space, pg, arc));
            MinkVec a = f_eval_with(st, pun, x);
            MinkVec b = f_eval_with(pv, pup, x);
            worst = std::max(worst, (a.neg - b.neg).cwiseAbs().maxCoeff());
          }
        }
        add(pre + "negative stability", worst == 0.0, worst,
            "max |neg(f_next) - neg(f_prev)| on the previous geodesic images");
      });

      guarded(pre + "persisting energy", [&] {
        std::map<int, int> psegof = segment_of_geodesic(pv.net.cover);
        std::map<int, int> nsegof = segment_of_geodesic(st.net.cover);
        std::map<int, SegmentCurve> pcurves;
        double worst = 0.0;
        for (size_t g2 = 0; g2 < st.net.cover.geodesics.size(); ++g2) {
          int pg = st.link.geo_prev[g2];
          if (pg < 0) continue;
          SegmentCurve cn = image_curve(st, nsegof.at(static_cast<int>(g2)));
          if (!pcurves.count(pg)) pcurves.emplace(pg, image_curve(pv, psegof.at(pg)));
          double off = st.link.geo_arc_offset[g2];
          double en = window_energy(cn, 0.0, cn.length);
          double ep = window_energy(pcurves.at(pg), off, off + cn.length);
          worst = std::max(worst, std::abs(en - ep) / std::max(1.0, cn.length));
        }
        add(pre + "persisting energy", worst <= 2e-6, worst,
            "per persisting geodesic, |E_next - E_prev| relative to length");
      });
    }
  }

  guarded("transverse growth", [&] {
    if (stages.size() < 2) {
      add("transverse growth", true, 0.0, "needs two stages, skipped");
      return;
    }
    const StageResult &s1 = stages.front();
    const StageResult &s2 = stages.back();
    int best_edge = -1;
    double best_len = 0.0;
    for (int e = 0; e < space.edge_count(); ++e) {
      Loc mid = Loc::on_edge(e, 0.5);
      bool on_prev = false, on_next = false;
      for (const auto &g : s1.net.cover.geodesics)
        if (route_locate(space, g, mid)) on_prev = true;
      for (const auto &g : s2.net.cover.geodesics)
        if (route_locate(space, g, mid)) on_next = true;
      if (!on_prev && on_next && space.edge(e).w > best_len) {
        best_len = space.edge(e).w;
        best_edge = e;
      }
    }
    if (best_edge < 0) {
      add("transverse growth", true, 0.0, "no transverse edge available, skipped");
      return;
    }
    const GraphEdge &ge = space.edge(best_edge);
    ParamPath alpha;
    alpha.times = {0.0, ge.w};
    alpha.locs = {Loc::at_vertex(ge.u), Loc::at_vertex(ge.v)};
    CompiledPath cp(space, alpha);
    PartitionOfUnity pu1 = make_partition(s1.net.cover);
    PartitionOfUnity pu2 = make_partition(s2.net.cover);
    auto discrete = [&](const StageResult &st, const PartitionOfUnity &pu, int n) {
      double total = 0.0;
      MinkVec prev = f_eval_with(st, pu, cp.eval(0.0));
      for (int i = 1; i <= n; ++i) {
        double t = ge.w * i / n;
        MinkVec cur = f_eval_with(st, pu, cp.eval(t));
        MinkVec d = cur - prev;
        total += mink_pairing(d, d) / (ge.w / n);
        prev = cur;
      }
      return total;
    };
    int n = std::max(config.sample_depth, 64);
    double e1 = discrete(s1, pu1, 4 * n);
    double e2 = discrete(s2, pu2, 4 * n);
    add("transverse growth", e2 > e1, e1 > 0.0 ? e2 / e1 : kInf,
        "pullback energy ratio on edge " + std::to_string(best_edge) + ": " +
            fmt(e1) + " -> " + fmt(e2));
  });

  return rep;
}

} // namespace minkembed
