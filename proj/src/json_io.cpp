#include "minkembed/json_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace minkembed::jsonio {

namespace {

std::string id_string(const json &j) {
  if (j.is_string()) return j.get<std::string>();
  return j.dump();
}

} // namespace

FiniteLengthSpace load_space(const json &doc) {
  if (!doc.contains("points") || !doc.contains("edges"))
    throw std::runtime_error("graph document needs \"points\" and \"edges\"");
  std::vector<std::string> names;
  for (const auto &p : doc["points"]) names.push_back(id_string(p));
  std::vector<GraphEdge> edges;
  for (const auto &e : doc["edges"]) {
    if (!e.is_array() || e.size() != 3)
      throw std::runtime_error("edge entries are [id, id, weight]");
    GraphEdge ge;
    auto find = [&](const json &id) {
      std::string s = id_string(id);
      for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == s) return static_cast<int>(i);
      throw std::runtime_error("edge references unknown point " + s);
    };
    ge.u = find(e[0]);
    ge.v = find(e[1]);
    ge.w = e[2].get<double>();
    edges.push_back(ge);
  }
  return FiniteLengthSpace(std::move(names), std::move(edges));
}

json space_to_json(const FiniteLengthSpace &space) {
  json doc;
  doc["points"] = json::array();
  for (int i = 0; i < space.vertex_count(); ++i) doc["points"].push_back(space.name(i));
  doc["edges"] = json::array();
  for (int e = 0; e < space.edge_count(); ++e) {
    const GraphEdge &ge = space.edge(e);
    doc["edges"].push_back({space.name(ge.u), space.name(ge.v), ge.w});
  }
  return doc;
}

Loc load_loc(const FiniteLengthSpace &space, const json &j) {
  if (j.is_array()) {
    if (j.size() != 2) throw std::runtime_error("edge location is [edge, fraction]");
    return space.canonical(Loc::on_edge(j[0].get<int>(), j[1].get<double>()));
  }
  return Loc::at_vertex(space.index_of(id_string(j)));
}

json loc_to_json(const FiniteLengthSpace &space, const Loc &x) {
  Loc c = space.canonical(x);
  if (c.is_vertex()) return space.name(c.vertex);
  return json::array({c.edge, c.frac});
}

std::vector<std::vector<Loc>> load_stage_points(const FiniteLengthSpace &space,
                                                const json &doc) {
  std::vector<std::vector<Loc>> out;
  if (doc.contains("stages")) {
    for (const auto &stage : doc["stages"]) {
      std::vector<Loc> pts;
      for (const auto &p : stage) pts.push_back(load_loc(space, p));
      out.push_back(std::move(pts));
    }
  } else if (doc.contains("points")) {
    std::vector<Loc> pts;
    for (const auto &p : doc["points"]) pts.push_back(load_loc(space, p));
    out.push_back(std::move(pts));
  } else {
    throw std::runtime_error("points document needs \"stages\" or \"points\"");
  }
  return out;
}

ParamPath load_path(const FiniteLengthSpace &space, const json &doc) {
  if (!doc.contains("samples")) throw std::runtime_error("path document needs \"samples\"");
  ParamPath p;
  for (const auto &s : doc["samples"]) {
    p.times.push_back(s[0].get<double>());
    p.locs.push_back(load_loc(space, s[1]));
  }
  p.validate();
  if (doc.contains("domain")) {
    double a = doc["domain"][0].get<double>(), b = doc["domain"][1].get<double>();
    if (std::abs(a - p.a()) > 1e-9 || std::abs(b - p.b()) > 1e-9)
      throw std::runtime_error("path domain does not match its samples");
  }
  return p;
}

json path_to_json(const FiniteLengthSpace &space, const ParamPath &path) {
  json doc;
  doc["domain"] = {path.a(), path.b()};
  doc["samples"] = json::array();
  for (size_t i = 0; i < path.times.size(); ++i)
    doc["samples"].push_back({path.times[i], loc_to_json(space, path.locs[i])});
  return doc;
}

json complex_to_json(const MetricComplex &c) {
  json doc;
  doc["vertices"] = json::array();
  for (int v : c.vertices()) doc["vertices"].push_back(v);
  doc["simplices"] = json::array();
  for (const auto &s : c.simplices())
    if (s.size() >= 2) doc["simplices"].push_back(s);
  doc["edge_metric"] = json::object();
  for (const auto &s : c.simplices())
    if (s.size() == 2) {
      std::ostringstream key;
      key << s[0] << "-" << s[1];
      doc["edge_metric"][key.str()] = c.edge_value(s[0], s[1]);
    }
  return doc;
}

json minkvec_to_json(const MinkVec &v) {
  json doc;
  doc["pos"] = json::array();
  for (int i = 0; i < v.p(); ++i) doc["pos"].push_back(v.pos(i));
  doc["neg"] = json::array();
  for (int i = 0; i < v.q(); ++i) doc["neg"].push_back(v.neg(i));
  return doc;
}

json cover_to_json(const Cover &cov) {
  json doc;
  doc["stage"] = cov.stage;
  doc["alpha"] = cov.alpha;
  doc["alpha_prime"] = cov.alpha_prime;
  doc["beta"] = cov.beta;
  doc["beta_prime"] = cov.beta_prime;
  doc["epsilon"] = cov.epsilon;
  doc["sets"] = json::array();
  for (const auto &s : cov.sets) {
    json js;
    js["tag"] = s.tag == SetTag::U ? "U" : (s.tag == SetTag::V ? "V" : "W");
    js["anchor"] = loc_to_json(*cov.space, s.anchor);
    if (s.tag == SetTag::U) js["point"] = s.point;
    if (s.tag == SetTag::V) {
      js["geodesic"] = s.geodesic;
      js["sub_index"] = s.sub_index;
      js["anchor_arc"] = s.anchor_arc;
    }
    js["intervals"] = json::array();
    for (const auto &iv : s.intervals)
      js["intervals"].push_back({iv.edge, iv.lo, iv.hi});
    doc["sets"].push_back(std::move(js));
  }
  doc["geodesics"] = json::array();
  for (const auto &g : cov.geodesics) {
    json jg;
    jg["a"] = loc_to_json(*cov.space, g.a);
    jg["b"] = loc_to_json(*cov.space, g.b);
    jg["length"] = g.length;
    jg["orig"] = g.orig;
    doc["geodesics"].push_back(std::move(jg));
  }
  return doc;
}

json stats_to_json(const CoverStats &stats) {
  return json{{"order", stats.order},
              {"mesh", stats.mesh},
              {"lebesgue", stats.lebesgue},
              {"covers_space", stats.covers_space}};
}

json constants_to_json(const StageConstants &c) {
  return json{{"delta0", c.delta0},
              {"alpha", c.alpha},
              {"alpha_prime", c.alpha_prime},
              {"beta", c.beta},
              {"beta_prime", c.beta_prime},
              {"epsilon", c.epsilon},
              {"xi_max", c.xi_max},
              {"omega", c.omega},
              {"M", c.M},
              {"rho", c.rho},
              {"rho_cap", c.rho_cap},
              {"rho_mu_bound", c.rho_mu_bound},
              {"rho_delta_bound", c.rho_delta_bound},
              {"delta", c.delta}};
}

json report_to_json(const VerificationReport &rep) {
  json doc = json::array();
  for (const auto &e : rep.entries)
    doc.push_back(json{
        {"name", e.name}, {"ok", e.ok}, {"value", e.value}, {"detail", e.detail}});
  return doc;
}

json stage_to_json(const StageResult &st) {
  json doc;
  doc["constants"] = constants_to_json(st.constants);
  doc["vertex_coords"] = json::object();
  for (const auto &[v, img] : st.h.vertex_images)
    doc["vertex_coords"][std::to_string(v)] = minkvec_to_json(img);
  doc["notes"] = st.notes;
  return doc;
}

json read_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json doc;
  in >> doc;
  return doc;
}

void write_file(const std::string &path, const json &doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << doc.dump(2) << "\n";
}

} // namespace minkembed::jsonio
