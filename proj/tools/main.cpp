#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "minkembed/json_io.hpp"
#include "minkembed/pipeline.hpp"
#include "minkembed/wiggle.hpp"

using namespace minkembed;
using jsonio::json;

namespace {

struct PipelineRun {
  GeodesicFamily family;
  std::vector<StageResult> stages;
  VerificationReport report;
};

PipelineRun run_pipeline(const FiniteLengthSpace &space,
                         const std::vector<std::vector<Loc>> &stage_points,
                         int nstages, const StageConfig &config) {
  PipelineRun run;
  run.family = derive_prime(fix_intersections(make_family(space, stage_points)));
  run.stages.push_back(build_stage(space, run.family, 1, nullptr, config));
  for (int s = 2; s <= nstages; ++s) {
    StageResult next = build_stage(space, run.family, s, &run.stages.back(), config);
    embed_next(run.stages.back(), next, next.constants.rho);
    run.stages.push_back(std::move(next));
  }
  run.report = verify(space, run.family, run.stages, config);
  return run;
}

json run_to_json(const FiniteLengthSpace &space, const json &points_doc,
                 int nstages, const PipelineRun &run) {
  json doc;
  doc["input"] = {{"space", jsonio::space_to_json(space)},
                  {"points", points_doc},
                  {"stages", nstages}};
  for (const auto &st : run.stages)
    doc["stage_" + std::to_string(st.stage)] = jsonio::stage_to_json(st);
  doc["report"] = jsonio::report_to_json(run.report);
  doc["ok"] = run.report.all_ok();
  return doc;
}

void print_report(const VerificationReport &rep) {
  for (const auto &e : rep.entries)
    std::printf("%-42s %s  %.6g  %s\n", e.name.c_str(), e.ok ? "ok  " : "FAIL",
                e.value, e.detail.c_str());
}

int cmd_embed(const std::string &space_file, const std::string &points_file,
              int nstages, const std::string &out_file, const StageConfig &config) {
  FiniteLengthSpace space = jsonio::load_space(jsonio::read_file(space_file));
  json points_doc = jsonio::read_file(points_file);
  auto stage_points = jsonio::load_stage_points(space, points_doc);
  PipelineRun run = run_pipeline(space, stage_points, nstages, config);
  if (!out_file.empty())
    jsonio::write_file(out_file, run_to_json(space, points_doc, nstages, run));
  print_report(run.report);
  return run.report.all_ok() ? 0 : 1;
}

int cmd_verify(const std::string &result_file) {
  json doc = jsonio::read_file(result_file);
  if (!doc.contains("input"))
    throw std::runtime_error("result file carries no input block to re-run");
  FiniteLengthSpace space = jsonio::load_space(doc["input"]["space"]);
  auto stage_points = jsonio::load_stage_points(space, doc["input"]["points"]);
  int nstages = doc["input"]["stages"].get<int>();
  StageConfig config;
  config.stages = nstages;
  PipelineRun run = run_pipeline(space, stage_points, nstages, config);
  print_report(run.report);
  bool stored_ok = doc.value("ok", false);
  if (stored_ok != run.report.all_ok())
    std::printf("stored ok=%d disagrees with re-run\n", stored_ok ? 1 : 0);
  return run.report.all_ok() ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Energy-preserving embeddings of metric graphs into Lorentzian space"};
  app.require_subcommand(1);

  std::string space_file, points_file, out_file, path_file, result_file;
  int nstages = 2;
  StageConfig config;

  auto *embed = app.add_subcommand("embed", "run the staged embedding pipeline");
  embed->add_option("--space", space_file, "graph JSON")->required();
  embed->add_option("--points", points_file, "marked points JSON")->required();
  embed->add_option("--stages", nstages, "number of stages");
  embed->add_option("--out", out_file, "result JSON path");
  embed->add_option("--pos-dim", config.pos_dim, "positive dimension override");
  embed->add_option("--neg-dim", config.neg_dim, "negative dimension override");
  embed->add_option("--rho-cap", config.rho_cap, "approximation budget cap");

  auto *verify_cmd = app.add_subcommand("verify", "re-run the checks for a result");
  verify_cmd->add_option("--result", result_file, "result JSON")->required();

  int samples = 512;
  auto *energy = app.add_subcommand("energy", "discrete length and energy of a path");
  energy->add_option("--space", space_file, "graph JSON")->required();
  energy->add_option("--path", path_file, "path JSON")->required();
  energy->add_option("--samples", samples, "subdivision count");

  double walpha = 3.0, wbeta = 5.0, weps = 0.5;
  auto *wig = app.add_subcommand("wiggle", "single-edge energy reduction demo");
  wig->add_option("--alpha", walpha, "target edge value");
  wig->add_option("--beta", wbeta, "current edge value");
  wig->add_option("--epsilon", weps, "displacement bound");
  wig->add_option("--out", out_file, "output JSON path");

  double delta0 = 0.0;
  auto *cover_cmd = app.add_subcommand("cover", "protected open cover of the graph");
  cover_cmd->add_option("--space", space_file, "graph JSON")->required();
  cover_cmd->add_option("--points", points_file, "marked points JSON")->required();
  cover_cmd->add_option("--delta0", delta0, "separation scale (default: min pair)");
  cover_cmd->add_option("--out", out_file, "output JSON path");

  double scale = 0.0;
  auto *nerve_cmd = app.add_subcommand("nerve", "metrized nerve of the cover");
  nerve_cmd->add_option("--space", space_file, "graph JSON")->required();
  nerve_cmd->add_option("--points", points_file, "marked points JSON")->required();
  nerve_cmd->add_option("--delta0", delta0, "separation scale (default: min pair)");
  nerve_cmd->add_option("--scale", scale, "blow-up value M (default: diameter)");
  nerve_cmd->add_option("--out", out_file, "output JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (embed->parsed()) return cmd_embed(space_file, points_file, nstages, out_file, config);
    if (verify_cmd->parsed()) return cmd_verify(result_file);

    if (energy->parsed()) {
      FiniteLengthSpace space = jsonio::load_space(jsonio::read_file(space_file));
      ParamPath path = jsonio::load_path(space, jsonio::read_file(path_file));
      json doc{{"length", path_length(space, path, samples)},
               {"energy", path_energy(space, path, samples)},
               {"samples", samples}};
      std::cout << doc.dump(2) << "\n";
      return 0;
    }

    if (wig->parsed()) {
      MetricComplex c;
      c.add_simplex({0, 1});
      c.set_edge(0, 1, wbeta);
      PLMap map;
      MinkVec a = MinkVec::zero(2, 1), b = MinkVec::zero(2, 1);
      b.pos(0) = wbeta;
      map.set(0, a);
      map.set(1, b);
      WiggleResult res = lorentz_wiggle(c, map, 0, 1, walpha, weps);
      double disp = 0.0;
      for (size_t i = 0; i + 1 < res.chain.size(); ++i) {
        MinkVec base = a + (b - a) * (static_cast<double>(i) / (res.chain.size() - 1));
        disp = std::max(disp, ambient_norm(res.new_map.image(res.chain[i]) - base));
      }
      json doc{{"N", res.N},
               {"complex", jsonio::complex_to_json(res.complex)},
               {"max_displacement", disp},
               {"M_required", res.M_required}};
      doc["images"] = json::object();
      for (int v : res.chain)
        doc["images"][std::to_string(v)] = jsonio::minkvec_to_json(res.new_map.image(v));
      if (!out_file.empty()) jsonio::write_file(out_file, doc);
      else std::cout << doc.dump(2) << "\n";
      return 0;
    }

    if (cover_cmd->parsed() || nerve_cmd->parsed()) {
      FiniteLengthSpace space = jsonio::load_space(jsonio::read_file(space_file));
      auto stage_points =
          jsonio::load_stage_points(space, jsonio::read_file(points_file));
      GeodesicFamily fam =
          derive_prime(fix_intersections(make_family(space, stage_points)));
      double d0 = delta0;
      if (d0 <= 0.0) {
        d0 = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < fam.Dprime.size(); ++i)
          for (size_t j = i + 1; j < fam.Dprime.size(); ++j)
            d0 = std::min(d0, space.distance(fam.Dprime[i], fam.Dprime[j]));
      }
      std::vector<GeodesicRecord> recs;
      for (const auto &g : fam.gamma_prime) recs.push_back(g.route);
      Cover cov = build_U(space, fam.Dprime, recs, d0);
      cov = build_V(std::move(cov), 0.0, {});
      cov = build_W(std::move(cov), 0.5 * cov.beta);
      CoverStats stats = cover_stats(cov);
      if (cover_cmd->parsed()) {
        json doc{{"cover", jsonio::cover_to_json(cov)},
                 {"stats", jsonio::stats_to_json(stats)}};
        if (!out_file.empty()) jsonio::write_file(out_file, doc);
        else std::cout << doc.dump(2) << "\n";
        return stats.covers_space ? 0 : 1;
      }
      Nerve net = nerve(cov);
      double m = scale;
      if (m <= 0.0) {
        m = cov.alpha;
        for (size_t i = 0; i < fam.Dprime.size(); ++i)
          for (size_t j = i + 1; j < fam.Dprime.size(); ++j)
            m = std::max(m, space.distance(fam.Dprime[i], fam.Dprime[j]));
      }
      MetricComplex g = metrize_nerve(net, 1, m, 0.125);
      bool euclid = true;
      for (const auto &s : g.simplices())
        if (s.size() >= 3 && !is_euclidean(quadratic_form(g, s)).is_positive_definite)
          euclid = false;
      json doc{{"complex", jsonio::complex_to_json(g)},
               {"stats", jsonio::stats_to_json(stats)},
               {"euclidean", euclid}};
      if (!out_file.empty()) jsonio::write_file(out_file, doc);
      else std::cout << doc.dump(2) << "\n";
      return (stats.covers_space && euclid) ? 0 : 1;
    }
  } catch (const std::exception &ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 0;
}
