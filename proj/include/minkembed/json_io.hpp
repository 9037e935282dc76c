#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "minkembed/cover_nerve.hpp"
#include "minkembed/metric_core.hpp"
#include "minkembed/minkowski.hpp"
#include "minkembed/pipeline.hpp"
#include "minkembed/simplicial.hpp"

namespace minkembed::jsonio {

using nlohmann::json;

// Graph document: {"points": [id...], "edges": [[id, id, weight]...]}.
FiniteLengthSpace load_space(const json &doc);
json space_to_json(const FiniteLengthSpace &space);

// A location is a point id or [edge_index, fraction].
Loc load_loc(const FiniteLengthSpace &space, const json &j);
json loc_to_json(const FiniteLengthSpace &space, const Loc &x);

// Marked points, grouped by stage: {"stages": [[loc...], ...]} or a flat
// {"points": [loc...]} treated as a single stage.
std::vector<std::vector<Loc>> load_stage_points(const FiniteLengthSpace &space,
                                                const json &doc);

// Path document: {"domain": [a, b], "samples": [[t, location]...]}.
ParamPath load_path(const FiniteLengthSpace &space, const json &doc);
json path_to_json(const FiniteLengthSpace &space, const ParamPath &path);

// Complex document: {"vertices": [...], "simplices": [[v...]...],
// "edge_metric": {"v-w": g}}.
json complex_to_json(const MetricComplex &c);

json minkvec_to_json(const MinkVec &v);
json cover_to_json(const Cover &cov);
json stats_to_json(const CoverStats &stats);
json constants_to_json(const StageConstants &c);
json report_to_json(const VerificationReport &rep);

// Stage block: {"constants": ..., "vertex_coords": {v: {"pos": [...],
// "neg": [...]}}, "notes": [...]}.
json stage_to_json(const StageResult &st);

json read_file(const std::string &path);
void write_file(const std::string &path, const json &doc);

} // namespace minkembed::jsonio
