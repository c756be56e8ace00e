#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridloc/corpus.hpp"
#include "gridloc/error.hpp"
#include "gridloc/grid.hpp"
#include "gridloc/querier.hpp"
#include "gridloc/report.hpp"
#include "gridloc/scorer.hpp"
#include "gridloc/stats.hpp"

namespace gridloc {

struct HeatmapConfig {
  GtHeatmapMode ground_truth_mode = GtHeatmapMode::eligible_cells;
  double max_alpha = 0.55;
  bool frontal_only = true;
};

/// One declarative file drives the whole pipeline; credentials stay in the
/// environment variables named by each backend.
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path images_root;
  Split split = Split::test;
  std::vector<GridSpec> grids = {GridSpec{}};
  std::optional<ViewPosition::Kind> view_filter;
  std::optional<std::vector<Pathology>> pathology_filter;
  std::vector<BackendConfig> backends;
  ScoringConfig scoring;
  int bootstrap_replicates = 1000;
  HeatmapConfig heatmap;
  std::optional<std::filesystem::path> atlas_dir;
  std::optional<std::filesystem::path> reviews_dir;
  std::size_t review_cap = 50;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;

  void validate() const {
    if (manifest.empty()) throw Error("config: corpus.manifest is required");
    if (grids.empty()) throw Error("config: at least one grid is required");
    if (backends.empty()) throw Error("config: at least one backend is required");
    for (const auto& g : grids) g.validate();
    for (const auto& b : backends) b.validate();
    scoring.validate();
    if (bootstrap_replicates < 1) throw Error("config: bootstrap replicates must be >= 1");
  }
};

namespace detail {

inline GridSpec grid_from_json(const nlohmann::json& j) {
  GridSpec g;
  if (j.is_string()) {  // "8x8"
    const std::string s = j.get<std::string>();
    const auto x = s.find('x');
    if (x == std::string::npos) throw Error("grid string must look like \"8x8\"");
    g.rows = std::stoi(s.substr(0, x));
    g.cols = std::stoi(s.substr(x + 1));
  } else if (j.is_array() && j.size() == 2) {
    g.rows = j.at(0).get<int>();
    g.cols = j.at(1).get<int>();
  } else if (j.is_object()) {
    g.rows = j.at("rows").get<int>();
    g.cols = j.at("cols").get<int>();
    g.canvas_side = j.value("canvas_side", 256);
  } else {
    throw Error("grid must be \"RxC\", [rows, cols], or an object");
  }
  g.validate();
  return g;
}

inline nlohmann::json grid_to_json(const GridSpec& g) {
  return {{"rows", g.rows}, {"cols", g.cols}, {"canvas_side", g.canvas_side}};
}

inline SimulatorSpec simulator_from_json(const nlohmann::json& j) {
  SimulatorSpec sim;
  sim.type = j.value("type", "uniform_random");
  sim.p_correct = j.value("p_correct", 0.7);
  sim.fixed_label = j.value("cell", j.value("fixed_label", "A1"));
  if (j.contains("responses")) {
    for (const auto& r : j.at("responses")) {
      sim.actions.push_back({SimulatorSpec::Action::Kind::respond,
                             r.get<std::string>()});
    }
  }
  if (j.contains("actions")) {
    for (const auto& a : j.at("actions")) {
      SimulatorSpec::Action action;
      if (a.is_string()) {
        action.text = a.get<std::string>();
      } else if (a.contains("respond")) {
        action.text = a.at("respond").get<std::string>();
      } else if (a.value("transient_error", false)) {
        action.kind = SimulatorSpec::Action::Kind::transient_error;
      } else if (a.value("abort", false)) {
        action.kind = SimulatorSpec::Action::Kind::abort;
      } else {
        throw Error("scripted action must be respond/transient_error/abort");
      }
      sim.actions.push_back(std::move(action));
    }
  }
  if (j.contains("abort_after")) {
    // shorthand: N responds followed by an abort
    const int k = j.at("abort_after").get<int>();
    std::vector<SimulatorSpec::Action> acts;
    for (int i = 0; i < k; ++i) {
      acts.push_back(sim.actions.empty()
                         ? SimulatorSpec::Action{SimulatorSpec::Action::Kind::respond, "A1"}
                         : sim.actions[i % sim.actions.size()]);
    }
    acts.push_back({SimulatorSpec::Action::Kind::abort, ""});
    sim.actions = std::move(acts);
  }
  if (j.contains("counter_file")) {
    sim.counter_file = j.at("counter_file").get<std::string>();
  }
  return sim;
}

inline BackendConfig backend_from_json(const nlohmann::json& j) {
  BackendConfig b;
  b.id = j.at("id").get<std::string>();
  const std::string kind = j.value("kind", "simulated");
  if (kind == "http_chat") {
    b.kind = BackendKind::http_chat;
  } else if (kind == "simulated") {
    b.kind = BackendKind::simulated;
  } else {
    throw Error("backend kind must be http_chat or simulated: " + kind);
  }
  b.endpoint = j.value("endpoint", "");
  b.model = j.value("model", "");
  if (j.contains("temperature") && !j.at("temperature").is_null()) {
    b.temperature = j.at("temperature").get<double>();
  }
  if (j.contains("reasoning_effort") && !j.at("reasoning_effort").is_null()) {
    b.reasoning_effort = j.at("reasoning_effort").get<std::string>();
  }
  b.credential_env = j.value("credential_env", "");
  b.timeout_s = j.value("timeout_s", 120.0);
  b.max_retries = j.value("max_retries", 3);
  b.min_request_interval_ms = j.value("min_request_interval_ms", 0);
  b.max_in_flight = j.value("max_in_flight", 1);
  b.backoff_base_ms = j.value("backoff_base_ms", 500);
  if (j.contains("simulator")) b.simulator = simulator_from_json(j.at("simulator"));
  if (j.contains("seed") && !j.at("seed").is_null()) {
    b.seed = j.at("seed").get<std::uint64_t>();
  }
  b.validate();
  return b;
}

inline nlohmann::json backend_to_json(const BackendConfig& b) {
  nlohmann::json j{{"id", b.id},
                   {"kind", b.kind == BackendKind::http_chat ? "http_chat" : "simulated"},
                   {"max_retries", b.max_retries},
                   {"min_request_interval_ms", b.min_request_interval_ms},
                   {"max_in_flight", b.max_in_flight},
                   {"backoff_base_ms", b.backoff_base_ms}};
  if (b.kind == BackendKind::http_chat) {
    j["endpoint"] = b.endpoint;
    j["model"] = b.model;
    j["credential_env"] = b.credential_env;
    j["timeout_s"] = b.timeout_s;
    if (b.temperature) j["temperature"] = *b.temperature;
    if (b.reasoning_effort) j["reasoning_effort"] = *b.reasoning_effort;
  } else {
    nlohmann::json sim{{"type", b.simulator.type}};
    if (b.simulator.type == "noisy_oracle") sim["p_correct"] = b.simulator.p_correct;
    if (b.simulator.type == "fixed_cell") sim["cell"] = b.simulator.fixed_label;
    if (b.simulator.type == "scripted") {
      nlohmann::json actions = nlohmann::json::array();
      for (const auto& a : b.simulator.actions) {
        switch (a.kind) {
          case SimulatorSpec::Action::Kind::respond:
            actions.push_back({{"respond", a.text}});
            break;
          case SimulatorSpec::Action::Kind::transient_error:
            actions.push_back({{"transient_error", true}});
            break;
          case SimulatorSpec::Action::Kind::abort:
            actions.push_back({{"abort", true}});
            break;
        }
      }
      sim["actions"] = std::move(actions);
      if (b.simulator.counter_file) {
        sim["counter_file"] = b.simulator.counter_file->string();
      }
    }
    j["simulator"] = std::move(sim);
  }
  if (b.seed) j["seed"] = *b.seed;
  return j;
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& doc,
                                      const std::filesystem::path& base_dir) {
  RunConfig cfg;
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };

  const auto& corpus = doc.at("corpus");
  cfg.manifest = resolve(corpus.at("manifest").get<std::string>());
  cfg.images_root = corpus.contains("images_root")
                        ? resolve(corpus.at("images_root").get<std::string>())
                        : cfg.manifest.parent_path();
  cfg.split = parse_split(doc.value("split", "test"));
  if (doc.contains("grids")) {
    cfg.grids.clear();
    for (const auto& g : doc.at("grids")) cfg.grids.push_back(detail::grid_from_json(g));
  }
  if (doc.contains("view_filter") && !doc.at("view_filter").is_null()) {
    cfg.view_filter = parse_view(doc.at("view_filter").get<std::string>()).kind;
  }
  if (doc.contains("pathologies") && !doc.at("pathologies").is_null()) {
    std::vector<Pathology> filter;
    for (const auto& p : doc.at("pathologies")) {
      const auto parsed = parse_pathology(p.get<std::string>());
      if (!parsed) throw Error("config: unknown pathology " + p.get<std::string>());
      filter.push_back(*parsed);
    }
    cfg.pathology_filter = std::move(filter);
  }
  for (const auto& b : doc.at("backends")) {
    cfg.backends.push_back(detail::backend_from_json(b));
  }
  if (doc.contains("scoring")) {
    const auto& s = doc.at("scoring");
    cfg.scoring.threshold = s.value("threshold", 0.5);
    cfg.scoring.fallback_enabled = s.value("fallback_enabled", true);
    const std::string policy = s.value("unparseable_policy", "count_as_miss");
    if (policy == "exclude") {
      cfg.scoring.unparseable_policy = ScoringConfig::UnparseablePolicy::exclude;
    } else if (policy == "count_as_miss") {
      cfg.scoring.unparseable_policy = ScoringConfig::UnparseablePolicy::count_as_miss;
    } else {
      throw Error("config: unparseable_policy must be count_as_miss or exclude");
    }
  }
  if (doc.contains("stats")) {
    cfg.bootstrap_replicates = doc.at("stats").value("replicates", 1000);
  }
  if (doc.contains("heatmap")) {
    const auto& h = doc.at("heatmap");
    const std::string mode = h.value("ground_truth_mode", "eligible_cells");
    if (mode == "mask_density") {
      cfg.heatmap.ground_truth_mode = GtHeatmapMode::mask_density;
    } else if (mode == "eligible_cells") {
      cfg.heatmap.ground_truth_mode = GtHeatmapMode::eligible_cells;
    } else {
      throw Error("config: ground_truth_mode must be eligible_cells or mask_density");
    }
    cfg.heatmap.max_alpha = h.value("max_alpha", 0.55);
    cfg.heatmap.frontal_only = h.value("frontal_only", true);
  }
  if (doc.contains("atlas_dir") && !doc.at("atlas_dir").is_null()) {
    cfg.atlas_dir = resolve(doc.at("atlas_dir").get<std::string>());
  }
  if (doc.contains("reviews_dir") && !doc.at("reviews_dir").is_null()) {
    cfg.reviews_dir = resolve(doc.at("reviews_dir").get<std::string>());
  }
  cfg.review_cap = doc.value("review_cap", 50);
  if (doc.contains("output_dir")) {
    cfg.output_dir = resolve(doc.at("output_dir").get<std::string>());
  }
  cfg.seed = doc.value("seed", 0);
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(doc, path.parent_path());
}

/// Resolved snapshot for the run manifest; loading it back reproduces the run.
inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json grids = nlohmann::json::array();
  for (const auto& g : cfg.grids) grids.push_back(detail::grid_to_json(g));
  nlohmann::json backends = nlohmann::json::array();
  for (const auto& b : cfg.backends) backends.push_back(detail::backend_to_json(b));
  nlohmann::json j{
      {"schema", "gridloc.run_config.v1"},
      {"corpus",
       {{"manifest", cfg.manifest.string()},
        {"images_root", cfg.images_root.string()}}},
      {"split", split_string(cfg.split)},
      {"grids", std::move(grids)},
      {"backends", std::move(backends)},
      {"scoring",
       {{"threshold", cfg.scoring.threshold},
        {"fallback_enabled", cfg.scoring.fallback_enabled},
        {"unparseable_policy",
         cfg.scoring.unparseable_policy == ScoringConfig::UnparseablePolicy::exclude
             ? "exclude"
             : "count_as_miss"}}},
      {"stats", {{"replicates", cfg.bootstrap_replicates}}},
      {"heatmap",
       {{"ground_truth_mode",
         cfg.heatmap.ground_truth_mode == GtHeatmapMode::mask_density
             ? "mask_density"
             : "eligible_cells"},
        {"max_alpha", cfg.heatmap.max_alpha},
        {"frontal_only", cfg.heatmap.frontal_only}}},
      {"review_cap", cfg.review_cap},
      {"output_dir", cfg.output_dir.string()},
      {"seed", cfg.seed},
  };
  if (cfg.view_filter) {
    j["view_filter"] =
        *cfg.view_filter == ViewPosition::Kind::frontal ? "frontal" : "lateral";
  }
  if (cfg.pathology_filter) {
    nlohmann::json paths = nlohmann::json::array();
    for (Pathology p : *cfg.pathology_filter) paths.push_back(slug(p));
    j["pathologies"] = std::move(paths);
  }
  if (cfg.atlas_dir) j["atlas_dir"] = cfg.atlas_dir->string();
  if (cfg.reviews_dir) j["reviews_dir"] = cfg.reviews_dir->string();
  return j;
}

}  // namespace gridloc
