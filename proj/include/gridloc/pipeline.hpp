#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridloc/canvas.hpp"
#include "gridloc/config.hpp"
#include "gridloc/corpus.hpp"
#include "gridloc/digest.hpp"
#include "gridloc/error.hpp"
#include "gridloc/http_backend.hpp"
#include "gridloc/querier.hpp"
#include "gridloc/report.hpp"
#include "gridloc/scorer.hpp"
#include "gridloc/stats.hpp"
#include "gridloc/version.hpp"

// Staged pipeline: prepare (render gridded images), run (query backends into
// the cache journal), score (judge + categorize, offline), report (tables,
// heatmaps, worksheets). simulate chains all four and is the self-contained
// entry point for simulated-only configs. Given one config, one cache, and
// one seed, the report directory is byte-identical across runs.

namespace gridloc {

struct ScoreLine {
  LocalizationTask task;
  std::string backend_id;
  QueryStatus status = QueryStatus::ok;
  std::optional<GridCell> predicted;
  std::string predicted_label;
  bool ambiguous = false;
  Verdict verdict = Verdict::miss;
  double cell_fraction = 0.0;
  bool fallback_active = false;
  ErrorCategory category = ErrorCategory::needs_review;
};

inline constexpr const char* kScoreSchema = "gridloc.score.v1";

inline nlohmann::json to_json(const ScoreLine& s) {
  nlohmann::json j{
      {"schema", kScoreSchema},
      {"backend", s.backend_id},
      {"image_id", s.task.image_id},
      {"pathology", slug(s.task.pathology)},
      {"view", view_string(s.task.view)},
      {"grid",
       {{"rows", s.task.grid.rows},
        {"cols", s.task.grid.cols},
        {"canvas_side", s.task.grid.canvas_side}}},
      {"status", s.status == QueryStatus::ok ? "ok" : "transport_error"},
      {"verdict", verdict_string(s.verdict)},
      {"cell_fraction", s.cell_fraction},
      {"fallback_active", s.fallback_active},
      {"category", category_string(s.category)},
      {"ambiguous", s.ambiguous},
  };
  if (s.predicted) {
    j["predicted"] = s.predicted_label;
    j["row"] = s.predicted->row;
    j["col"] = s.predicted->col;
  } else {
    j["predicted"] = nullptr;
  }
  return j;
}

inline ScoreLine score_line_from_json(const nlohmann::json& j) {
  ScoreLine s;
  s.backend_id = j.at("backend").get<std::string>();
  s.task.image_id = j.at("image_id").get<std::string>();
  const auto p = parse_pathology(j.at("pathology").get<std::string>());
  if (!p) throw Error("score line has unknown pathology");
  s.task.pathology = *p;
  s.task.view = parse_view(j.at("view").get<std::string>());
  s.task.grid.rows = j.at("grid").at("rows").get<int>();
  s.task.grid.cols = j.at("grid").at("cols").get<int>();
  s.task.grid.canvas_side = j.at("grid").at("canvas_side").get<int>();
  s.status = j.at("status").get<std::string>() == "ok"
                 ? QueryStatus::ok
                 : QueryStatus::transport_error;
  if (!j.at("predicted").is_null()) {
    s.predicted = GridCell{j.at("row").get<int>(), j.at("col").get<int>()};
    s.predicted_label = j.at("predicted").get<std::string>();
  }
  s.ambiguous = j.at("ambiguous").get<bool>();
  const std::string verdict = j.at("verdict").get<std::string>();
  if (verdict == "full_hit") s.verdict = Verdict::full_hit;
  else if (verdict == "fallback_hit") s.verdict = Verdict::fallback_hit;
  else if (verdict == "unparseable") s.verdict = Verdict::unparseable;
  else s.verdict = Verdict::miss;
  s.cell_fraction = j.at("cell_fraction").get<double>();
  s.fallback_active = j.at("fallback_active").get<bool>();
  const auto cat = parse_category(j.at("category").get<std::string>());
  if (!cat) throw Error("score line has unknown category");
  s.category = *cat;
  return s;
}

class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const RunConfig& config() const { return cfg_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

  // ---- paths -------------------------------------------------------------

  std::filesystem::path prepared_png(const GridSpec& grid,
                                     const std::string& image_id) const {
    return cfg_.output_dir / "prepared" / grid.name() / (image_id + ".png");
  }
  std::filesystem::path cache_path(const BackendConfig& backend,
                                   const GridSpec& grid) const {
    return cfg_.output_dir / "cache" / backend.id / (grid.name() + ".jsonl");
  }
  std::filesystem::path scores_path(const BackendConfig& backend,
                                    const GridSpec& grid) const {
    return cfg_.output_dir / "scores" / backend.id / (grid.name() + ".jsonl");
  }
  std::filesystem::path summary_path() const {
    return cfg_.output_dir / "scores" / "summary.json";
  }
  std::filesystem::path report_dir() const { return cfg_.output_dir / "report"; }

  // ---- corpus access -----------------------------------------------------

  const AnnotationSet& corpus() {
    if (!corpus_) {
      corpus_ = load_manifest(cfg_.manifest, cfg_.images_root);
      for (const auto& w : corpus_->warnings) log("corpus: " + w);
    }
    return *corpus_;
  }

  /// Tasks whose canonical mask is nonempty. Tasks erased by the central
  /// crop are excluded everywhere (run and score) with a diagnostic.
  std::vector<LocalizationTask> usable_tasks(const GridSpec& grid) {
    const auto all = select_tasks(
        corpus(), cfg_.split, cfg_.view_filter,
        cfg_.pathology_filter ? &*cfg_.pathology_filter : nullptr, grid);
    std::vector<LocalizationTask> usable;
    for (const auto& task : all) {
      if (canonical_mask(task.image_id, task.pathology, grid.canvas_side)) {
        usable.push_back(task);
      }
    }
    return usable;
  }

  const Image8& canonical_image(const std::string& image_id, int side) {
    const std::string key = image_id + "@" + std::to_string(side);
    const auto it = canonical_images_.find(key);
    if (it != canonical_images_.end()) return it->second;
    const auto* rec = corpus().find_record(image_id);
    if (rec == nullptr) throw Error("unknown image id: " + image_id);
    return canonical_images_
        .emplace(key, preprocess(read_png(rec->image_path), side))
        .first->second;
  }

  /// Canonical-frame mask; nullptr when the crop removed all foreground.
  const BinaryMask* canonical_mask(const std::string& image_id, Pathology p,
                                   int side) {
    const std::string key =
        image_id + "|" + slug(p) + "@" + std::to_string(side);
    const auto it = canonical_masks_.find(key);
    if (it != canonical_masks_.end()) {
      return it->second ? &*it->second : nullptr;
    }
    const auto* native = corpus().find_mask(image_id, p);
    if (native == nullptr) throw Error("no mask for " + image_id + "/" + slug(p));
    BinaryMask canonical = transform_mask(*native, side);
    if (canonical.empty_mask()) {
      diagnostics_.push_back("task skipped: mask for " + image_id + "/" +
                             slug(p) + " is empty after central crop");
      log(diagnostics_.back());
      canonical_masks_.emplace(key, std::nullopt);
      return nullptr;
    }
    return &*canonical_masks_.emplace(key, std::move(canonical)).first->second;
  }

  const OverlapGrid& overlap_for(const LocalizationTask& task) {
    const std::string key = task.key();
    const auto it = overlaps_.find(key);
    if (it != overlaps_.end()) return it->second;
    const auto* mask =
        canonical_mask(task.image_id, task.pathology, task.grid.canvas_side);
    if (mask == nullptr) throw Error("overlap requested for an empty mask: " + key);
    return overlaps_
        .emplace(key, overlap_fractions(*mask, task.grid, cfg_.scoring.threshold))
        .first->second;
  }

  // ---- stages ------------------------------------------------------------

  /// Renders one grid overlay per (image, grid spec). Pathology copies share
  /// the rendered bytes, so tasks reference, not duplicate, these files.
  /// Files are rewritten only when their content would change.
  void prepare() {
    for (const auto& grid : cfg_.grids) {
      std::set<std::string> image_ids;
      for (const auto& task : usable_tasks(grid)) image_ids.insert(task.image_id);
      if (!image_ids.empty()) {
        std::filesystem::create_directories(cfg_.output_dir / "prepared" /
                                            grid.name());
      }
      for (const auto& id : image_ids) {
        const std::string bytes =
            render_grid(canonical_image(id, grid.canvas_side), grid);
        const auto path = prepared_png(grid, id);
        if (std::filesystem::exists(path) && read_file_bytes(path) == bytes) {
          continue;
        }
        write_file_bytes(path, bytes);
      }
    }
  }

  /// Queries every backend lane over every grid. A backend whose
  /// authentication fails aborts only its own lane; the error is returned.
  std::vector<std::string> run() {
    write_run_manifest();
    std::vector<std::string> lane_errors;
    for (const auto& backend : cfg_.backends) {
      try {
        for (const auto& grid : cfg_.grids) run_lane(backend, grid);
      } catch (const AuthError& e) {
        lane_errors.push_back("backend '" + backend.id + "': " + e.what());
        log(lane_errors.back());
      }
    }
    return lane_errors;
  }

  /// Judges cached responses against the ground truth. Never touches the
  /// network; reruns are deterministic given the cache.
  void score() {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& backend : cfg_.backends) {
      for (const auto& grid : cfg_.grids) {
        score_lane(backend, grid, entries);
      }
    }
    nlohmann::json summary{{"schema", "gridloc.score_summary.v1"},
                           {"entries", std::move(entries)},
                           {"diagnostics", diagnostics_}};
    std::filesystem::create_directories(cfg_.output_dir / "scores");
    detail::write_json_file(summary_path(), summary);
  }

  void report();

  /// End-to-end offline run; refuses configs with remote backends.
  std::vector<std::string> simulate() {
    for (const auto& b : cfg_.backends) {
      if (b.kind != BackendKind::simulated) {
        throw Error("simulate requires simulated backends only; '" + b.id +
                    "' is not");
      }
    }
    prepare();
    auto lane_errors = run();
    score();
    report();
    return lane_errors;
  }

 private:
  void log(const std::string& msg) const { std::cerr << "[gridloc] " << msg << "\n"; }

  void write_run_manifest() {
    std::filesystem::create_directories(cfg_.output_dir);
    const nlohmann::json manifest{
        {"schema", "gridloc.run_manifest.v1"},
        {"tool_version", kVersion},
        {"created_at", timestamp_utc()},
        {"corpus_manifest_sha256", sha256_hex(read_file_bytes(cfg_.manifest))},
        {"prompt_template_sha256", prompt_template_digest()},
        {"config", run_config_to_json(cfg_)},
    };
    detail::write_json_file(cfg_.output_dir / "run_manifest.json", manifest);
  }

  void run_lane(const BackendConfig& backend, const GridSpec& grid) {
    const auto tasks = usable_tasks(grid);
    QueryEnv env;
    env.seed = cfg_.seed;
    env.log = [this](const std::string& m) { log(m); };
    std::map<std::string, std::string> render_cache;
    env.render_png = [this, &grid, &render_cache](const LocalizationTask& task) {
      auto it = render_cache.find(task.image_id);
      if (it != render_cache.end()) return it->second;
      const auto path = prepared_png(grid, task.image_id);
      std::string bytes =
          std::filesystem::exists(path)
              ? read_file_bytes(path)
              : render_grid(canonical_image(task.image_id, grid.canvas_side), grid);
      return render_cache.emplace(task.image_id, std::move(bytes)).first->second;
    };
    if (backend.kind == BackendKind::simulated) {
      env.overlap_grid = [this](const LocalizationTask& task) {
        return &overlap_for(task);
      };
    }
    const auto client = make_backend(backend);
    env.backend_override = client.get();
    run_queries(tasks, backend, cache_path(backend, grid), env);
  }

  void score_lane(const BackendConfig& backend, const GridSpec& grid,
                  nlohmann::json& entries);

  RunConfig cfg_;
  std::optional<AnnotationSet> corpus_;
  std::map<std::string, Image8> canonical_images_;
  std::map<std::string, std::optional<BinaryMask>> canonical_masks_;
  std::map<std::string, OverlapGrid> overlaps_;
  std::vector<std::string> diagnostics_;
};

// ---------------------------------------------------------------------------
// score implementation

inline void Pipeline::score_lane(const BackendConfig& backend,
                                 const GridSpec& grid,
                                 nlohmann::json& entries) {
  // join records to tasks by task identity, later journal lines winning
  std::map<std::string, QueryRecord> by_task;
  {
    std::ifstream in(cache_path(backend, grid));
    std::string line;
    while (in && std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        QueryRecord rec = query_record_from_json(nlohmann::json::parse(line));
        by_task.insert_or_assign(rec.task.key(), std::move(rec));
      } catch (...) {
        continue;
      }
    }
  }

  std::optional<PlausibilityAtlas> atlas;
  if (cfg_.atlas_dir) atlas = load_atlas(*cfg_.atlas_dir, grid.canvas_side);

  const auto tasks = usable_tasks(grid);
  std::vector<ScoreLine> lines;
  std::size_t missing = 0;
  for (const auto& task : tasks) {
    const auto it = by_task.find(task.key());
    if (it == by_task.end()) {
      ++missing;
      continue;
    }
    const QueryRecord& rec = it->second;
    const OverlapGrid& overlap = overlap_for(task);
    const HitOutcome outcome = judge(rec.parse.cell, overlap, cfg_.scoring);

    ScoreLine s;
    s.task = task;
    s.backend_id = backend.id;
    s.status = rec.status;
    s.predicted = rec.parse.cell;
    s.predicted_label = rec.parse.label;
    s.ambiguous = rec.parse.ambiguous;
    s.verdict = outcome.verdict;
    s.cell_fraction = outcome.cell_fraction;
    s.fallback_active = outcome.fallback_active;
    s.category = categorize(outcome, rec.parse.cell,
                            atlas ? &*atlas : nullptr, task.pathology,
                            task.view.kind, grid, cfg_.scoring.threshold);
    lines.push_back(std::move(s));
  }
  if (missing > 0) {
    diagnostics_.push_back(backend.id + "/" + grid.name() + ": " +
                           std::to_string(missing) +
                           " task(s) have no cached response; run cmd_run");
    log(diagnostics_.back());
  }

  const auto path = scores_path(backend, grid);
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write scores: " + path.string());
  for (const auto& s : lines) out << to_json(s).dump() << '\n';

  // per-pathology summary
  std::map<Pathology, std::vector<const ScoreLine*>> by_pathology;
  for (const auto& s : lines) by_pathology[s.task.pathology].push_back(&s);
  for (const auto& [pathology, rows] : by_pathology) {
    std::vector<HitOutcome> outcomes;
    std::vector<std::uint8_t> bits_primary;
    std::vector<OverlapGrid> grids;
    std::size_t unparseable = 0;
    for (const ScoreLine* s : rows) {
      outcomes.push_back({s->verdict, s->cell_fraction, s->fallback_active});
      if (s->verdict == Verdict::unparseable) ++unparseable;
      grids.push_back(overlap_for(s->task));
    }
    const bool exclude_primary = cfg_.scoring.unparseable_policy ==
                                 ScoringConfig::UnparseablePolicy::exclude;
    for (const auto& o : outcomes) {
      if (o.verdict == Verdict::unparseable && exclude_primary) continue;
      bits_primary.push_back(o.hit() ? 1 : 0);
    }

    ScoringConfig miss_cfg = cfg_.scoring;
    miss_cfg.unparseable_policy = ScoringConfig::UnparseablePolicy::count_as_miss;
    ScoringConfig excl_cfg = cfg_.scoring;
    excl_cfg.unparseable_policy = ScoringConfig::UnparseablePolicy::exclude;

    const double rate_miss = hit_rate(outcomes, miss_cfg);
    const bool all_unparseable = unparseable == outcomes.size();
    const double rate_excl =
        all_unparseable ? 0.0 : hit_rate(outcomes, excl_cfg);

    StatsConfig stats{cfg_.bootstrap_replicates,
                      derive_seed(cfg_.seed, fnv1a64("bootstrap|" + backend.id +
                                                     "|" + grid.name() + "|" +
                                                     slug(pathology)))};
    const double boot =
        bits_primary.empty() ? 0.0 : bootstrap_std(bits_primary, stats);
    const double baseline = random_baseline(grids, cfg_.scoring);

    entries.push_back(
        {{"backend", backend.id},
         {"grid", grid.name()},
         {"pathology", slug(pathology)},
         {"n", bits_primary.size()},
         {"n_total", rows.size()},
         {"n_unparseable", unparseable},
         {"rate", exclude_primary ? rate_excl : rate_miss},
         {"rate_unparseable_as_miss", rate_miss},
         {"rate_unparseable_excluded", rate_excl},
         {"bootstrap_std", boot},
         {"random_baseline", baseline}});
  }
}

// ---------------------------------------------------------------------------
// report implementation

inline void Pipeline::report() {
  namespace fs = std::filesystem;
  if (!fs::exists(summary_path())) {
    throw Error("missing score summary; run cmd_score first");
  }
  nlohmann::json summary;
  {
    std::ifstream in(summary_path());
    summary = nlohmann::json::parse(in);
  }

  const fs::path out_dir = report_dir();
  fs::create_directories(out_dir / "tables");

  // ---- hit-rate tables
  EvalReport eval;
  std::map<std::pair<std::string, std::string>, std::map<Pathology, double>>
      rates_by_lane;        // (backend, grid) -> pathology -> rate
  std::map<std::pair<std::string, std::string>, std::map<Pathology, double>>
      baselines_by_lane;
  for (const auto& e : summary.at("entries")) {
    RateRow row;
    row.backend_id = e.at("backend").get<std::string>();
    row.grid_name = e.at("grid").get<std::string>();
    row.pathology = *parse_pathology(e.at("pathology").get<std::string>());
    row.summary.n = e.at("n").get<std::size_t>();
    row.summary.rate = e.at("rate").get<double>();
    row.summary.bootstrap_std = e.at("bootstrap_std").get<double>();
    row.summary.random_baseline = e.at("random_baseline").get<double>();
    row.n_total = e.at("n_total").get<std::size_t>();
    row.n_unparseable = e.at("n_unparseable").get<std::size_t>();
    row.rate_unparseable_excluded = e.at("rate_unparseable_excluded").get<double>();
    rates_by_lane[{row.backend_id, row.grid_name}][row.pathology] = row.summary.rate;
    baselines_by_lane[{row.backend_id, row.grid_name}][row.pathology] =
        row.summary.random_baseline;
    eval.rows.push_back(std::move(row));
  }
  for (const auto& [lane, rates] : rates_by_lane) {
    eval.macros.push_back({lane.first, lane.second, macro_average(rates),
                           macro_average(baselines_by_lane[lane])});
  }

  // ---- score lines per lane
  struct LaneData {
    const BackendConfig* backend;
    const GridSpec* grid;
    std::vector<ScoreLine> lines;
  };
  std::vector<LaneData> lanes;
  for (const auto& backend : cfg_.backends) {
    for (const auto& grid : cfg_.grids) {
      LaneData lane{&backend, &grid, {}};
      std::ifstream in(scores_path(backend, grid));
      std::string line;
      while (in && std::getline(in, line)) {
        if (line.empty()) continue;
        lane.lines.push_back(score_line_from_json(nlohmann::json::parse(line)));
      }
      lanes.push_back(std::move(lane));
    }
  }

  // ---- error breakdown + review worksheets
  fs::create_directories(out_dir / "worksheets");
  std::vector<ErrorBreakdownRow> error_rows;
  for (const auto& lane : lanes) {
    std::map<Pathology, std::vector<const ScoreLine*>> frontal;
    for (const auto& s : lane.lines) {
      if (!s.task.view.frontal() || !s.predicted) continue;
      frontal[s.task.pathology].push_back(&s);
    }
    for (const auto& [pathology, rows] : frontal) {
      ErrorBreakdownRow row;
      row.backend_id = lane.backend->id;
      row.grid_name = lane.grid->name();
      row.pathology = pathology;
      row.n_frontal = rows.size();
      std::vector<const ScoreLine*> unresolved;
      for (const ScoreLine* s : rows) {
        switch (s->category) {
          case ErrorCategory::full_hit: ++row.full_hits; break;
          case ErrorCategory::partial_hit: ++row.partial_hits; break;
          case ErrorCategory::position_error: row.position_errors += 1.0; break;
          case ErrorCategory::anatomy_error: row.anatomy_errors += 1.0; break;
          case ErrorCategory::needs_review:
            ++row.needs_review;
            unresolved.push_back(s);
            break;
        }
        if (s->verdict == Verdict::fallback_hit) ++row.fallback_hits;
      }
      row.method = row.needs_review > 0 ? "unresolved"
                   : (row.position_errors + row.anatomy_errors > 0.0) ? "atlas"
                                                                      : "direct";

      const std::string sheet_name = lane.backend->id + "__" +
                                     lane.grid->name() + "__" +
                                     slug(pathology) + ".tsv";
      if (!unresolved.empty()) {
        // review flow: ingest a filled worksheet if provided, else emit one
        bool reviewed = false;
        if (cfg_.reviews_dir) {
          const auto filled = *cfg_.reviews_dir / sheet_name;
          if (fs::exists(filled)) {
            const auto tally = ingest_review(read_worksheet(filled));
            const auto est = extrapolate_proportions(tally, unresolved.size());
            row.position_errors += est.position_errors;
            row.anatomy_errors += est.anatomy_errors;
            row.needs_review = 0;
            row.method = "review";
            reviewed = true;
          }
        }
        if (!reviewed) {
          std::vector<ReviewRow> misses;
          for (const ScoreLine* s : unresolved) {
            misses.push_back({s->task.image_id, slug(pathology),
                              s->task.view.word(), s->predicted_label,
                              fs::relative(prepared_png(*lane.grid, s->task.image_id),
                                           cfg_.output_dir)
                                  .string(),
                              ""});
          }
          const auto ws = sample_for_review(
              std::move(misses), cfg_.review_cap,
              derive_seed(cfg_.seed, fnv1a64("review|" + lane.backend->id + "|" +
                                             lane.grid->name() + "|" +
                                             slug(pathology))));
          write_worksheet(out_dir / "worksheets" / sheet_name, ws);
        }
      }
      error_rows.push_back(std::move(row));
    }
  }

  // ---- grid-size sensitivity (first two grids, when both were run)
  std::vector<SensitivityRow> sensitivity;
  if (cfg_.grids.size() >= 2) {
    const std::string ga = cfg_.grids[0].name();
    const std::string gb = cfg_.grids[1].name();
    for (const auto& backend : cfg_.backends) {
      const auto a = rates_by_lane.find({backend.id, ga});
      const auto b = rates_by_lane.find({backend.id, gb});
      if (a == rates_by_lane.end() || b == rates_by_lane.end()) continue;
      for (const auto& [pathology, rate_a] : a->second) {
        const auto rb = b->second.find(pathology);
        if (rb == b->second.end()) continue;
        sensitivity.push_back({backend.id, pathology, ga, gb, rate_a, rb->second});
      }
    }
  }

  emit_tables(out_dir / "tables", eval, error_rows, sensitivity);

  // ---- heatmaps over the average frontal image
  for (const auto& grid : cfg_.grids) {
    const bool primary = grid == cfg_.grids.front();
    const auto heat_dir = [&](const std::string& name) {
      return primary ? out_dir / "heatmaps" / name
                     : out_dir / "heatmaps" / name / grid.name();
    };
    std::vector<Image8> frontal_images;
    std::set<std::string> seen;
    std::map<Pathology, std::vector<OverlapGrid>> gt_grids;
    for (const auto& task : usable_tasks(grid)) {
      if (cfg_.heatmap.frontal_only && !task.view.frontal()) continue;
      gt_grids[task.pathology].push_back(overlap_for(task));
      if (seen.insert(task.image_id).second) {
        frontal_images.push_back(canonical_image(task.image_id, grid.canvas_side));
      }
    }
    if (frontal_images.empty()) {
      log("no " + std::string(cfg_.heatmap.frontal_only ? "frontal " : "") +
          "images for " + grid.name() + " heatmaps; skipped");
      continue;
    }
    const Image8 background = average_image(frontal_images);
    HeatmapStyle style;
    style.max_alpha = cfg_.heatmap.max_alpha;

    for (const auto& [pathology, grids] : gt_grids) {
      const auto gt = ground_truth_heatmap(grids, cfg_.scoring,
                                           cfg_.heatmap.ground_truth_mode);
      const auto dir = heat_dir("ground_truth");
      fs::create_directories(dir);
      write_file_bytes(dir / (std::string(slug(pathology)) + ".png"),
                       render_heatmap_overlay(gt, background, style));
    }

    for (const auto& lane : lanes) {
      if (*lane.grid != grid) continue;
      std::map<Pathology, std::vector<QueryRecord>> by_pathology;
      for (const auto& s : lane.lines) {
        QueryRecord rec;
        rec.task = s.task;
        rec.parse.cell = s.predicted;
        rec.parse.label = s.predicted_label;
        if (!s.predicted) rec.parse.failure = ParseFailure::no_coordinate;
        by_pathology[s.task.pathology].push_back(std::move(rec));
      }
      for (const auto& [pathology, records] : by_pathology) {
        const auto hm =
            prediction_heatmap(records, grid, cfg_.heatmap.frontal_only);
        if (hm.grid.total() == 0) continue;
        const auto dir = heat_dir(lane.backend->id);
        fs::create_directories(dir);
        write_file_bytes(dir / (std::string(slug(pathology)) + ".png"),
                         render_heatmap_overlay(hm.grid, background, style));
      }
    }
  }
}

}  // namespace gridloc
