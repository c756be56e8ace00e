#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gridloc/corpus.hpp"
#include "gridloc/error.hpp"
#include "gridloc/grid.hpp"
#include "gridloc/rng.hpp"

namespace gridloc {

// ---------------------------------------------------------------------------
// Overlap geometry

/// Per-cell fraction of the cell's area covered by ground-truth mask pixels,
/// in the canonical frame.
struct OverlapGrid {
  GridSpec spec;
  std::vector<double> fraction;   // rows*cols, row-major
  std::uint64_t mask_pixels = 0;  // canonical foreground total
  double max_fraction = 0.0;
  double build_threshold = 0.5;
  bool fallback_active = false;

  double at(GridCell c) const {
    return fraction[static_cast<std::size_t>(c.row) * spec.cols + c.col];
  }

  /// No cell reaches the threshold but the mask is nonempty.
  bool fallback_for(double threshold) const {
    return mask_pixels > 0 && max_fraction < threshold;
  }
};

struct ScoringConfig {
  enum class UnparseablePolicy { count_as_miss, exclude };

  double threshold = 0.5;
  bool fallback_enabled = true;
  UnparseablePolicy unparseable_policy = UnparseablePolicy::count_as_miss;

  void validate() const {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
      throw Error("overlap threshold must be in (0, 1]");
    }
  }
};

/// Exact integer pixel counting per cell rect. The mask must be nonempty:
/// a pathology marked present with no canonical foreground is a data problem
/// the caller must surface, not score.
inline OverlapGrid overlap_fractions(const BinaryMask& mask,
                                     const GridSpec& spec,
                                     double threshold = 0.5) {
  spec.validate();
  if (mask.width != spec.canvas_side || mask.height != spec.canvas_side) {
    throw Error("mask is not in the canonical frame of the grid");
  }
  OverlapGrid grid;
  grid.spec = spec;
  grid.build_threshold = threshold;
  grid.fraction.assign(static_cast<std::size_t>(spec.rows) * spec.cols, 0.0);

  std::vector<std::uint64_t> counts(grid.fraction.size(), 0);
  std::vector<int> row_cell(spec.canvas_side), col_cell(spec.canvas_side);
  for (int r = 0; r < spec.rows; ++r) {
    const auto rect = cell_rect(spec, {r, 0});
    for (int y = rect.row_start; y <= rect.row_end; ++y) row_cell[y] = r;
  }
  for (int c = 0; c < spec.cols; ++c) {
    const auto rect = cell_rect(spec, {0, c});
    for (int x = rect.col_start; x <= rect.col_end; ++x) col_cell[x] = c;
  }
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y)) {
        ++counts[static_cast<std::size_t>(row_cell[y]) * spec.cols + col_cell[x]];
        ++grid.mask_pixels;
      }
    }
  }
  if (grid.mask_pixels == 0) {
    throw Error("empty canonical mask: nothing to localize");
  }
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * spec.cols + c;
      grid.fraction[i] = static_cast<double>(counts[i]) /
                         static_cast<double>(cell_rect(spec, {r, c}).area());
      grid.max_fraction = std::max(grid.max_fraction, grid.fraction[i]);
    }
  }
  grid.fallback_active = grid.fallback_for(threshold);
  return grid;
}

// ---------------------------------------------------------------------------
// Hit judgment

enum class Verdict { full_hit, fallback_hit, miss, unparseable };

inline const char* verdict_string(Verdict v) {
  switch (v) {
    case Verdict::full_hit: return "full_hit";
    case Verdict::fallback_hit: return "fallback_hit";
    case Verdict::miss: return "miss";
    case Verdict::unparseable: return "unparseable";
  }
  throw Error("unknown verdict");
}

struct HitOutcome {
  Verdict verdict = Verdict::miss;
  double cell_fraction = 0.0;
  bool fallback_active = false;

  bool hit() const {
    return verdict == Verdict::full_hit || verdict == Verdict::fallback_hit;
  }
};

/// The hit rule: a prediction is a full hit when its cell's overlap fraction
/// reaches the threshold; when no cell reaches the threshold, any cell
/// containing mask pixels counts (fallback). Absent predictions are recorded
/// as unparseable, never silently dropped.
inline HitOutcome judge(std::optional<GridCell> prediction,
                        const OverlapGrid& grid, const ScoringConfig& cfg) {
  cfg.validate();
  HitOutcome out;
  out.fallback_active = grid.fallback_for(cfg.threshold);
  if (!prediction) {
    out.verdict = Verdict::unparseable;
    return out;
  }
  if (!grid.spec.contains(*prediction)) {
    throw Error("prediction cell out of range for grid");
  }
  out.cell_fraction = grid.at(*prediction);
  if (out.cell_fraction >= cfg.threshold) {
    out.verdict = Verdict::full_hit;
  } else if (cfg.fallback_enabled && out.fallback_active &&
             out.cell_fraction > 0.0) {
    out.verdict = Verdict::fallback_hit;
  } else {
    out.verdict = Verdict::miss;
  }
  return out;
}

/// Expected hit rate of a uniformly random cell choice: per image, the number
/// of hit-eligible cells over the cell count, averaged over images. Eligible
/// means fraction >= threshold, or any overlap at all when the fallback rule
/// is active for that image.
inline double random_baseline(std::span<const OverlapGrid> grids,
                              const ScoringConfig& cfg) {
  cfg.validate();
  if (grids.empty()) throw Error("random_baseline needs at least one image");
  double sum = 0.0;
  for (const auto& grid : grids) {
    std::size_t eligible = 0;
    if (cfg.fallback_enabled && grid.fallback_for(cfg.threshold)) {
      eligible = static_cast<std::size_t>(std::count_if(
          grid.fraction.begin(), grid.fraction.end(),
          [](double f) { return f > 0.0; }));
    } else {
      eligible = static_cast<std::size_t>(std::count_if(
          grid.fraction.begin(), grid.fraction.end(),
          [&](double f) { return f >= cfg.threshold; }));
    }
    sum += static_cast<double>(eligible) / grid.spec.cell_count();
  }
  return sum / static_cast<double>(grids.size());
}

/// Hits over the denominator chosen by the unparseable policy.
inline double hit_rate(std::span<const HitOutcome> outcomes,
                       const ScoringConfig& cfg) {
  std::size_t hits = 0, denom = 0;
  for (const auto& o : outcomes) {
    if (o.verdict == Verdict::unparseable &&
        cfg.unparseable_policy == ScoringConfig::UnparseablePolicy::exclude) {
      continue;
    }
    ++denom;
    if (o.hit()) ++hits;
  }
  if (denom == 0) throw Error("hit_rate over an empty outcome list");
  return static_cast<double>(hits) / static_cast<double>(denom);
}

// ---------------------------------------------------------------------------
// Error taxonomy

enum class ErrorCategory {
  full_hit,
  partial_hit,
  position_error,
  anatomy_error,
  needs_review,
};

inline const char* category_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::full_hit: return "full_hit";
    case ErrorCategory::partial_hit: return "partial_hit";
    case ErrorCategory::position_error: return "position_error";
    case ErrorCategory::anatomy_error: return "anatomy_error";
    case ErrorCategory::needs_review: return "needs_review";
  }
  throw Error("unknown category");
}

inline std::optional<ErrorCategory> parse_category(std::string_view s) {
  const std::string key = detail::fold_name(s);
  if (key == "fullhit") return ErrorCategory::full_hit;
  if (key == "partialhit") return ErrorCategory::partial_hit;
  if (key == "positionerror") return ErrorCategory::position_error;
  if (key == "anatomyerror") return ErrorCategory::anatomy_error;
  if (key == "needsreview") return ErrorCategory::needs_review;
  return std::nullopt;
}

/// User-supplied canonical-frame masks marking where each pathology can
/// plausibly appear on a frontal view. This is review automation data, not
/// shipped medical knowledge; without it, zero-overlap misses fall to human
/// review worksheets.
struct PlausibilityAtlas {
  int canvas_side = 256;
  std::map<Pathology, BinaryMask> regions;

  const BinaryMask* region(Pathology p) const {
    const auto it = regions.find(p);
    return it == regions.end() ? nullptr : &it->second;
  }
};

/// Loads atlas masks from a directory of <PathologySlug>.png files
/// (single-channel, nonzero = plausible). Missing pathologies are simply
/// absent from the atlas.
inline PlausibilityAtlas load_atlas(const std::filesystem::path& dir,
                                    int canvas_side) {
  PlausibilityAtlas atlas;
  atlas.canvas_side = canvas_side;
  for (Pathology p : kAllPathologies) {
    const auto path = dir / (std::string(slug(p)) + ".png");
    if (!std::filesystem::exists(path)) continue;
    const Image8 img = read_png(path);
    if (img.channels != 1 || img.width != canvas_side || img.height != canvas_side) {
      throw Error("atlas mask must be single-channel canonical-frame: " +
                  path.string());
    }
    BinaryMask mask(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      mask.bits[i] = img.pixels[i] != 0 ? 1 : 0;
    }
    atlas.regions.emplace(p, std::move(mask));
  }
  return atlas;
}

namespace detail {
inline bool rect_intersects_mask(const PixelRect& rect, const BinaryMask& mask) {
  for (int y = rect.row_start; y <= rect.row_end; ++y) {
    for (int x = rect.col_start; x <= rect.col_end; ++x) {
      if (mask.at(x, y)) return true;
    }
  }
  return false;
}
}  // namespace detail

/// Assigns the error-taxonomy bucket for one judged prediction. The taxonomy
/// is defined for frontal views only; lateral tasks and anything the atlas
/// cannot resolve come back as needs_review. Fallback hits are bucketed with
/// full hits (flagged separately in outputs).
inline ErrorCategory categorize(const HitOutcome& outcome,
                                std::optional<GridCell> prediction,
                                const PlausibilityAtlas* atlas,
                                Pathology pathology, ViewPosition::Kind view,
                                const GridSpec& spec,
                                double threshold = 0.5) {
  if (view != ViewPosition::Kind::frontal) return ErrorCategory::needs_review;
  if (outcome.verdict == Verdict::unparseable || !prediction) {
    return ErrorCategory::needs_review;
  }
  if (outcome.hit()) return ErrorCategory::full_hit;
  if (outcome.cell_fraction > 0.0 && outcome.cell_fraction < threshold) {
    return ErrorCategory::partial_hit;
  }
  // Complete miss: zero overlap with the ground truth.
  const BinaryMask* region = atlas ? atlas->region(pathology) : nullptr;
  if (region == nullptr) return ErrorCategory::needs_review;
  return detail::rect_intersects_mask(cell_rect(spec, *prediction), *region)
             ? ErrorCategory::position_error
             : ErrorCategory::anatomy_error;
}

// ---------------------------------------------------------------------------
// Human review worksheets

struct ReviewRow {
  std::string image_id;
  std::string pathology;
  std::string view;
  std::string predicted_cell;
  std::string rendered_image;
  std::string category;  // empty until a reviewer fills it in
};

struct ReviewWorksheet {
  std::vector<ReviewRow> rows;
};

/// Caps the review workload: at most `cap` rows, drawn uniformly without
/// replacement with a seeded generator, in stable input order.
inline ReviewWorksheet sample_for_review(std::vector<ReviewRow> misses,
                                         std::size_t cap, std::uint64_t seed) {
  ReviewWorksheet ws;
  if (misses.size() <= cap) {
    ws.rows = std::move(misses);
    return ws;
  }
  Rng rng(derive_seed(seed, fnv1a64("review-sample")));
  std::vector<std::size_t> idx(misses.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  ws.rows.reserve(cap);
  for (std::size_t i : idx) ws.rows.push_back(std::move(misses[i]));
  return ws;
}

inline constexpr const char* kWorksheetSchema = "gridloc.worksheet.v1";

inline void write_worksheet(const std::filesystem::path& path,
                            const ReviewWorksheet& ws) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write worksheet: " + path.string());
  out << "# schema: " << kWorksheetSchema << "\n";
  out << "image_id\tpathology\tview\tpredicted_cell\trendered_image\tcategory\n";
  for (const auto& r : ws.rows) {
    out << r.image_id << '\t' << r.pathology << '\t' << r.view << '\t'
        << r.predicted_cell << '\t' << r.rendered_image << '\t' << r.category
        << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

inline ReviewWorksheet read_worksheet(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open worksheet: " + path.string());
  ReviewWorksheet ws;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {  // column header
      header_seen = true;
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    cols.resize(6);
    ws.rows.push_back({cols[0], cols[1], cols[2], cols[3], cols[4], cols[5]});
  }
  return ws;
}

struct ReviewTally {
  std::size_t position_errors = 0;
  std::size_t anatomy_errors = 0;

  std::size_t reviewed() const { return position_errors + anatomy_errors; }
};

/// Validates a human-filled worksheet: every row must be labeled
/// position_error or anatomy_error (those are the only buckets left for a
/// zero-overlap miss).
inline ReviewTally ingest_review(const ReviewWorksheet& ws) {
  ReviewTally tally;
  for (const auto& row : ws.rows) {
    if (row.category.empty()) {
      throw Error("unlabeled worksheet row: " + row.image_id + "/" + row.pathology);
    }
    const auto cat = parse_category(row.category);
    if (cat == ErrorCategory::position_error) {
      ++tally.position_errors;
    } else if (cat == ErrorCategory::anatomy_error) {
      ++tally.anatomy_errors;
    } else {
      throw Error("worksheet rows must be position_error or anatomy_error, got '" +
                  row.category + "' for " + row.image_id + "/" + row.pathology);
    }
  }
  return tally;
}

struct ExtrapolatedErrors {
  double position_errors = 0.0;
  double anatomy_errors = 0.0;
};

/// Scales reviewed-subset proportions up to the full complete-miss count.
inline ExtrapolatedErrors extrapolate_proportions(const ReviewTally& tally,
                                                  std::size_t population) {
  if (tally.reviewed() == 0) throw Error("cannot extrapolate from an empty review");
  if (population < tally.reviewed()) {
    throw Error("review subset larger than its population");
  }
  const double scale =
      static_cast<double>(population) / static_cast<double>(tally.reviewed());
  return {tally.position_errors * scale, tally.anatomy_errors * scale};
}

}  // namespace gridloc
