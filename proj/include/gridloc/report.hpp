#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridloc/canvas.hpp"
#include "gridloc/corpus.hpp"
#include "gridloc/error.hpp"
#include "gridloc/querier.hpp"
#include "gridloc/scorer.hpp"
#include "gridloc/stats.hpp"

namespace gridloc {

// ---------------------------------------------------------------------------
// Heatmap accumulation

struct CellCountGrid {
  GridSpec spec;
  std::vector<std::uint64_t> counts;  // rows*cols, row-major

  explicit CellCountGrid(const GridSpec& s = {}) : spec(s) {
    counts.assign(static_cast<std::size_t>(spec.rows) * spec.cols, 0);
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  std::uint64_t at(GridCell c) const {
    return counts[static_cast<std::size_t>(c.row) * spec.cols + c.col];
  }
  void add(GridCell c, std::uint64_t n = 1) {
    counts[static_cast<std::size_t>(c.row) * spec.cols + c.col] += n;
  }
  /// counts / sum(counts); all zeros when the grid is empty.
  std::vector<double> normalized() const {
    std::vector<double> out(counts.size(), 0.0);
    const std::uint64_t t = total();
    if (t == 0) return out;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      out[i] = static_cast<double>(counts[i]) / static_cast<double>(t);
    }
    return out;
  }
};

struct PredictionHeatmap {
  CellCountGrid grid;
  std::size_t unparseable = 0;
  std::size_t skipped_lateral = 0;
};

/// Tallies predicted cells over records that share one grid spec (and, by
/// the caller's contract, one pathology). Unparseable records are skipped
/// and counted separately.
inline PredictionHeatmap prediction_heatmap(std::span<const QueryRecord> records,
                                            const GridSpec& spec,
                                            bool frontal_only = true) {
  PredictionHeatmap hm{CellCountGrid(spec)};
  for (const auto& rec : records) {
    if (rec.task.grid != spec) throw Error("prediction_heatmap: mixed grid specs");
    if (frontal_only && !rec.task.view.frontal()) {
      ++hm.skipped_lateral;
      continue;
    }
    if (!rec.parse.ok()) {
      ++hm.unparseable;
      continue;
    }
    hm.grid.add(*rec.parse.cell);
  }
  return hm;
}

enum class GtHeatmapMode { eligible_cells, mask_density };

/// Ground-truth heatmap. eligible_cells (default) increments every
/// hit-eligible cell per image — >= threshold, or any overlap when the
/// fallback applies — so it is commensurable with prediction heatmaps under
/// the same hit rule. mask_density accumulates raw per-cell mask pixel
/// counts instead.
inline CellCountGrid ground_truth_heatmap(
    std::span<const OverlapGrid> grids, const ScoringConfig& cfg,
    GtHeatmapMode mode = GtHeatmapMode::eligible_cells) {
  cfg.validate();
  if (grids.empty()) throw Error("ground_truth_heatmap over no images");
  CellCountGrid out(grids.front().spec);
  for (const auto& grid : grids) {
    if (grid.spec != out.spec) throw Error("ground_truth_heatmap: mixed grid specs");
    for (int r = 0; r < grid.spec.rows; ++r) {
      for (int c = 0; c < grid.spec.cols; ++c) {
        const double f = grid.at({r, c});
        if (mode == GtHeatmapMode::mask_density) {
          out.add({r, c}, static_cast<std::uint64_t>(std::llround(
                              f * cell_rect(grid.spec, {r, c}).area())));
        } else {
          const bool eligible =
              cfg.fallback_enabled && grid.fallback_for(cfg.threshold)
                  ? f > 0.0
                  : f >= cfg.threshold;
          if (eligible) out.add({r, c});
        }
      }
    }
  }
  return out;
}

/// Per-pixel arithmetic mean over a stack of same-sized images, rounded
/// half-up. Accumulates in 64-bit so stacks of any realistic depth are exact.
inline Image8 average_image(std::span<const Image8> images) {
  if (images.empty()) throw Error("average_image over an empty list");
  const Image8& first = images.front();
  std::vector<std::uint64_t> acc(first.pixels.size(), 0);
  for (const auto& img : images) {
    if (img.width != first.width || img.height != first.height ||
        img.channels != first.channels) {
      throw Error("average_image: mixed image shapes");
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += img.pixels[i];
  }
  Image8 out(first.width, first.height, first.channels);
  const std::uint64_t n = images.size();
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>((2 * acc[i] + n) / (2 * n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Heatmap rendering

struct HeatmapStyle {
  double max_alpha = 0.55;  // opacity of the hottest cell
  int legend_width = 28;
};

namespace detail {

// Compact warm ramp (dark violet -> red -> yellow), linear between anchors.
inline Rgb heat_color(double t) {
  static constexpr double anchors[5][3] = {{20, 11, 52},
                                           {110, 24, 110},
                                           {196, 55, 74},
                                           {245, 125, 21},
                                           {250, 240, 120}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int lo = std::min(static_cast<int>(t), 3);
  const double w = t - lo;
  const auto mix = [&](int ch) {
    return static_cast<std::uint8_t>(
        std::lround(anchors[lo][ch] * (1.0 - w) + anchors[lo + 1][ch] * w));
  };
  return {mix(0), mix(1), mix(2)};
}

inline void blend(Image8& img, int x, int y, Rgb color, double alpha) {
  for (int ch = 0; ch < 3; ++ch) {
    const double base = img.at(x, y, ch);
    const double tint = ch == 0 ? color.r : ch == 1 ? color.g : color.b;
    img.at(x, y, ch) = static_cast<std::uint8_t>(
        std::lround(base * (1.0 - alpha) + tint * alpha));
  }
}

}  // namespace detail

/// Tints each cell of the background in proportion to its normalized count
/// and appends a legend strip on the right. Deterministic bytes for
/// identical inputs.
inline std::string render_heatmap_overlay(const CellCountGrid& grid,
                                          const Image8& background,
                                          const HeatmapStyle& style = {}) {
  grid.spec.validate();
  if (background.width != grid.spec.canvas_side ||
      background.height != grid.spec.canvas_side) {
    throw Error("heatmap background does not match the grid canvas");
  }
  const int side = grid.spec.canvas_side;
  const Image8 rgb = to_rgb(background);
  Image8 out(side + style.legend_width, side, 3, 24);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = rgb.at(x, y, c);
    }
  }

  const auto norm = grid.normalized();
  const double peak = *std::max_element(norm.begin(), norm.end());
  if (peak > 0.0) {
    for (int r = 0; r < grid.spec.rows; ++r) {
      for (int c = 0; c < grid.spec.cols; ++c) {
        const double t = norm[static_cast<std::size_t>(r) * grid.spec.cols + c] / peak;
        if (t <= 0.0) continue;
        const auto rect = cell_rect(grid.spec, {r, c});
        const Rgb color = detail::heat_color(t);
        for (int y = rect.row_start; y <= rect.row_end; ++y) {
          for (int x = rect.col_start; x <= rect.col_end; ++x) {
            detail::blend(out, x, y, color, style.max_alpha * t);
          }
        }
      }
    }
  }

  // legend: vertical ramp, hottest at the top
  const int bar_x0 = side + 6;
  const int bar_x1 = side + style.legend_width - 7;
  const int bar_y0 = 8;
  const int bar_y1 = side - 9;
  for (int y = bar_y0; y <= bar_y1; ++y) {
    const double t = 1.0 - static_cast<double>(y - bar_y0) / (bar_y1 - bar_y0);
    const Rgb color = detail::heat_color(t);
    for (int x = bar_x0; x <= bar_x1; ++x) {
      out.at(x, y, 0) = color.r;
      out.at(x, y, 1) = color.g;
      out.at(x, y, 2) = color.b;
    }
  }
  return encode_png(out);
}

// ---------------------------------------------------------------------------
// Tables

/// Aggregate for one (backend, pathology) cell of the report.
struct RateSummary {
  std::size_t n = 0;  // outcomes under the primary unparseable policy
  double rate = 0.0;
  double bootstrap_std = 0.0;
  double random_baseline = 0.0;
};

struct RateRow {
  std::string backend_id;
  std::string grid_name;
  Pathology pathology = Pathology::Atelectasis;
  RateSummary summary;
  std::size_t n_total = 0;        // all scored outcomes
  std::size_t n_unparseable = 0;
  double rate_unparseable_excluded = 0.0;
};

struct MacroRow {
  std::string backend_id;
  std::string grid_name;
  double macro_rate = 0.0;
  double macro_random_baseline = 0.0;
};

/// Published benchmark results this harness is commonly compared against
/// (macro hit rates, percent). Reported values, not produced by this code.
struct ReferenceConstants {
  double human_radiologist = 80.1;
  double cnn_gradcam = 59.9;
  double random_baseline = 11.9;
};

struct EvalReport {
  std::vector<RateRow> rows;
  std::vector<MacroRow> macros;
  ReferenceConstants reference;
};

struct ErrorBreakdownRow {
  std::string backend_id;
  std::string grid_name;
  Pathology pathology = Pathology::Atelectasis;
  std::size_t n_frontal = 0;  // parseable frontal predictions
  std::size_t full_hits = 0;
  std::size_t partial_hits = 0;
  double position_errors = 0.0;  // fractional when review-extrapolated
  double anatomy_errors = 0.0;
  std::size_t needs_review = 0;
  std::size_t fallback_hits = 0;  // bucketed inside full_hits; shown for transparency
  std::string method;  // "atlas" | "review" | "unresolved"

  bool resolved() const { return needs_review == 0; }
};

struct SensitivityRow {
  std::string backend_id;
  Pathology pathology = Pathology::Atelectasis;
  std::string grid_a, grid_b;
  double rate_a = 0.0, rate_b = 0.0;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write: " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

inline void write_json_file(const std::filesystem::path& path,
                            const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace detail

/// Writes the report tables under out_dir/tables: hit rates (with the
/// published reference block), error-category shares, and, when two grid
/// resolutions were evaluated, the paired sensitivity comparison. Every file
/// carries a schema tag; CSV and JSON forms have identical content.
inline void emit_tables(const std::filesystem::path& tables_dir,
                        const EvalReport& report,
                        std::span<const ErrorBreakdownRow> errors,
                        std::span<const SensitivityRow> sensitivity) {
  namespace fs = std::filesystem;
  fs::create_directories(tables_dir);
  using detail::fmt_double;

  {  // hit rates
    std::string csv = "# schema: gridloc.hit_rates.v1\n";
    csv += "backend,grid,pathology,n,rate,bootstrap_std,random_baseline,"
           "n_total,n_unparseable,rate_unparseable_excluded\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
      csv += r.backend_id + "," + r.grid_name + "," + slug(r.pathology) + "," +
             std::to_string(r.summary.n) + "," + fmt_double(r.summary.rate) +
             "," + fmt_double(r.summary.bootstrap_std) + "," +
             fmt_double(r.summary.random_baseline) + "," +
             std::to_string(r.n_total) + "," + std::to_string(r.n_unparseable) +
             "," + fmt_double(r.rate_unparseable_excluded) + "\n";
      rows.push_back({{"backend", r.backend_id},
                      {"grid", r.grid_name},
                      {"pathology", slug(r.pathology)},
                      {"n", r.summary.n},
                      {"rate", r.summary.rate},
                      {"bootstrap_std", r.summary.bootstrap_std},
                      {"random_baseline", r.summary.random_baseline},
                      {"n_total", r.n_total},
                      {"n_unparseable", r.n_unparseable},
                      {"rate_unparseable_excluded", r.rate_unparseable_excluded}});
    }
    for (const auto& m : report.macros) {
      csv += m.backend_id + "," + m.grid_name + ",MACRO,," +
             fmt_double(m.macro_rate) + ",," +
             fmt_double(m.macro_random_baseline) + ",,,\n";
    }
    nlohmann::json macros = nlohmann::json::array();
    for (const auto& m : report.macros) {
      macros.push_back({{"backend", m.backend_id},
                        {"grid", m.grid_name},
                        {"macro_rate", m.macro_rate},
                        {"macro_random_baseline", m.macro_random_baseline}});
    }
    const nlohmann::json reference{
        {"label", "published benchmark macro hit rates (percent); "
                  "reported values, not produced by this run"},
        {"human_radiologist", report.reference.human_radiologist},
        {"cnn_gradcam", report.reference.cnn_gradcam},
        {"random_baseline", report.reference.random_baseline},
    };
    csv += "# reference (published benchmark, percent): human_radiologist=" +
           fmt_double(report.reference.human_radiologist) +
           " cnn_gradcam=" + fmt_double(report.reference.cnn_gradcam) +
           " random_baseline=" + fmt_double(report.reference.random_baseline) +
           "\n";
    detail::write_text_file(tables_dir / "hit_rates.csv", csv);
    detail::write_json_file(tables_dir / "hit_rates.json",
                            nlohmann::json{{"schema", "gridloc.hit_rates.v1"},
                                           {"rows", rows},
                                           {"macros", macros},
                                           {"reference", reference}});
  }

  {  // error categories
    std::string csv = "# schema: gridloc.error_categories.v1\n";
    csv += "backend,grid,pathology,method,n_frontal,full_hits,partial_hits,"
           "position_errors,anatomy_errors,needs_review,fallback_hits,"
           "full_share,partial_share,position_share,anatomy_share\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : errors) {
      const double n = static_cast<double>(e.n_frontal);
      const bool resolved = e.resolved() && e.n_frontal > 0;
      const auto share = [&](double count) { return resolved ? count / n : 0.0; };
      csv += e.backend_id + "," + e.grid_name + "," + slug(e.pathology) + "," +
             e.method + "," + std::to_string(e.n_frontal) + "," +
             std::to_string(e.full_hits) + "," + std::to_string(e.partial_hits) +
             "," + fmt_double(e.position_errors) + "," +
             fmt_double(e.anatomy_errors) + "," + std::to_string(e.needs_review) +
             "," + std::to_string(e.fallback_hits);
      nlohmann::json row{{"backend", e.backend_id},
                         {"grid", e.grid_name},
                         {"pathology", slug(e.pathology)},
                         {"method", e.method},
                         {"n_frontal", e.n_frontal},
                         {"full_hits", e.full_hits},
                         {"partial_hits", e.partial_hits},
                         {"position_errors", e.position_errors},
                         {"anatomy_errors", e.anatomy_errors},
                         {"needs_review", e.needs_review},
                         {"fallback_hits", e.fallback_hits}};
      if (resolved) {
        csv += "," + fmt_double(share(static_cast<double>(e.full_hits))) + "," +
               fmt_double(share(static_cast<double>(e.partial_hits))) + "," +
               fmt_double(share(e.position_errors)) + "," +
               fmt_double(share(e.anatomy_errors));
        row["shares"] = {{"full", share(static_cast<double>(e.full_hits))},
                         {"partial", share(static_cast<double>(e.partial_hits))},
                         {"position", share(e.position_errors)},
                         {"anatomy", share(e.anatomy_errors)}};
      } else {
        csv += ",,,,";
        row["shares"] = nullptr;
      }
      csv += "\n";
      rows.push_back(std::move(row));
    }
    detail::write_text_file(tables_dir / "error_categories.csv", csv);
    detail::write_json_file(
        tables_dir / "error_categories.json",
        nlohmann::json{{"schema", "gridloc.error_categories.v1"}, {"rows", rows}});
  }

  if (!sensitivity.empty()) {  // paired grid-size comparison
    std::string csv = "# schema: gridloc.grid_sensitivity.v1\n";
    csv += "backend,pathology,grid_a,rate_a,grid_b,rate_b\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : sensitivity) {
      csv += s.backend_id + "," + slug(s.pathology) + "," + s.grid_a + "," +
             fmt_double(s.rate_a) + "," + s.grid_b + "," + fmt_double(s.rate_b) +
             "\n";
      rows.push_back({{"backend", s.backend_id},
                      {"pathology", slug(s.pathology)},
                      {"grid_a", s.grid_a},
                      {"rate_a", s.rate_a},
                      {"grid_b", s.grid_b},
                      {"rate_b", s.rate_b}});
    }
    detail::write_text_file(tables_dir / "grid_sensitivity.csv", csv);
    detail::write_json_file(
        tables_dir / "grid_sensitivity.json",
        nlohmann::json{{"schema", "gridloc.grid_sensitivity.v1"}, {"rows", rows}});
  }
}

}  // namespace gridloc
