#pragma once

#include <string>

#include "gridloc/corpus.hpp"
#include "gridloc/error.hpp"
#include "gridloc/font.hpp"
#include "gridloc/grid.hpp"
#include "gridloc/image.hpp"
#include "gridloc/png_io.hpp"

// The canonical frame: every image is centrally cropped to a square and
// resized to canvas_side x canvas_side. Masks follow the same geometry with
// nearest-neighbor sampling so they stay binary. Grids, heatmaps, and all
// scoring live in this frame.

namespace gridloc {

/// Central crop to min(w, h), then bilinear resample to a square canvas.
inline Image8 preprocess(const Image8& image, int canvas_side) {
  if (image.width < 1 || image.height < 1) throw Error("empty input image");
  if (canvas_side < 1) throw Error("invalid canvas side");
  return resize_bilinear(central_crop(image), canvas_side, canvas_side);
}

/// Same crop as preprocess, then nearest-neighbor to the canvas. Output is
/// binary. The mask must be in the source image's native frame.
inline BinaryMask transform_mask(const BinaryMask& mask, int canvas_side) {
  if (mask.width < 1 || mask.height < 1) throw Error("empty input mask");
  const int side = std::min(mask.width, mask.height);
  const int x0 = (mask.width - side) / 2;
  const int y0 = (mask.height - side) / 2;
  BinaryMask out(canvas_side, canvas_side);
  for (int y = 0; y < canvas_side; ++y) {
    const int sy = y0 + nearest_src_index(y, side, canvas_side);
    for (int x = 0; x < canvas_side; ++x) {
      const int sx = x0 + nearest_src_index(x, side, canvas_side);
      out.bits[static_cast<std::size_t>(y) * canvas_side + x] = mask.at(sx, sy);
    }
  }
  return out;
}

struct GridStyle {
  Rgb line_color{0, 190, 0};
  Rgb label_color{255, 210, 0};
  int label_margin = 2;  // offset of the label from the cell's top-left corner
};

namespace detail {

/// Widest label the grid can produce ("P16"-style: deepest row letters plus
/// widest column number).
inline std::string widest_label(const GridSpec& spec) {
  return row_letters(spec.rows - 1) + std::to_string(spec.cols);
}

/// Picks the largest font whose widest label fits every cell, or null.
inline const Font* pick_label_font(const GridSpec& spec, int margin) {
  int min_w = spec.canvas_side, min_h = spec.canvas_side;
  for (int r = 0; r < spec.rows; ++r) {
    const auto rect = cell_rect(spec, {r, 0});
    min_h = std::min(min_h, rect.height());
  }
  for (int c = 0; c < spec.cols; ++c) {
    const auto rect = cell_rect(spec, {0, c});
    min_w = std::min(min_w, rect.width());
  }
  const std::string widest = widest_label(spec);
  for (const Font* font : {&font_5x7(), &font_3x5()}) {
    if (text_width(*font, widest) + margin <= min_w - 1 &&
        font->glyph_height + margin <= min_h - 1) {
      return font;
    }
  }
  return nullptr;
}

}  // namespace detail

/// Overlays the grid on a canonical image and returns PNG bytes: 1-pixel
/// lines on every cell boundary (outer border included) and each cell's
/// label in its top-left corner. Deterministic for identical inputs.
inline std::string render_grid(const Image8& canonical, const GridSpec& spec,
                               const GridStyle& style = {}) {
  spec.validate();
  if (canonical.width != spec.canvas_side || canonical.height != spec.canvas_side) {
    throw Error("canonical image does not match the grid's canvas side");
  }
  const Font* font = detail::pick_label_font(spec, style.label_margin);
  if (font == nullptr) {
    throw Error("cells of a " + spec.name() + " grid on a " +
                std::to_string(spec.canvas_side) +
                "px canvas are too small to fit their labels");
  }

  Image8 out = to_rgb(canonical);
  const int side = spec.canvas_side;
  const auto hline = [&](int y) {
    for (int x = 0; x < side; ++x) {
      out.at(x, y, 0) = style.line_color.r;
      out.at(x, y, 1) = style.line_color.g;
      out.at(x, y, 2) = style.line_color.b;
    }
  };
  const auto vline = [&](int x) {
    for (int y = 0; y < side; ++y) {
      out.at(x, y, 0) = style.line_color.r;
      out.at(x, y, 1) = style.line_color.g;
      out.at(x, y, 2) = style.line_color.b;
    }
  };
  // Boundary lines: the first row/column of every cell plus the far edge.
  for (int r = 0; r < spec.rows; ++r) hline(cell_rect(spec, {r, 0}).row_start);
  for (int c = 0; c < spec.cols; ++c) vline(cell_rect(spec, {0, c}).col_start);
  hline(side - 1);
  vline(side - 1);

  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      const auto rect = cell_rect(spec, {r, c});
      draw_text(out, rect.col_start + 1 + style.label_margin,
                rect.row_start + 1 + style.label_margin,
                label_of(spec, {r, c}), style.label_color, *font);
    }
  }
  return encode_png(out);
}

}  // namespace gridloc
