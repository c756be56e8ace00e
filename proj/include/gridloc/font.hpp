#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "gridloc/error.hpp"
#include "gridloc/image.hpp"

// Fixed bitmap glyphs (A-Z, 0-9) keep label rendering byte-deterministic.
// 5x7 is the default; 3x5 is the fallback for fine grids where three-glyph
// labels must fit a 16-pixel cell.

namespace gridloc {

struct Font {
  int glyph_width;
  int glyph_height;
  // rows for '0'-'9' then 'A'-'Z'; bit (glyph_width-1-x) of row y
  const std::uint8_t* rows;

  const std::uint8_t* glyph(char c) const {
    if (c >= '0' && c <= '9') return rows + (c - '0') * glyph_height;
    if (c >= 'A' && c <= 'Z') return rows + (10 + c - 'A') * glyph_height;
    return nullptr;
  }
};

namespace detail {

inline constexpr std::uint8_t kFont5x7[36 * 7] = {
    // 0-9
    0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110,
    0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110,
    0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111,
    0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110,
    0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010,
    0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110,
    0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110,
    0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000,
    0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110,
    0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100,
    // A-Z
    0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001,
    0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110,
    0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110,
    0b11100, 0b10010, 0b10001, 0b10001, 0b10001, 0b10010, 0b11100,
    0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111,
    0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000,
    0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111,
    0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001,
    0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110,
    0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100,
    0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001,
    0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111,
    0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001,
    0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001,
    0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110,
    0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000,
    0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101,
    0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001,
    0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110,
    0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100,
    0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110,
    0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100,
    0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010,
    0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001,
    0b10001, 0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100,
    0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111,
};

inline constexpr std::uint8_t kFont3x5[36 * 5] = {
    // 0-9
    0b111, 0b101, 0b101, 0b101, 0b111,
    0b010, 0b110, 0b010, 0b010, 0b111,
    0b111, 0b001, 0b111, 0b100, 0b111,
    0b111, 0b001, 0b111, 0b001, 0b111,
    0b101, 0b101, 0b111, 0b001, 0b001,
    0b111, 0b100, 0b111, 0b001, 0b111,
    0b111, 0b100, 0b111, 0b101, 0b111,
    0b111, 0b001, 0b001, 0b010, 0b010,
    0b111, 0b101, 0b111, 0b101, 0b111,
    0b111, 0b101, 0b111, 0b001, 0b111,
    // A-Z
    0b010, 0b101, 0b111, 0b101, 0b101,
    0b110, 0b101, 0b110, 0b101, 0b110,
    0b111, 0b100, 0b100, 0b100, 0b111,
    0b110, 0b101, 0b101, 0b101, 0b110,
    0b111, 0b100, 0b111, 0b100, 0b111,
    0b111, 0b100, 0b111, 0b100, 0b100,
    0b111, 0b100, 0b101, 0b101, 0b111,
    0b101, 0b101, 0b111, 0b101, 0b101,
    0b111, 0b010, 0b010, 0b010, 0b111,
    0b001, 0b001, 0b001, 0b101, 0b111,
    0b101, 0b110, 0b100, 0b110, 0b101,
    0b100, 0b100, 0b100, 0b100, 0b111,
    0b101, 0b111, 0b111, 0b101, 0b101,
    0b110, 0b101, 0b101, 0b101, 0b101,
    0b111, 0b101, 0b101, 0b101, 0b111,
    0b111, 0b101, 0b111, 0b100, 0b100,
    0b111, 0b101, 0b101, 0b111, 0b001,
    0b111, 0b101, 0b110, 0b101, 0b101,
    0b111, 0b100, 0b111, 0b001, 0b111,
    0b111, 0b010, 0b010, 0b010, 0b010,
    0b101, 0b101, 0b101, 0b101, 0b111,
    0b101, 0b101, 0b101, 0b101, 0b010,
    0b101, 0b101, 0b111, 0b111, 0b101,
    0b101, 0b101, 0b010, 0b101, 0b101,
    0b101, 0b101, 0b010, 0b010, 0b010,
    0b111, 0b001, 0b010, 0b100, 0b111,
};

}  // namespace detail

inline const Font& font_5x7() {
  static const Font f{5, 7, detail::kFont5x7};
  return f;
}

inline const Font& font_3x5() {
  static const Font f{3, 5, detail::kFont3x5};
  return f;
}

/// Rendered width of a label: glyphs plus one blank column between them.
inline int text_width(const Font& font, std::string_view text) {
  if (text.empty()) return 0;
  return static_cast<int>(text.size()) * (font.glyph_width + 1) - 1;
}

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// Draws uppercase text into an RGB image; out-of-bounds pixels are clipped.
inline void draw_text(Image8& rgb, int x, int y, std::string_view text,
                      Rgb color, const Font& font) {
  if (rgb.channels != 3) throw Error("draw_text expects an RGB image");
  int pen_x = x;
  for (char c : text) {
    const std::uint8_t* glyph = font.glyph(c);
    if (glyph == nullptr) throw Error(std::string("no glyph for '") + c + "'");
    for (int gy = 0; gy < font.glyph_height; ++gy) {
      const int py = y + gy;
      if (py < 0 || py >= rgb.height) continue;
      for (int gx = 0; gx < font.glyph_width; ++gx) {
        if (!(glyph[gy] >> (font.glyph_width - 1 - gx) & 1)) continue;
        const int px = pen_x + gx;
        if (px < 0 || px >= rgb.width) continue;
        rgb.at(px, py, 0) = color.r;
        rgb.at(px, py, 1) = color.g;
        rgb.at(px, py, 2) = color.b;
      }
    }
    pen_x += font.glyph_width + 1;
  }
}

}  // namespace gridloc
