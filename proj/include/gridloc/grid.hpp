#pragma once

#include <cctype>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

#include "gridloc/error.hpp"

namespace gridloc {

// Letters index rows top-to-bottom (A..Z, then AA..ZZ), numbers index columns
// left-to-right starting at 1. "C5" = row 2, column 4. The double-letter
// scheme caps rows at 702.
inline constexpr int kMaxLabeledRows = 702;

struct GridCell {
  int row = 0;
  int col = 0;
  auto operator<=>(const GridCell&) const = default;
};

struct GridSpec {
  int rows = 8;
  int cols = 8;
  int canvas_side = 256;

  void validate() const {
    if (rows < 1 || cols < 1) throw Error("grid must have at least one cell");
    if (rows > kMaxLabeledRows) {
      throw Error("grid rows exceed the two-letter label limit (702)");
    }
    if (canvas_side < rows || canvas_side < cols) {
      throw Error("canvas smaller than the grid resolution");
    }
  }

  int cell_count() const { return rows * cols; }
  bool contains(GridCell c) const {
    return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols;
  }
  std::string name() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }
  auto operator<=>(const GridSpec&) const = default;
};

/// Inclusive pixel bounds of one cell on the canonical canvas.
struct PixelRect {
  int row_start = 0, row_end = 0, col_start = 0, col_end = 0;

  int width() const { return col_end - col_start + 1; }
  int height() const { return row_end - row_start + 1; }
  long long area() const { return 1LL * width() * height(); }
  auto operator<=>(const PixelRect&) const = default;
};

// Floor-based boundaries: cells tile the canvas exactly even when the side
// is not divisible by the grid resolution.
inline PixelRect cell_rect(const GridSpec& spec, GridCell cell) {
  spec.validate();
  if (!spec.contains(cell)) throw Error("cell out of range for grid");
  const auto lo = [&](int i, int n) {
    return static_cast<int>(1LL * i * spec.canvas_side / n);
  };
  return PixelRect{lo(cell.row, spec.rows), lo(cell.row + 1, spec.rows) - 1,
                   lo(cell.col, spec.cols), lo(cell.col + 1, spec.cols) - 1};
}

inline std::string row_letters(int row) {
  if (row < 26) return std::string(1, static_cast<char>('A' + row));
  const int r = row - 26;
  return {static_cast<char>('A' + r / 26), static_cast<char>('A' + r % 26)};
}

inline std::string label_of(const GridSpec& spec, GridCell cell) {
  if (!spec.contains(cell)) throw Error("cell out of range for grid");
  return row_letters(cell.row) + std::to_string(cell.col + 1);
}

/// Parses "<letters><digits>" into a cell, ignoring grid bounds.
/// Case-insensitive; at most two letters.
inline std::optional<GridCell> parse_label(std::string_view label) {
  std::size_t i = 0;
  int row = 0;
  int letters = 0;
  while (i < label.size() && std::isalpha(static_cast<unsigned char>(label[i]))) {
    if (++letters > 2) return std::nullopt;
    row = row * 26 + (std::toupper(static_cast<unsigned char>(label[i])) - 'A');
    ++i;
  }
  if (letters == 0 || i == label.size()) return std::nullopt;
  if (letters == 2) row += 26;
  long col = 0;
  std::size_t digits = 0;
  for (; i < label.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(label[i]))) return std::nullopt;
    if (++digits > 6) return std::nullopt;
    col = col * 10 + (label[i] - '0');
  }
  if (col < 1) return std::nullopt;
  return GridCell{row, static_cast<int>(col - 1)};
}

inline GridCell cell_of(const GridSpec& spec, std::string_view label) {
  const auto cell = parse_label(label);
  if (!cell) throw Error("malformed grid label: " + std::string(label));
  if (!spec.contains(*cell)) {
    throw Error("label out of range for " + spec.name() + " grid: " +
                std::string(label));
  }
  return *cell;
}

}  // namespace gridloc
