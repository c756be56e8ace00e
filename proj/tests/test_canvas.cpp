#include <catch_amalgamated.hpp>

#include <set>

#include "gridloc/canvas.hpp"
#include "gridloc/rng.hpp"
#include "test_support.hpp"

using namespace gridloc;

// ---------------------------------------------------------------------------
// preprocess

TEST_CASE("preprocess crops centrally then resizes", "[canvas]") {
  // 512x384: crop to the central 384x384 (x offset 64), resize to 256
  Image8 img(512, 384, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      img.at(x, y) = static_cast<std::uint8_t>((x >= 64 && x < 448) ? 200 : 10);
    }
  }
  const Image8 out = preprocess(img, 256);
  REQUIRE(out.width == 256);
  REQUIRE(out.height == 256);
  for (const auto p : out.pixels) REQUIRE(static_cast<int>(p) == 200);
}

TEST_CASE("preprocess at native canvas size is pixel-identical", "[canvas]") {
  Rng rng(21);
  const Image8 img = testsup::random_image(256, 256, 1, rng);
  REQUIRE(preprocess(img, 256) == img);
}

TEST_CASE("preprocess matches the reference resampler within one level",
          "[canvas][property]") {
  Rng rng(22);
  for (const auto [w, h] : {std::pair{1000, 600}, {300, 470}, {257, 256}}) {
    const Image8 img = testsup::random_image(w, h, 1, rng);
    const Image8 got = preprocess(img, 256);
    const Image8 expect = testsup::oracle_preprocess(img, 256);
    for (std::size_t i = 0; i < got.pixels.size(); ++i) {
      REQUIRE(std::abs(static_cast<int>(got.pixels[i]) -
                       static_cast<int>(expect.pixels[i])) <= 1);
    }
  }
}

// ---------------------------------------------------------------------------
// transform_mask

TEST_CASE("transform_mask keeps an all-foreground mask full", "[canvas]") {
  BinaryMask mask(300, 220);
  for (auto& b : mask.bits) b = 1;
  const BinaryMask out = transform_mask(mask, 256);
  REQUIRE(out.foreground_count() == 256u * 256u);
}

TEST_CASE("transform_mask erases masks inside the cropped margin", "[canvas]") {
  // 400x200: crop keeps x in [100, 300); mask lives left of that
  BinaryMask mask(400, 200);
  for (int y = 0; y < 200; ++y) {
    for (int x = 0; x < 90; ++x) mask.set(x, y);
  }
  const BinaryMask out = transform_mask(mask, 256);
  REQUIRE(out.empty_mask());
}

TEST_CASE("transform_mask equals the per-pixel nearest-neighbor oracle",
          "[canvas][property]") {
  Rng rng(23);
  for (int i = 0; i < 25; ++i) {
    const int w = 64 + static_cast<int>(rng.below(300));
    const int h = 64 + static_cast<int>(rng.below(300));
    const BinaryMask mask = testsup::random_blob_mask(w, h, rng);
    const BinaryMask got = transform_mask(mask, 128);
    const BinaryMask expect = testsup::oracle_transform_mask(mask, 128);
    REQUIRE(got == expect);
  }
}

TEST_CASE("mask and image resampling agree geometrically",
          "[canvas][property]") {
  // the nearest-neighbor source of any canonical pixel carries nonzero
  // bilinear weight for the image path, so a mask pixel never detaches from
  // its covering image pixel
  Rng rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    const int src = 2 + static_cast<int>(rng.below(500));
    const int dst = 2 + static_cast<int>(rng.below(500));
    const int x = static_cast<int>(rng.below(dst));
    const int nn = nearest_src_index(x, src, dst);
    const double s = std::clamp((x + 0.5) * static_cast<double>(src) / dst - 0.5,
                                0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src - 1);
    const double w_hi = s - lo;
    REQUIRE((nn == lo || nn == hi));
    if (nn == lo) REQUIRE(1.0 - w_hi > 0.0);
    if (nn == hi && nn != lo) REQUIRE(w_hi > 0.0);
  }
}

// ---------------------------------------------------------------------------
// grid geometry

TEST_CASE("cell_rect: 8x8 on 256 gives 32-pixel cells", "[canvas]") {
  const GridSpec spec{8, 8, 256};
  const auto rect = cell_rect(spec, {0, 0});
  REQUIRE(rect == PixelRect{0, 31, 0, 31});
  REQUIRE(cell_rect(spec, {7, 7}) == PixelRect{224, 255, 224, 255});
}

TEST_CASE("cell_rect: 16x16 on 256 gives 16-pixel cells", "[canvas]") {
  const GridSpec spec{16, 16, 256};
  REQUIRE(cell_rect(spec, {15, 15}) == PixelRect{240, 255, 240, 255});
}

TEST_CASE("cell rects partition the canvas exactly", "[canvas][property]") {
  for (const auto [rows, cols] : {std::pair{8, 8}, {16, 16}, {7, 7}, {5, 9}}) {
    const GridSpec spec{rows, cols, 256};
    std::vector<int> owner(256 * 256, -1);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const auto rect = cell_rect(spec, {r, c});
        for (int y = rect.row_start; y <= rect.row_end; ++y) {
          for (int x = rect.col_start; x <= rect.col_end; ++x) {
            REQUIRE(owner[y * 256 + x] == -1);  // no overlaps
            owner[y * 256 + x] = r * cols + c;
          }
        }
      }
    }
    for (const int o : owner) REQUIRE(o != -1);  // no gaps
  }
}

TEST_CASE("cell_rect rejects out-of-range cells", "[canvas]") {
  REQUIRE_THROWS_AS(cell_rect(GridSpec{8, 8, 256}, {8, 0}), Error);
}

// ---------------------------------------------------------------------------
// labels

TEST_CASE("label examples", "[canvas]") {
  const GridSpec g8{8, 8, 256};
  REQUIRE(label_of(g8, {0, 0}) == "A1");
  REQUIRE(label_of(g8, {7, 7}) == "H8");
  REQUIRE(cell_of(g8, "A1") == GridCell{0, 0});
  REQUIRE(cell_of(g8, "h8") == GridCell{7, 7});
  REQUIRE_THROWS_AS(cell_of(g8, "Z9"), Error);
  REQUIRE_THROWS_AS(cell_of(g8, "A0"), Error);
  REQUIRE_THROWS_AS(cell_of(g8, "8A"), Error);
}

TEST_CASE("double-letter rows", "[canvas]") {
  const GridSpec g{60, 4, 256};
  REQUIRE(label_of(g, {25, 0}) == "Z1");
  REQUIRE(label_of(g, {26, 0}) == "AA1");
  REQUIRE(label_of(g, {27, 3}) == "AB4");
  REQUIRE(cell_of(g, "ab4") == GridCell{27, 3});
}

TEST_CASE("labels round-trip exhaustively up to 26x26", "[canvas][property]") {
  for (int rows = 1; rows <= 26; rows += 5) {
    for (int cols = 1; cols <= 26; cols += 5) {
      const GridSpec spec{rows, cols, 256};
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          REQUIRE(cell_of(spec, label_of(spec, {r, c})) == GridCell{r, c});
        }
      }
    }
  }
}

TEST_CASE("grid spec validation", "[canvas]") {
  REQUIRE_THROWS_AS((GridSpec{0, 8, 256}).validate(), Error);
  REQUIRE_THROWS_AS((GridSpec{703, 1, 1024}).validate(), Error);
  REQUIRE_THROWS_AS((GridSpec{8, 8, 4}).validate(), Error);
  REQUIRE_NOTHROW((GridSpec{702, 702, 702}).validate());
}

// ---------------------------------------------------------------------------
// render_grid

TEST_CASE("render_grid is byte-deterministic and matches its golden file",
          "[canvas]") {
  const Image8 canvas(256, 256, 1, 128);
  const GridSpec spec{8, 8, 256};
  const std::string a = render_grid(canvas, spec);
  const std::string b = render_grid(canvas, spec);
  REQUIRE(a == b);

  // self-priming golden: first run writes it, later runs enforce it
  const std::filesystem::path golden =
      std::filesystem::path(GRIDLOC_GOLDEN_DIR) / "grid_8x8_gray.png";
  if (!std::filesystem::exists(golden)) {
    std::filesystem::create_directories(golden.parent_path());
    write_file_bytes(golden, a);
  }
  REQUIRE(read_file_bytes(golden) == a);
}

TEST_CASE("render_grid handles a 16x16 grid on 256", "[canvas]") {
  const Image8 canvas(256, 256, 1, 90);
  REQUIRE_NOTHROW(render_grid(canvas, GridSpec{16, 16, 256}));
}

TEST_CASE("render_grid rejects cells too small for labels", "[canvas]") {
  const Image8 canvas(256, 256, 1, 90);
  REQUIRE_THROWS_WITH(render_grid(canvas, GridSpec{64, 64, 256}),
                      Catch::Matchers::ContainsSubstring("too small"));
}

TEST_CASE("render_grid only touches boundaries and label glyphs",
          "[canvas][property]") {
  Rng rng(31);
  const Image8 canvas = testsup::random_image(256, 256, 1, rng);
  const GridSpec spec{8, 8, 256};
  const Image8 rendered = decode_png(render_grid(canvas, spec));
  REQUIRE(rendered.channels == 3);

  // boundary rows/cols: first row/col of every cell plus the outer far edge
  std::set<int> line_rows, line_cols;
  for (int r = 0; r < spec.rows; ++r) line_rows.insert(cell_rect(spec, {r, 0}).row_start);
  for (int c = 0; c < spec.cols; ++c) line_cols.insert(cell_rect(spec, {0, c}).col_start);
  line_rows.insert(255);
  line_cols.insert(255);

  const Font& font = font_5x7();
  int changed_interior = 0;
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 256; ++x) {
      const bool same = rendered.at(x, y, 0) == canvas.at(x, y) &&
                        rendered.at(x, y, 1) == canvas.at(x, y) &&
                        rendered.at(x, y, 2) == canvas.at(x, y);
      if (same) continue;
      if (line_rows.count(y) || line_cols.count(x)) continue;
      // must be inside some label box (top-left corner of its cell)
      const GridCell cell{y / 32, x / 32};
      const auto rect = cell_rect(spec, cell);
      const int label_w = text_width(font, label_of(spec, cell));
      const bool in_label_box = x >= rect.col_start + 3 &&
                                x < rect.col_start + 3 + label_w &&
                                y >= rect.row_start + 3 &&
                                y < rect.row_start + 3 + font.glyph_height;
      REQUIRE(in_label_box);
      ++changed_interior;
    }
  }
  REQUIRE(changed_interior > 0);  // labels did render
}
