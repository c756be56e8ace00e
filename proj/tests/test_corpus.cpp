#include <catch_amalgamated.hpp>

#include <fstream>

#include <json.hpp>

#include "gridloc/corpus.hpp"
#include "gridloc/rng.hpp"
#include "test_support.hpp"

using namespace gridloc;
using nlohmann::json;

namespace {

void write_gray_png(const std::filesystem::path& path, int w, int h,
                    std::uint8_t fill = 128) {
  write_png(path, Image8(w, h, 1, fill));
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  Image8 img(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    img.pixels[i] = mask.bits[i] ? 255 : 0;
  }
  write_png(path, img);
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2);
}

}  // namespace

// ---------------------------------------------------------------------------
// RLE

TEST_CASE("decode_rle expands column-major background-first runs", "[corpus]") {
  // 1x10: column-major degenerates to the flat order
  const RleMask rle{{3, 2, 5}, 10, 1};
  const BinaryMask mask = decode_rle(rle);
  const std::vector<std::uint8_t> expect{0, 0, 0, 1, 1, 0, 0, 0, 0, 0};
  REQUIRE(mask.bits == expect);
}

TEST_CASE("decode_rle leading zero run means foreground-first", "[corpus]") {
  const RleMask rle{{0, 12}, 3, 4};
  const BinaryMask mask = decode_rle(rle);
  REQUIRE(mask.foreground_count() == 12);
}

TEST_CASE("decode_rle is column-major", "[corpus]") {
  // 2x2, runs [1,1,2]: scan order (x0y0), (x0y1), (x1y0), (x1y1)
  const BinaryMask mask = decode_rle(RleMask{{1, 1, 2}, 2, 2});
  REQUIRE(mask.at(0, 0) == 0);
  REQUIRE(mask.at(0, 1) == 1);
  REQUIRE(mask.at(1, 0) == 1);
  REQUIRE(mask.at(1, 1) == 1);
}

TEST_CASE("decode_rle rejects bad checksums", "[corpus]") {
  REQUIRE_THROWS_AS(decode_rle(RleMask{{3, 2, 4}, 10, 1}), Error);
}

TEST_CASE("encode_rle canonical examples", "[corpus]") {
  REQUIRE(encode_rle(BinaryMask(2, 2)).counts == std::vector<std::uint64_t>{4});

  BinaryMask strip(10, 1);
  strip.set(3, 0);
  strip.set(4, 0);
  REQUIRE(encode_rle(strip).counts == std::vector<std::uint64_t>{3, 2, 5});

  BinaryMask full(2, 3);
  for (auto& b : full.bits) b = 1;
  REQUIRE(encode_rle(full).counts == std::vector<std::uint64_t>{0, 6});
}

TEST_CASE("rle round trip: decode then encode recovers canonical form",
          "[corpus][property]") {
  Rng rng(101);
  for (int i = 0; i < 500; ++i) {
    const int w = 1 + static_cast<int>(rng.below(24));
    const int h = 1 + static_cast<int>(rng.below(24));
    const RleMask rle = testsup::random_rle(w, h, rng);
    const RleMask canonical = testsup::canonical_rle(rle);
    const RleMask recoded = encode_rle(decode_rle(rle));
    REQUIRE(recoded.counts == canonical.counts);
  }
}

TEST_CASE("rle round trip: encode then decode is the identity",
          "[corpus][property]") {
  Rng rng(102);
  for (int i = 0; i < 500; ++i) {
    const int w = 1 + static_cast<int>(rng.below(24));
    const int h = 1 + static_cast<int>(rng.below(24));
    const BinaryMask mask = i % 2 == 0
                                ? testsup::random_noise_mask(w, h, rng.unit(), rng)
                                : testsup::random_blob_mask(w, h, rng);
    REQUIRE(decode_rle(encode_rle(mask)) == mask);
  }
}

TEST_CASE("coco compressed counts strings decode", "[corpus]") {
  // reference encoding of counts [6, 1, 40, 4, 5, 4, 5, 4, 31] for a 10x10
  // mask, produced with the dataset toolchain's rleToString
  const json mask_json{{"size", {10, 10}}, {"counts", "61X13mN000j0"}};
  const RleMask rle = detail::rle_from_json(mask_json, "test");
  REQUIRE(rle.width == 10);
  REQUIRE(rle.height == 10);
  REQUIRE(rle.counts ==
          std::vector<std::uint64_t>{6, 1, 40, 4, 5, 4, 5, 4, 31});
  REQUIRE(decode_rle(rle).foreground_count() == 13);
}

// ---------------------------------------------------------------------------
// Pathology names

TEST_CASE("pathology names parse in several spellings", "[corpus]") {
  REQUIRE(parse_pathology("Enlarged Cardiomediastinum") ==
          Pathology::EnlargedCardiomediastinum);
  REQUIRE(parse_pathology("EnlargedCardiomediastinum") ==
          Pathology::EnlargedCardiomediastinum);
  REQUIRE(parse_pathology("enlarged_cardiomediastinum") ==
          Pathology::EnlargedCardiomediastinum);
  REQUIRE(parse_pathology("lung lesion") == Pathology::LungLesion);
  REQUIRE_FALSE(parse_pathology("Fracture").has_value());
  REQUIRE(is_support_devices("Support Devices"));
  REQUIRE(is_support_devices("support_devices"));
}

// ---------------------------------------------------------------------------
// Manifest loading

TEST_CASE("load_manifest: minimal well-formed corpus", "[corpus]") {
  const auto dir = testsup::scratch_dir("corpus_minimal");
  write_gray_png(dir / "img.png", 12, 10);
  BinaryMask mask(12, 10);
  mask.set(5, 5);
  write_mask_png(dir / "mask.png", mask);
  write_json(dir / "index.json",
             json{{"schema", "gridloc.corpus.v1"},
                  {"images",
                   {{{"image_id", "im1"},
                     {"view", "pa"},
                     {"split", "test"},
                     {"image", "img.png"},
                     {"masks", {{"Cardiomegaly", "mask.png"}}}}}}});

  const AnnotationSet set = load_manifest(dir / "index.json", dir);
  REQUIRE(set.records.size() == 1);
  REQUIRE(set.masks.size() == 1);
  REQUIRE(set.records[0].native_width == 12);
  REQUIRE(set.records[0].native_height == 10);
  REQUIRE(set.records[0].view.kind == ViewPosition::Kind::frontal);
  REQUIRE(set.records[0].view.subtype == ViewPosition::FrontalSubtype::pa);
  REQUIRE(set.find_mask("im1", Pathology::Cardiomegaly) != nullptr);
  REQUIRE(set.warnings.empty());
}

TEST_CASE("load_manifest: RLE masks in the published convention", "[corpus]") {
  const auto dir = testsup::scratch_dir("corpus_rle");
  write_gray_png(dir / "img.png", 4, 3);
  // column-major over 4x3: 5 bg, 7 fg
  write_json(dir / "index.json",
             json{{"images",
                   {{{"image_id", "im1"},
                     {"view", "frontal"},
                     {"split", "validation"},
                     {"image", "img.png"},
                     {"masks",
                      {{"Edema", {{"size", {3, 4}}, {"counts", {5, 7}}}}}}}}}});
  const AnnotationSet set = load_manifest(dir / "index.json", dir);
  const BinaryMask* mask = set.find_mask("im1", Pathology::Edema);
  REQUIRE(mask != nullptr);
  REQUIRE(mask->foreground_count() == 7);
  REQUIRE(mask->at(0, 0) == 0);   // first in scan order
  REQUIRE(mask->at(1, 2) == 1);   // sixth in scan order
}

TEST_CASE("load_manifest: Support Devices entries skip with a warning",
          "[corpus]") {
  const auto dir = testsup::scratch_dir("corpus_support");
  write_gray_png(dir / "img.png", 6, 6);
  BinaryMask mask(6, 6);
  mask.set(1, 1);
  write_mask_png(dir / "mask.png", mask);
  write_json(
      dir / "index.json",
      json{{"images",
            {{{"image_id", "im1"},
              {"view", "ap"},
              {"split", "test"},
              {"image", "img.png"},
              {"masks",
               {{"Support Devices", "mask.png"}, {"Pneumothorax", "mask.png"}}}}}}});
  const AnnotationSet set = load_manifest(dir / "index.json", dir);
  REQUIRE(set.masks.size() == 1);
  REQUIRE(set.masks.count({"im1", Pathology::Pneumothorax}) == 1);
  REQUIRE(set.warnings.size() == 1);
  REQUIRE_THAT(set.warnings[0], Catch::Matchers::ContainsSubstring("Support Devices"));
}

TEST_CASE("load_manifest: unknown pathology skips with a warning", "[corpus]") {
  const auto dir = testsup::scratch_dir("corpus_unknown");
  write_gray_png(dir / "img.png", 6, 6);
  write_json(dir / "index.json",
             json{{"images",
                   {{{"image_id", "im1"},
                     {"view", "lateral"},
                     {"split", "test"},
                     {"image", "img.png"},
                     {"masks",
                      {{"Fracture", {{"size", {6, 6}}, {"counts", {36}}}}}}}}}});
  const AnnotationSet set = load_manifest(dir / "index.json", dir);
  REQUIRE(set.masks.empty());
  REQUIRE(set.warnings.size() == 1);
  REQUIRE_THAT(set.warnings[0], Catch::Matchers::ContainsSubstring("Fracture"));
}

TEST_CASE("load_manifest: RLE checksum error names the offending entry",
          "[corpus]") {
  const auto dir = testsup::scratch_dir("corpus_badsum");
  write_gray_png(dir / "img.png", 6, 6);
  write_json(dir / "index.json",
             json{{"images",
                   {{{"image_id", "im1"},
                     {"view", "frontal"},
                     {"split", "test"},
                     {"image", "img.png"},
                     {"masks",
                      {{"Edema", {{"size", {6, 6}}, {"counts", {35}}}}}}}}}});
  REQUIRE_THROWS_WITH(load_manifest(dir / "index.json", dir),
                      Catch::Matchers::ContainsSubstring("im1/Edema"));
}

TEST_CASE("load_manifest: missing image file is an error", "[corpus]") {
  const auto dir = testsup::scratch_dir("corpus_noimg");
  write_json(dir / "index.json", json{{"images",
                                       {{{"image_id", "im1"},
                                         {"view", "frontal"},
                                         {"split", "test"},
                                         {"image", "gone.png"}}}}});
  REQUIRE_THROWS_WITH(load_manifest(dir / "index.json", dir),
                      Catch::Matchers::ContainsSubstring("missing image file"));
}

TEST_CASE("load_manifest: mask/image dimension mismatch is an error",
          "[corpus]") {
  const auto dir = testsup::scratch_dir("corpus_dims");
  write_gray_png(dir / "img.png", 6, 6);
  write_json(dir / "index.json",
             json{{"images",
                   {{{"image_id", "im1"},
                     {"view", "frontal"},
                     {"split", "test"},
                     {"image", "img.png"},
                     {"masks",
                      {{"Edema", {{"size", {5, 6}}, {"counts", {30}}}}}}}}}});
  REQUIRE_THROWS_WITH(load_manifest(dir / "index.json", dir),
                      Catch::Matchers::ContainsSubstring("but image is"));
}

TEST_CASE("load_manifest: duplicate (image, pathology) is rejected", "[corpus]") {
  const auto dir = testsup::scratch_dir("corpus_dup");
  write_gray_png(dir / "img.png", 6, 6);
  // json objects cannot express the duplicate directly; two image entries
  // with the same id cover the same malformed-input class
  write_json(dir / "index.json",
             json{{"images",
                   {{{"image_id", "im1"},
                     {"view", "frontal"},
                     {"split", "test"},
                     {"image", "img.png"}},
                    {{"image_id", "im1"},
                     {"view", "frontal"},
                     {"split", "test"},
                     {"image", "img.png"}}}}});
  REQUIRE_THROWS_WITH(load_manifest(dir / "index.json", dir),
                      Catch::Matchers::ContainsSubstring("duplicate image_id"));
}

TEST_CASE("load_manifest is deterministic", "[corpus]") {
  const auto dir = testsup::scratch_dir("corpus_deterministic");
  write_gray_png(dir / "img.png", 16, 12);
  BinaryMask mask(16, 12);
  mask.set(3, 3);
  mask.set(4, 3);
  write_mask_png(dir / "mask.png", mask);
  write_json(dir / "index.json",
             json{{"images",
                   {{{"image_id", "im1"},
                     {"view", "pa"},
                     {"split", "test"},
                     {"image", "img.png"},
                     {"masks", {{"Lung Opacity", "mask.png"}}}}}}});
  const AnnotationSet a = load_manifest(dir / "index.json", dir);
  const AnnotationSet b = load_manifest(dir / "index.json", dir);
  REQUIRE(a.records.size() == b.records.size());
  REQUIRE(a.masks == b.masks);
  REQUIRE(a.warnings == b.warnings);
}

// ---------------------------------------------------------------------------
// Task selection

namespace {

AnnotationSet selection_fixture() {
  const auto dir = testsup::scratch_dir("corpus_select");
  json images = json::array();
  for (int i = 0; i < 4; ++i) {
    const std::string id = "im" + std::to_string(i);
    write_gray_png(dir / (id + ".png"), 8, 8);
    BinaryMask mask(8, 8);
    mask.set(i, i);
    write_mask_png(dir / (id + "_m.png"), mask);
    images.push_back({{"image_id", id},
                      {"view", i == 3 ? "lateral" : "frontal"},
                      {"split", i == 0 ? "validation" : "test"},
                      {"image", id + ".png"},
                      {"masks",
                       {{"Cardiomegaly", id + "_m.png"},
                        {"Atelectasis", id + "_m.png"}}}});
  }
  write_json(dir / "index.json", json{{"images", images}});
  return load_manifest(dir / "index.json", dir);
}

}  // namespace

TEST_CASE("select_tasks: one task per mask pair, documented order", "[corpus]") {
  const AnnotationSet set = selection_fixture();
  const GridSpec grid{};
  const auto tasks = select_tasks(set, Split::test, std::nullopt, nullptr, grid);
  REQUIRE(tasks.size() == 6);  // 3 test images x 2 pathologies
  REQUIRE(tasks[0].image_id == "im1");
  REQUIRE(tasks[0].pathology == Pathology::Atelectasis);
  REQUIRE(tasks[1].image_id == "im1");
  REQUIRE(tasks[1].pathology == Pathology::Cardiomegaly);
  REQUIRE(tasks[5].image_id == "im3");
}

TEST_CASE("select_tasks honors view and pathology filters", "[corpus]") {
  const AnnotationSet set = selection_fixture();
  const GridSpec grid{};
  const auto lateral = select_tasks(set, Split::test, ViewPosition::Kind::lateral,
                                    nullptr, grid);
  REQUIRE(lateral.size() == 2);

  const std::vector<Pathology> only{Pathology::Cardiomegaly};
  const auto filtered =
      select_tasks(set, Split::test, std::nullopt, &only, grid);
  REQUIRE(filtered.size() == 3);
  for (const auto& t : filtered) REQUIRE(t.pathology == Pathology::Cardiomegaly);

  const auto none = select_tasks(set, Split::validation,
                                 ViewPosition::Kind::lateral, nullptr, grid);
  REQUIRE(none.empty());
}

TEST_CASE("one image with three pathologies yields three tasks", "[corpus]") {
  const auto dir = testsup::scratch_dir("corpus_three");
  write_gray_png(dir / "img.png", 8, 8);
  BinaryMask mask(8, 8);
  mask.set(2, 2);
  write_mask_png(dir / "m.png", mask);
  write_json(dir / "index.json",
             json{{"images",
                   {{{"image_id", "im1"},
                     {"view", "frontal"},
                     {"split", "test"},
                     {"image", "img.png"},
                     {"masks",
                      {{"Edema", "m.png"},
                       {"Pneumothorax", "m.png"},
                       {"Consolidation", "m.png"}}}}}}});
  const AnnotationSet set = load_manifest(dir / "index.json", dir);
  const auto tasks = select_tasks(set, Split::test, std::nullopt, nullptr, GridSpec{});
  REQUIRE(tasks.size() == 3);
}
