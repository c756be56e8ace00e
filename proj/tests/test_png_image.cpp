#include <catch_amalgamated.hpp>

#include <filesystem>

#include "gridloc/image.hpp"
#include "gridloc/png_io.hpp"
#include "gridloc/rng.hpp"
#include "test_support.hpp"

using namespace gridloc;

static const std::filesystem::path kFixtures = GRIDLOC_FIXTURES_DIR;

TEST_CASE("png encode round-trips through the libpng decoder", "[png]") {
  // encoder and decoder are independent implementations, so agreement on
  // random images checks both
  Rng rng(11);
  for (int channels : {1, 3}) {
    for (auto [w, h] : {std::pair{1, 1}, {7, 3}, {37, 23}, {256, 256}}) {
      const Image8 img = testsup::random_image(w, h, channels, rng);
      const Image8 back = decode_png(encode_png(img));
      REQUIRE(back == img);
    }
  }
}

TEST_CASE("png encoding is deterministic", "[png]") {
  Rng rng(5);
  const Image8 img = testsup::random_image(64, 64, 3, rng);
  REQUIRE(encode_png(img) == encode_png(img));
}

TEST_CASE("decodes a foreign-encoder RGB file exactly", "[png]") {
  const Image8 img = read_png(kFixtures / "pil_rgb.png");
  REQUIRE(img.width == 37);
  REQUIRE(img.height == 23);
  REQUIRE(img.channels == 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      REQUIRE(img.at(x, y, 0) == (x * 7 + y * 13) % 256);
      REQUIRE(img.at(x, y, 1) == (x * 3 + y * 5) % 256);
      REQUIRE(img.at(x, y, 2) == (x * 11 + y * 2) % 256);
    }
  }
}

TEST_CASE("strips 16-bit grayscale to the high byte", "[png]") {
  const Image8 img = read_png(kFixtures / "pil_gray16.png");
  REQUIRE(img.width == 9);
  REQUIRE(img.height == 7);
  REQUIRE(img.channels == 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      REQUIRE(img.at(x, y) == ((x * 1000 + y * 777) % 65536) >> 8);
    }
  }
}

TEST_CASE("expands palette images to RGB", "[png]") {
  const Image8 img = read_png(kFixtures / "pil_palette.png");
  REQUIRE(img.channels == 3);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 8; ++x) {
      const int i = x + y * 8;
      REQUIRE(img.at(x, y, 0) == (i * 3) % 256);
      REQUIRE(img.at(x, y, 1) == (i * 7) % 256);
      REQUIRE(img.at(x, y, 2) == (i * 11) % 256);
    }
  }
}

TEST_CASE("read_png_dims probes without decoding", "[png]") {
  const auto [w, h] = read_png_dims(kFixtures / "pil_rgb.png");
  REQUIRE(w == 37);
  REQUIRE(h == 23);
  REQUIRE_THROWS_AS(read_png_dims(kFixtures / "nonexistent.png"), Error);
}

TEST_CASE("decode rejects garbage", "[png]") {
  REQUIRE_THROWS_AS(decode_png(std::string("not a png at all")), Error);
}

TEST_CASE("bilinear resize is the identity at equal size", "[png][canvas]") {
  Rng rng(17);
  const Image8 img = testsup::random_image(41, 41, 1, rng);
  REQUIRE(resize_bilinear(img, 41, 41) == img);
}

TEST_CASE("nearest source indices are exact floor((x+0.5)*src/dst)", "[png]") {
  for (int src : {3, 7, 256, 384}) {
    for (int dst : {1, 3, 8, 255, 256, 300}) {
      for (int x = 0; x < dst; ++x) {
        const int expect = std::min(
            src - 1,
            static_cast<int>(std::floor((x + 0.5) * static_cast<double>(src) / dst)));
        REQUIRE(nearest_src_index(x, src, dst) == expect);
      }
    }
  }
}
