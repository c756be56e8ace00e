#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridloc/corpus.hpp"
#include "gridloc/error.hpp"
#include "gridloc/image.hpp"
#include "gridloc/png_io.hpp"
#include "gridloc/rng.hpp"

// Seeded synthetic corpora: plausible-looking gray images with blob masks in
// the synthetic manifest layout. Lets the whole pipeline run and be tested
// without any licensed data. Everything derives from (seed, image index), so
// generation is reproducible file-for-file.

namespace gridloc {

struct SynthOptions {
  int n_images = 12;
  std::uint64_t seed = 7;
  std::vector<Pathology> pathologies = {Pathology::Cardiomegaly,
                                        Pathology::PleuralEffusion,
                                        Pathology::Pneumothorax};
  double pathology_presence = 1.0;  // chance each pathology gets a mask
  double lateral_fraction = 0.15;
  double small_mask_fraction = 0.1;  // tiny masks exercise the fallback rule
  Split split = Split::test;
  int min_side = 280;
  int max_side = 400;
  bool make_atlas = false;
};

namespace detail {

inline void fill_ellipse(BinaryMask& mask, double cx, double cy, double ax,
                         double ay) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - ax)));
  const int x1 = std::min(mask.width - 1, static_cast<int>(std::ceil(cx + ax)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - ay)));
  const int y1 = std::min(mask.height - 1, static_cast<int>(std::ceil(cy + ay)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x - cx) / ax;
      const double dy = (y - cy) / ay;
      if (dx * dx + dy * dy <= 1.0) mask.set(x, y);
    }
  }
}

inline Image8 synth_image(int w, int h, Rng& rng, std::uint64_t noise_seed) {
  Image8 img(w, h, 1);
  // central bright band
  const double band_c = w * 0.5;
  const double band_s = w * 0.16;
  std::vector<double> base(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = (x - band_c) / band_s;
      base[static_cast<std::size_t>(y) * w + x] = 35.0 + 60.0 * std::exp(-dx * dx / 2.0);
    }
  }
  // a few soft blobs
  const int blobs = 3 + static_cast<int>(rng.below(3));
  for (int b = 0; b < blobs; ++b) {
    const double cx = rng.unit() * w;
    const double cy = rng.unit() * h;
    const double sx = (0.06 + 0.12 * rng.unit()) * w;
    const double sy = (0.06 + 0.12 * rng.unit()) * h;
    const double amp = 20.0 + 50.0 * rng.unit();
    const int x0 = std::max(0, static_cast<int>(cx - 3 * sx));
    const int x1 = std::min(w - 1, static_cast<int>(cx + 3 * sx));
    const int y0 = std::max(0, static_cast<int>(cy - 3 * sy));
    const int y1 = std::min(h - 1, static_cast<int>(cy + 3 * sy));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = (x - cx) / sx;
        const double dy = (y - cy) / sy;
        base[static_cast<std::size_t>(y) * w + x] +=
            amp * std::exp(-(dx * dx + dy * dy) / 2.0);
      }
    }
  }
  // position-hashed grain, independent of draw order
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint64_t s = noise_seed ^ (static_cast<std::uint64_t>(y) << 24) ^
                        static_cast<std::uint64_t>(x);
      const double noise = static_cast<double>(splitmix64(s) & 0xF) - 8.0;
      const double v = base[static_cast<std::size_t>(y) * w + x] + noise;
      img.pixels[static_cast<std::size_t>(y) * w + x] =
          static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return img;
}

}  // namespace detail

/// Generates a corpus under `dir` and returns the manifest path.
inline std::filesystem::path generate_corpus(const std::filesystem::path& dir,
                                             const SynthOptions& opts) {
  namespace fs = std::filesystem;
  if (opts.n_images < 1) throw Error("synthetic corpus needs at least one image");
  if (opts.min_side < 32 || opts.max_side < opts.min_side) {
    throw Error("invalid synthetic image size range");
  }
  fs::create_directories(dir / "img");
  fs::create_directories(dir / "masks");

  nlohmann::json images = nlohmann::json::array();
  char buf[32];
  for (int i = 0; i < opts.n_images; ++i) {
    Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(i)));
    std::snprintf(buf, sizeof(buf), "synth_%04d", i);
    const std::string image_id = buf;
    std::snprintf(buf, sizeof(buf), "p%04d", i / 2);
    const std::string patient_id = buf;

    const int w = opts.min_side +
                  static_cast<int>(rng.below(opts.max_side - opts.min_side + 1));
    const int h = opts.min_side +
                  static_cast<int>(rng.below(opts.max_side - opts.min_side + 1));
    const bool lateral = rng.unit() < opts.lateral_fraction;

    const Image8 img = detail::synth_image(
        w, h, rng, derive_seed(opts.seed, 0x10000u + static_cast<unsigned>(i)));
    const std::string img_rel = "img/" + image_id + ".png";
    write_png(dir / img_rel, img);

    // masks live inside the central square so the crop never erases them
    const int m = std::min(w, h);
    const int x_off = (w - m) / 2;
    const int y_off = (h - m) / 2;
    nlohmann::json masks = nlohmann::json::object();
    for (Pathology p : opts.pathologies) {
      if (rng.unit() >= opts.pathology_presence) continue;
      BinaryMask mask(w, h);
      const bool tiny = rng.unit() < opts.small_mask_fraction;
      const int n_ellipses = tiny ? 1 : 1 + static_cast<int>(rng.below(2));
      for (int e = 0; e < n_ellipses; ++e) {
        const double ax = tiny ? m * (0.010 + 0.010 * rng.unit())
                               : m * (0.050 + 0.110 * rng.unit());
        const double ay = tiny ? m * (0.010 + 0.010 * rng.unit())
                               : m * (0.050 + 0.110 * rng.unit());
        const double cx = x_off + m * (0.20 + 0.60 * rng.unit());
        const double cy = y_off + m * (0.20 + 0.60 * rng.unit());
        detail::fill_ellipse(mask, cx, cy, ax, ay);
      }
      Image8 mask_img(w, h, 1);
      for (std::size_t k = 0; k < mask.bits.size(); ++k) {
        mask_img.pixels[k] = mask.bits[k] ? 255 : 0;
      }
      const std::string mask_rel =
          "masks/" + image_id + "_" + slug(p) + ".png";
      write_png(dir / mask_rel, mask_img);
      masks[display_name(p)] = mask_rel;
    }

    images.push_back({{"image_id", image_id},
                      {"patient_id", patient_id},
                      {"view", lateral ? "lateral" : (i % 2 == 0 ? "pa" : "ap")},
                      {"split", split_string(opts.split)},
                      {"image", img_rel},
                      {"masks", masks}});
  }

  if (opts.make_atlas) {
    fs::create_directories(dir / "atlas");
    const int side = 256;
    int k = 0;
    for (Pathology p : opts.pathologies) {
      BinaryMask region(side, side);
      // one broad plausible region per pathology, offset so that some random
      // predictions fall outside it
      const double cx = side * (0.42 + 0.05 * (k % 3));
      const double cy = side * (0.42 + 0.05 * ((k / 3) % 3));
      detail::fill_ellipse(region, cx, cy, side * 0.34, side * 0.34);
      Image8 img(side, side, 1);
      for (std::size_t i = 0; i < region.bits.size(); ++i) {
        img.pixels[i] = region.bits[i] ? 255 : 0;
      }
      write_png(dir / "atlas" / (std::string(slug(p)) + ".png"), img);
      ++k;
    }
  }

  const nlohmann::json manifest{{"schema", "gridloc.corpus.v1"},
                                {"images", images}};
  const auto manifest_path = dir / "index.json";
  {
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw Error("cannot write manifest: " + manifest_path.string());
    out << manifest.dump(2) << '\n';
  }
  return manifest_path;
}

}  // namespace gridloc
