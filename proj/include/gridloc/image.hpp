#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gridloc/error.hpp"

namespace gridloc {

/// 8-bit raster, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill) {
    if (w < 1 || h < 1 || (c != 1 && c != 3)) {
      throw Error("invalid image shape");
    }
  }

  std::uint8_t& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const Image8&) const = default;
};

inline Image8 to_rgb(const Image8& img) {
  if (img.channels == 3) return img;
  Image8 out(img.width, img.height, 3);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < n; ++i) {
    out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] =
        img.pixels[i];
  }
  return out;
}

/// Largest centered square: side = min(w, h), offsets floor((extent-side)/2).
inline Image8 central_crop(const Image8& img) {
  const int side = std::min(img.width, img.height);
  const int x0 = (img.width - side) / 2;
  const int y0 = (img.height - side) / 2;
  Image8 out(side, side, img.channels);
  for (int y = 0; y < side; ++y) {
    const std::uint8_t* src =
        &img.pixels[(static_cast<std::size_t>(y + y0) * img.width + x0) *
                    img.channels];
    std::copy(src, src + static_cast<std::size_t>(side) * img.channels,
              &out.pixels[static_cast<std::size_t>(y) * side * img.channels]);
  }
  return out;
}

namespace detail {

// Pixel-center sampling: dst x maps to src coordinate (x+0.5)*scale - 0.5.
struct LinearTap {
  int lo, hi;
  double w_hi;  // weight of hi; lo gets 1 - w_hi
};

inline std::vector<LinearTap> linear_taps(int src, int dst) {
  std::vector<LinearTap> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int x = 0; x < dst; ++x) {
    double s = (x + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    if (s > src - 1) s = src - 1;
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src - 1);
    taps[x] = {lo, hi, s - lo};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resample with pixel-center alignment. Identity when sizes match.
inline Image8 resize_bilinear(const Image8& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw Error("invalid resize target");
  const auto tx = detail::linear_taps(img.width, out_w);
  const auto ty = detail::linear_taps(img.height, out_h);
  Image8 out(out_w, out_h, img.channels);
  for (int y = 0; y < out_h; ++y) {
    const auto& ry = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const auto& rx = tx[x];
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1.0 - rx.w_hi) * img.at(rx.lo, ry.lo, c) +
                           rx.w_hi * img.at(rx.hi, ry.lo, c);
        const double bot = (1.0 - rx.w_hi) * img.at(rx.lo, ry.hi, c) +
                           rx.w_hi * img.at(rx.hi, ry.hi, c);
        const double v = (1.0 - ry.w_hi) * top + ry.w_hi * bot;
        out.at(x, y, c) = static_cast<std::uint8_t>(
            std::clamp(static_cast<long>(std::lround(v)), 0L, 255L));
      }
    }
  }
  return out;
}

/// Source index of a nearest-neighbor resample, floor((x+0.5)*src/dst) in
/// exact integer arithmetic.
inline int nearest_src_index(int x, int src, int dst) {
  const long long num = (2LL * x + 1) * src;
  return std::min(static_cast<int>(num / (2LL * dst)), src - 1);
}

inline Image8 resize_nearest(const Image8& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw Error("invalid resize target");
  Image8 out(out_w, out_h, img.channels);
  for (int y = 0; y < out_h; ++y) {
    const int sy = nearest_src_index(y, img.height, out_h);
    for (int x = 0; x < out_w; ++x) {
      const int sx = nearest_src_index(x, img.width, out_w);
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

}  // namespace gridloc
