#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <vector>

#include "lanegen/error.hpp"
#include "lanegen/image.hpp"

namespace lanegen {

inline constexpr double kDefaultBlurSigma = 1.4;

// Pixel is set iff every channel lies in [t.low, t.high].
inline GrayMask color_threshold(const ImageBuffer& img, const ThresholdPair& t) {
  t.validate();
  GrayMask out(img.width(), img.height());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    bool inside = true;
    for (int c = 0; c < 3; ++c) {
      const int v = src[3 * i + c];
      inside = inside && v >= t.low[c] && v <= t.high[c];
    }
    dst[i] = inside ? 1 : 0;
  }
  return out;
}

namespace detail {

// Fixed-point scale of the blur kernel. Blurred samples are exact integers
// so that gradients cancel constant offsets bit-exactly.
inline constexpr int kBlurShift = 16;

inline std::array<std::int64_t, 5> gaussian_taps(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("blur_sigma must be > 0");
  std::array<double, 5> w{};
  double sum = 0.0;
  for (int i = -2; i <= 2; ++i) {
    w[i + 2] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += w[i + 2];
  }
  const std::int64_t one = std::int64_t{1} << (kBlurShift / 2);
  std::array<std::int64_t, 5> taps{};
  std::int64_t acc = 0;
  for (int i = 0; i < 5; ++i) {
    if (i == 2) continue;
    taps[i] = std::llround(w[i] / sum * static_cast<double>(one));
    acc += taps[i];
  }
  taps[2] = one - acc;  // taps sum to exactly 2^(shift/2)
  return taps;
}

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Separable 5x5 Gaussian over the channel-sum image, replicated borders.
// Output is scaled by 2^kBlurShift.
inline std::vector<std::int64_t> blur_luma_sum(const ImageBuffer& img, double sigma) {
  const int w = img.width(), h = img.height();
  const auto taps = gaussian_taps(sigma);
  std::vector<std::int64_t> gray(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      gray[static_cast<std::size_t>(y) * w + x] = img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2);

  std::vector<std::int64_t> tmp(gray.size()), out(gray.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::int64_t acc = 0;
      for (int k = -2; k <= 2; ++k)
        acc += taps[k + 2] * gray[static_cast<std::size_t>(y) * w + clampi(x + k, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::int64_t acc = 0;
      for (int k = -2; k <= 2; ++k)
        acc += taps[k + 2] * tmp[static_cast<std::size_t>(clampi(y + k, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return out;
}

}  // namespace detail

// 3x3 Sobel responses of a scalar field, replicated borders.
struct Gradient {
  int width = 0;
  int height = 0;
  std::vector<std::int64_t> gx;
  std::vector<std::int64_t> gy;
};

inline Gradient sobel(const std::vector<std::int64_t>& field, int w, int h) {
  Gradient g{w, h, std::vector<std::int64_t>(field.size()), std::vector<std::int64_t>(field.size())};
  auto f = [&](int x, int y) {
    return field[static_cast<std::size_t>(detail::clampi(y, 0, h - 1)) * w + detail::clampi(x, 0, w - 1)];
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      g.gx[i] = (f(x + 1, y - 1) + 2 * f(x + 1, y) + f(x + 1, y + 1)) -
                (f(x - 1, y - 1) + 2 * f(x - 1, y) + f(x - 1, y + 1));
      g.gy[i] = (f(x - 1, y + 1) + 2 * f(x, y + 1) + f(x + 1, y + 1)) -
                (f(x - 1, y - 1) + 2 * f(x, y - 1) + f(x + 1, y - 1));
    }
  return g;
}

// Canny edge detector: blur -> Sobel -> non-maximum suppression -> hysteresis.
// Operates on the channel-mean luminance; thresholds are the luminance
// projections of `t` and apply to the L2 gradient magnitude in 0..255 units.
inline GrayMask canny(const ImageBuffer& img, const ThresholdPair& t, double blur_sigma = kDefaultBlurSigma) {
  t.validate();
  const double lo = t.low_luma(), hi = t.high_luma();
  if (lo > hi) throw InvalidArgument("canny low threshold exceeds high threshold");
  const int w = img.width(), h = img.height();
  if (w < 3 || h < 3) throw InvalidArgument("canny requires an image of at least 3x3");

  const auto blurred = detail::blur_luma_sum(img, blur_sigma);
  const Gradient g = sobel(blurred, w, h);

  // Field is 3 * luma * 2^shift, so magnitudes compare against scaled thresholds.
  const double scale = 3.0 * static_cast<double>(std::int64_t{1} << detail::kBlurShift);
  const double lo2 = (lo * scale) * (lo * scale);
  const double hi2 = (hi * scale) * (hi * scale);

  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> mag2(n);
  for (std::size_t i = 0; i < n; ++i)
    mag2[i] = static_cast<double>(g.gx[i]) * g.gx[i] + static_cast<double>(g.gy[i]) * g.gy[i];

  auto m = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0.0;
    return mag2[static_cast<std::size_t>(y) * w + x];
  };

  // 0 = none, 1 = weak candidate, 2 = strong
  std::vector<std::uint8_t> cls(n, 0);
  constexpr std::int64_t kTan22 = 13573;  // tan(22.5 deg) * 2^15
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double mi = mag2[i];
      if (!(mi > lo2)) continue;
      const std::int64_t ax = std::llabs(g.gx[i]);
      const std::int64_t ay = std::llabs(g.gy[i]);
      const std::int64_t tg22x = ax * kTan22;
      const std::int64_t yy = ay << 15;
      bool keep;
      if (yy < tg22x) {
        keep = mi > m(x - 1, y) && mi >= m(x + 1, y);
      } else if (yy > tg22x + (ax << 16)) {
        keep = mi > m(x, y - 1) && mi >= m(x, y + 1);
      } else {
        const int s = ((g.gx[i] < 0) != (g.gy[i] < 0)) ? -1 : 1;
        keep = mi > m(x - s, y - 1) && mi >= m(x + s, y + 1);
      }
      if (keep) cls[i] = mi > hi2 ? 2 : 1;
    }

  GrayMask out(w, h);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i)
    if (cls[i] == 2) {
      out.data()[i] = 1;
      stack.push_back(i);
    }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
        if (cls[j] != 0 && out.data()[j] == 0) {
          out.data()[j] = 1;
          stack.push_back(j);
        }
      }
  }
  return out;
}

// Offsets (dx, dy) of the Euclidean disc dx^2 + dy^2 <= r^2.
inline std::vector<std::array<int, 2>> disc_offsets(int radius) {
  std::vector<std::array<int, 2>> offs;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) offs.push_back({dx, dy});
  return offs;
}

// Morphological dilation with a Euclidean disc of the given radius.
inline GrayMask dilate(const GrayMask& mask, int radius) {
  if (radius < 0) throw InvalidArgument("dilation radius must be >= 0");
  if (radius == 0) return mask;
  const int w = mask.width(), h = mask.height();
  // Half-width of the disc per row offset.
  std::vector<int> half(2 * radius + 1);
  for (int dy = -radius; dy <= radius; ++dy)
    half[dy + radius] = static_cast<int>(std::floor(std::sqrt(static_cast<double>(radius * radius - dy * dy))));
  // Guard against sqrt rounding on perfect squares.
  for (int dy = -radius; dy <= radius; ++dy) {
    int& hw = half[dy + radius];
    while ((hw + 1) * (hw + 1) + dy * dy <= radius * radius) ++hw;
    while (hw * hw + dy * dy > radius * radius) --hw;
  }
  GrayMask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int ny = y + dy;
        if (ny < 0 || ny >= h) continue;
        const int hw = half[dy + radius];
        const int x0 = std::max(0, x - hw), x1 = std::min(w - 1, x + hw);
        for (int nx = x0; nx <= x1; ++nx) out.at(nx, ny) = 1;
      }
    }
  return out;
}

}  // namespace lanegen
