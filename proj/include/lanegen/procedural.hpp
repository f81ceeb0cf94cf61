#pragma once

#include <algorithm>
#include <cmath>

#include "lanegen/category.hpp"
#include "lanegen/control_fusion.hpp"
#include "lanegen/imaging.hpp"
#include "lanegen/pipeline.hpp"
#include "lanegen/rng.hpp"

namespace lanegen {

struct ProceduralParams {
  double fog_density = 0.55;
  // Pixels under the protection mask move by at most this much per channel.
  int protect_bound = 24;
  // Protection mask = annotation stroke dilated by this radius.
  int protect_radius = 3;
};

namespace detail {

inline std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

inline double luma(const ImageBuffer& img, int x, int y) {
  return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

inline void blend_pixel(ImageBuffer& img, int x, int y, const double (&target)[3], double w) {
  for (int c = 0; c < 3; ++c) img.at(x, y, c) = to_u8((1.0 - w) * img.at(x, y, c) + w * target[c]);
}

// Gray level of the fog ramp at row y: 215 at the top, 170 at the bottom.
inline double fog_ramp(int y, int h) { return h > 1 ? 215.0 - 45.0 * y / (h - 1) : 215.0; }

inline void rain(ImageBuffer& img, StableRng& rng) {
  const int w = img.width(), h = img.height();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double l = luma(img, x, y);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = to_u8(0.9 * (0.6 * img.at(x, y, c) + 0.4 * l));
    }
  const std::size_t streaks = std::max<std::size_t>(1, img.pixel_count() / 250);
  const double streak[3] = {205, 210, 220};
  for (std::size_t s = 0; s < streaks; ++s) {
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h)));
    const int len = 6 + static_cast<int>(rng.below(12));
    // Diagonal: one column right every three rows.
    for (int i = 0; i < len; ++i) {
      const int x = x0 + i / 3, y = y0 + i;
      if (x >= w || y >= h) break;
      blend_pixel(img, x, y, streak, 0.45);
    }
  }
}

inline void snow(ImageBuffer& img, StableRng& rng) {
  const int w = img.width(), h = img.height();
  for (auto& v : img.data()) v = to_u8(v + 0.18 * (255.0 - v));
  const std::size_t flakes = std::max<std::size_t>(1, img.pixel_count() / 300);
  const double white[3] = {250, 250, 252};
  for (std::size_t f = 0; f < flakes; ++f) {
    const int cx = static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
    const int cy = static_cast<int>(rng.below(static_cast<std::uint64_t>(h)));
    const int r = 1 + static_cast<int>(rng.below(3));
    for (const auto& [dx, dy] : disc_offsets(r)) {
      const int x = cx + dx, y = cy + dy;
      if (x >= 0 && y >= 0 && x < w && y < h) blend_pixel(img, x, y, white, 0.8);
    }
  }
}

inline void fog(ImageBuffer& img, double density) {
  for (int y = 0; y < img.height(); ++y) {
    const double g = fog_ramp(y, img.height());
    const double target[3] = {g, g, g};
    for (int x = 0; x < img.width(); ++x) blend_pixel(img, x, y, target, density);
  }
}

// v' = 255 * 0.6 * (v/255)^1.8, then red x0.8 and green x0.9.
inline void night(ImageBuffer& img) {
  static constexpr double gain[3] = {0.8, 0.9, 1.0};
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = img.at(x, y, c) / 255.0;
        img.at(x, y, c) = to_u8(255.0 * 0.6 * std::pow(v, 1.8) * gain[c]);
      }
}

inline void dusk(ImageBuffer& img) {
  const double orange[3] = {255, 140, 60};
  const int h = img.height();
  for (int y = 0; y < h; ++y) {
    const double w = 0.45 * (h > 1 ? 1.0 - static_cast<double>(y) / (h - 1) : 1.0) + 0.1;
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = to_u8(0.85 * img.at(x, y, c));
      blend_pixel(img, x, y, orange, w);
    }
  }
}

}  // namespace detail

// Deterministic weather overlay. Pixels set in `protect` end up within
// params.protect_bound of their original value in every channel.
inline ImageBuffer procedural_weather(const ImageBuffer& img, Category category, std::uint64_t seed,
                                      const GrayMask* protect = nullptr, const ProceduralParams& params = {}) {
  if (category == Category::normal) throw InvalidArgument("procedural weather has no transform for 'normal'");
  if (protect && (protect->width() != img.width() || protect->height() != img.height()))
    throw DimensionMismatch("protection mask dimensions differ from image");
  if (!(params.fog_density >= 0.0 && params.fog_density <= 1.0)) throw InvalidArgument("fog density outside [0, 1]");
  ImageBuffer out = img;
  StableRng rng(mix_seed(seed, fnv1a64(category_name(category))));
  switch (category) {
    case Category::rain: detail::rain(out, rng); break;
    case Category::snow: detail::snow(out, rng); break;
    case Category::fog: detail::fog(out, params.fog_density); break;
    case Category::night: detail::night(out); break;
    case Category::dusk: detail::dusk(out); break;
    case Category::normal: break;
  }
  if (protect) {
    const int b = params.protect_bound;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        if (!protect->at(x, y)) continue;
        for (int c = 0; c < 3; ++c) {
          const int o = img.at(x, y, c);
          out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp<int>(out.at(x, y, c), o - b, o + b));
        }
      }
  }
  return out;
}

inline GrayMask protection_mask(const LaneAnnotation& ann, int w, int h, const ProceduralParams& params = {}) {
  return dilate(rasterize_annotation(ann, w, h, kDefaultStroke), params.protect_radius);
}

class ProceduralBackend final : public Backend {
public:
  explicit ProceduralBackend(ProceduralParams params = {}) : params_(params) {}
  std::string id() const override { return "procedural"; }
  ImageBuffer generate(const GenerateRequest& req) const override {
    if (req.recipe.category == Category::normal) return req.image;
    const auto mask = protection_mask(req.annotation, req.image.width(), req.image.height(), params_);
    return procedural_weather(req.image, req.recipe.category, req.sampler.seed, &mask, params_);
  }

private:
  ProceduralParams params_;
};

}  // namespace lanegen
