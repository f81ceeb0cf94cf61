#pragma once

#include "lanegen/annotation.hpp"
#include "lanegen/image.hpp"
#include "lanegen/imaging.hpp"
#include "lanegen/raster.hpp"

namespace lanegen {

inline constexpr int kDefaultStroke = 4;

// Binary map conditioning the structure stage.
struct ControlMap {
  GrayMask mask;
  friend bool operator==(const ControlMap&, const ControlMap&) = default;
};

inline GrayMask rasterize_annotation(const LaneAnnotation& ann, int width, int height, int stroke) {
  if (width < 1 || height < 1) throw InvalidArgument("cannot rasterize onto a zero-size canvas");
  if (stroke < 1) throw InvalidArgument("stroke must be >= 1");
  GrayMask out(width, height);
  for (const auto& lane : ann.lanes) {
    validate_lane(lane);
    stamp(out, rasterize_lane(lane, width, height, static_cast<double>(stroke)));
  }
  return out;
}

// (A AND M) OR E, pixel-wise.
inline ControlMap fuse(const GrayMask& ann_mask, const GrayMask& color_mask, const GrayMask& edges) {
  if (!ann_mask.same_shape(color_mask) || !ann_mask.same_shape(edges))
    throw DimensionMismatch("fuse: masks differ in dimensions");
  GrayMask out(ann_mask.width(), ann_mask.height());
  auto a = ann_mask.data(), m = color_mask.data(), e = edges.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<std::uint8_t>((a[i] & m[i]) | e[i]);
  return {std::move(out)};
}

struct FusionParams {
  ThresholdPair thresholds{{180, 180, 180}, {255, 255, 255}};
  int stroke = kDefaultStroke;
  double blur_sigma = kDefaultBlurSigma;
};

inline ControlMap build_control_map(const ImageBuffer& img, const LaneAnnotation& ann, const ThresholdPair& t,
                                   int stroke, double blur_sigma = kDefaultBlurSigma) {
  const GrayMask a = rasterize_annotation(ann, img.width(), img.height(), stroke);
  const GrayMask m = color_threshold(img, t);
  const GrayMask e = canny(img, t, blur_sigma);
  return fuse(a, m, e);
}

inline ControlMap build_control_map(const ImageBuffer& img, const LaneAnnotation& ann, const FusionParams& p) {
  return build_control_map(img, ann, p.thresholds, p.stroke, p.blur_sigma);
}

}  // namespace lanegen
