#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lanegen/annotation.hpp"
#include "lanegen/image.hpp"

namespace lanegen {

// True iff pixel centre (px, py) lies within distance sqrt(r2) of segment a-b.
// Written without division so dyadic inputs are evaluated exactly.
inline bool within_capsule(double px, double py, double ax, double ay, double bx, double by, double r2) {
  const double dx = bx - ax, dy = by - ay;
  const double vx = px - ax, vy = py - ay;
  const double dot = vx * dx + vy * dy;
  if (dot <= 0.0) return vx * vx + vy * vy <= r2;
  const double len2 = dx * dx + dy * dy;
  if (dot >= len2) {
    const double wx = px - bx, wy = py - by;
    return wx * wx + wy * wy <= r2;
  }
  const double cross = dx * vy - dy * vx;
  return cross * cross <= r2 * len2;
}

// Pixels of one rasterized lane, stored as a clipped bounding-box bitmap.
struct LaneFootprint {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  std::vector<std::uint8_t> bits;
  std::size_t count = 0;

  bool test(int x, int y) const {
    if (x < x0 || y < y0 || x >= x0 + w || y >= y0 + h) return false;
    return bits[static_cast<std::size_t>(y - y0) * w + (x - x0)] != 0;
  }
};

// Rasterizes a polyline as a stroke of the given total width on a
// `canvas_w` x `canvas_h` canvas; out-of-frame parts are clipped.
inline LaneFootprint rasterize_lane(const Lane& lane, int canvas_w, int canvas_h, double stroke_width) {
  const double r = stroke_width / 2.0;
  const double r2 = r * r;
  double minx = lane.front().x, maxx = minx, miny = lane.front().y, maxy = miny;
  for (const auto& p : lane) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  LaneFootprint fp;
  const int bx0 = std::max(0, static_cast<int>(std::floor(minx - r)));
  const int by0 = std::max(0, static_cast<int>(std::floor(miny - r)));
  const int bx1 = std::min(canvas_w - 1, static_cast<int>(std::ceil(maxx + r)));
  const int by1 = std::min(canvas_h - 1, static_cast<int>(std::ceil(maxy + r)));
  if (bx0 > bx1 || by0 > by1) return fp;
  fp.x0 = bx0;
  fp.y0 = by0;
  fp.w = bx1 - bx0 + 1;
  fp.h = by1 - by0 + 1;
  fp.bits.assign(static_cast<std::size_t>(fp.w) * fp.h, 0);

  for (std::size_t s = 0; s + 1 < lane.size(); ++s) {
    const auto& a = lane[s];
    const auto& b = lane[s + 1];
    const int sx0 = std::max(bx0, static_cast<int>(std::floor(std::min(a.x, b.x) - r)));
    const int sx1 = std::min(bx1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r)));
    const int sy0 = std::max(by0, static_cast<int>(std::floor(std::min(a.y, b.y) - r)));
    const int sy1 = std::min(by1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r)));
    for (int y = sy0; y <= sy1; ++y)
      for (int x = sx0; x <= sx1; ++x) {
        auto& bit = fp.bits[static_cast<std::size_t>(y - by0) * fp.w + (x - bx0)];
        if (!bit && within_capsule(x, y, a.x, a.y, b.x, b.y, r2)) bit = 1;
      }
  }
  fp.count = static_cast<std::size_t>(std::count(fp.bits.begin(), fp.bits.end(), std::uint8_t{1}));
  return fp;
}

inline std::size_t footprint_intersection(const LaneFootprint& a, const LaneFootprint& b) {
  if (a.count == 0 || b.count == 0) return 0;
  const int x0 = std::max(a.x0, b.x0), x1 = std::min(a.x0 + a.w, b.x0 + b.w);
  const int y0 = std::max(a.y0, b.y0), y1 = std::min(a.y0 + a.h, b.y0 + b.h);
  std::size_t n = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) n += (a.test(x, y) && b.test(x, y)) ? 1 : 0;
  return n;
}

inline void stamp(GrayMask& mask, const LaneFootprint& fp) {
  for (int y = 0; y < fp.h; ++y)
    for (int x = 0; x < fp.w; ++x)
      if (fp.bits[static_cast<std::size_t>(y) * fp.w + x]) mask.at(fp.x0 + x, fp.y0 + y) = 1;
}

}  // namespace lanegen
