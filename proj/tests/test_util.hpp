#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "lanegen/annotation.hpp"
#include "lanegen/image.hpp"

namespace lanegen::testing {

inline ImageBuffer random_image(std::mt19937_64& rng, int w, int h, int lo = 0, int hi = 255) {
  std::uniform_int_distribution<int> d(lo, hi);
  ImageBuffer img(w, h);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(d(rng));
  return img;
}

inline GrayMask random_mask(std::mt19937_64& rng, int w, int h, double density = 0.5) {
  std::bernoulli_distribution d(density);
  GrayMask m(w, h);
  for (auto& v : m.data()) v = d(rng) ? 1 : 0;
  return m;
}

inline bool subset_of(const GrayMask& a, const GrayMask& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] && !b.data()[i]) return false;
  return true;
}

struct RoadScene {
  ImageBuffer image;
  LaneAnnotation annotation;
};

// Dark textured road with 2 or 3 bright painted lanes converging upward,
// plus the matching annotation (one point every 8 rows).
inline RoadScene road_scene(std::uint64_t seed, int w = 64, int h = 40) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tex(-12, 12);
  RoadScene s{ImageBuffer(w, h), {}};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sky = y < h / 4 ? 90 : 0;
      for (int c = 0; c < 3; ++c)
        s.image.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(70 + sky + tex(rng) + 6 * c, 0, 255));
    }
  const int lanes = 2 + static_cast<int>(rng() % 2);
  const double vx = w / 2.0 + static_cast<int>(rng() % 9) - 4;
  for (int l = 0; l < lanes; ++l) {
    const double bx = w * (l + 0.5) / lanes;
    Lane lane;
    for (int y = h - 1; y >= h / 4; y -= 8) {
      const double t = static_cast<double>(h - 1 - y) / (h - 1);
      const double x = bx + (vx - bx) * t;
      lane.push_back({x, static_cast<double>(y)});
      for (int yy = y; yy > y - 8 && yy >= 0; --yy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int px = static_cast<int>(std::lround(x)) + dx;
          if (px < 0 || px >= w) continue;
          for (int c = 0; c < 3; ++c) s.image.at(px, yy, c) = 235;
        }
    }
    s.annotation.lanes.push_back(lane);
  }
  return s;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lanegen_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

}  // namespace lanegen::testing
