#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lanegen/error.hpp"

namespace lanegen {

// 8-bit interleaved RGB raster, row-major.
class ImageBuffer {
public:
  static constexpr int kChannels = 3;

  ImageBuffer() = default;

  ImageBuffer(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height) {
    if (width < 1 || height < 1) throw InvalidArgument("image dimensions must be >= 1");
    data_.assign(static_cast<std::size_t>(width) * height * kChannels, fill);
  }

  ImageBuffer(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1) throw InvalidArgument("image dimensions must be >= 1");
    if (data_.size() != static_cast<std::size_t>(width) * height * kChannels)
      throw DimensionMismatch("image data length does not equal width*height*3");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  std::uint8_t& at(int x, int y, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  std::span<std::uint8_t> data() noexcept { return data_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Binary raster with samples in {0,1}.
class GrayMask {
public:
  GrayMask() = default;

  GrayMask(int width, int height, std::uint8_t fill = 0) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw InvalidArgument("mask dimensions must be >= 1");
    if (fill > 1) throw InvalidArgument("mask samples must be 0 or 1");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  GrayMask(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1) throw InvalidArgument("mask dimensions must be >= 1");
    if (data_.size() != static_cast<std::size_t>(width) * height)
      throw DimensionMismatch("mask data length does not equal width*height");
    if (std::any_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v > 1; }))
      throw InvalidArgument("mask samples must be 0 or 1");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::uint8_t& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<std::uint8_t> data() noexcept { return data_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
  }

  bool same_shape(const GrayMask& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_;
  }

  friend bool operator==(const GrayMask&, const GrayMask&) = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Per-channel inclusive bounds [low, high].
struct ThresholdPair {
  std::array<int, 3> low{0, 0, 0};
  std::array<int, 3> high{255, 255, 255};

  void validate() const {
    for (int c = 0; c < 3; ++c) {
      if (low[c] > high[c]) throw InvalidArgument("threshold low must not exceed high");
    }
  }

  // Luminance projections used as scalar hysteresis thresholds.
  double low_luma() const { return (low[0] + low[1] + low[2]) / 3.0; }
  double high_luma() const { return (high[0] + high[1] + high[2]) / 3.0; }
};

inline double mean_luminance(const ImageBuffer& img) {
  double sum = 0.0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      sum += 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
  return sum / static_cast<double>(img.pixel_count());
}

// Mask as an RGB image with 0/255 samples in all channels.
inline ImageBuffer mask_to_image(const GrayMask& m) {
  ImageBuffer out(m.width(), m.height());
  auto src = m.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const std::uint8_t v = src[i] ? 255 : 0;
    dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = v;
  }
  return out;
}

}  // namespace lanegen
