#pragma once

#include <Eigen/Core>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "lanegen/error.hpp"

namespace lanegen {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Real tensor of shape (h, w, d), row-major with channels innermost.
class Latent {
public:
  Latent() = default;

  Latent(int h, int w, int d, double fill = 0.0) : h_(h), w_(w), d_(d) {
    if (h < 1 || w < 1 || d < 1) throw InvalidArgument("latent dimensions must be >= 1");
    data_.assign(static_cast<std::size_t>(h) * w * d, fill);
  }

  Latent(int h, int w, int d, std::vector<double> data) : h_(h), w_(w), d_(d), data_(std::move(data)) {
    if (h < 1 || w < 1 || d < 1) throw InvalidArgument("latent dimensions must be >= 1");
    if (data_.size() != static_cast<std::size_t>(h) * w * d) throw DimensionMismatch("latent data length mismatch");
  }

  int h() const noexcept { return h_; }
  int w() const noexcept { return w_; }
  int d() const noexcept { return d_; }
  int positions() const noexcept { return h_ * w_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(int y, int x, int c) { return data_[(static_cast<std::size_t>(y) * w_ + x) * d_ + c]; }
  double at(int y, int x, int c) const { return data_[(static_cast<std::size_t>(y) * w_ + x) * d_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const Latent& o) const noexcept { return h_ == o.h_ && w_ == o.w_ && d_ == o.d_; }

  // View as a (h*w) x d matrix: one row per spatial position.
  Eigen::Map<RowMatrix> matrix() { return {data_.data(), positions(), d_}; }
  Eigen::Map<const RowMatrix> matrix() const { return {data_.data(), positions(), d_}; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const Latent&, const Latent&) = default;

private:
  int h_ = 0, w_ = 0, d_ = 0;
  std::vector<double> data_;
};

inline Latent latent_from_matrix(int h, int w, const RowMatrix& m) {
  Latent out(h, w, static_cast<int>(m.cols()));
  out.matrix() = m;
  return out;
}

// Binary container, all fields little-endian:
//   "LGLT" | u32 version(=1) | u32 h | u32 w | u32 d | f64 values[h*w*d]
inline std::vector<std::uint8_t> serialize_latent(const Latent& z) {
  std::vector<std::uint8_t> out;
  out.reserve(20 + 8 * z.size());
  out.insert(out.end(), {'L', 'G', 'L', 'T'});
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put_u32(1);
  put_u32(static_cast<std::uint32_t>(z.h()));
  put_u32(static_cast<std::uint32_t>(z.w()));
  put_u32(static_cast<std::uint32_t>(z.d()));
  for (double v : z.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

inline Latent deserialize_latent(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), "LGLT", 4) != 0) throw ParseError("not a latent container");
  auto get_u32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[off + i]) << (8 * i);
    return v;
  };
  if (get_u32(4) != 1) throw ParseError("unsupported latent container version");
  const std::uint32_t h = get_u32(8), w = get_u32(12), d = get_u32(16);
  const std::uint64_t n = static_cast<std::uint64_t>(h) * w * d;
  if (n == 0 || bytes.size() != 20 + 8 * n) throw ParseError("latent container size does not match header");
  std::vector<double> values(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[20 + 8 * k + i]) << (8 * i);
    values[k] = std::bit_cast<double>(bits);
  }
  return Latent(static_cast<int>(h), static_cast<int>(w), static_cast<int>(d), std::move(values));
}

}  // namespace lanegen
