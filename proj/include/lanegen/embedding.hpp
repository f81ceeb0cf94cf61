#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "lanegen/error.hpp"
#include "lanegen/image.hpp"
#include "lanegen/latent.hpp"
#include "lanegen/rng.hpp"

namespace lanegen {

struct EmbeddingStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::size_t n = 0;

  Eigen::Index dim() const { return mu.size(); }
};

// Sample mean and unbiased covariance (n - 1 divisor), symmetrized.
inline EmbeddingStats embedding_stats(const std::vector<std::vector<double>>& vectors) {
  if (vectors.size() < 2) throw InvalidArgument("embedding stats need at least 2 vectors");
  const auto d = static_cast<Eigen::Index>(vectors.front().size());
  if (d == 0) throw InvalidArgument("embedding vectors are empty");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(vectors.size()), d);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (static_cast<Eigen::Index>(vectors[i].size()) != d)
      throw DimensionMismatch("embedding vector " + std::to_string(i) + " has a different dimension");
    x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(vectors[i].data(), d);
  }
  EmbeddingStats s;
  s.n = vectors.size();
  s.mu = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - s.mu.transpose();
  s.sigma = (c.transpose() * c) / static_cast<double>(s.n - 1);
  s.sigma = 0.5 * (s.sigma + s.sigma.transpose()).eval();
  return s;
}

namespace detail {

inline double psd_tolerance(const Eigen::MatrixXd& m) { return 1e-9 * std::max(1.0, m.diagonal().cwiseAbs().sum()); }

// Square roots of eigenvalues. Values below -tol are an error; values
// within round-off of zero (relative to the largest) are taken as exactly
// zero, since sqrt would inflate 1e-16 noise to 1e-8.
inline Eigen::VectorXd sqrt_eigenvalues(Eigen::VectorXd ev, double tol, const char* what) {
  const double cutoff = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 0.0) * static_cast<double>(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol) throw InvalidArgument(std::string(what) + " is not positive semidefinite");
    ev[i] = ev[i] <= cutoff ? 0.0 : std::sqrt(ev[i]);
  }
  return ev;
}

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw Error(std::string("eigendecomposition failed for ") + what);
  const Eigen::VectorXd ev = sqrt_eigenvalues(es.eigenvalues(), psd_tolerance(m), what);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
// Tr (S_a S_b)^(1/2) is evaluated as Tr (A S_b A)^(1/2) with A = S_a^(1/2):
// the two matrices are similar, and the latter is symmetric PSD.
inline double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b) {
  if (a.dim() != b.dim() || a.sigma.rows() != a.dim() || b.sigma.rows() != b.dim())
    throw DimensionMismatch("frechet distance: dimension mismatch");
  const Eigen::MatrixXd ra = detail::psd_sqrt(a.sigma, "first covariance");
  detail::psd_sqrt(b.sigma, "second covariance");  // PSD check only
  const Eigen::MatrixXd prod = ra * b.sigma * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (prod + prod.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("eigendecomposition failed for covariance product");
  const double tr_sqrt =
      detail::sqrt_eigenvalues(es.eigenvalues(), detail::psd_tolerance(prod), "covariance product").sum();
  const double d = (a.mu - b.mu).squaredNorm() + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_sqrt;
  const double eps = 1e-6 * std::max(1.0, a.sigma.trace() + b.sigma.trace());
  if (d < -eps) throw Error("frechet distance is negative beyond tolerance");
  return std::max(d, 0.0);
}

using Embedder = std::function<std::vector<double>(const ImageBuffer&)>;

// Built-in feature: 8x8 grid of cell means per channel (192 values in
// [0, 1]), then a fixed seeded Gaussian projection to 64 dimensions.
class PoolProjectEmbedder {
public:
  static constexpr int kGrid = 8;
  static constexpr int kPooled = kGrid * kGrid * 3;
  static constexpr int kDim = 64;
  static constexpr std::uint64_t kSeed = 0xF1D0F1D0ull;

  PoolProjectEmbedder() : proj_(kPooled, kDim) {
    StableRng rng(kSeed);
    for (Eigen::Index r = 0; r < proj_.rows(); ++r)
      for (Eigen::Index c = 0; c < proj_.cols(); ++c) proj_(r, c) = rng.normal() / std::sqrt(double(kPooled));
  }

  static std::vector<double> pool(const ImageBuffer& img) {
    if (img.width() < kGrid || img.height() < kGrid) throw InvalidArgument("embedder needs images of at least 8x8");
    std::vector<double> out(kPooled, 0.0);
    for (int gy = 0; gy < kGrid; ++gy) {
      const int y0 = gy * img.height() / kGrid, y1 = (gy + 1) * img.height() / kGrid;
      for (int gx = 0; gx < kGrid; ++gx) {
        const int x0 = gx * img.width() / kGrid, x1 = (gx + 1) * img.width() / kGrid;
        double sum[3] = {0, 0, 0};
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x)
            for (int c = 0; c < 3; ++c) sum[c] += img.at(x, y, c);
        const double area = double(x1 - x0) * double(y1 - y0) * 255.0;
        for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>((gy * kGrid + gx) * 3 + c)] = sum[c] / area;
      }
    }
    return out;
  }

  std::vector<double> operator()(const ImageBuffer& img) const {
    const auto p = pool(img);
    const Eigen::RowVectorXd v = Eigen::Map<const Eigen::RowVectorXd>(p.data(), kPooled) * proj_;
    return {v.data(), v.data() + v.size()};
  }

private:
  RowMatrix proj_;
};

inline EmbeddingStats image_set_stats(const std::vector<ImageBuffer>& images, const Embedder& embed) {
  std::vector<std::vector<double>> v;
  v.reserve(images.size());
  for (const auto& img : images) v.push_back(embed(img));
  return embedding_stats(v);
}

}  // namespace lanegen
