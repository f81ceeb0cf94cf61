#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cctype>
#include <numbers>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lanegen/control_fusion.hpp"
#include "lanegen/error.hpp"
#include "lanegen/image.hpp"
#include "lanegen/latent.hpp"
#include "lanegen/rng.hpp"

namespace lanegen {

inline bool bit_equal(const Latent& a, const Latent& b) {
  return a.same_shape(b) && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------------------
// Codec

// Exactly invertible space-to-depth codec standing in for the VAE.
// (H, W, 3) -> (H/p, W/p, 3p^2); channel index (dy*p + dx)*3 + c;
// value = sample/127.5 - 1, so 0 -> -1 and 255 -> +1.
struct LatentCodec {
  int patch = 8;

  static constexpr double kScale = 127.5;
  static constexpr double kOffset = -1.0;

  int channels() const { return 3 * patch * patch; }

  Latent encode(const ImageBuffer& img) const {
    if (patch < 1) throw InvalidArgument("codec patch factor must be >= 1");
    if (img.width() % patch != 0 || img.height() % patch != 0)
      throw InvalidArgument("image dimensions " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                            " are not divisible by patch factor " + std::to_string(patch));
    Latent z(img.height() / patch, img.width() / patch, channels());
    for (int ly = 0; ly < z.h(); ++ly)
      for (int lx = 0; lx < z.w(); ++lx)
        for (int dy = 0; dy < patch; ++dy)
          for (int dx = 0; dx < patch; ++dx)
            for (int c = 0; c < 3; ++c)
              z.at(ly, lx, (dy * patch + dx) * 3 + c) =
                  img.at(lx * patch + dx, ly * patch + dy, c) / kScale + kOffset;
    return z;
  }

  Latent encode(const ControlMap& cmap) const { return encode(mask_to_image(cmap.mask)); }

  ImageBuffer decode(const Latent& z) const {
    if (z.d() != channels())
      throw DimensionMismatch("latent has " + std::to_string(z.d()) + " channels, codec expects " +
                              std::to_string(channels()));
    ImageBuffer img(z.w() * patch, z.h() * patch);
    for (int ly = 0; ly < z.h(); ++ly)
      for (int lx = 0; lx < z.w(); ++lx)
        for (int dy = 0; dy < patch; ++dy)
          for (int dx = 0; dx < patch; ++dx)
            for (int c = 0; c < 3; ++c) {
              const double v = (z.at(ly, lx, (dy * patch + dx) * 3 + c) - kOffset) * kScale;
              const double r = std::isfinite(v) ? std::round(v) : 0.0;
              img.at(lx * patch + dx, ly * patch + dy, c) = static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
            }
    return img;
  }
};

// ---------------------------------------------------------------------------
// Schedules

struct SamplerConfig {
  int steps = 30;
  double cfg_scale = 6.0;
  double rho = 7.0;
  double sigma_min = 0.0292;
  double sigma_max = 14.6146;
  std::uint64_t seed = 0;
  double control_strength = 1.0;
  // Fraction of the ladder actually traversed (1 = full denoise from sigma_max).
  double denoise = 1.0;

  void validate() const {
    if (steps < 1) throw InvalidArgument("sampler steps must be >= 1");
    if (steps > 1000) throw InvalidArgument("sampler steps must be <= 1000");
    if (!(cfg_scale >= 0.0) || !std::isfinite(cfg_scale)) throw InvalidArgument("cfg_scale must be finite and >= 0");
    if (!(rho > 0.0)) throw InvalidArgument("rho must be > 0");
    if (!(sigma_min > 0.0) || !(sigma_min < sigma_max) || !std::isfinite(sigma_max))
      throw InvalidArgument("sigma bounds must satisfy 0 < sigma_min < sigma_max");
    if (!(denoise > 0.0 && denoise <= 1.0)) throw InvalidArgument("denoise must lie in (0, 1]");
    if (!std::isfinite(control_strength)) throw InvalidArgument("control_strength must be finite");
  }
};

// sigma_i = (smax^(1/rho) + i/(T-1) (smin^(1/rho) - smax^(1/rho)))^rho, i < T; sigma_T = 0.
inline std::vector<double> karras_sigmas(int steps, double sigma_min, double sigma_max, double rho) {
  if (steps < 1) throw InvalidArgument("karras ladder needs steps >= 1");
  if (!(sigma_min > 0.0) || !(sigma_min < sigma_max) || !(rho > 0.0))
    throw InvalidArgument("karras ladder needs 0 < sigma_min < sigma_max and rho > 0");
  std::vector<double> s(static_cast<std::size_t>(steps) + 1, 0.0);
  s[0] = sigma_max;
  if (steps > 1) {
    const double a = std::pow(sigma_max, 1.0 / rho), b = std::pow(sigma_min, 1.0 / rho);
    for (int i = 1; i < steps - 1; ++i) s[i] = std::pow(a + (static_cast<double>(i) / (steps - 1)) * (b - a), rho);
    s[steps - 1] = sigma_min;
  }
  return s;
}

inline std::vector<double> karras_sigmas(const SamplerConfig& cfg) {
  return karras_sigmas(cfg.steps, cfg.sigma_min, cfg.sigma_max, cfg.rho);
}

// Tail of a longer ladder when denoise < 1, so the trajectory starts part-way down.
inline std::vector<double> stage_sigmas(const SamplerConfig& cfg) {
  cfg.validate();
  const int total = std::max(cfg.steps, static_cast<int>(std::ceil(cfg.steps / cfg.denoise - 1e-9)));
  auto full = karras_sigmas(total, cfg.sigma_min, cfg.sigma_max, cfg.rho);
  return {full.end() - (cfg.steps + 1), full.end()};
}

inline constexpr int kReferenceTimesteps = 1000;

// Cumulative products of the scaled-linear beta schedule
// beta_i = (sqrt(0.00085) + i/999 (sqrt(0.012) - sqrt(0.00085)))^2, i = 0..999.
inline std::vector<double> reference_alpha_bar() {
  std::vector<double> ab(kReferenceTimesteps);
  const double b0 = std::sqrt(0.00085), b1 = std::sqrt(0.012);
  double prod = 1.0;
  for (int i = 0; i < kReferenceTimesteps; ++i) {
    const double s = b0 + (b1 - b0) * i / (kReferenceTimesteps - 1);
    prod *= 1.0 - s * s;
    ab[i] = prod;
  }
  return ab;
}

// sigma = sqrt((1 - abar) / abar): the noise level of z_t / sqrt(abar).
inline double sigma_from_alpha_bar(double alpha_bar) { return std::sqrt((1.0 - alpha_bar) / alpha_bar); }

inline double alpha_bar_from_sigma(double sigma) { return 1.0 / (1.0 + sigma * sigma); }

struct NoiseSchedule {
  std::vector<double> alpha_bar;  // index t-1 holds abar_t, t = 1..T
  std::vector<double> sigmas;     // Karras ladder, T+1 entries ending in 0

  int steps() const { return static_cast<int>(alpha_bar.size()); }

  void validate() const {
    if (alpha_bar.empty()) throw InvalidArgument("schedule needs at least one step");
    for (std::size_t i = 0; i < alpha_bar.size(); ++i) {
      if (!(alpha_bar[i] > 0.0 && alpha_bar[i] <= 1.0)) throw InvalidArgument("alpha_bar must lie in (0, 1]");
      if (i > 0 && !(alpha_bar[i] < alpha_bar[i - 1])) throw InvalidArgument("alpha_bar must be strictly decreasing");
    }
    if (!sigmas.empty()) {
      if (sigmas.back() != 0.0) throw InvalidArgument("sigma ladder must end at 0");
      for (std::size_t i = 1; i < sigmas.size(); ++i)
        if (!(sigmas[i] < sigmas[i - 1])) throw InvalidArgument("sigma ladder must be strictly decreasing");
    }
  }

  // Reference schedule resampled to cfg.steps: abar_t = ref[ceil(t*1000/T) - 1].
  static NoiseSchedule for_sampler(const SamplerConfig& cfg) {
    cfg.validate();
    const auto ref = reference_alpha_bar();
    NoiseSchedule s;
    const int T = cfg.steps;
    for (int t = 1; t <= T; ++t) {
      const int idx = (t * kReferenceTimesteps + T - 1) / T - 1;
      s.alpha_bar.push_back(ref[static_cast<std::size_t>(idx)]);
    }
    s.sigmas = karras_sigmas(cfg);
    s.validate();
    return s;
  }
};

// ---------------------------------------------------------------------------
// Noise and forward process

// Standard-normal latent from StableRng(seed), filled in storage order.
inline Latent gaussian_latent(int h, int w, int d, std::uint64_t seed) {
  StableRng rng(seed);
  Latent z(h, w, d);
  for (double& v : z.data()) v = rng.normal();
  return z;
}

inline Latent forward_diffuse_at(const Latent& z0, double alpha_bar, const Latent& noise) {
  if (!z0.same_shape(noise)) throw DimensionMismatch("noise shape differs from z0");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw InvalidArgument("alpha_bar must lie in [0, 1]");
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  Latent out(z0.h(), z0.w(), z0.d());
  auto o = out.data();
  auto x = z0.data();
  auto n = noise.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * x[i] + b * n[i];
  return out;
}

// sqrt(abar_t) z0 + sqrt(1 - abar_t) noise, t in 1..T.
inline Latent forward_diffuse(const Latent& z0, int t, const NoiseSchedule& sched, const Latent& noise) {
  if (t < 1 || t > sched.steps())
    throw InvalidArgument("timestep " + std::to_string(t) + " outside 1.." + std::to_string(sched.steps()));
  return forward_diffuse_at(z0, sched.alpha_bar[static_cast<std::size_t>(t - 1)], noise);
}

// ---------------------------------------------------------------------------
// Prompt encoding

struct PromptEmbedding {
  RowMatrix positive;                 // n x c, n >= 1
  std::optional<RowMatrix> negative;  // absent for an empty negative prompt

  int dim() const { return static_cast<int>(positive.cols()); }
};

inline constexpr std::uint64_t kPromptSalt = 0x4C414E4547454E31ull;  // "LANEGEN1"

// Token -> R^dim: s = fnv1a64(token) ^ kPromptSalt; component j is the
// Box-Muller cosine branch of u1 = ((splitmix64(s + 2j) >> 11) + 1) 2^-53,
// u2 = (splitmix64(s + 2j + 1) >> 11) 2^-53.
inline std::vector<double> token_vector(std::string_view token, int dim) {
  const std::uint64_t s = fnv1a64(token) ^ kPromptSalt;
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j) {
    const std::uint64_t a = splitmix64(s + 2 * static_cast<std::uint64_t>(j));
    const std::uint64_t b = splitmix64(s + 2 * static_cast<std::uint64_t>(j) + 1);
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    v[static_cast<std::size_t>(j)] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  return v;
}

inline std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

inline RowMatrix embed_tokens(std::string_view text, int dim) {
  const auto tokens = split_whitespace(text);
  RowMatrix m(static_cast<Eigen::Index>(tokens.size()), dim);
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    const auto v = token_vector(tokens[r], dim);
    for (int c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), c) = v[static_cast<std::size_t>(c)];
  }
  return m;
}

inline PromptEmbedding encode_prompt(std::string_view prompt, std::string_view negative, int dim) {
  if (dim < 1) throw InvalidArgument("prompt embedding dimension must be >= 1");
  if (split_whitespace(prompt).empty()) throw InvalidArgument("positive prompt is empty");
  PromptEmbedding e;
  e.positive = embed_tokens(prompt, dim);
  if (!split_whitespace(negative).empty()) e.negative = embed_tokens(negative, dim);
  return e;
}

// ---------------------------------------------------------------------------
// Cross-attention

struct AttentionParams {
  RowMatrix wq;  // c_z x d
  RowMatrix wk;  // c_e x d
  RowMatrix wv;  // c_e x d
};

// Row-wise softmax, shifted by each row's max.
inline RowMatrix softmax_rows(RowMatrix logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - mx).exp();
    logits.row(r) /= logits.row(r).sum();
  }
  return logits;
}

// Softmax(Q K^T / sqrt(d)) V with Q = z W^Q, K = e W^K, V = e W^V.
inline RowMatrix cross_attention(const RowMatrix& z_feat, const RowMatrix& e, const AttentionParams& p) {
  if (z_feat.cols() != p.wq.rows()) throw DimensionMismatch("cross_attention: z_feat cols != W^Q rows");
  if (e.cols() != p.wk.rows() || e.cols() != p.wv.rows())
    throw DimensionMismatch("cross_attention: embedding cols != W^K/W^V rows");
  if (p.wq.cols() != p.wk.cols() || p.wq.cols() != p.wv.cols())
    throw DimensionMismatch("cross_attention: projections disagree on d");
  if (e.rows() < 1) throw DimensionMismatch("cross_attention: embedding has no tokens");
  const double d = static_cast<double>(p.wq.cols());
  const RowMatrix k = e * p.wk;
  const RowMatrix v = e * p.wv;
  // Q K^T = z (W^Q K^T): the token count is small, so fold it in first.
  const RowMatrix wq_kt = p.wq * k.transpose();
  return softmax_rows((z_feat * wq_kt) / std::sqrt(d)) * v;
}

// ---------------------------------------------------------------------------
// Frozen stub networks

// Seeded N(0,1) matrix drawn in row-major order from StableRng(seed).
inline RowMatrix seeded_matrix(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols) {
  StableRng rng(seed);
  RowMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

// Residuals injected into the denoiser, one tensor per injection site.
struct ControlFeatures {
  std::vector<Latent> residuals;
};

// Control adapter stand-in: residual = strength * c0 W per position,
// W = 0.8 I + 0.2 G / sqrt(D), G ~ seeded N(0,1). Linear in c0.
class ControlAdapterStub {
public:
  ControlAdapterStub(std::uint64_t seed, int channels) {
    const RowMatrix g = seeded_matrix(seed, channels, channels);
    weight_ = 0.8 * RowMatrix::Identity(channels, channels) + (0.2 / std::sqrt(static_cast<double>(channels))) * g;
  }

  // zt only fixes the expected shape; the stub's residual does not depend on its values.
  ControlFeatures features(const Latent& c0, const Latent& zt, double strength) const {
    if (!c0.same_shape(zt)) throw DimensionMismatch("control features: c0 and z_t shapes differ");
    if (c0.d() != weight_.rows()) throw DimensionMismatch("control features: channel count mismatch");
    Latent r(c0.h(), c0.w(), c0.d());
    if (strength != 0.0) r.matrix() = strength * (c0.matrix() * weight_);
    return {{std::move(r)}};
  }

  const RowMatrix& weight() const { return weight_; }

private:
  RowMatrix weight_;
};

// Denoiser stand-in. For noise level sigma:
//   z_in  = z / sqrt(sigma^2 + 1)
//   h     = z_in A + Attn(z_in, e) + sum(residuals) + b
//   eps   = sigma (z - h) / (sigma^2 + 1)
// which is the eps of the denoised estimate x0 = (z + sigma^2 h)/(sigma^2 + 1).
// A = G_A * 0.5/||G_A||_F (operator norm <= 0.5), W^Q = G/sqrt(D),
// W^K = G/sqrt(c), W^V = 0.5 G/sqrt(c), b = 0.1 G. Without a prompt the
// attention term is zero.
class DenoiserStub {
public:
  DenoiserStub(std::uint64_t seed, int channels, int prompt_dim) : channels_(channels), prompt_dim_(prompt_dim) {
    const RowMatrix ga = seeded_matrix(mix_seed(seed, 1), channels, channels);
    mixing_ = ga * (0.5 / ga.norm());
    attn_.wq = seeded_matrix(mix_seed(seed, 2), channels, channels) / std::sqrt(static_cast<double>(channels));
    attn_.wk = seeded_matrix(mix_seed(seed, 3), prompt_dim, channels) / std::sqrt(static_cast<double>(prompt_dim));
    attn_.wv = seeded_matrix(mix_seed(seed, 4), prompt_dim, channels) * (0.5 / std::sqrt(static_cast<double>(prompt_dim)));
    bias_ = seeded_matrix(mix_seed(seed, 5), 1, channels) * 0.1;
  }

  int channels() const { return channels_; }
  int prompt_dim() const { return prompt_dim_; }
  const AttentionParams& attention() const { return attn_; }

  Latent operator()(const Latent& z, double sigma, const RowMatrix* prompt, const ControlFeatures& fc) const {
    if (z.d() != channels_) throw DimensionMismatch("denoiser: latent channel count mismatch");
    if (prompt && prompt->cols() != prompt_dim_) throw DimensionMismatch("denoiser: prompt dimension mismatch");
    const double s2 = sigma * sigma;
    const RowMatrix z_in = z.matrix() / std::sqrt(s2 + 1.0);
    RowMatrix h = z_in * mixing_;
    if (prompt) h += cross_attention(z_in, *prompt, attn_);
    for (const auto& r : fc.residuals) {
      if (!r.same_shape(z)) throw DimensionMismatch("denoiser: control residual shape mismatch");
      h += r.matrix();
    }
    h.rowwise() += bias_.row(0);
    Latent eps(z.h(), z.w(), z.d());
    eps.matrix() = (sigma / (s2 + 1.0)) * (z.matrix() - h);
    return eps;
  }

private:
  int channels_;
  int prompt_dim_;
  RowMatrix mixing_;
  AttentionParams attn_;
  RowMatrix bias_;
};

// One stage's frozen networks.
struct StageModels {
  DenoiserStub denoiser;
  ControlAdapterStub control;

  static constexpr std::uint64_t kStructureSeed = 0x5EED0001;
  static constexpr std::uint64_t kAppearanceSeed = 0x5EED0002;

  static StageModels structure(int channels, int prompt_dim) {
    return {DenoiserStub(kStructureSeed, channels, prompt_dim), ControlAdapterStub(mix_seed(kStructureSeed, 99), channels)};
  }
  static StageModels appearance(int channels, int prompt_dim) {
    return {DenoiserStub(kAppearanceSeed, channels, prompt_dim), ControlAdapterStub(mix_seed(kAppearanceSeed, 99), channels)};
  }
};

// ---------------------------------------------------------------------------
// Guidance and sampling

// eps_u + s (eps_c - eps_u).
inline Latent guide(const Latent& eps_cond, const Latent& eps_uncond, double scale) {
  if (!eps_cond.same_shape(eps_uncond)) throw DimensionMismatch("guidance: shape mismatch");
  Latent out(eps_cond.h(), eps_cond.w(), eps_cond.d());
  out.matrix() = eps_uncond.matrix() + scale * (eps_cond.matrix() - eps_uncond.matrix());
  return out;
}

// Classifier-free guided noise prediction. The conditional branch sees the
// positive prompt, the unconditional branch the negative prompt (or none);
// both receive the same control residuals. s = 1 and s = 0 return the
// respective branch unchanged.
inline Latent predict_noise(const DenoiserStub& unet, const Latent& zt, double sigma, const PromptEmbedding& e,
                            const ControlFeatures& fc, double cfg_scale) {
  const RowMatrix* neg = e.negative ? &*e.negative : nullptr;
  if (cfg_scale == 0.0) return unet(zt, sigma, neg, fc);
  Latent cond = unet(zt, sigma, &e.positive, fc);
  if (cfg_scale == 1.0) return cond;
  return guide(cond, unet(zt, sigma, neg, fc), cfg_scale);
}

using EpsFn = std::function<Latent(const Latent& z, double sigma, std::size_t step)>;

// Euler over a sigma ladder: x0 = z - sigma eps, d = (z - x0)/sigma,
// z <- z + (sigma_next - sigma) d. Returns the latent at the last sigma.
inline Latent euler_sample(const Latent& z_init, const std::vector<double>& sigmas, const EpsFn& eps_fn) {
  if (sigmas.size() < 2) throw InvalidArgument("sigma ladder needs at least two entries");
  if (!z_init.all_finite()) throw NonFiniteError(0, "initial latent");
  Latent z = z_init;
  for (std::size_t i = 0; i + 1 < sigmas.size(); ++i) {
    const double sigma = sigmas[i];
    const Latent eps = eps_fn(z, sigma, i);
    if (!eps.same_shape(z)) throw DimensionMismatch("noise prediction shape differs from latent");
    const RowMatrix x0 = z.matrix() - sigma * eps.matrix();
    const RowMatrix d = (z.matrix() - x0) / sigma;
    z.matrix() += (sigmas[i + 1] - sigma) * d;
    if (!z.all_finite()) throw NonFiniteError(i, "latent after Euler step");
  }
  return z;
}

// Control- and prompt-conditioned Euler sampling with the given stage networks.
inline Latent sample_stage(const Latent& z_init, const Latent& c0, const PromptEmbedding& e, const SamplerConfig& cfg,
                           const StageModels& models) {
  cfg.validate();
  if (!z_init.same_shape(c0)) throw DimensionMismatch("sample_stage: z_init and c0 shapes differ");
  const auto sigmas = stage_sigmas(cfg);
  return euler_sample(z_init, sigmas, [&](const Latent& z, double sigma, std::size_t) {
    const ControlFeatures fc = models.control.features(c0, z, cfg.control_strength);
    return predict_noise(models.denoiser, z, sigma, e, fc, cfg.cfg_scale);
  });
}

}  // namespace lanegen
