#pragma once

#include <optional>
#include <string>

#include "lanegen/annotation.hpp"
#include "lanegen/category.hpp"
#include "lanegen/control_fusion.hpp"
#include "lanegen/diffusion.hpp"

namespace lanegen {

// Per-category prompts and the Stage-II switch. Stage II (appearance
// refinement) only runs for night and dusk; snow, rain and fog keep the
// Stage-I latent as final.
struct CategoryRecipe {
  Category category = Category::normal;
  std::string positive_prompt;
  std::string negative_prompt;
  bool stage2_enabled = false;
  std::string stage2_prompt;

  static bool stage2_for(Category c) { return c == Category::night || c == Category::dusk; }

  void validate() const {
    if (stage2_enabled != stage2_for(category))
      throw InvalidArgument("recipe '" + std::string(category_name(category)) +
                            "': stage 2 must be enabled exactly for night and dusk");
    if (split_whitespace(positive_prompt).empty())
      throw InvalidArgument("recipe '" + std::string(category_name(category)) + "': empty positive prompt");
    if (stage2_enabled && split_whitespace(stage2_prompt).empty())
      throw InvalidArgument("recipe '" + std::string(category_name(category)) + "': empty stage 2 prompt");
  }

  // Placeholder prompts; real ones belong in the run config.
  static CategoryRecipe defaults(Category c) {
    CategoryRecipe r;
    r.category = c;
    r.negative_prompt = "blurry distorted lane markings, cartoon, low quality";
    r.stage2_enabled = stage2_for(c);
    switch (c) {
      case Category::normal: r.positive_prompt = "clear daytime highway, photorealistic dashcam view"; break;
      case Category::snow: r.positive_prompt = "snowy highway, falling snow, photorealistic dashcam view"; break;
      case Category::rain: r.positive_prompt = "rainy highway, wet road, rain streaks, photorealistic dashcam view"; break;
      case Category::fog: r.positive_prompt = "foggy highway, dense haze, photorealistic dashcam view"; break;
      case Category::night:
        r.positive_prompt = "highway road scene, photorealistic dashcam view";
        r.stage2_prompt = "make it night time, street lights";
        break;
      case Category::dusk:
        r.positive_prompt = "highway road scene, photorealistic dashcam view";
        r.stage2_prompt = "make it dusk, orange evening sky";
        break;
    }
    return r;
  }
};

// Desk-scale model sizes and Stage-II settings.
struct PipelineParams {
  int patch = 8;
  int prompt_dim = 16;
  double stage2_denoise = 0.5;
  double stage2_strength = 1.0;
  std::optional<int> stage2_steps;        // defaults to the Stage-I step count
  std::optional<double> stage2_cfg_scale;  // defaults to the Stage-I scale

  LatentCodec codec() const { return LatentCodec{patch}; }

  SamplerConfig stage2_config(const SamplerConfig& s1) const {
    SamplerConfig s2 = s1;
    if (stage2_steps) s2.steps = *stage2_steps;
    if (stage2_cfg_scale) s2.cfg_scale = *stage2_cfg_scale;
    s2.denoise = stage2_denoise;
    s2.control_strength = stage2_strength;
    return s2;
  }
};

// Named noise streams derived from the run seed.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view stream) { return mix_seed(seed, fnv1a64(stream)); }

// Stage I: encode x0 and C0, diffuse z0 to the last step of the schedule
// and run control-conditioned Euler sampling back to sigma = 0. The start
// is z_T / sqrt(alpha_bar_T) = z0 + sigma_T n (variance-exploding scale).
inline Latent run_stage1(const ImageBuffer& img, const ControlMap& cmap, const CategoryRecipe& recipe,
                         const SamplerConfig& cfg, const PipelineParams& params = {}) {
  cfg.validate();
  if (img.width() != cmap.mask.width() || img.height() != cmap.mask.height())
    throw DimensionMismatch("stage 1: image and control map dimensions differ");
  const auto codec = params.codec();
  const Latent z0 = codec.encode(img);
  const Latent c0 = codec.encode(cmap);
  const auto sched = NoiseSchedule::for_sampler(cfg);
  const Latent noise = gaussian_latent(z0.h(), z0.w(), z0.d(), stream_seed(cfg.seed, "stage1"));
  Latent z_init = forward_diffuse(z0, sched.steps(), sched, noise);
  z_init.matrix() /= std::sqrt(sched.alpha_bar.back());
  const auto e = encode_prompt(recipe.positive_prompt, recipe.negative_prompt, params.prompt_dim);
  return sample_stage(z_init, c0, e, cfg, StageModels::structure(codec.channels(), params.prompt_dim));
}

// Stage II: identity unless the recipe enables it. Otherwise z1 is
// re-noised to the head of a partial ladder and refined by the appearance
// networks with z0 as their control input.
inline Latent run_stage2(const Latent& z1, const Latent& z0, const CategoryRecipe& recipe, const SamplerConfig& cfg,
                         const PipelineParams& params = {}) {
  if (!z1.same_shape(z0)) throw DimensionMismatch("stage 2: latent shapes differ");
  if (!recipe.stage2_enabled) return z1;
  const SamplerConfig cfg2 = params.stage2_config(cfg);
  cfg2.validate();
  const auto sigmas = stage_sigmas(cfg2);
  const Latent noise = gaussian_latent(z1.h(), z1.w(), z1.d(), stream_seed(cfg.seed, "stage2"));
  Latent start = z1;
  start.matrix() += sigmas.front() * noise.matrix();
  const auto e = encode_prompt(recipe.stage2_prompt, recipe.negative_prompt, params.prompt_dim);
  return sample_stage(start, z0, e, cfg2, StageModels::appearance(z1.d(), params.prompt_dim));
}

// Edge-replicating pad to multiples of `p` and the matching crop.
inline ImageBuffer pad_to_multiple(const ImageBuffer& img, int p) {
  const int w = (img.width() + p - 1) / p * p, h = (img.height() + p - 1) / p * p;
  if (w == img.width() && h == img.height()) return img;
  ImageBuffer out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(std::min(x, img.width() - 1), std::min(y, img.height() - 1), c);
  return out;
}

inline GrayMask pad_to_multiple(const GrayMask& m, int p) {
  const int w = (m.width() + p - 1) / p * p, h = (m.height() + p - 1) / p * p;
  if (w == m.width() && h == m.height()) return m;
  GrayMask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = m.at(std::min(x, m.width() - 1), std::min(y, m.height() - 1));
  return out;
}

inline ImageBuffer crop(const ImageBuffer& img, int w, int h) {
  if (w == img.width() && h == img.height()) return img;
  ImageBuffer out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, c);
  return out;
}

// Everything a backend needs for one image.
struct GenerateRequest {
  ImageBuffer image;
  ControlMap control;
  LaneAnnotation annotation;
  CategoryRecipe recipe;
  SamplerConfig sampler;
};

class Backend {
public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  // Must be safe to call concurrently.
  virtual ImageBuffer generate(const GenerateRequest& req) const = 0;
};

// In-process desk-scale diffusion: stage 1, stage 2, decode.
inline ImageBuffer run_toy_pipeline(const ImageBuffer& img, const ControlMap& cmap, const CategoryRecipe& recipe,
                                    const SamplerConfig& cfg, const PipelineParams& params = {}) {
  recipe.validate();
  const ImageBuffer padded = pad_to_multiple(img, params.patch);
  const ControlMap padded_map{pad_to_multiple(cmap.mask, params.patch)};
  const Latent z1 = run_stage1(padded, padded_map, recipe, cfg, params);
  const Latent z0 = params.codec().encode(padded);
  const Latent zf = run_stage2(z1, z0, recipe, cfg, params);
  return crop(params.codec().decode(zf), img.width(), img.height());
}

class ToyBackend final : public Backend {
public:
  explicit ToyBackend(PipelineParams params = {}) : params_(params) {}
  std::string id() const override { return "toy"; }
  ImageBuffer generate(const GenerateRequest& req) const override {
    return run_toy_pipeline(req.image, req.control, req.recipe, req.sampler, params_);
  }
  const PipelineParams& params() const { return params_; }

private:
  PipelineParams params_;
};

}  // namespace lanegen
