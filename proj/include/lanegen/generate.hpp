#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "lanegen/embedding.hpp"
#include "lanegen/evaluation.hpp"
#include "lanegen/image_io.hpp"
#include "lanegen/pipeline.hpp"
#include "lanegen/procedural.hpp"
#include "lanegen/remote_backend.hpp"

namespace lanegen {

namespace fs = std::filesystem;

// Named backends plus lazily created clients for http:// ids.
class BackendRegistry {
public:
  BackendRegistry() = default;

  static BackendRegistry with_defaults(PipelineParams toy = {}, ProceduralParams procedural = {},
                                       RemoteOptions remote = {}) {
    BackendRegistry r;
    r.add("toy", std::make_shared<ToyBackend>(toy));
    r.add("procedural", std::make_shared<ProceduralBackend>(procedural));
    r.remote_ = remote;
    return r;
  }

  void add(const std::string& id, std::shared_ptr<const Backend> b) {
    std::lock_guard lock(*mu_);
    backends_[id] = std::move(b);
  }

  std::shared_ptr<const Backend> get(const std::string& id) const {
    std::lock_guard lock(*mu_);
    if (auto it = backends_.find(id); it != backends_.end()) return it->second;
    if (id.rfind("http://", 0) == 0) {
      auto b = std::make_shared<RemoteBackend>(id, remote_);
      backends_[id] = b;
      return b;
    }
    throw InvalidArgument("unknown backend '" + id + "' (expected toy, procedural or an http:// URL)");
  }

private:
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
  mutable std::map<std::string, std::shared_ptr<const Backend>> backends_;
  RemoteOptions remote_;
};

struct GenerationJob {
  fs::path image_path;
  fs::path annotation_path;
  CategoryRecipe recipe;
  SamplerConfig sampler;
  std::string backend = "toy";
  fs::path output_path;  // empty: do not write
  FusionParams fusion;
};

struct JobInputs {
  ImageBuffer image;
  LaneAnnotation annotation;
  ControlMap control;
};

inline JobInputs load_job_inputs(const GenerationJob& job) {
  if (!fs::exists(job.annotation_path)) throw IoError("missing annotation: " + job.annotation_path.string());
  JobInputs in;
  in.image = read_image(job.image_path);
  try {
    in.annotation = parse_annotation(read_text_file(job.annotation_path));
  } catch (const ParseError& e) {
    throw ParseError(job.annotation_path.string() + ": " + e.what());
  }
  in.control = build_control_map(in.image, in.annotation, job.fusion);
  return in;
}

inline ImageBuffer generate_from(const JobInputs& in, const GenerationJob& job, const BackendRegistry& registry) {
  GenerateRequest req{in.image, in.control, in.annotation, job.recipe, job.sampler};
  const ImageBuffer out = registry.get(job.backend)->generate(req);
  if (out.width() != in.image.width() || out.height() != in.image.height())
    throw BackendError("malformed_response", "backend '" + job.backend + "' changed image dimensions");
  return out;
}

// Control map, both stages and decode (or the same steps behind a remote
// backend). Writes the result atomically when job.output_path is set.
inline ImageBuffer generate(const GenerationJob& job, const BackendRegistry& registry) {
  const auto in = load_job_inputs(job);
  ImageBuffer out = generate_from(in, job, registry);
  if (!job.output_path.empty()) {
    if (job.output_path.has_parent_path()) fs::create_directories(job.output_path.parent_path());
    write_image(job.output_path, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seed sweep

struct SeedSweepConfig {
  std::vector<std::uint64_t> seeds;  // explicit list; when empty, base + i*stride for i < k
  std::uint64_t base = 0;
  std::uint64_t stride = 1;
  int k = 1;
  double w_f1 = 1.0;
  double w_fid = 1.0;

  std::vector<std::uint64_t> resolved_seeds() const {
    if (!seeds.empty()) return seeds;
    std::vector<std::uint64_t> s;
    for (int i = 0; i < k; ++i) s.push_back(base + static_cast<std::uint64_t>(i) * stride);
    return s;
  }

  void validate() const {
    if (seeds.empty() && k < 1) throw InvalidArgument("sweep: k must be >= 1");
    if (!std::isfinite(w_f1) || !std::isfinite(w_fid)) throw InvalidArgument("sweep: weights must be finite");
    if (w_f1 == 0.0 && w_fid == 0.0) throw InvalidArgument("sweep: weights must not both be zero");
    auto s = resolved_seeds();
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw InvalidArgument("sweep: duplicate seeds");
  }
};

struct SweepScorers {
  // F1@50-style label agreement of a generated image (higher is better).
  std::function<double(const ImageBuffer& out, const ImageBuffer& src, const LaneAnnotation& ann)> f1;
  // Distribution distance to the source (lower is better).
  std::function<double(const ImageBuffer& out, const ImageBuffer& src)> fid;
};

struct SeedScore {
  std::uint64_t seed = 0;
  double f1 = 0.0;
  double fid = 0.0;
  double objective = 0.0;
};

struct SweepReport {
  std::vector<SeedScore> scores;
  std::uint64_t best_seed = 0;
  std::size_t best_index = 0;
};

class SweepError : public Error {
public:
  SweepError(const std::string& what, SweepReport partial) : Error(what), partial_(std::move(partial)) {}
  const SweepReport& partial() const { return partial_; }

private:
  SweepReport partial_;
};

// objective = w_f1 * F1 - w_fid * FID / max FID; ties go to the lowest seed.
inline void select_seed(SweepReport& rep, const SeedSweepConfig& cfg) {
  if (rep.scores.empty()) throw InvalidArgument("sweep: nothing to select from");
  double max_fid = 0.0;
  for (const auto& s : rep.scores) max_fid = std::max(max_fid, s.fid);
  for (auto& s : rep.scores) s.objective = cfg.w_f1 * s.f1 - cfg.w_fid * (max_fid > 0.0 ? s.fid / max_fid : 0.0);
  std::size_t best = 0;
  for (std::size_t i = 1; i < rep.scores.size(); ++i) {
    const auto& a = rep.scores[i];
    const auto& b = rep.scores[best];
    if (a.objective > b.objective || (a.objective == b.objective && a.seed < b.seed)) best = i;
  }
  rep.best_index = best;
  rep.best_seed = rep.scores[best].seed;
}

namespace detail {

inline SeedScore score_seed(const std::vector<JobInputs>& inputs, const std::vector<GenerationJob>& jobs,
                            std::uint64_t seed, const SweepScorers& scorers, const BackendRegistry& registry,
                            std::vector<ImageBuffer>* outputs) {
  SeedScore s{seed};
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    GenerationJob j = jobs[i];
    j.sampler.seed = seed;
    ImageBuffer out = generate_from(inputs[i], j, registry);
    s.f1 += scorers.f1(out, inputs[i].image, inputs[i].annotation);
    s.fid += scorers.fid(out, inputs[i].image);
    if (outputs) outputs->push_back(std::move(out));
  }
  s.f1 /= static_cast<double>(jobs.size());
  s.fid /= static_cast<double>(jobs.size());
  return s;
}

}  // namespace detail

// One seed for the whole job list (scores averaged over jobs). With a
// single job this is per-image selection. The winning outputs are written
// to each job's output path.
inline SweepReport seed_sweep(const std::vector<GenerationJob>& jobs, const SeedSweepConfig& cfg,
                              const SweepScorers& scorers, const BackendRegistry& registry) {
  cfg.validate();
  if (jobs.empty()) throw InvalidArgument("sweep: no jobs");
  if (!scorers.f1 || !scorers.fid) throw InvalidArgument("sweep: both scorers are required");
  std::vector<JobInputs> inputs;
  for (const auto& j : jobs) inputs.push_back(load_job_inputs(j));
  SweepReport rep;
  std::vector<std::vector<ImageBuffer>> outs;
  for (auto seed : cfg.resolved_seeds()) {
    std::vector<ImageBuffer> o;
    try {
      rep.scores.push_back(detail::score_seed(inputs, jobs, seed, scorers, registry, &o));
    } catch (const std::exception& e) {
      throw SweepError("sweep: seed " + std::to_string(seed) + " failed: " + e.what(), rep);
    }
    outs.push_back(std::move(o));
  }
  select_seed(rep, cfg);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (jobs[i].output_path.empty()) continue;
    if (jobs[i].output_path.has_parent_path()) fs::create_directories(jobs[i].output_path.parent_path());
    write_image(jobs[i].output_path, outs[rep.best_index][i]);
  }
  return rep;
}

inline SweepReport seed_sweep(const GenerationJob& job, const SeedSweepConfig& cfg, const SweepScorers& scorers,
                              const BackendRegistry& registry) {
  return seed_sweep(std::vector<GenerationJob>{job}, cfg, scorers, registry);
}

// Default scorers.

// A lane counts as detected when the fused colour/edge evidence along its
// stroke in the output keeps at least half the coverage it had in the
// source. Returns F1 at IoU 0.5 of detected lanes against all lanes.
inline double lane_visibility_f1(const ImageBuffer& out, const ImageBuffer& src, const LaneAnnotation& ann,
                                 const FusionParams& fusion = {}) {
  if (ann.lanes.empty()) return 1.0;
  auto evidence = [&](const ImageBuffer& img) {
    return fuse(GrayMask(img.width(), img.height()), color_threshold(img, fusion.thresholds),
                canny(img, fusion.thresholds, fusion.blur_sigma))
        .mask;
  };
  const GrayMask es = evidence(src), eo = evidence(out);
  LaneAnnotation detected;
  for (const auto& lane : ann.lanes) {
    const auto fp = rasterize_lane(lane, src.width(), src.height(), fusion.stroke);
    std::size_t cs = 0, co = 0;
    for (int y = 0; y < fp.h; ++y)
      for (int x = 0; x < fp.w; ++x) {
        if (!fp.test(fp.x0 + x, fp.y0 + y)) continue;
        cs += es.at(fp.x0 + x, fp.y0 + y);
        co += eo.at(fp.x0 + x, fp.y0 + y);
      }
    if (2 * co >= cs) detected.lanes.push_back(lane);
  }
  EvalConfig cfg;
  cfg.canvas_width = src.width();
  cfg.canvas_height = src.height();
  cfg.iou_thresholds = {0.5};
  return f1_sweep({{detected, ann}}, cfg).f1_at(0.5);
}

// Frechet distance between the 8x8-cell mean colours of two images.
inline double patch_frechet(const ImageBuffer& out, const ImageBuffer& src) {
  auto cells = [](const ImageBuffer& img) {
    const auto pooled = PoolProjectEmbedder::pool(img);
    std::vector<std::vector<double>> v;
    for (std::size_t i = 0; i < pooled.size(); i += 3) v.push_back({pooled[i], pooled[i + 1], pooled[i + 2]});
    return embedding_stats(v);
  };
  return frechet_distance(cells(out), cells(src));
}

inline SweepScorers default_scorers(const FusionParams& fusion = {}) {
  return {[fusion](const ImageBuffer& o, const ImageBuffer& s, const LaneAnnotation& a) {
            return lane_visibility_f1(o, s, a, fusion);
          },
          patch_frechet};
}

}  // namespace lanegen
