#pragma once

// Run configuration: one JSON file, every section optional. Unknown keys
// are errors so typos do not silently fall back to defaults. Schema in
// docs/config.md.

#include <cstdlib>
#include <set>

#include "json.hpp"

#include "lanegen/benchmark.hpp"

namespace lanegen {

class ConfigError : public ParseError {
public:
  using ParseError::ParseError;
};

struct RunConfig {
  int version = 1;
  fs::path source;
  fs::path output;
  FusionParams fusion;
  SamplerConfig sampler;
  PipelineParams pipeline;
  ProceduralParams procedural;
  std::array<CategoryRecipe, 6> recipes = AssembleOptions{}.recipes;
  std::string backend = "toy";
  RemoteOptions remote;
  SeedSweepConfig sweep;
  EvalConfig eval;
  std::size_t sample = 0;
  SplitRatio ratio;
  int max_attempts = 3;
  std::string source_dataset;

  const CategoryRecipe& recipe(Category c) const { return recipes[category_index(c)]; }

  AssembleOptions assemble_options() const {
    AssembleOptions o;
    o.source_dir = source;
    o.output_dir = output;
    o.recipes = recipes;
    o.sampler = sampler;
    o.backend = backend;
    o.fusion = fusion;
    o.seed = sampler.seed;
    o.sample = sample;
    o.ratio = ratio;
    o.max_attempts = max_attempts;
    o.source_dataset = source_dataset;
    return o;
  }

  BackendRegistry registry() const { return BackendRegistry::with_defaults(pipeline, procedural, remote); }
};

namespace detail {

// Walks a JSON object, tracking the dotted path for messages and which keys
// were consumed.
class ConfigReader {
public:
  ConfigReader(const nlohmann::json& j, std::string origin, std::string path)
      : j_(j), origin_(std::move(origin)), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "(root)" : path_, "expected an object");
  }

  ~ConfigReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) fail(where(it.key()), "unknown field");
  }

  bool has(const std::string& key) {
    if (!j_.contains(key)) return false;
    used_.insert(key);
    return true;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    out = get<T>(key);
  }

  template <typename T>
  void read_checked(const std::string& key, T& out, bool (*ok)(const T&), const char* requirement) {
    if (!has(key)) return;
    T v = get<T>(key);
    if (!ok(v)) fail(where(key), requirement);
    out = v;
  }

  ConfigReader child(const std::string& key) {
    used_.insert(key);
    return ConfigReader(j_.at(key), origin_, where(key));
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    throw ConfigError(origin_ + ": " + field + ": " + msg);
  }

  const nlohmann::json& json() const { return j_; }

private:
  template <typename T>
  T get(const std::string& key) {
    const auto& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(where(key), "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(where(key), "expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (!v.is_number_unsigned()) fail(where(key), "expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(where(key), "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(where(key), "expected a string");
    }
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(where(key), "has the wrong type");
    }
  }

  const nlohmann::json& j_;
  std::string origin_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename T>
bool positive(const T& v) {
  return v > T{0};
}
template <typename T>
bool non_negative(const T& v) {
  return v >= T{0};
}
inline bool unit_open_closed(const double& v) { return v > 0.0 && v <= 1.0; }
inline bool unit_closed(const double& v) { return v >= 0.0 && v <= 1.0; }
inline bool channel_triplet(const std::array<int, 3>& v) {
  return std::all_of(v.begin(), v.end(), [](int c) { return c >= 0 && c <= 255; });
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j, const std::string& origin = "config") {
  using namespace detail;
  RunConfig c;
  {
    ConfigReader r(j, origin, "");
    if (!r.has("version")) r.fail("version", "missing field");
    r.read("version", c.version);
    if (c.version != 1) r.fail("version", "unsupported version " + std::to_string(c.version) + " (expected 1)");

    if (r.has("paths")) {
      auto p = r.child("paths");
      std::string s;
      if (p.has("source")) p.read("source", s), c.source = s;
      if (p.has("output")) p.read("output", s), c.output = s;
    }
    if (r.has("thresholds")) {
      auto t = r.child("thresholds");
      t.read_checked<std::array<int, 3>>("low", c.fusion.thresholds.low, channel_triplet, "channels must lie in [0, 255]");
      t.read_checked<std::array<int, 3>>("high", c.fusion.thresholds.high, channel_triplet,
                                         "channels must lie in [0, 255]");
      t.read_checked<double>("blur_sigma", c.fusion.blur_sigma, positive<double>, "must be > 0");
      t.read_checked<int>("stroke", c.fusion.stroke, positive<int>, "must be >= 1");
      try {
        c.fusion.thresholds.validate();
      } catch (const InvalidArgument& e) {
        t.fail(t.where("low"), e.what());
      }
    }
    if (r.has("sampler")) {
      auto s = r.child("sampler");
      s.read_checked<int>("steps", c.sampler.steps, +[](const int& v) { return v >= 1 && v <= 1000; },
                          "must lie in [1, 1000]");
      s.read_checked<double>("cfg_scale", c.sampler.cfg_scale, non_negative<double>, "must be >= 0");
      s.read_checked<double>("rho", c.sampler.rho, positive<double>, "must be > 0");
      s.read_checked<double>("sigma_min", c.sampler.sigma_min, positive<double>, "must be > 0");
      s.read_checked<double>("sigma_max", c.sampler.sigma_max, positive<double>, "must be > 0");
      s.read("control_strength", c.sampler.control_strength);
      s.read_checked<double>("denoise", c.sampler.denoise, unit_open_closed, "must lie in (0, 1]");
      s.read("seed", c.sampler.seed);
      if (!(c.sampler.sigma_min < c.sampler.sigma_max)) s.fail(s.where("sigma_min"), "must be below sigma_max");
    }
    if (r.has("pipeline")) {
      auto p = r.child("pipeline");
      p.read_checked<int>("patch", c.pipeline.patch, positive<int>, "must be >= 1");
      p.read_checked<int>("prompt_dim", c.pipeline.prompt_dim, positive<int>, "must be >= 1");
      p.read_checked<double>("stage2_denoise", c.pipeline.stage2_denoise, unit_open_closed, "must lie in (0, 1]");
      p.read("stage2_strength", c.pipeline.stage2_strength);
      if (p.has("stage2_steps")) {
        int v = 0;
        p.read_checked<int>("stage2_steps", v, +[](const int& x) { return x >= 1 && x <= 1000; }, "must lie in [1, 1000]");
        c.pipeline.stage2_steps = v;
      }
      if (p.has("stage2_cfg_scale")) {
        double v = 0;
        p.read_checked<double>("stage2_cfg_scale", v, non_negative<double>, "must be >= 0");
        c.pipeline.stage2_cfg_scale = v;
      }
    }
    if (r.has("procedural")) {
      auto p = r.child("procedural");
      p.read_checked<double>("fog_density", c.procedural.fog_density, unit_closed, "must lie in [0, 1]");
      p.read_checked<int>("protect_bound", c.procedural.protect_bound, non_negative<int>, "must be >= 0");
      p.read_checked<int>("protect_radius", c.procedural.protect_radius, non_negative<int>, "must be >= 0");
    }
    if (r.has("recipes")) {
      auto rs = r.child("recipes");
      for (auto cat : kAllCategories) {
        const std::string name(category_name(cat));
        if (!rs.has(name)) continue;
        auto e = rs.child(name);
        auto& rec = c.recipes[category_index(cat)];
        e.read("positive_prompt", rec.positive_prompt);
        e.read("negative_prompt", rec.negative_prompt);
        e.read("stage2_enabled", rec.stage2_enabled);
        e.read("stage2_prompt", rec.stage2_prompt);
        try {
          rec.validate();
        } catch (const InvalidArgument& ex) {
          e.fail(rs.where(name), ex.what());
        }
      }
    }
    if (r.has("backend")) {
      auto b = r.child("backend");
      b.read("id", c.backend);
      auto ms = [&](const char* key, std::chrono::milliseconds& out) {
        int v = 0;
        if (!b.has(key)) return;
        b.read_checked<int>(key, v, positive<int>, "must be >= 1");
        out = std::chrono::milliseconds(v);
      };
      ms("connect_timeout_ms", c.remote.connect_timeout);
      ms("request_timeout_ms", c.remote.request_timeout);
      b.read_checked<int>("max_in_flight", c.remote.max_in_flight, positive<int>, "must be >= 1");
    }
    if (r.has("sweep")) {
      auto s = r.child("sweep");
      s.read_checked<int>("k", c.sweep.k, positive<int>, "must be >= 1");
      s.read("base", c.sweep.base);
      s.read("stride", c.sweep.stride);
      s.read("seeds", c.sweep.seeds);
      s.read("w_f1", c.sweep.w_f1);
      s.read("w_fid", c.sweep.w_fid);
      try {
        c.sweep.validate();
      } catch (const InvalidArgument& e) {
        s.fail(r.where("sweep"), e.what());
      }
    }
    if (r.has("eval")) {
      auto e = r.child("eval");
      e.read("iou_thresholds", c.eval.iou_thresholds);
      e.read_checked<double>("lane_width", c.eval.lane_width, +[](const double& v) { return v >= 1.0; }, "must be >= 1");
      e.read_checked<int>("canvas_width", c.eval.canvas_width, positive<int>, "must be >= 1");
      e.read_checked<int>("canvas_height", c.eval.canvas_height, positive<int>, "must be >= 1");
      try {
        c.eval.validate();
      } catch (const InvalidArgument& ex) {
        e.fail(r.where("eval"), ex.what());
      }
    }
    if (r.has("benchmark")) {
      auto b = r.child("benchmark");
      b.read("sample", c.sample);
      if (b.has("ratio")) {
        std::vector<int> v;
        b.read("ratio", v);
        if (v.size() != 3 || !std::all_of(v.begin(), v.end(), positive<int>))
          b.fail(b.where("ratio"), "must be three positive integers");
        c.ratio = {v[0], v[1], v[2]};
      }
      b.read_checked<int>("max_attempts", c.max_attempts, positive<int>, "must be >= 1");
      b.read("source_dataset", c.source_dataset);
    }
  }
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError&) {
    throw ConfigError(path.string() + ": cannot read config file");
  }
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    // Re-parse with exceptions for the position.
    try {
      (void)nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path.string() + ": invalid JSON at byte " + std::to_string(e.byte));
    }
  }
  return parse_run_config(j, path.string());
}

// LANEGEN_BACKEND_URL, when set and non-empty, replaces the backend id.
inline void apply_environment(RunConfig& c) {
  if (const char* url = std::getenv("LANEGEN_BACKEND_URL"); url && *url) c.backend = url;
}

}  // namespace lanegen
