#pragma once

// Benchmark assembly: sampling sources, per-category fan-out, 7:1:2 splits
// and the manifest. Output layout follows CULane:
//   <root>/<category>/<relpath>            image
//   <root>/<category>/<relstem>.lines.txt  annotation (byte copy of the source)
//   <root>/list/{train,val,test}_<category>.txt
//   <root>/manifest.json

#include <array>
#include <atomic>
#include <mutex>
#include <set>

#include "json.hpp"

#include "lanegen/generate.hpp"
#include "lanegen/hash.hpp"
#include "lanegen/rng.hpp"
#include "lanegen/thread_pool.hpp"

namespace lanegen {

// Indices floor(i * n / k) for i < k.
template <typename T>
std::vector<T> systematic_sample(const std::vector<T>& source, std::size_t k) {
  if (k == 0) throw InvalidArgument("systematic_sample: k must be positive");
  if (k > source.size())
    throw InvalidArgument("systematic_sample: k = " + std::to_string(k) + " exceeds " + std::to_string(source.size()) +
                          " sources");
  std::vector<T> out;
  out.reserve(k);
  const auto n = static_cast<unsigned __int128>(source.size());
  for (std::size_t i = 0; i < k; ++i) out.push_back(source[static_cast<std::size_t>(i * n / k)]);
  return out;
}

struct SplitRatio {
  int train = 7;
  int val = 1;
  int test = 2;

  void validate() const {
    if (train <= 0 || val <= 0 || test <= 0) throw InvalidArgument("split ratio components must be positive");
  }
  int sum() const { return train + val + test; }
  bool operator==(const SplitRatio&) const = default;
};

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
  bool operator==(const SplitCounts&) const = default;
};

// Largest-remainder apportionment of n items; equal remainders favour the
// earlier part (train, then val, then test).
inline SplitCounts split_counts(std::size_t n, const SplitRatio& r) {
  r.validate();
  const std::array<std::size_t, 3> w{std::size_t(r.train), std::size_t(r.val), std::size_t(r.test)};
  const std::size_t total = w[0] + w[1] + w[2];
  std::array<std::size_t, 3> q{}, rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    q[i] = n * w[i] / total;
    rem[i] = n * w[i] % total;
    assigned += q[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++q[order[i]];
  return {q[0], q[1], q[2]};
}

template <typename T>
struct Split {
  std::vector<T> train, val, test;
};

// Seeded Fisher-Yates shuffle, then contiguous cuts at split_counts.
template <typename T>
Split<T> split(std::vector<T> files, const SplitRatio& ratio, std::uint64_t seed) {
  if (files.empty()) throw InvalidArgument("split: no files");
  const auto c = split_counts(files.size(), ratio);
  StableRng rng(seed);
  rng.shuffle(files);
  Split<T> s;
  auto it = files.begin();
  s.train.assign(it, it + c.train);
  it += c.train;
  s.val.assign(it, it + c.val);
  it += c.val;
  s.test.assign(it, files.end());
  return s;
}

// ---------------------------------------------------------------------------
// Manifest

struct CategorySplit {
  Category category = Category::normal;
  std::vector<std::string> train, val, test;  // paths relative to the root

  std::size_t total() const { return train.size() + val.size() + test.size(); }
  bool operator==(const CategorySplit&) const = default;
};

struct Provenance {
  std::string source_dataset;
  std::string config_hash;
  std::string seed_policy;
  std::uint64_t seed = 0;
  std::string split_policy = "independent";
  SplitRatio ratio;
  bool operator==(const Provenance&) const = default;
};

struct AssemblyFailure {
  std::string path;
  std::string error;
  int attempts = 0;
  bool operator==(const AssemblyFailure&) const = default;
};

struct Manifest {
  int version = 1;
  std::vector<CategorySplit> categories;
  Provenance provenance;
  bool complete = true;
  std::vector<AssemblyFailure> failures;

  const CategorySplit& at(Category c) const {
    for (const auto& s : categories)
      if (s.category == c) return s;
    throw InvalidArgument("manifest has no category " + std::string(category_name(c)));
  }

  // Count and disjointness invariants; with a root, also that files exist.
  void validate(const fs::path& root = {}) const {
    std::set<Category> seen;
    for (const auto& s : categories) {
      if (!seen.insert(s.category).second)
        throw InvalidArgument("manifest lists category " + std::string(category_name(s.category)) + " twice");
      std::set<std::string> files;
      for (const auto* part : {&s.train, &s.val, &s.test})
        for (const auto& f : *part) {
          if (!files.insert(f).second) throw InvalidArgument("manifest lists " + f + " in more than one split");
          if (!root.empty() && !fs::exists(root / f)) throw IoError("manifest lists missing file " + f);
        }
    }
  }

  bool operator==(const Manifest&) const = default;
};

inline nlohmann::json to_json(const Manifest& m) {
  using nlohmann::json;
  json cats = json::object();
  for (const auto& s : m.categories)
    cats[std::string(category_name(s.category))] = {
        {"total", s.total()},
        {"train", s.train.size()},
        {"validate", s.val.size()},
        {"test", s.test.size()},
        {"files", {{"train", s.train}, {"validate", s.val}, {"test", s.test}}}};
  json failures = json::array();
  for (const auto& f : m.failures) failures.push_back({{"path", f.path}, {"error", f.error}, {"attempts", f.attempts}});
  const auto& p = m.provenance;
  return {{"version", m.version},
          {"complete", m.complete},
          {"categories", cats},
          {"failures", failures},
          {"provenance",
           {{"source_dataset", p.source_dataset},
            {"config_hash", p.config_hash},
            {"seed_policy", p.seed_policy},
            {"seed", p.seed},
            {"split_policy", p.split_policy},
            {"ratio", {p.ratio.train, p.ratio.val, p.ratio.test}}}}};
}

namespace detail {

template <typename T>
T manifest_field(const nlohmann::json& j, const std::string& path, const char* key) {
  const std::string where = path.empty() ? key : path + "." + key;
  if (!j.is_object() || !j.contains(key)) throw ParseError("manifest: missing field '" + where + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("manifest: field '" + where + "' has the wrong type");
  }
}

}  // namespace detail

inline Manifest manifest_from_json(const nlohmann::json& j) {
  using detail::manifest_field;
  using nlohmann::json;
  Manifest m;
  m.version = manifest_field<int>(j, "", "version");
  if (m.version != 1) throw ParseError("manifest: unsupported version " + std::to_string(m.version));
  m.complete = manifest_field<bool>(j, "", "complete");
  const auto cats = manifest_field<json>(j, "", "categories");
  if (!cats.is_object()) throw ParseError("manifest: field 'categories' has the wrong type");
  // Stored keyed by name; restore the canonical category order.
  for (auto c : kAllCategories) {
    const std::string name(category_name(c));
    if (!cats.contains(name)) continue;
    const std::string path = "categories." + name;
    const auto& e = cats[name];
    const auto files = manifest_field<json>(e, path, "files");
    CategorySplit s{c, manifest_field<std::vector<std::string>>(files, path + ".files", "train"),
                    manifest_field<std::vector<std::string>>(files, path + ".files", "validate"),
                    manifest_field<std::vector<std::string>>(files, path + ".files", "test")};
    if (manifest_field<std::size_t>(e, path, "train") != s.train.size() ||
        manifest_field<std::size_t>(e, path, "validate") != s.val.size() ||
        manifest_field<std::size_t>(e, path, "test") != s.test.size() ||
        manifest_field<std::size_t>(e, path, "total") != s.total())
      throw ParseError("manifest: counts of '" + path + "' disagree with its file lists");
    m.categories.push_back(std::move(s));
  }
  for (auto it = cats.begin(); it != cats.end(); ++it) {
    try {
      parse_category(it.key());
    } catch (const InvalidArgument&) {
      throw ParseError("manifest: unknown category 'categories." + it.key() + "'");
    }
  }
  for (const auto& f : manifest_field<json>(j, "", "failures"))
    m.failures.push_back({manifest_field<std::string>(f, "failures[]", "path"),
                          manifest_field<std::string>(f, "failures[]", "error"),
                          manifest_field<int>(f, "failures[]", "attempts")});
  const auto p = manifest_field<json>(j, "", "provenance");
  m.provenance.source_dataset = manifest_field<std::string>(p, "provenance", "source_dataset");
  m.provenance.config_hash = manifest_field<std::string>(p, "provenance", "config_hash");
  m.provenance.seed_policy = manifest_field<std::string>(p, "provenance", "seed_policy");
  m.provenance.seed = manifest_field<std::uint64_t>(p, "provenance", "seed");
  m.provenance.split_policy = manifest_field<std::string>(p, "provenance", "split_policy");
  const auto r = manifest_field<std::vector<int>>(p, "provenance", "ratio");
  if (r.size() != 3) throw ParseError("manifest: field 'provenance.ratio' must have 3 entries");
  m.provenance.ratio = {r[0], r[1], r[2]};
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline std::string emit_manifest(const Manifest& m) { return to_json(m).dump(2) + "\n"; }

inline Manifest parse_manifest(std::string_view text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError("manifest: invalid JSON");
  return manifest_from_json(j);
}

// ---------------------------------------------------------------------------
// Assembly

inline fs::path annotation_sidecar(const fs::path& image) {
  fs::path p = image;
  p.replace_extension(".lines.txt");
  return p;
}

// Images under `dir` (recursively), as sorted relative paths.
inline std::vector<std::string> list_source_images(const fs::path& dir, const fs::path& exclude = {}) {
  if (!fs::is_directory(dir)) throw IoError("source directory not found: " + dir.string());
  const auto skip = exclude.empty() ? fs::path{} : fs::weakly_canonical(exclude);
  std::vector<std::string> out;
  for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator(); ++it) {
    if (!skip.empty() && it->is_directory() && fs::weakly_canonical(it->path()) == skip) {
      it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file() && is_image_path(it->path()))
      out.push_back(fs::relative(it->path(), dir).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct AssembleOptions {
  fs::path source_dir;
  fs::path output_dir;
  std::array<CategoryRecipe, 6> recipes{CategoryRecipe::defaults(Category::normal),
                                        CategoryRecipe::defaults(Category::snow),
                                        CategoryRecipe::defaults(Category::rain),
                                        CategoryRecipe::defaults(Category::fog),
                                        CategoryRecipe::defaults(Category::night),
                                        CategoryRecipe::defaults(Category::dusk)};
  std::vector<Category> categories{kAllCategories.begin(), kAllCategories.end()};
  SamplerConfig sampler;
  std::string backend = "toy";
  FusionParams fusion;
  std::uint64_t seed = 0;
  std::size_t sample = 0;  // systematic sample of this many sources; 0 keeps all
  SplitRatio ratio;
  int jobs = default_jobs();
  int max_attempts = 3;
  std::string source_dataset;  // defaults to the source directory name
  std::size_t checkpoint_every = 32;
};

struct AssembleResult {
  Manifest manifest;
  std::size_t generated = 0;  // backend calls that produced a written image
  std::size_t skipped = 0;    // outputs reused via the content-hash state
  std::size_t copied = 0;     // normal images written (unchanged files excluded)
};

inline constexpr const char* kStateFile = ".lanegen-state.json";
inline constexpr const char* kSeedPolicy = "per-image: mix_seed(seed, fnv1a64(\"<category>/<relpath>\"))";

inline std::uint64_t image_seed(std::uint64_t seed, Category c, const std::string& rel) {
  return mix_seed(seed, fnv1a64(std::string(category_name(c)) + "/" + rel));
}

inline std::uint64_t split_seed(std::uint64_t seed, Category c) {
  return mix_seed(seed, fnv1a64("split/" + std::string(category_name(c))));
}

// Hash of everything that determines generated pixels.
inline std::string assembly_config_hash(const AssembleOptions& o) {
  nlohmann::json j;
  for (const auto& r : o.recipes)
    j["recipes"].push_back({r.positive_prompt, r.negative_prompt, r.stage2_enabled, r.stage2_prompt});
  const auto& s = o.sampler;
  j["sampler"] = {s.steps, s.cfg_scale, s.rho, s.sigma_min, s.sigma_max, s.control_strength, s.denoise};
  j["backend"] = o.backend;
  j["fusion"] = {o.fusion.thresholds.low, o.fusion.thresholds.high, o.fusion.blur_sigma, o.fusion.stroke};
  j["seed"] = o.seed;
  return sha256_hex(j.dump());
}

inline AssembleResult assemble(const AssembleOptions& opts, const BackendRegistry& registry) {
  if (opts.output_dir.empty()) throw InvalidArgument("assemble: output directory is required");
  if (opts.max_attempts < 1) throw InvalidArgument("assemble: max_attempts must be >= 1");
  opts.ratio.validate();
  for (const auto& r : opts.recipes) r.validate();
  for (std::size_t i = 0; i < opts.recipes.size(); ++i)
    if (opts.recipes[i].category != kAllCategories[i])
      throw InvalidArgument("assemble: recipe " + std::to_string(i) + " is not for " +
                            std::string(category_name(kAllCategories[i])));
  opts.sampler.validate();

  auto sources = list_source_images(opts.source_dir, opts.output_dir);
  if (sources.empty()) throw IoError("no source images in " + opts.source_dir.string());
  if (opts.sample > 0) sources = systematic_sample(sources, opts.sample);
  for (const auto& rel : sources)
    if (!fs::exists(annotation_sidecar(opts.source_dir / rel)))
      throw IoError("missing annotation: " + annotation_sidecar(opts.source_dir / rel).string());

  const fs::path& root = opts.output_dir;
  const std::string config_hash = assembly_config_hash(opts);

  // Resume state: output path -> {source pixel hash, output pixel hash}.
  nlohmann::json state = {{"config_hash", config_hash}, {"entries", nlohmann::json::object()}};
  if (fs::exists(root / kStateFile)) {
    const auto old = nlohmann::json::parse(read_text_file(root / kStateFile), nullptr, false);
    if (old.is_object() && old.value("config_hash", "") == config_hash && old.contains("entries") &&
        old["entries"].is_object())
      state["entries"] = old["entries"];
  }
  std::mutex mu;
  std::size_t since_checkpoint = 0;
  auto checkpoint = [&](bool force) {
    // Caller holds mu.
    if (!force && ++since_checkpoint < opts.checkpoint_every) return;
    since_checkpoint = 0;
    write_file_if_changed(root / kStateFile, state.dump(1) + "\n");
  };

  struct Task {
    Category category;
    std::string rel;
  };
  std::vector<Category> cats = opts.categories;
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  std::vector<Task> tasks;
  for (auto c : cats)
    for (const auto& rel : sources) tasks.push_back({c, rel});

  AssembleResult result;
  std::atomic<std::size_t> generated{0}, skipped{0}, copied{0};
  std::vector<std::optional<AssemblyFailure>> failed(tasks.size());
  fs::create_directories(root);

  parallel_for(tasks.size(), opts.jobs, [&](std::size_t ti) {
    const auto& [cat, rel] = tasks[ti];
    const std::string out_rel = std::string(category_name(cat)) + "/" + rel;
    const fs::path src = opts.source_dir / rel;
    const fs::path out = root / out_rel;
    fs::create_directories(out.parent_path());
    write_file_if_changed(annotation_sidecar(out), read_file_bytes(annotation_sidecar(src)));

    if (cat == Category::normal) {
      if (write_file_if_changed(out, read_file_bytes(src))) ++copied;
      return;
    }

    GenerationJob job;
    job.image_path = src;
    job.annotation_path = annotation_sidecar(src);
    job.recipe = opts.recipes[category_index(cat)];
    job.sampler = opts.sampler;
    job.sampler.seed = image_seed(opts.seed, cat, rel);
    job.backend = opts.backend;
    job.fusion = opts.fusion;

    std::string error;
    for (int attempt = 1; attempt <= opts.max_attempts; ++attempt) {
      try {
        const auto in = load_job_inputs(job);
        const std::string src_hash = pixel_hash(in.image);
        {
          std::lock_guard lock(mu);
          const auto& entries = state["entries"];
          if (entries.contains(out_rel) && entries[out_rel].value("source", "") == src_hash && fs::exists(out)) {
            const std::string want = entries[out_rel].value("output", "");
            bool ok = false;
            try {
              ok = pixel_hash(read_image(out)) == want;
            } catch (const Error&) {
            }
            if (ok) {
              ++skipped;
              return;
            }
          }
        }
        const ImageBuffer img = generate_from(in, job, registry);
        const auto bytes = encode_image_for(out, img);
        write_file_if_changed(out, bytes);
        const std::string out_hash = pixel_hash(is_jpeg_path(out) ? decode_jpeg(bytes) : img);
        ++generated;
        std::lock_guard lock(mu);
        state["entries"][out_rel] = {{"source", src_hash}, {"output", out_hash}};
        checkpoint(false);
        return;
      } catch (const std::exception& e) {
        error = e.what();
      }
    }
    failed[ti] = AssemblyFailure{out_rel, error, opts.max_attempts};
  });

  {
    std::lock_guard lock(mu);
    checkpoint(true);
  }

  Manifest& m = result.manifest;
  m.provenance = {opts.source_dataset.empty() ? fs::absolute(opts.source_dir).lexically_normal().filename().string()
                                              : opts.source_dataset,
                  config_hash, kSeedPolicy, opts.seed, "independent", opts.ratio};
  if (m.provenance.source_dataset.empty()) m.provenance.source_dataset = opts.source_dir.string();
  std::set<std::string> failed_paths;
  for (const auto& f : failed)
    if (f) {
      m.failures.push_back(*f);
      failed_paths.insert(f->path);
    }
  m.complete = m.failures.empty();

  fs::create_directories(root / "list");
  for (auto c : cats) {
    const std::string name(category_name(c));
    std::vector<std::string> files;
    for (const auto& rel : sources)
      if (!failed_paths.count(name + "/" + rel)) files.push_back(name + "/" + rel);
    CategorySplit cs{c};
    if (!files.empty()) {
      auto s = split(std::move(files), opts.ratio, split_seed(opts.seed, c));
      cs.train = std::move(s.train);
      cs.val = std::move(s.val);
      cs.test = std::move(s.test);
    }
    auto lines = [](const std::vector<std::string>& v) {
      std::string t;
      for (const auto& f : v) t += f + "\n";
      return t;
    };
    write_file_if_changed(root / "list" / ("train_" + name + ".txt"), lines(cs.train));
    write_file_if_changed(root / "list" / ("val_" + name + ".txt"), lines(cs.val));
    write_file_if_changed(root / "list" / ("test_" + name + ".txt"), lines(cs.test));
    m.categories.push_back(std::move(cs));
  }
  m.validate(root);
  write_file_if_changed(root / "manifest.json", emit_manifest(m));

  result.generated = generated;
  result.skipped = skipped;
  result.copied = copied;
  return result;
}

}  // namespace lanegen
