// lanegen: control maps, generation, benchmark assembly, evaluation and FID.
//
// Exit status: 0 success, 1 runtime failure, 2 usage or config error (in
// which case nothing has been written).

#include <chrono>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "lanegen/config.hpp"

namespace {

using namespace lanegen;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string backend;
  bool json = false;
};

// Config file, then LANEGEN_BACKEND_URL, then command-line flags.
RunConfig resolve_config(const Globals& g) {
  RunConfig c;
  try {
    if (!g.config.empty()) c = load_run_config(g.config);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  apply_environment(c);
  if (!g.backend.empty()) c.backend = g.backend;
  if (g.seed) c.sampler.seed = *g.seed;
  return c;
}

std::shared_ptr<const Backend> resolve_backend(const RunConfig& c, const BackendRegistry& reg) {
  try {
    return reg.get(c.backend);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

Category category_arg(const std::string& s) {
  try {
    return parse_category(s);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

fs::path sidecar_or(const std::string& given, const fs::path& image) {
  return given.empty() ? annotation_sidecar(image) : fs::path(given);
}

// One machine-readable line: either JSON or "command key=value ...".
void summary(const Globals& g, const std::string& command, const json& fields) {
  if (g.json) {
    json j = fields;
    j["command"] = command;
    std::cout << j.dump() << "\n";
    return;
  }
  std::cout << command;
  for (auto it = fields.begin(); it != fields.end(); ++it)
    std::cout << " " << it.key() << "=" << (it->is_string() ? it->get<std::string>() : it->dump());
  std::cout << "\n";
}

std::string error_code(const std::exception& e) {
  if (auto* b = dynamic_cast<const BackendError*>(&e)) return b->code();
  if (dynamic_cast<const IoError*>(&e)) return "io_error";
  if (dynamic_cast<const ParseError*>(&e)) return "parse_error";
  if (dynamic_cast<const NonFiniteError*>(&e)) return "non_finite";
  if (dynamic_cast<const InvalidArgument*>(&e)) return "invalid_argument";
  if (dynamic_cast<const SweepError*>(&e)) return "sweep_failed";
  return "internal";
}

void report_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << "\n";
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

struct FuseArgs {
  std::string image, annotation, output;
};

int cmd_fuse(const Globals& g, const FuseArgs& a) {
  const RunConfig c = resolve_config(g);
  const fs::path image = a.image;
  const fs::path ann_path = sidecar_or(a.annotation, image);
  const fs::path out = a.output.empty() ? image.parent_path() / (image.stem().string() + ".control.png") : fs::path(a.output);
  if (!fs::exists(ann_path)) throw IoError("missing annotation: " + ann_path.string());
  const auto img = read_image(image);
  const auto ann = parse_annotation(read_text_file(ann_path));
  const auto cmap = build_control_map(img, ann, c.fusion);
  write_mask(out, cmap.mask);
  summary(g, "fuse", {{"output", out.string()}, {"set_pixels", cmap.mask.count()}, {"width", img.width()},
                      {"height", img.height()}});
  return 0;
}

struct GenerateArgs {
  std::string image, annotation, output, category;
};

GenerationJob make_job(const RunConfig& c, const fs::path& image, const std::string& annotation, Category cat) {
  GenerationJob job;
  job.image_path = image;
  job.annotation_path = sidecar_or(annotation, image);
  job.recipe = c.recipe(cat);
  job.sampler = c.sampler;
  job.backend = c.backend;
  job.fusion = c.fusion;
  return job;
}

int cmd_generate(const Globals& g, const GenerateArgs& a) {
  const RunConfig c = resolve_config(g);
  const Category cat = category_arg(a.category);
  const auto reg = c.registry();
  resolve_backend(c, reg);
  const fs::path image = a.image;
  auto job = make_job(c, image, a.annotation, cat);
  job.output_path = a.output.empty()
                        ? image.parent_path() / (image.stem().string() + "." + a.category + image.extension().string())
                        : fs::path(a.output);
  const auto t0 = std::chrono::steady_clock::now();
  generate(job, reg);
  summary(g, "generate", {{"output", job.output_path.string()}, {"category", a.category}, {"backend", c.backend},
                          {"seed", c.sampler.seed}, {"elapsed_ms", std::round(elapsed_ms(t0))}});
  return 0;
}

struct AssembleArgs {
  std::string source, output;
  std::optional<std::size_t> sample;
  std::vector<std::string> categories;
};

int cmd_assemble(const Globals& g, const AssembleArgs& a) {
  const RunConfig c = resolve_config(g);
  auto opts = c.assemble_options();
  if (!a.source.empty()) opts.source_dir = a.source;
  if (!a.output.empty()) opts.output_dir = a.output;
  if (opts.source_dir.empty()) throw UsageError("assemble: no source directory (use --source or paths.source)");
  if (opts.output_dir.empty()) throw UsageError("assemble: no output directory (use --output or paths.output)");
  if (a.sample) opts.sample = *a.sample;
  if (!a.categories.empty()) {
    opts.categories.clear();
    for (const auto& s : a.categories) opts.categories.push_back(category_arg(s));
  }
  if (g.jobs) opts.jobs = *g.jobs;
  const auto reg = c.registry();
  resolve_backend(c, reg);

  const auto t0 = std::chrono::steady_clock::now();
  const auto r = assemble(opts, reg);
  json counts = json::object();
  for (const auto& s : r.manifest.categories)
    counts[std::string(category_name(s.category))] = {s.total(), s.train.size(), s.val.size(), s.test.size()};
  summary(g, "assemble", {{"manifest", (opts.output_dir / "manifest.json").string()},
                          {"generated", r.generated},
                          {"skipped", r.skipped},
                          {"copied", r.copied},
                          {"complete", r.manifest.complete},
                          {"failures", r.manifest.failures.size()},
                          {"splits", counts},
                          {"elapsed_ms", std::round(elapsed_ms(t0))}});
  if (!r.manifest.complete) {
    report_error("incomplete", std::to_string(r.manifest.failures.size()) + " generation job(s) failed; first: " +
                                   r.manifest.failures.front().path + ": " + r.manifest.failures.front().error);
    return 1;
  }
  return 0;
}

struct EvalArgs {
  std::string gt, pred, report, label = "lanegen";
  std::optional<int> width, height;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  RunConfig c = resolve_config(g);
  if (a.width) c.eval.canvas_width = *a.width;
  if (a.height) c.eval.canvas_height = *a.height;
  for (double need : {0.5, 0.75})
    if (std::none_of(c.eval.iou_thresholds.begin(), c.eval.iou_thresholds.end(),
                     [&](double a) { return std::abs(a - need) < 1e-9; }))
      throw UsageError("eval: IoU thresholds must include 0.5 and 0.75 for the table");
  try {
    c.eval.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  const fs::path gt_root = a.gt, pred_root = a.pred;
  if (!fs::is_directory(gt_root)) throw IoError("ground-truth directory not found: " + gt_root.string());
  std::vector<std::string> rels;
  for (const auto& e : fs::recursive_directory_iterator(gt_root)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.size() > 10 && name.ends_with(".lines.txt"))
      rels.push_back(fs::relative(e.path(), gt_root).generic_string());
  }
  std::sort(rels.begin(), rels.end());
  if (rels.empty()) throw IoError("no .lines.txt files under " + gt_root.string());

  // The first path component names the category when it is one.
  std::array<std::vector<ImageLanes>, 6> by_cat;
  std::vector<ImageLanes> uncategorised;
  std::size_t missing = 0;
  for (const auto& rel : rels) {
    ImageLanes il;
    il.gts = parse_annotation(read_text_file(gt_root / rel));
    if (fs::exists(pred_root / rel))
      il.preds = parse_annotation(read_text_file(pred_root / rel));
    else
      ++missing;
    std::optional<Category> cat;
    if (auto slash = rel.find('/'); slash != std::string::npos) {
      try {
        cat = parse_category(rel.substr(0, slash));
      } catch (const InvalidArgument&) {
      }
    }
    (cat ? by_cat[category_index(*cat)] : uncategorised).push_back(std::move(il));
  }
  EvalReport rep;
  for (auto cat : kAllCategories)
    if (!by_cat[category_index(cat)].empty()) rep.add(cat, f1_sweep(by_cat[category_index(cat)], c.eval));
  if (!uncategorised.empty()) rep.overall += f1_sweep(uncategorised, c.eval);

  const json j = to_json(rep);
  if (!a.report.empty()) write_file_atomic(a.report, j.dump(2) + "\n");
  if (!g.json) std::cout << render_table(rep, a.label);
  summary(g, "eval", {{"images", rels.size()},
                      {"missing_predictions", missing},
                      {"F1@50", rep.overall.f1_at(0.5)},
                      {"F1@75", rep.overall.f1_at(0.75)},
                      {"mF1", rep.overall.mf1()},
                      {"report", g.json ? j : json(a.report)}});
  return 0;
}

struct FidArgs {
  std::string a, b, report;
};

std::vector<ImageBuffer> load_image_set(const fs::path& dir) {
  std::vector<ImageBuffer> out;
  for (const auto& rel : list_source_images(dir)) out.push_back(read_image(dir / rel));
  if (out.size() < 2) throw InvalidArgument("FID needs at least 2 images in " + dir.string());
  return out;
}

int cmd_fid(const Globals& g, const FidArgs& a) {
  resolve_config(g);
  const PoolProjectEmbedder embed;
  const auto sa = image_set_stats(load_image_set(a.a), embed);
  const auto sb = image_set_stats(load_image_set(a.b), embed);
  const double d = frechet_distance(sa, sb);
  const json j{{"fid", d}, {"n_a", sa.n}, {"n_b", sb.n}, {"embedder", "pool-project-64"}};
  if (!a.report.empty()) write_file_atomic(a.report, j.dump(2) + "\n");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", d);
  summary(g, "fid", g.json ? j : json{{"fid", buf}, {"n_a", sa.n}, {"n_b", sb.n}});
  return 0;
}

struct SweepArgs {
  std::string image, annotation, output, category;
  std::optional<int> k;
  std::vector<std::uint64_t> seeds;
};

int cmd_sweep(const Globals& g, const SweepArgs& a) {
  const RunConfig c = resolve_config(g);
  const Category cat = category_arg(a.category);
  const auto reg = c.registry();
  resolve_backend(c, reg);
  SeedSweepConfig sw = c.sweep;
  if (g.seed) sw.base = *g.seed;
  if (a.k) sw.k = *a.k;
  if (!a.seeds.empty()) sw.seeds = a.seeds;
  try {
    sw.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const fs::path image = a.image;
  auto job = make_job(c, image, a.annotation, cat);
  job.output_path = a.output.empty()
                        ? image.parent_path() / (image.stem().string() + "." + a.category + ".best" + image.extension().string())
                        : fs::path(a.output);
  const auto rep = seed_sweep(job, sw, default_scorers(c.fusion), reg);
  json scores = json::array();
  for (const auto& s : rep.scores)
    scores.push_back({{"seed", s.seed}, {"f1", s.f1}, {"fid", s.fid}, {"objective", s.objective}});
  if (!g.json)
    for (const auto& s : rep.scores)
      std::printf("seed %llu  f1 %.4f  fid %.4f  objective %.4f%s\n", static_cast<unsigned long long>(s.seed), s.f1, s.fid,
                  s.objective, s.seed == rep.best_seed ? "  *" : "");
  summary(g, "sweep", {{"best_seed", rep.best_seed}, {"output", job.output_path.string()}, {"scores", scores}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lanegen: lane-preserving adverse-condition image generation and CULane-style evaluation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.set_version_flag("--version", "lanegen 0.1.0");
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--seed", g.seed, "Seed for all stochastic steps");
  app.add_option("--jobs", g.jobs, "Worker threads (default: logical cores)")->check(CLI::PositiveNumber);
  app.add_option("--backend", g.backend, "Backend: toy, procedural or an http:// endpoint");
  app.add_flag("--json", g.json, "Emit reports as JSON");

  FuseArgs fa;
  auto* fuse = app.add_subcommand("fuse", "Build the control map of an image");
  fuse->add_option("image", fa.image, "Input image")->required();
  fuse->add_option("--annotation", fa.annotation, "Lane annotation (default: <image>.lines.txt)");
  fuse->add_option("-o,--output", fa.output, "Output PNG (default: <image>.control.png)");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Generate one adverse-condition image");
  gen->add_option("image", ga.image, "Input image")->required();
  gen->add_option("-c,--category", ga.category, "normal|snow|rain|fog|night|dusk")->required();
  gen->add_option("--annotation", ga.annotation, "Lane annotation (default: <image>.lines.txt)");
  gen->add_option("-o,--output", ga.output, "Output image (default: <image>.<category>.<ext>)");

  AssembleArgs aa;
  auto* asmb = app.add_subcommand("assemble", "Assemble the six-category benchmark");
  asmb->add_option("--source", aa.source, "Source tree of images with .lines.txt sidecars");
  asmb->add_option("--output", aa.output, "Output root");
  asmb->add_option("--sample", aa.sample, "Systematically sample this many sources")->check(CLI::PositiveNumber);
  asmb->add_option("--category", aa.categories, "Restrict to these categories (repeatable)");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score predicted lanes against ground truth");
  ev->add_option("--gt", ea.gt, "Ground-truth root (.lines.txt files)")->required();
  ev->add_option("--pred", ea.pred, "Prediction root with the same relative paths")->required();
  ev->add_option("--width", ea.width, "Canvas width")->check(CLI::PositiveNumber);
  ev->add_option("--height", ea.height, "Canvas height")->check(CLI::PositiveNumber);
  ev->add_option("--report", ea.report, "Write the JSON report here");
  ev->add_option("--label", ea.label, "Method name in the table");

  FidArgs fi;
  auto* fid = app.add_subcommand("fid", "Frechet distance between two image sets");
  fid->add_option("a", fi.a, "First image directory")->required();
  fid->add_option("b", fi.b, "Second image directory")->required();
  fid->add_option("--report", fi.report, "Write the JSON report here");

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Pick the best of several seeds for one image");
  sweep->add_option("image", sa.image, "Input image")->required();
  sweep->add_option("-c,--category", sa.category, "normal|snow|rain|fog|night|dusk")->required();
  sweep->add_option("--annotation", sa.annotation, "Lane annotation (default: <image>.lines.txt)");
  sweep->add_option("-o,--output", sa.output, "Output for the winning image");
  sweep->add_option("-k", sa.k, "Number of seeds (base = --seed)")->check(CLI::PositiveNumber);
  sweep->add_option("--seeds", sa.seeds, "Explicit seed list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fuse) return cmd_fuse(g, fa);
    if (*gen) return cmd_generate(g, ga);
    if (*asmb) return cmd_assemble(g, aa);
    if (*ev) return cmd_eval(g, ea);
    if (*fid) return cmd_fid(g, fi);
    if (*sweep) return cmd_sweep(g, sa);
  } catch (const UsageError& e) {
    report_error("usage", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error(error_code(e), e.what());
    return 1;
  }
  return 2;
}
