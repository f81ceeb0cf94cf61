#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lanegen/annotation.hpp"
#include "lanegen/category.hpp"
#include "lanegen/hungarian.hpp"
#include "lanegen/raster.hpp"

namespace lanegen {

inline constexpr int kCulaneWidth = 1640;
inline constexpr int kCulaneHeight = 590;

// {0.50, 0.55, ..., 0.95}
inline std::vector<double> default_iou_grid() {
  std::vector<double> g;
  for (int i = 0; i < 10; ++i) g.push_back((50 + 5 * i) / 100.0);
  return g;
}

struct EvalConfig {
  std::vector<double> iou_thresholds = default_iou_grid();
  double lane_width = 30.0;  // total stroke width at 1640 px frame width
  int canvas_width = kCulaneWidth;
  int canvas_height = kCulaneHeight;

  // Stroke width actually rendered on this canvas.
  double stroke_width() const { return lane_width * canvas_width / kCulaneWidth; }

  void validate() const {
    if (iou_thresholds.empty()) throw InvalidArgument("eval: empty IoU threshold list");
    for (double a : iou_thresholds)
      if (!(a > 0.0 && a <= 1.0)) throw InvalidArgument("eval: IoU threshold outside (0, 1]");
    if (!(lane_width >= 1.0)) throw InvalidArgument("eval: lane width must be >= 1");
    if (canvas_width < 1 || canvas_height < 1) throw InvalidArgument("eval: canvas must be positive");
  }
};

inline std::vector<LaneFootprint> rasterize_lanes(const LaneAnnotation& ann, const EvalConfig& cfg) {
  std::vector<LaneFootprint> out;
  out.reserve(ann.lanes.size());
  for (const auto& lane : ann.lanes) {
    validate_lane(lane);
    out.push_back(rasterize_lane(lane, cfg.canvas_width, cfg.canvas_height, cfg.stroke_width()));
  }
  return out;
}

inline double footprint_iou(const LaneFootprint& a, const LaneFootprint& b) {
  const std::size_t inter = footprint_intersection(a, b);
  const std::size_t uni = a.count + b.count - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double lane_iou(const Lane& a, const Lane& b, const EvalConfig& cfg) {
  validate_lane(a);
  validate_lane(b);
  const double s = cfg.stroke_width();
  return footprint_iou(rasterize_lane(a, cfg.canvas_width, cfg.canvas_height, s),
                       rasterize_lane(b, cfg.canvas_width, cfg.canvas_height, s));
}

// Row-major |preds| x |gts| IoU table.
struct IouMatrix {
  std::size_t preds = 0, gts = 0;
  std::vector<double> values;
  double operator()(std::size_t p, std::size_t g) const { return values[p * gts + g]; }
};

inline IouMatrix iou_matrix(const LaneAnnotation& preds, const LaneAnnotation& gts, const EvalConfig& cfg) {
  const auto fp = rasterize_lanes(preds, cfg);
  const auto fg = rasterize_lanes(gts, cfg);
  IouMatrix m{fp.size(), fg.size(), std::vector<double>(fp.size() * fg.size())};
  for (std::size_t p = 0; p < fp.size(); ++p)
    for (std::size_t g = 0; g < fg.size(); ++g) m.values[p * m.gts + g] = footprint_iou(fp[p], fg[g]);
  return m;
}

struct MatchedPair {
  std::size_t pred = 0, gt = 0;
  double iou = 0.0;
};

struct MatchResult {
  std::size_t tp = 0, fp = 0, fn = 0;
  std::vector<MatchedPair> pairs;
};

// Maximum-cardinality matching among pairs with IoU >= alpha, then maximum
// total IoU among those. Each eligible pair weighs BIG + IoU with BIG larger
// than any achievable IoU sum, so cardinality dominates.
inline MatchResult match_iou(const IouMatrix& m, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("match: alpha outside (0, 1]");
  MatchResult r;
  const double big = static_cast<double>(std::min(m.preds, m.gts)) + 1.0;
  std::vector<double> w(m.values.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i)
    if (m.values[i] >= alpha) w[i] = big + m.values[i];
  const auto assign = max_weight_assignment(w, m.preds, m.gts);
  for (std::size_t p = 0; p < m.preds; ++p)
    if (assign[p] >= 0) r.pairs.push_back({p, static_cast<std::size_t>(assign[p]), m(p, assign[p])});
  r.tp = r.pairs.size();
  r.fp = m.preds - r.tp;
  r.fn = m.gts - r.tp;
  return r;
}

inline MatchResult match_lanes(const LaneAnnotation& preds, const LaneAnnotation& gts, double alpha,
                               const EvalConfig& cfg) {
  return match_iou(iou_matrix(preds, gts, cfg), alpha);
}

struct ThresholdScore {
  double alpha = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  // 2PR/(P+R); 0/0 counts as 0.
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

struct F1Report {
  std::vector<ThresholdScore> scores;

  double mf1() const {
    if (scores.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : scores) s += t.f1();
    return s / static_cast<double>(scores.size());
  }

  const ThresholdScore& at(double alpha) const {
    for (const auto& t : scores)
      if (std::abs(t.alpha - alpha) < 1e-9) return t;
    throw InvalidArgument("no score recorded at IoU threshold " + std::to_string(alpha));
  }
  double f1_at(double alpha) const { return at(alpha).f1(); }

  F1Report& operator+=(const F1Report& o) {
    if (scores.empty()) {
      scores = o.scores;
      return *this;
    }
    if (o.scores.size() != scores.size()) throw DimensionMismatch("cannot merge reports over different grids");
    for (std::size_t i = 0; i < scores.size(); ++i) {
      scores[i].tp += o.scores[i].tp;
      scores[i].fp += o.scores[i].fp;
      scores[i].fn += o.scores[i].fn;
    }
    return *this;
  }
};

struct ImageLanes {
  LaneAnnotation preds;
  LaneAnnotation gts;
};

// TP/FP/FN summed over all images at every threshold of the grid.
inline F1Report f1_sweep(const std::vector<ImageLanes>& dataset, const EvalConfig& cfg) {
  cfg.validate();
  F1Report rep;
  for (double a : cfg.iou_thresholds) rep.scores.push_back({a, 0, 0, 0});
  for (const auto& img : dataset) {
    const auto m = iou_matrix(img.preds, img.gts, cfg);
    for (auto& s : rep.scores) {
      const auto r = match_iou(m, s.alpha);
      s.tp += r.tp;
      s.fp += r.fp;
      s.fn += r.fn;
    }
  }
  return rep;
}

struct EvalReport {
  std::array<std::optional<F1Report>, 6> per_category;
  std::array<std::optional<double>, 6> fid;
  F1Report overall;

  void add(Category c, const F1Report& r) {
    auto& slot = per_category[category_index(c)];
    if (slot)
      *slot += r;
    else
      slot = r;
    overall += r;
  }
};

namespace detail {
inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}
}  // namespace detail

// One-row table: per-category F1@50, then overall F1@50, F1@75, mF1 (x100).
// Categories without data print "-".
inline std::string render_table(const EvalReport& rep, const std::string& label = "lanegen") {
  std::vector<std::string> head{"Method"}, row{label};
  for (auto c : kAllCategories) {
    head.push_back(category_title(c));
    const auto& r = rep.per_category[category_index(c)];
    row.push_back(r ? detail::pct(r->f1_at(0.5)) : "-");
  }
  head.insert(head.end(), {"F1@50", "F1@75", "mF1"});
  row.push_back(detail::pct(rep.overall.f1_at(0.5)));
  row.push_back(detail::pct(rep.overall.f1_at(0.75)));
  row.push_back(detail::pct(rep.overall.mf1()));

  std::string out;
  for (const auto* line : {&head, &row}) {
    for (std::size_t i = 0; i < line->size(); ++i) {
      const std::size_t wcol = std::max(head[i].size(), row[i].size());
      const auto& cell = (*line)[i];
      if (i == 0)
        out += cell + std::string(wcol - cell.size(), ' ');
      else
        out += "  " + std::string(wcol - cell.size(), ' ') + cell;
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const F1Report& r) {
  nlohmann::json j;
  j["mF1"] = r.mf1();
  auto& arr = j["thresholds"] = nlohmann::json::array();
  for (const auto& s : r.scores)
    arr.push_back({{"alpha", s.alpha},
                   {"tp", s.tp},
                   {"fp", s.fp},
                   {"fn", s.fn},
                   {"precision", s.precision()},
                   {"recall", s.recall()},
                   {"f1", s.f1()}});
  return j;
}

inline nlohmann::json to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["overall"] = to_json(rep.overall);
  auto& cats = j["categories"] = nlohmann::json::object();
  for (auto c : kAllCategories) {
    const auto i = category_index(c);
    if (!rep.per_category[i] && !rep.fid[i]) continue;
    nlohmann::json cj;
    if (rep.per_category[i]) cj = to_json(*rep.per_category[i]);
    if (rep.fid[i]) cj["fid"] = *rep.fid[i];
    cats[std::string(category_name(c))] = cj;
  }
  return j;
}

}  // namespace lanegen
