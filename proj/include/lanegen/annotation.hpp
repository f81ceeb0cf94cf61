#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "lanegen/error.hpp"

namespace lanegen {

struct LanePoint {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const LanePoint&, const LanePoint&) = default;
};

using Lane = std::vector<LanePoint>;

// Lane polylines of one image, in pixel coordinates.
struct LaneAnnotation {
  std::vector<Lane> lanes;

  friend bool operator==(const LaneAnnotation&, const LaneAnnotation&) = default;
};

inline void validate_lane(const Lane& lane) {
  if (lane.size() < 2) throw InvalidArgument("lane polyline needs at least 2 points");
  for (const auto& p : lane)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidArgument("lane coordinate is not finite");
}

// Parses the CULane `.lines.txt` convention: one lane per nonempty line,
// whitespace-separated "x y x y ...".
inline LaneAnnotation parse_annotation(std::string_view text) {
  LaneAnnotation ann;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;

    std::vector<double> values;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
      std::string_view tok = line.substr(i, j - i);
      // from_chars rejects a leading '+', which CULane files never carry.
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v))
        throw ParseError("line " + std::to_string(line_no) + ": non-numeric token '" + std::string(tok) + "'");
      values.push_back(v);
      i = j;
    }
    if (values.empty()) continue;
    if (values.size() % 2 != 0)
      throw ParseError("line " + std::to_string(line_no) + ": odd number of coordinates");
    if (values.size() < 4)
      throw ParseError("line " + std::to_string(line_no) + ": lane needs at least 2 points");
    Lane lane;
    for (std::size_t k = 0; k < values.size(); k += 2) lane.push_back({values[k], values[k + 1]});
    ann.lanes.push_back(std::move(lane));
  }
  return ann;
}

// Shortest decimal that round-trips each coordinate.
inline std::string serialize_annotation(const LaneAnnotation& ann) {
  std::string out;
  char buf[64];
  for (const auto& lane : ann.lanes) {
    for (const auto& p : lane) {
      for (double v : {p.x, p.y}) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        out.append(buf, ptr);
        out.push_back(' ');
      }
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace lanegen
