#pragma once

#include <cstdio>
#include <fstream>
#include <map>

#include "lanegen/benchmark.hpp"
#include "test_util.hpp"

namespace lanegen::testing {

// Relative path -> file bytes for every regular file under root.
inline std::map<std::string, std::string> tree_snapshot(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[std::filesystem::relative(e.path(), root).generic_string()] =
        std::string(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

// Writes n road scenes with sidecar annotations as <dir>/<sub>/NNNNN.<ext>.
inline std::vector<std::string> write_source_tree(const std::filesystem::path& dir, int n, const std::string& ext = ".jpg",
                                                  int w = 64, int h = 40) {
  std::vector<std::string> rels;
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "clip%d/%05d", i % 2, i);
    const auto s = road_scene(static_cast<std::uint64_t>(100 + i), w, h);
    const auto img = dir / (std::string(name) + ext);
    std::filesystem::create_directories(img.parent_path());
    write_image(img, s.image);
    write_file_atomic(annotation_sidecar(img), serialize_annotation(s.annotation));
    rels.push_back(std::string(name) + ext);
  }
  std::sort(rels.begin(), rels.end());
  return rels;
}

}  // namespace lanegen::testing
