#pragma once

// Shared data plumbing for the training loops: a lazy PLY loader keyed by
// manifest path and a per-content view of manifest rows.

#include <algorithm>
#include <filesystem>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "copa/errors.hpp"
#include "copa/manifest.hpp"
#include "copa/ply_io.hpp"
#include "copa/point_cloud.hpp"

namespace copa {

// Loads each referenced cloud once. Relative manifest paths resolve against
// the supplied base directory (usually the manifest's directory).
class CloudStore {
 public:
  explicit CloudStore(std::string base_dir = "") : base_(std::move(base_dir)) {}

  const PointCloud& get(const std::string& path) {
    if (auto it = clouds_.find(path); it != clouds_.end()) return it->second;
    std::filesystem::path p(path);
    if (p.is_relative() && !base_.empty()) p = std::filesystem::path(base_) / p;
    auto [it, inserted] = clouds_.emplace(path, load_ply(p.string()));
    return it->second;
  }

  std::size_t loaded() const { return clouds_.size(); }

 private:
  std::string base_;
  std::unordered_map<std::string, PointCloud> clouds_;
};

struct ContentRows {
  int content_id = -1;
  std::vector<std::size_t> rows;  // indices into manifest.entries
};

// Groups manifest rows by content. Contents ascend; rows within a content
// are ordered by (distortion_id, level, path) so row indices are stable
// regardless of manifest order.
inline std::vector<ContentRows> build_content_index(const DatasetManifest& manifest) {
  std::vector<ContentRows> index;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const int c = manifest.entries[i].content_id;
    auto it = std::find_if(index.begin(), index.end(),
                           [&](const ContentRows& r) { return r.content_id == c; });
    if (it == index.end()) {
      index.push_back({c, {i}});
    } else {
      it->rows.push_back(i);
    }
  }
  std::sort(index.begin(), index.end(),
            [](const ContentRows& a, const ContentRows& b) { return a.content_id < b.content_id; });
  for (auto& content : index) {
    std::sort(content.rows.begin(), content.rows.end(), [&](std::size_t a, std::size_t b) {
      const ManifestEntry& ea = manifest.entries[a];
      const ManifestEntry& eb = manifest.entries[b];
      return std::tie(ea.distortion_id, ea.level, ea.path) <
             std::tie(eb.distortion_id, eb.level, eb.path);
    });
  }
  return index;
}

inline std::vector<ContentRows> filter_contents(const std::vector<ContentRows>& index,
                                                const std::vector<int>& keep) {
  std::vector<ContentRows> out;
  for (const auto& c : index)
    if (std::find(keep.begin(), keep.end(), c.content_id) != keep.end()) out.push_back(c);
  return out;
}

}  // namespace copa
