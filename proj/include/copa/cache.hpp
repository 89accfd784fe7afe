#pragma once

// Content-addressed render cache. The key fingerprints the cloud bytes, the
// rotation, and the render settings; entries live in memory and optionally
// on disk as float32 pixel blobs.
//
// When the disk layer is enabled every rendered image is rounded through
// float32 before first use, so a warm cache replays bit-identical pixels.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "copa/errors.hpp"
#include "copa/point_cloud.hpp"
#include "copa/render.hpp"
#include "copa/rotation.hpp"

namespace copa {

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a_bytes(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

template <class T>
std::uint64_t fnv1a_value(const T& v, std::uint64_t h = kFnvOffset) {
  static_assert(std::is_trivially_copyable_v<T>);
  return fnv1a_bytes(&v, sizeof(v), h);
}

inline std::uint64_t render_fingerprint(const PointCloud& cloud, const Rotation& rotation,
                                        const RenderConfig& config) {
  std::uint64_t h = kFnvOffset;
  h = fnv1a_value(cloud.size(), h);
  if (!cloud.positions.empty())
    h = fnv1a_bytes(cloud.positions.data(), cloud.positions.size() * sizeof(Vec3), h);
  if (!cloud.colors.empty())
    h = fnv1a_bytes(cloud.colors.data(), cloud.colors.size() * sizeof(Vec3), h);
  h = fnv1a_bytes(rotation.m.data(), rotation.m.size() * sizeof(double), h);
  h = fnv1a_value(config.height, h);
  h = fnv1a_value(config.width, h);
  h = fnv1a_value(config.channels, h);
  h = fnv1a_value(config.camera_distance, h);
  h = fnv1a_value(config.fov_deg, h);
  h = fnv1a_value(config.splat_radius, h);
  h = fnv1a_bytes(config.background.data(), config.background.size() * sizeof(double), h);
  return h;
}

class RenderCache {
 public:
  RenderCache() = default;

  explicit RenderCache(std::string directory) : dir_(std::move(directory)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  // Normalize -> rotate -> render, served from cache when possible.
  ProjectedImage get(const PointCloud& cloud, const Rotation& rotation,
                     const RenderConfig& config) {
    const std::uint64_t key = render_fingerprint(cloud, rotation, config);
    if (auto it = memory_.find(key); it != memory_.end()) {
      ++hits_;
      return it->second;
    }
    if (!dir_.empty()) {
      ProjectedImage img;
      if (load_disk(key, config, img)) {
        ++hits_;
        memory_.emplace(key, img);
        return img;
      }
    }
    ++misses_;
    ProjectedImage img = render(rotate(normalize_to_unit_ball(cloud), rotation), config);
    if (!dir_.empty()) {
      round_to_f32(img);
      save_disk(key, img);
    }
    memory_.emplace(key, img);
    return img;
  }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  std::size_t memory_entries() const { return memory_.size(); }
  const std::string& directory() const { return dir_; }

 private:
  std::string dir_;
  std::unordered_map<std::uint64_t, ProjectedImage> memory_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;

  std::string entry_path(std::uint64_t key) const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(key));
    return (std::filesystem::path(dir_) / (std::string(buf) + ".render")).string();
  }

  static void round_to_f32(ProjectedImage& img) {
    for (auto& p : img.pixels) p = static_cast<double>(static_cast<float>(p));
  }

  void save_disk(std::uint64_t key, const ProjectedImage& img) const {
    std::ofstream out(entry_path(key), std::ios::binary);
    if (!out) throw IoError("render cache: cannot write " + entry_path(key));
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(img.height),
                                   static_cast<std::uint32_t>(img.width),
                                   static_cast<std::uint32_t>(img.channels)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> f(img.pixels.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(img.pixels[i]);
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!out) throw IoError("render cache: write failed for " + entry_path(key));
  }

  bool load_disk(std::uint64_t key, const RenderConfig& config, ProjectedImage& img) const {
    std::ifstream in(entry_path(key), std::ios::binary);
    if (!in) return false;
    std::uint32_t dims[3];
    if (!in.read(reinterpret_cast<char*>(dims), sizeof(dims)))
      throw FormatError("render cache: truncated entry " + entry_path(key));
    img.height = static_cast<int>(dims[0]);
    img.width = static_cast<int>(dims[1]);
    img.channels = static_cast<int>(dims[2]);
    if (img.height != config.height || img.width != config.width ||
        img.channels != config.channels)
      throw FormatError("render cache: entry " + entry_path(key) +
                        " does not match the requested render size");
    std::vector<float> f(static_cast<std::size_t>(img.height) * img.width * img.channels);
    if (!in.read(reinterpret_cast<char*>(f.data()),
                 static_cast<std::streamsize>(f.size() * sizeof(float))))
      throw FormatError("render cache: truncated entry " + entry_path(key));
    img.pixels.assign(f.begin(), f.end());
    img.view_id = 0;
    img.source = ImageSource{};
    return true;
  }
};

}  // namespace copa
