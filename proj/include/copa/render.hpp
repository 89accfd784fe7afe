#pragma once

// Deterministic software rasterizer: pinhole perspective camera, z-buffered
// point splatting with integer-pixel discs.
//
// Camera convention (fixed): the camera sits on the +z axis at
// camera_distance, looks at the origin with up = +y. The six axis views are
// realized by rotating the cloud into that standard frame; up-vector hints
// are +z for the ±x/±y cameras and +y for the ±z cameras. View order is
// +x,-x,+y,-y,+z,-z with view_id 1..6; stitching is row-major over that
// order (row 1: +x,-x,+y; row 2: -y,+z,-z).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "copa/errors.hpp"
#include "copa/point_cloud.hpp"
#include "copa/rotation.hpp"

namespace copa {

struct RenderConfig {
  int height = 512;
  int width = 512;
  int channels = 3;
  double camera_distance = 3.0;   // unit-ball radii along the viewing axis
  double fov_deg = 43.3;          // unit ball spans ~90% of the frame at distance 3
  int splat_radius = 1;           // pixels
  Vec3 background{1.0, 1.0, 1.0};

  bool operator==(const RenderConfig&) const = default;
};

inline constexpr int kPatchSize = 16;

inline void validate(const RenderConfig& config) {
  if (config.height <= 0 || config.width <= 0)
    throw ConfigError("render: non-positive image size");
  if (config.height % kPatchSize != 0 || config.width % kPatchSize != 0)
    throw ConfigError("render: image size " + std::to_string(config.height) + "x" +
                      std::to_string(config.width) + " not divisible by patch size " +
                      std::to_string(kPatchSize));
  if (config.channels != 3) throw ConfigError("render: only 3-channel images supported");
  if (!(config.camera_distance > 1.0))
    throw ConfigError("render: camera_distance must exceed the unit-ball radius 1");
  if (!(config.fov_deg > 0.0 && config.fov_deg < 180.0))
    throw ConfigError("render: field of view outside (0,180) degrees");
  if (config.splat_radius < 0) throw ConfigError("render: negative splat radius");
}

struct ImageSource {
  int content_id = -1;
  int distortion_id = -1;
  int distortion_id2 = -1;  // set for patch-mixed anchors

  bool operator==(const ImageSource&) const = default;
};

struct ProjectedImage {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> pixels;  // row-major (y, x, c), values in [0,1]
  int view_id = 0;
  ImageSource source;

  double& at(int y, int x, int c) {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  double at(int y, int x, int c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  bool same_shape(const ProjectedImage& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
};

inline ProjectedImage solid_image(int height, int width, const Vec3& color) {
  ProjectedImage img;
  img.height = height;
  img.width = width;
  img.pixels.resize(static_cast<std::size_t>(height) * width * 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[static_cast<std::size_t>(c)];
  return img;
}

// Centers the cloud at the origin and rescales so the farthest point sits at
// distance 1. A single point (or fully coincident points) maps to the
// origin with the scale left at 1.
inline PointCloud normalize_to_unit_ball(const PointCloud& cloud) {
  require_non_empty(cloud, "normalize_to_unit_ball");
  const Vec3 c = centroid(cloud);
  double radius = 0.0;
  for (const auto& p : cloud.positions) radius = std::max(radius, norm(p - c));
  const double scale = radius > 1e-12 ? 1.0 / radius : 1.0;
  PointCloud out;
  out.positions.reserve(cloud.size());
  out.colors = cloud.colors;
  for (const auto& p : cloud.positions) out.positions.push_back(scale * (p - c));
  return out;
}

// Renders with the standard +z camera. Nearest point wins each pixel; depth
// ties fall back to lexicographically smaller color so the image is a pure
// function of the point multiset.
inline ProjectedImage render(const PointCloud& cloud, const RenderConfig& config) {
  require_non_empty(cloud, "render");
  validate(config);
  const int h = config.height, w = config.width;
  ProjectedImage img;
  img.height = h;
  img.width = w;
  img.pixels.resize(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = config.background[static_cast<std::size_t>(c)];

  std::vector<double> zbuf(static_cast<std::size_t>(h) * w,
                           std::numeric_limits<double>::infinity());
  const double fov_rad = config.fov_deg * 3.14159265358979323846 / 180.0;
  const double focal = 0.5 * std::min(w, h) / std::tan(0.5 * fov_rad);
  const int r = config.splat_radius;
  const int r2 = r * r;

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const Vec3& col = cloud.colors[i];
    const double depth = config.camera_distance - p[2];
    if (depth <= 1e-9) continue;  // behind or on the camera plane
    const double u = 0.5 * w + focal * p[0] / depth;
    const double v = 0.5 * h - focal * p[1] / depth;
    const int px = static_cast<int>(std::floor(u));
    const int py = static_cast<int>(std::floor(v));
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (dx * dx + dy * dy > r2) continue;
        const int x = px + dx;
        const int y = py + dy;
        if (x < 0 || x >= w || y < 0 || y >= h) continue;
        const std::size_t zi = static_cast<std::size_t>(y) * w + x;
        bool wins = depth < zbuf[zi];
        if (!wins && depth == zbuf[zi]) {
          const double* cur = &img.pixels[zi * 3];
          wins = std::lexicographical_compare(col.begin(), col.end(), cur, cur + 3);
        }
        if (wins) {
          zbuf[zi] = depth;
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[static_cast<std::size_t>(c)];
        }
      }
    }
  }
  return img;
}

// Rotation that maps the view axis onto the +z camera axis.
inline Rotation view_rotation(int view_id) {
  switch (view_id) {
    case 1: return Rotation{{0, 1, 0, /**/ 0, 0, 1, /**/ 1, 0, 0}};    // +x
    case 2: return Rotation{{0, -1, 0, /**/ 0, 0, 1, /**/ -1, 0, 0}};  // -x
    case 3: return Rotation{{-1, 0, 0, /**/ 0, 0, 1, /**/ 0, 1, 0}};   // +y
    case 4: return Rotation{{1, 0, 0, /**/ 0, 0, 1, /**/ 0, -1, 0}};   // -y
    case 5: return Rotation{{1, 0, 0, /**/ 0, 1, 0, /**/ 0, 0, 1}};    // +z
    case 6: return Rotation{{-1, 0, 0, /**/ 0, 1, 0, /**/ 0, 0, -1}};  // -z
    default: throw ConfigError("view_rotation: view_id outside [1,6]");
  }
}

inline constexpr int kNumViews = 6;

// Normalizes, then renders from the six axis viewpoints in fixed order.
inline std::vector<ProjectedImage> render_six_views(const PointCloud& cloud,
                                                    const RenderConfig& config) {
  const PointCloud normalized = normalize_to_unit_ball(cloud);
  std::vector<ProjectedImage> views;
  views.reserve(kNumViews);
  for (int v = 1; v <= kNumViews; ++v) {
    ProjectedImage img = render(rotate(normalized, view_rotation(v)), config);
    img.view_id = v;
    views.push_back(std::move(img));
  }
  return views;
}

// 2-row x 3-column grid of the six views, pixel-exact copies in view order.
inline ProjectedImage stitch_views(const std::vector<ProjectedImage>& views) {
  if (views.size() != kNumViews)
    throw ShapeError("stitch_views: expected 6 views, got " + std::to_string(views.size()));
  const int h = views[0].height, w = views[0].width;
  for (const auto& v : views)
    if (!v.same_shape(views[0])) throw ShapeError("stitch_views: view shapes differ");

  ProjectedImage out;
  out.height = 2 * h;
  out.width = 3 * w;
  out.pixels.resize(static_cast<std::size_t>(out.height) * out.width * 3);
  for (int v = 0; v < kNumViews; ++v) {
    const int row0 = (v / 3) * h;
    const int col0 = (v % 3) * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(row0 + y, col0 + x, c) = views[static_cast<std::size_t>(v)].at(y, x, c);
  }
  out.source = views[0].source;
  return out;
}

}  // namespace copa
