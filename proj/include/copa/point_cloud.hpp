#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "copa/errors.hpp"

namespace copa {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(double s, const Vec3& a) {
  return {s * a[0], s * a[1], s * a[2]};
}
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// One colored point set. Colors are kept in [0,1]; 8-bit quantization only
// happens at file boundaries.
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }

  void add(const Vec3& p, const Vec3& c) {
    positions.push_back(p);
    colors.push_back(c);
  }
};

// Checks the PointCloud invariants: matching lengths, finite positions,
// color channels inside [0,1]. Throws on violation.
inline void validate(const PointCloud& cloud) {
  if (cloud.positions.size() != cloud.colors.size())
    throw ShapeError("point cloud positions/colors length mismatch");
  for (const auto& p : cloud.positions)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
      throw NumericError("point cloud contains non-finite position");
  for (const auto& c : cloud.colors)
    for (int k = 0; k < 3; ++k)
      if (!(c[k] >= 0.0 && c[k] <= 1.0))
        throw NumericError("point cloud color channel outside [0,1]");
}

inline void require_non_empty(const PointCloud& cloud, const char* where) {
  if (cloud.empty())
    throw EmptyCloudError(std::string(where) + ": empty point cloud");
}

// Centroid of all points.
inline Vec3 centroid(const PointCloud& cloud) {
  require_non_empty(cloud, "centroid");
  Vec3 c{0, 0, 0};
  for (const auto& p : cloud.positions) c = c + p;
  return (1.0 / static_cast<double>(cloud.size())) * c;
}

// Max distance of any point from the centroid.
inline double bounding_radius(const PointCloud& cloud) {
  const Vec3 c = centroid(cloud);
  double r = 0.0;
  for (const auto& p : cloud.positions) r = std::max(r, norm(p - c));
  return r;
}

}  // namespace copa
