#pragma once

// Procedural reference clouds for desk-scale experiments and tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "copa/errors.hpp"
#include "copa/point_cloud.hpp"
#include "copa/rng.hpp"

namespace copa {

enum class ShapeKind { sphere, cube, torus, helix, plane, cylinder, blob, rings };

inline constexpr int kShapeKindCount = 8;

inline const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::cube: return "cube";
    case ShapeKind::torus: return "torus";
    case ShapeKind::helix: return "helix";
    case ShapeKind::plane: return "plane";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::blob: return "blob";
    case ShapeKind::rings: return "rings";
  }
  return "?";
}

// Uniform point on the unit sphere surface.
inline Vec3 sphere_point(Rng& rng) {
  const double z = 2.0 * uniform01(rng) - 1.0;
  const double phi = 2.0 * 3.14159265358979323846 * uniform01(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

// Generates one synthetic reference cloud with position-dependent colors so
// projections carry texture the encoders can latch onto.
inline PointCloud make_shape_cloud(ShapeKind kind, std::size_t n_points, std::uint64_t seed) {
  if (n_points == 0) throw ConfigError("make_shape_cloud: n_points must be positive");
  Rng rng = make_rng(derive_seed(seed, tag("shape"), static_cast<int>(kind)));
  const double pi = 3.14159265358979323846;
  PointCloud cloud;
  cloud.positions.reserve(n_points);
  cloud.colors.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    Vec3 p{0, 0, 0};
    switch (kind) {
      case ShapeKind::sphere:
        p = sphere_point(rng);
        break;
      case ShapeKind::cube: {
        // Random point on the surface of the [-1,1]^3 cube.
        const int face = static_cast<int>(uniform_below(rng, 6));
        const double u = 2.0 * uniform01(rng) - 1.0;
        const double v = 2.0 * uniform01(rng) - 1.0;
        const double s = (face % 2 == 0) ? 1.0 : -1.0;
        if (face / 2 == 0) p = {s, u, v};
        else if (face / 2 == 1) p = {u, s, v};
        else p = {u, v, s};
        break;
      }
      case ShapeKind::torus: {
        const double theta = 2.0 * pi * uniform01(rng);
        const double phi = 2.0 * pi * uniform01(rng);
        const double R = 0.7, r = 0.3;
        p = {(R + r * std::cos(phi)) * std::cos(theta),
             (R + r * std::cos(phi)) * std::sin(theta), r * std::sin(phi)};
        break;
      }
      case ShapeKind::helix: {
        const double t = uniform01(rng);
        const double angle = 6.0 * pi * t;
        const double jitter = 0.08;
        p = {0.8 * std::cos(angle) + jitter * (uniform01(rng) - 0.5),
             0.8 * std::sin(angle) + jitter * (uniform01(rng) - 0.5),
             2.0 * t - 1.0 + jitter * (uniform01(rng) - 0.5)};
        break;
      }
      case ShapeKind::plane: {
        p = {2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0,
             0.15 * std::sin(4.0 * pi * uniform01(rng))};
        break;
      }
      case ShapeKind::cylinder: {
        const double theta = 2.0 * pi * uniform01(rng);
        p = {0.6 * std::cos(theta), 0.6 * std::sin(theta), 2.0 * uniform01(rng) - 1.0};
        break;
      }
      case ShapeKind::blob: {
        // Mixture of three gaussian lobes.
        const int lobe = static_cast<int>(uniform_below(rng, 3));
        const Vec3 centers[3] = {{0.5, 0.0, 0.3}, {-0.4, 0.4, -0.3}, {0.0, -0.5, 0.0}};
        p = centers[lobe];
        for (int k = 0; k < 3; ++k) p[k] += 0.25 * normal01(rng);
        break;
      }
      case ShapeKind::rings: {
        const int ring = static_cast<int>(uniform_below(rng, 3));
        const double theta = 2.0 * pi * uniform01(rng);
        const double rad = 0.3 + 0.3 * ring;
        p = {rad * std::cos(theta), rad * std::sin(theta), 0.5 * (ring - 1)};
        break;
      }
    }
    // Smooth position-dependent coloring, distinct per shape kind.
    const double k0 = 0.5 + 0.5 * std::sin(3.0 * p[0] + static_cast<int>(kind));
    const double k1 = 0.5 + 0.5 * std::cos(3.0 * p[1] - 0.7 * static_cast<int>(kind));
    const double k2 = 0.5 + 0.5 * std::sin(2.0 * p[2] + 1.3 * static_cast<int>(kind));
    cloud.add(p, {k0, k1, k2});
  }
  return cloud;
}

// Cycles through the shape kinds to produce `count` distinct contents.
inline std::vector<PointCloud> make_shape_dataset(int count, std::size_t n_points,
                                                  std::uint64_t seed) {
  std::vector<PointCloud> clouds;
  clouds.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    clouds.push_back(make_shape_cloud(static_cast<ShapeKind>(i % kShapeKindCount), n_points,
                                      derive_seed(seed, tag("content"), i)));
  return clouds;
}

}  // namespace copa
