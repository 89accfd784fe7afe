#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "copa/point_cloud.hpp"
#include "copa/rng.hpp"

namespace copa {

// Row-major 3x3 rotation matrix.
struct Rotation {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Vec3 apply(const Vec3& p) const {
    return {m[0] * p[0] + m[1] * p[1] + m[2] * p[2],
            m[3] * p[0] + m[4] * p[1] + m[5] * p[2],
            m[6] * p[0] + m[7] * p[1] + m[8] * p[2]};
  }

  Rotation transposed() const {
    return Rotation{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }

  bool operator==(const Rotation&) const = default;
};

inline Rotation identity_rotation() { return {}; }

inline Rotation compose(const Rotation& a, const Rotation& b) {
  Rotation r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a.m[3 * i + k] * b.m[3 * k + j];
      r.m[3 * i + j] = s;
    }
  return r;
}

inline Rotation from_quaternion(double w, double x, double y, double z) {
  Rotation r;
  r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
         2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  return r;
}

// Uniform rotation over SO(3): a standard normal 4-vector normalized to a
// unit quaternion is uniform on S^3, which double-covers SO(3) uniformly.
inline Rotation random_rotation(std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, tag("rotation")));
  double q[4];
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (double& v : q) {
      v = normal01(rng);
      n2 += v * v;
    }
  } while (n2 < 1e-12);
  const double inv = 1.0 / std::sqrt(n2);
  return from_quaternion(q[0] * inv, q[1] * inv, q[2] * inv, q[3] * inv);
}

inline PointCloud rotate(const PointCloud& cloud, const Rotation& rotation) {
  PointCloud out;
  out.positions.reserve(cloud.size());
  out.colors = cloud.colors;
  for (const auto& p : cloud.positions) out.positions.push_back(rotation.apply(p));
  return out;
}

}  // namespace copa
