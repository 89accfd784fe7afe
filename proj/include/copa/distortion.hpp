#pragma once

// Parametric distortion generator: four kinds, seven severity levels each.
// Severity schedules (relative to the cloud's bounding radius where a
// length scale is involved):
//   gaussian_geometry_noise  per-axis sigma = 0.002 * radius * 2^(level-1)
//   color_noise              per-channel sigma = 0.02 * 2^(level-1), clamped after
//   downsample               keep fraction 0.9 .. 0.1, linear over levels
//   quantize                 step = radius/256 * 2^(level-1)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "copa/errors.hpp"
#include "copa/point_cloud.hpp"
#include "copa/rng.hpp"

namespace copa {

enum class DistortionKind {
  gaussian_geometry_noise,
  color_noise,
  downsample,
  quantize,
};

inline constexpr int kDistortionKindCount = 4;
inline constexpr int kDistortionLevels = 7;

inline const char* to_string(DistortionKind kind) {
  switch (kind) {
    case DistortionKind::gaussian_geometry_noise: return "gaussian_geometry_noise";
    case DistortionKind::color_noise: return "color_noise";
    case DistortionKind::downsample: return "downsample";
    case DistortionKind::quantize: return "quantize";
  }
  return "?";
}

inline DistortionKind distortion_kind_from_string(const std::string& name) {
  for (int i = 0; i < kDistortionKindCount; ++i) {
    const auto kind = static_cast<DistortionKind>(i);
    if (name == to_string(kind)) return kind;
  }
  throw ConfigError("unknown distortion kind \"" + name + "\"");
}

struct DistortionSpec {
  DistortionKind kind = DistortionKind::gaussian_geometry_noise;
  int level = 1;  // 1..7, higher = more severe
  std::uint64_t seed = 0;
};

inline void validate(const DistortionSpec& spec) {
  if (spec.level < 1 || spec.level > kDistortionLevels)
    throw ConfigError("distortion level " + std::to_string(spec.level) + " outside [1," +
                      std::to_string(kDistortionLevels) + "]");
}

// Effective per-axis sigma of gaussian_geometry_noise for this cloud/level.
inline double geometry_noise_sigma(const PointCloud& cloud, int level) {
  return 0.002 * bounding_radius(cloud) * std::pow(2.0, level - 1);
}

inline double color_noise_sigma(int level) { return 0.02 * std::pow(2.0, level - 1); }

// Fraction of points kept by downsample; 0.9 at level 1 down to 0.1 at level 7.
inline double downsample_keep_fraction(int level) {
  return 0.9 - 0.8 * (level - 1) / static_cast<double>(kDistortionLevels - 1);
}

inline double quantize_step(const PointCloud& cloud, int level) {
  return bounding_radius(cloud) / 256.0 * std::pow(2.0, level - 1);
}

// Applies one distortion. Pure function of (cloud, spec): the same inputs
// always produce the same output. Point count is unchanged except for
// downsample, which keeps at least 10% of the points (and at least one).
inline PointCloud synth_distort(const PointCloud& cloud, const DistortionSpec& spec) {
  require_non_empty(cloud, "synth_distort");
  validate(cloud);
  validate(spec);
  Rng rng = make_rng(derive_seed(spec.seed, tag("distort"), static_cast<int>(spec.kind),
                                 spec.level));
  PointCloud out = cloud;
  switch (spec.kind) {
    case DistortionKind::gaussian_geometry_noise: {
      const double sigma = geometry_noise_sigma(cloud, spec.level);
      for (auto& p : out.positions)
        for (int k = 0; k < 3; ++k) p[k] += sigma * normal01(rng);
      break;
    }
    case DistortionKind::color_noise: {
      const double sigma = color_noise_sigma(spec.level);
      for (auto& c : out.colors)
        for (int k = 0; k < 3; ++k)
          c[k] = std::clamp(c[k] + sigma * normal01(rng), 0.0, 1.0);
      break;
    }
    case DistortionKind::downsample: {
      const double keep = downsample_keep_fraction(spec.level);
      const std::size_t n = cloud.size();
      const std::size_t kept = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(keep * static_cast<double>(n))));
      // Partial Fisher-Yates over indices; kept points stay in original order.
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t i = 0; i < kept; ++i) {
        const std::size_t j = i + uniform_below(rng, n - i);
        std::swap(idx[i], idx[j]);
      }
      idx.resize(kept);
      std::sort(idx.begin(), idx.end());
      PointCloud down;
      down.positions.reserve(kept);
      down.colors.reserve(kept);
      for (const std::size_t i : idx) down.add(cloud.positions[i], cloud.colors[i]);
      out = std::move(down);
      break;
    }
    case DistortionKind::quantize: {
      const double step = quantize_step(cloud, spec.level);
      if (step > 0.0)
        for (auto& p : out.positions)
          for (int k = 0; k < 3; ++k) p[k] = std::round(p[k] / step) * step;
      break;
    }
  }
  validate(out);
  return out;
}

}  // namespace copa
