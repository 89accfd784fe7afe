#pragma once

// Patch-mix anchors: block-structured binary masks over 16x16 patches and
// the mixing of two same-content, different-distortion projections.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "copa/errors.hpp"
#include "copa/render.hpp"
#include "copa/rng.hpp"

namespace copa {

// Binary mask at block resolution; expansion to pixels is constant within
// each patch_size x patch_size block.
struct PatchMask {
  int block_rows = 0;
  int block_cols = 0;
  int patch_size = kPatchSize;
  std::vector<std::uint8_t> blocks;  // row-major, 0 or 1

  int block_count() const { return block_rows * block_cols; }
  std::uint8_t block(int by, int bx) const {
    return blocks[static_cast<std::size_t>(by * block_cols + bx)];
  }
  int ones() const {
    int n = 0;
    for (const auto b : blocks) n += b;
    return n;
  }
  // Mask value at pixel resolution.
  std::uint8_t at_pixel(int y, int x) const {
    return block(y / patch_size, x / patch_size);
  }
};

// Fraction of one-pixels; equals ones/blocks exactly for block masks.
inline double masking_ratio(const PatchMask& mask) {
  if (mask.block_count() == 0) throw ShapeError("masking_ratio: empty mask");
  return static_cast<double>(mask.ones()) / static_cast<double>(mask.block_count());
}

// Samples a mask with ratio inside [r_min, r_max]: the one-block count is
// drawn uniformly from the integers compatible with the bounds, then that
// many blocks are placed uniformly without replacement.
inline PatchMask sample_mask(int height, int width, double r_min, double r_max,
                             std::uint64_t seed) {
  if (height <= 0 || width <= 0 || height % kPatchSize != 0 || width % kPatchSize != 0)
    throw ShapeError("sample_mask: image size " + std::to_string(height) + "x" +
                     std::to_string(width) + " not divisible by " + std::to_string(kPatchSize));
  if (!(r_min >= 0.0 && r_min <= r_max && r_max <= 1.0))
    throw ConfigError("sample_mask: need 0 <= r_min <= r_max <= 1");

  PatchMask mask;
  mask.block_rows = height / kPatchSize;
  mask.block_cols = width / kPatchSize;
  const int total = mask.block_count();
  mask.blocks.assign(static_cast<std::size_t>(total), 0);

  const int lo = static_cast<int>(std::ceil(r_min * total - 1e-9));
  const int hi = static_cast<int>(std::floor(r_max * total + 1e-9));
  if (lo > hi)
    throw ConfigError("sample_mask: no block count satisfies the ratio bounds");

  Rng rng = make_rng(derive_seed(seed, tag("mask")));
  const int count = lo + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(hi - lo + 1)));

  // Partial Fisher-Yates to pick `count` distinct blocks.
  std::vector<int> idx(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(total - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    mask.blocks[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
  }
  return mask;
}

// anchor = M (.) x1 + (1-M) (.) x2, pixel-exact. Requires same content and
// two distinct distortion ids; the output records both.
inline ProjectedImage mix(const ProjectedImage& x1, const ProjectedImage& x2,
                          const PatchMask& mask) {
  if (!x1.same_shape(x2)) throw ShapeError("mix: parent image shapes differ");
  if (mask.block_rows * mask.patch_size != x1.height ||
      mask.block_cols * mask.patch_size != x1.width)
    throw ShapeError("mix: mask shape does not match images");
  if (x1.source.content_id != x2.source.content_id)
    throw UsageError("mix: parents must share content_id");
  if (x1.source.distortion_id == x2.source.distortion_id)
    throw UsageError("mix: parents must carry different distortion ids");

  ProjectedImage out;
  out.height = x1.height;
  out.width = x1.width;
  out.channels = x1.channels;
  out.pixels.resize(x1.pixels.size());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const ProjectedImage& src = mask.at_pixel(y, x) ? x1 : x2;
      for (int c = 0; c < out.channels; ++c) out.at(y, x, c) = src.at(y, x, c);
    }
  }
  out.view_id = x1.view_id;
  out.source.content_id = x1.source.content_id;
  out.source.distortion_id = x1.source.distortion_id;
  out.source.distortion_id2 = x2.source.distortion_id;
  return out;
}

}  // namespace copa
