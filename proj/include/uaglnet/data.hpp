// SPDX-License-Identifier: Apache-2.0
//
// Synthetic building scenes, 8-bit PNM image files, tiling and augmentation.
// Images are [3, H, W] in [0, 1]; masks are [1, H, W] with values in {0, 1}.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uaglnet/config.hpp"
#include "uaglnet/rng.hpp"
#include "uaglnet/tensor.hpp"

namespace uaglnet {

struct Scene {
  TensorF image;
  TensorF mask;
  std::uint64_t seed = 0;
};

struct SceneOptions {
  double noise_std = 0.0;  // Gaussian noise on the 0..255 scale
  int degrade = 1;         // block-average down by this factor, then bilinear back up
  bool occluders = true;   // allow thin strips drawn over buildings
};

/// Difficulty bit 0 adds noise with std 5, bit 1 degrades resolution by 16.
SceneOptions options_for_difficulty(int difficulty);
/// Explicit noise_std >= 0 and degrade > 1 in the spec override the difficulty.
SceneOptions options_for(const DatasetSpec& spec);

/// 3 to 20 axis-aligned or rotated rectangles over a smooth textured
/// background. Placement stops once about 45% of the scene is covered.
Scene generate_synthetic_scene(std::uint64_t seed, Index size, const SceneOptions& options = {});

/// Mean over each factor x factor block, then bilinear x factor upsampling.
TensorF degrade_resolution(const TensorF& image, int factor);

// --- PNM files (P5 graymap, P6 pixmap, maxval <= 255) ---

/// [1, H, W] for P5 or [3, H, W] for P6, scaled to [0, 1].
TensorF parse_pnm(const std::string& bytes);
TensorF load_image(const std::string& path);
/// round(255 * v) after clamping to [0, 1]; channel count picks P5 or P6.
std::string encode_pnm(const TensorF& image);
void save_image(const std::string& path, const TensorF& image);
/// Binary mask written as {0, 255}.
void save_mask(const std::string& path, const TensorF& mask);

// --- Tiling ---

struct TileGrid {
  Index height = 0, width = 0;  // source
  Index padded_height = 0, padded_width = 0;
  Index tile = 0;
  std::vector<std::pair<Index, Index>> origins;  // (y, x), row-major
};

/// Pads up to the next multiple of `tile`; tiles partition the padded image.
TileGrid tile_grid(Index height, Index width, Index tile);

struct TileSet {
  TileGrid grid;
  std::vector<TensorF> tiles;
};

TileSet tile_image(const TensorF& image, Index tile);
/// Inverse of tile_image on the padded canvas.
TensorF reassemble(const TileSet& set);
/// Reassembles and crops back to the source size.
TensorF reassemble_cropped(const TileSet& set);

TensorF crop(const TensorF& image, Index y, Index x, Index height, Index width);
TensorF hflip(const TensorF& image);

/// Random crop followed by a horizontal flip with probability `flip_prob`,
/// applied identically to image and mask. Draws y, x, then the flip.
Scene augment(const Scene& scene, Rng& rng, Index crop_size, double flip_prob = 0.5);

}  // namespace uaglnet
