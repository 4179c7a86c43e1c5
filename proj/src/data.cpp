// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "uaglnet/ops.hpp"

namespace uaglnet {

SceneOptions options_for_difficulty(int difficulty) {
  if (difficulty < 0 || difficulty > 3) {
    throw ConfigError("difficulty must be in 0..3, got " + std::to_string(difficulty));
  }
  SceneOptions o;
  if (difficulty & 1) o.noise_std = 5.0;
  if (difficulty & 2) o.degrade = 16;
  return o;
}

SceneOptions options_for(const DatasetSpec& spec) {
  SceneOptions o = options_for_difficulty(spec.difficulty);
  if (spec.noise_std >= 0) o.noise_std = spec.noise_std;
  if (spec.degrade > 1) o.degrade = spec.degrade;
  return o;
}

namespace {

struct Canvas {
  Index size;
  std::vector<float> rgb;   // [3, size, size]
  std::vector<float> mask;  // [size, size]

  float& at(int c, Index y, Index x) { return rgb[static_cast<std::size_t>((c * size + y) * size + x)]; }
  float& m(Index y, Index x) { return mask[static_cast<std::size_t>(y * size + x)]; }
};

struct Rect {
  double cx, cy, half_w, half_h, angle;

  // Pixel-centre containment test in the rectangle's own frame.
  bool contains(double px, double py, double dx = 0, double dy = 0) const {
    const double x = px - cx - dx, y = py - cy - dy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * x + s * y, v = -s * x + c * y;
    return std::abs(u) <= half_w && std::abs(v) <= half_h;
  }
  double signed_u(double px, double py) const {
    return std::cos(angle) * (px - cx) + std::sin(angle) * (py - cy);
  }
  double radius() const { return std::hypot(half_w, half_h); }
};

void paint_background(Canvas& cv, Rng& rng) {
  const double base[3] = {0.30 + rng.uniform(-0.05, 0.05), 0.36 + rng.uniform(-0.05, 0.05),
                          0.26 + rng.uniform(-0.05, 0.05)};
  struct Wave {
    double amp, fx, fy, phase;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 4; ++i) {
    waves.push_back({rng.uniform(0.015, 0.05), rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0),
                     rng.uniform(0.0, 2 * std::numbers::pi)});
  }
  const double tint[3] = {rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2)};
  const double n = static_cast<double>(cv.size);
  for (Index y = 0; y < cv.size; ++y) {
    for (Index x = 0; x < cv.size; ++x) {
      double t = 0;
      for (const auto& w : waves) {
        t += w.amp * std::sin(2 * std::numbers::pi * (w.fx * x + w.fy * y) / n + w.phase);
      }
      for (int c = 0; c < 3; ++c) cv.at(c, y, x) = static_cast<float>(base[c] + tint[c] * t);
    }
  }
}

// Shadow first (ground only), then the roof with a two-tone ridge.
double paint_building(Canvas& cv, const Rect& r, Rng& rng) {
  const double bright = rng.uniform(0.55, 0.95);
  double roof[3];
  for (double& c : roof) c = std::clamp(bright * (1.0 + rng.uniform(-0.15, 0.15)), 0.0, 1.0);
  const double ridge = rng.uniform(0.8, 0.95);
  const double shadow = 0.15 * static_cast<double>(cv.size) / 64.0;
  const double reach = r.radius() + shadow + 1;
  const Index y0 = std::max<Index>(0, static_cast<Index>(std::floor(r.cy - reach)));
  const Index y1 = std::min<Index>(cv.size - 1, static_cast<Index>(std::ceil(r.cy + reach)));
  const Index x0 = std::max<Index>(0, static_cast<Index>(std::floor(r.cx - reach)));
  const Index x1 = std::min<Index>(cv.size - 1, static_cast<Index>(std::ceil(r.cx + reach)));
  const double offset = 2.0 * static_cast<double>(cv.size) / 64.0;
  Index added = 0;
  for (Index y = y0; y <= y1; ++y) {
    for (Index x = x0; x <= x1; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      if (r.contains(px, py)) {
        if (cv.m(y, x) == 0.0f) ++added;
        cv.m(y, x) = 1.0f;
        const double shade = r.signed_u(px, py) < 0 ? ridge : 1.0;
        for (int c = 0; c < 3; ++c) cv.at(c, y, x) = static_cast<float>(roof[c] * shade);
      } else if (cv.m(y, x) == 0.0f && r.contains(px, py, offset, offset)) {
        for (int c = 0; c < 3; ++c) cv.at(c, y, x) *= 0.6f;
      }
    }
  }
  return static_cast<double>(added);
}

void paint_occluders(Canvas& cv, Rng& rng) {
  const auto strips = rng.uniform_int(1, 2);
  for (std::int64_t s = 0; s < strips; ++s) {
    const bool horizontal = rng.bernoulli(0.5);
    const Index thickness = rng.uniform_int(1, 2);
    const Index len = static_cast<Index>(rng.uniform(0.3, 0.6) * static_cast<double>(cv.size));
    const Index along = rng.uniform_int(0, cv.size - len);
    const Index across = rng.uniform_int(0, cv.size - thickness);
    const float color[3] = {0.12f, 0.24f, 0.10f};
    for (Index a = along; a < along + len; ++a) {
      for (Index t = across; t < across + thickness; ++t) {
        const Index y = horizontal ? t : a, x = horizontal ? a : t;
        for (int c = 0; c < 3; ++c) cv.at(c, y, x) = color[c];
      }
    }
  }
}

}  // namespace

Scene generate_synthetic_scene(std::uint64_t seed, Index size, const SceneOptions& options) {
  if (size < 32 || size % 32 != 0) {
    throw ConfigError("scene size must be a positive multiple of 32, got " + std::to_string(size));
  }
  Rng rng(seed);
  Canvas cv{size, std::vector<float>(static_cast<std::size_t>(3 * size * size)),
            std::vector<float>(static_cast<std::size_t>(size * size), 0.0f)};
  paint_background(cv, rng);

  const double n = static_cast<double>(size);
  const double area = n * n;
  const auto target_count = rng.uniform_int(3, 20);
  double covered = 0;
  for (std::int64_t placed = 0; placed < 20; ++placed) {
    if (covered / area >= 0.45) break;
    if (placed >= target_count && covered / area >= 0.05) break;
    Rect r{};
    r.half_w = 0.5 * rng.uniform(0.12, 0.3) * n;
    r.half_h = 0.5 * rng.uniform(0.12, 0.3) * n;
    r.cx = rng.uniform(0.1, 0.9) * n;
    r.cy = rng.uniform(0.1, 0.9) * n;
    r.angle = rng.bernoulli(0.5) ? 0.0 : rng.uniform(-std::numbers::pi / 4, std::numbers::pi / 4);
    covered += paint_building(cv, r, rng);
  }
  if (options.occluders && rng.bernoulli(0.5)) paint_occluders(cv, rng);

  Scene scene;
  scene.seed = seed;
  scene.image = TensorF(Shape{3, size, size}, std::move(cv.rgb));
  scene.mask = TensorF(Shape{1, size, size}, std::move(cv.mask));
  if (options.degrade > 1) scene.image = degrade_resolution(scene.image, options.degrade);
  auto px = scene.image.data_mut();
  if (options.noise_std > 0) {
    const double s = options.noise_std / 255.0;
    for (auto& v : px) v = static_cast<float>(v + s * rng.normal());
  }
  for (auto& v : px) v = std::clamp(v, 0.0f, 1.0f);
  return scene;
}

TensorF degrade_resolution(const TensorF& image, int factor) {
  if (image.ndim() != 3) throw DimensionError("degrade_resolution: expected [C, H, W]");
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (factor < 1 || h % factor != 0 || w % factor != 0) {
    throw ConfigError("degrade factor " + std::to_string(factor) + " does not divide " +
                      shape_str(image.shape()));
  }
  if (factor == 1) return image.detach();
  const Index sh = h / factor, sw = w / factor;
  std::vector<float> small(static_cast<std::size_t>(c * sh * sw), 0.0f);
  const auto src = image.data();
  const double inv = 1.0 / (factor * factor);
  for (Index k = 0; k < c; ++k) {
    for (Index y = 0; y < sh; ++y) {
      for (Index x = 0; x < sw; ++x) {
        double acc = 0;
        for (Index dy = 0; dy < factor; ++dy)
          for (Index dx = 0; dx < factor; ++dx)
            acc += src[static_cast<std::size_t>((k * h + y * factor + dy) * w + x * factor + dx)];
        small[static_cast<std::size_t>((k * sh + y) * sw + x)] = static_cast<float>(acc * inv);
      }
    }
  }
  NoGradGuard guard;
  return bilinear_upsample(TensorF(Shape{c, sh, sw}, std::move(small)), factor);
}

// --- PNM ---

namespace {

class PnmReader {
 public:
  explicit PnmReader(const std::string& bytes) : b_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      const char ch = b_[pos_];
      if (ch == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  Index integer(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    Index v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (Index{1} << 32)) throw ParseError(std::string(what) + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      throw ParseError(std::string("expected ") + what + (pos_ < b_.size() ? "" : ", found end of data"),
                       start);
    }
    return v;
  }

  std::size_t pos_ = 0;
  const std::string& b_;
};

}  // namespace

TensorF parse_pnm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ParseError("not a binary PNM file (expected magic P5 or P6)", 0);
  }
  const Index channels = bytes[1] == '5' ? 1 : 3;
  PnmReader r(bytes);
  r.pos_ = 2;
  r.skip_space_and_comments();
  const std::size_t width_at = r.pos_;
  const Index width = r.integer("width");
  const Index height = r.integer("height");
  r.skip_space_and_comments();
  const std::size_t maxval_at = r.pos_;
  const Index maxval = r.integer("maxval");
  if (width < 1 || height < 1) throw ParseError("image dimensions must be positive", width_at);
  if (maxval < 1 || maxval > 255) {
    throw ParseError("maxval " + std::to_string(maxval) + " unsupported (8-bit only)", maxval_at);
  }
  if (r.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos_]))) {
    throw ParseError("expected a single whitespace byte after maxval", r.pos_);
  }
  ++r.pos_;
  const std::size_t need = static_cast<std::size_t>(channels * width * height);
  const std::size_t have = bytes.size() - r.pos_;
  if (have < need) {
    throw ParseError("truncated payload: expected " + std::to_string(need) + " bytes, found " +
                     std::to_string(have),
                     bytes.size());
  }
  std::vector<float> data(need);
  const auto scale = static_cast<float>(maxval);
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + r.pos_);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      for (Index c = 0; c < channels; ++c) {
        // Interleaved on disk, planar in memory.
        const auto v = px[static_cast<std::size_t>((y * width + x) * channels + c)];
        data[static_cast<std::size_t>((c * height + y) * width + x)] =
            std::min(1.0f, static_cast<float>(v) / scale);
      }
    }
  }
  return TensorF(Shape{channels, height, width}, std::move(data));
}

TensorF load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path, 0);
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return parse_pnm(os.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.detail(), e.offset());
  }
}

std::string encode_pnm(const TensorF& image) {
  if (image.ndim() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw DimensionError("encode_pnm: expected [1, H, W] or [3, H, W], got " +
                         shape_str(image.shape()));
  }
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::string out = (c == 1 ? "P5\n" : "P6\n") + std::to_string(w) + " " + std::to_string(h) +
                    "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(c * h * w));
  const auto src = image.data();
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (Index k = 0; k < c; ++k) {
        const float v = std::clamp(src[static_cast<std::size_t>((k * h + y) * w + x)], 0.0f, 1.0f);
        out[header + static_cast<std::size_t>((y * w + x) * c + k)] =
            static_cast<char>(static_cast<unsigned char>(std::lround(255.0f * v)));
      }
    }
  }
  return out;
}

void save_image(const std::string& path, const TensorF& image) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

void save_mask(const std::string& path, const TensorF& mask) {
  if (mask.ndim() != 3 || mask.dim(0) != 1) {
    throw DimensionError("save_mask: expected [1, H, W], got " + shape_str(mask.shape()));
  }
  for (float v : mask.data()) {
    if (v != 0.0f && v != 1.0f) throw ValueError("save_mask: mask must be binary");
  }
  save_image(path, mask);
}

// --- Tiling ---

TileGrid tile_grid(Index height, Index width, Index tile) {
  if (tile < 32 || tile % 32 != 0) {
    throw ConfigError("tile size must be a positive multiple of 32, got " + std::to_string(tile));
  }
  if (height < 1 || width < 1) throw DimensionError("tile_grid: empty image");
  TileGrid g;
  g.height = height;
  g.width = width;
  g.tile = tile;
  g.padded_height = (height + tile - 1) / tile * tile;
  g.padded_width = (width + tile - 1) / tile * tile;
  for (Index y = 0; y < g.padded_height; y += tile)
    for (Index x = 0; x < g.padded_width; x += tile) g.origins.emplace_back(y, x);
  return g;
}

TileSet tile_image(const TensorF& image, Index tile) {
  if (image.ndim() != 3) throw DimensionError("tile_image: expected [C, H, W]");
  TileSet set;
  set.grid = tile_grid(image.dim(1), image.dim(2), tile);
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const auto src = image.data();
  for (const auto& [oy, ox] : set.grid.origins) {
    std::vector<float> t(static_cast<std::size_t>(c * tile * tile), 0.0f);
    for (Index k = 0; k < c; ++k) {
      for (Index y = 0; y < tile && oy + y < h; ++y) {
        const Index row = std::min(tile, w - ox);
        if (row <= 0) continue;
        const auto* from = &src[static_cast<std::size_t>((k * h + oy + y) * w + ox)];
        std::copy(from, from + row, &t[static_cast<std::size_t>((k * tile + y) * tile)]);
      }
    }
    set.tiles.emplace_back(Shape{c, tile, tile}, std::move(t));
  }
  return set;
}

TensorF reassemble(const TileSet& set) {
  const auto& g = set.grid;
  if (set.tiles.size() != g.origins.size()) {
    throw DimensionError("reassemble: " + std::to_string(set.tiles.size()) + " tiles for " +
                         std::to_string(g.origins.size()) + " origins");
  }
  if (set.tiles.empty()) throw DimensionError("reassemble: no tiles");
  const Index c = set.tiles.front().dim(0), t = g.tile;
  std::vector<float> out(static_cast<std::size_t>(c * g.padded_height * g.padded_width));
  for (std::size_t i = 0; i < set.tiles.size(); ++i) {
    const auto& tile = set.tiles[i];
    if (tile.shape() != Shape{c, t, t}) {
      throw DimensionError("reassemble: tile " + std::to_string(i) + " has shape " +
                           shape_str(tile.shape()));
    }
    const auto [oy, ox] = g.origins[i];
    const auto src = tile.data();
    for (Index k = 0; k < c; ++k)
      for (Index y = 0; y < t; ++y)
        std::copy(&src[static_cast<std::size_t>((k * t + y) * t)],
                  &src[static_cast<std::size_t>((k * t + y) * t)] + t,
                  &out[static_cast<std::size_t>((k * g.padded_height + oy + y) * g.padded_width + ox)]);
  }
  return TensorF(Shape{c, g.padded_height, g.padded_width}, std::move(out));
}

TensorF reassemble_cropped(const TileSet& set) {
  return crop(reassemble(set), 0, 0, set.grid.height, set.grid.width);
}

TensorF crop(const TensorF& image, Index y, Index x, Index height, Index width) {
  if (image.ndim() != 3) throw DimensionError("crop: expected [C, H, W]");
  if (y < 0 || x < 0 || y + height > image.dim(1) || x + width > image.dim(2)) {
    throw DimensionError("crop window (" + std::to_string(y) + ", " + std::to_string(x) + ", " +
                         std::to_string(height) + ", " + std::to_string(width) + ") exceeds " +
                         shape_str(image.shape()));
  }
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<float> out(static_cast<std::size_t>(c * height * width));
  const auto src = image.data();
  for (Index k = 0; k < c; ++k)
    for (Index r = 0; r < height; ++r)
      std::copy(&src[static_cast<std::size_t>((k * h + y + r) * w + x)],
                &src[static_cast<std::size_t>((k * h + y + r) * w + x)] + width,
                &out[static_cast<std::size_t>((k * height + r) * width)]);
  return TensorF(Shape{c, height, width}, std::move(out));
}

TensorF hflip(const TensorF& image) {
  if (image.ndim() != 3) throw DimensionError("hflip: expected [C, H, W]");
  const Index rows = image.dim(0) * image.dim(1), w = image.dim(2);
  std::vector<float> out(image.data().begin(), image.data().end());
  for (Index r = 0; r < rows; ++r)
    std::reverse(out.begin() + r * w, out.begin() + (r + 1) * w);
  return TensorF(image.shape(), std::move(out));
}

Scene augment(const Scene& scene, Rng& rng, Index crop_size, double flip_prob) {
  const Index h = scene.image.dim(1), w = scene.image.dim(2);
  if (crop_size < 1 || crop_size > h || crop_size > w) {
    throw DimensionError("augment: crop " + std::to_string(crop_size) + " larger than scene " +
                         shape_str(scene.image.shape()));
  }
  const Index y = rng.uniform_int(0, h - crop_size);
  const Index x = rng.uniform_int(0, w - crop_size);
  Scene out{crop(scene.image, y, x, crop_size, crop_size),
            crop(scene.mask, y, x, crop_size, crop_size), scene.seed};
  if (rng.bernoulli(flip_prob)) {
    out.image = hflip(out.image);
    out.mask = hflip(out.mask);
  }
  return out;
}

}  // namespace uaglnet
