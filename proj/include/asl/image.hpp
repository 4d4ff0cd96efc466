#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "asl/core.hpp"

namespace asl {

struct InvalidScale : Error {
  using Error::Error;
};

// Grayscale toy image, pixels in [0,1], row-major.
struct ToyImage {
  ImageId id = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<double> pixels;

  double at(std::uint32_t y, std::uint32_t x) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  double& at(std::uint32_t y, std::uint32_t x) {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
};

inline constexpr std::uint32_t kDefaultImageSize = 64;

// Scene synthesis: 4-12 random rectangles and ellipses over a random
// background, then one light 3x3 binomial smoothing pass (keeps resampled
// crops comparable to their sources). Geometry and intensities come from
// separate streams so that "same layout, different texture" scenes can be
// produced for hard-negative construction.
ToyImage gen_scene(std::uint64_t geometry_seed, std::uint64_t texture_seed,
                   ImageId id, std::uint32_t size = kDefaultImageSize);

// Deterministic in (seed, id): two calls with equal arguments are
// pixel-identical.
ToyImage gen_image(std::uint64_t seed, ImageId id,
                   std::uint32_t size = kDefaultImageSize);

// Extracts a (scale*H)x(scale*W) window at the given anchor (fractions of
// the available slack, clamped to [0,1]), resizes it back to HxW with
// bilinear interpolation and applies a seeded brightness jitter of at most
// jitter_amp. scale must lie in [0.2, 1.0]. With scale == 1 and zero jitter
// the output equals the input.
ToyImage crop_copy(const ToyImage& img, double scale,
                   std::pair<double, double> anchor, std::uint64_t seed,
                   double jitter_amp = 0.05);

// Individual edit stages, exposed for tests and for composing edits.
ToyImage flip_horizontal(const ToyImage& img);
ToyImage rotate90(const ToyImage& img);  // clockwise; requires H == W
ToyImage gaussian_blur3(const ToyImage& img);
ToyImage adjust_brightness_contrast(const ToyImage& img, double contrast,
                                    double brightness);
ToyImage pad_border(const ToyImage& img, std::uint32_t margin, double fill);

// Seeded composition of the five stages above. Each stage is included
// independently with probability 1/2, so the identity composition is drawn
// with probability 2^-5.
ToyImage basic_edit(const ToyImage& img, std::uint64_t seed);

struct CropWindow {
  double x0 = 0.0;
  double y0 = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool contains(const CropWindow& other) const {
    return x0 <= other.x0 && y0 <= other.y0 && x0 + w >= other.x0 + other.w &&
           y0 + h >= other.y0 + other.h;
  }
  double area() const { return w * h; }
};

enum class HardNegativeKind { SupersetCrop, SimilarLayout };

// A directed hard-negative pair. The negative is inherently similar to the
// reference but is not its edited copy; the reference may be derivable from
// the negative (superset construction) or merely share the scene layout
// (similar-layout construction). Window metadata is in coordinates of the
// underlying scene.
struct HardNegativePair {
  ToyImage reference;
  ToyImage negative;
  RelationLabel label;  // former = reference id, latter = negative id, always
  HardNegativeKind kind = HardNegativeKind::SupersetCrop;
  CropWindow reference_window;
  CropWindow negative_window;
};

HardNegativePair make_hard_negative(std::uint64_t seed, ImageId ref_id,
                                    ImageId neg_id,
                                    std::uint32_t size = kDefaultImageSize);

// PGM P5, maxval 255, pixels quantized with round(p * 255).
void write_pgm(const std::filesystem::path& path, const ToyImage& img);
ToyImage read_pgm(const std::filesystem::path& path, ImageId id);

}  // namespace asl
