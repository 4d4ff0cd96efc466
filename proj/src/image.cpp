#include "asl/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "asl/rng.hpp"

namespace asl {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Bilinear sample at continuous coordinates (pixel centers at integers),
// clamping at the borders.
double sample_bilinear(const ToyImage& img, double sy, double sx) {
  const double fx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
  const double fy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
  const std::uint32_t x0 = static_cast<std::uint32_t>(fx);
  const std::uint32_t y0 = static_cast<std::uint32_t>(fy);
  const std::uint32_t x1 = std::min(x0 + 1, img.width - 1);
  const std::uint32_t y1 = std::min(y0 + 1, img.height - 1);
  const double tx = fx - x0;
  const double ty = fy - y0;
  const double top = img.at(y0, x0) * (1.0 - tx) + img.at(y0, x1) * tx;
  const double bot = img.at(y1, x0) * (1.0 - tx) + img.at(y1, x1) * tx;
  return top * (1.0 - ty) + bot * ty;
}

// Resample an axis-aligned window of src onto a full-size output image,
// mapping output pixel centers onto window pixel centers.
ToyImage resample_window(const ToyImage& src, const CropWindow& win) {
  ToyImage out;
  out.id = src.id;
  out.height = src.height;
  out.width = src.width;
  out.pixels.resize(static_cast<std::size_t>(out.height) * out.width);
  for (std::uint32_t y = 0; y < out.height; ++y) {
    const double sy = win.y0 + (y + 0.5) * win.h / out.height - 0.5;
    for (std::uint32_t x = 0; x < out.width; ++x) {
      const double sx = win.x0 + (x + 0.5) * win.w / out.width - 0.5;
      out.at(y, x) = sample_bilinear(src, sy, sx);
    }
  }
  return out;
}

}  // namespace

ToyImage gen_scene(std::uint64_t geometry_seed, std::uint64_t texture_seed,
                   ImageId id, std::uint32_t size) {
  SplitMix64 geo(derive_seed(geometry_seed, id));
  SplitMix64 tex(derive_seed(texture_seed, id));

  ToyImage img;
  img.id = id;
  img.height = size;
  img.width = size;
  const double background = tex.uniform(0.15, 0.85);
  img.pixels.assign(static_cast<std::size_t>(size) * size, background);

  const int n_shapes = 4 + static_cast<int>(geo.uniform_int(9));  // 4..12
  for (int s = 0; s < n_shapes; ++s) {
    const bool ellipse = geo.uniform_int(2) == 1;
    const double cx = geo.uniform() * size;
    const double cy = geo.uniform() * size;
    const double rx = geo.uniform(0.06, 0.28) * size;
    const double ry = geo.uniform(0.06, 0.28) * size;
    const double intensity = tex.uniform();
    const std::uint32_t x_lo =
        static_cast<std::uint32_t>(std::max(0.0, std::floor(cx - rx)));
    const std::uint32_t x_hi = static_cast<std::uint32_t>(
        std::min<double>(size - 1, std::ceil(cx + rx)));
    const std::uint32_t y_lo =
        static_cast<std::uint32_t>(std::max(0.0, std::floor(cy - ry)));
    const std::uint32_t y_hi = static_cast<std::uint32_t>(
        std::min<double>(size - 1, std::ceil(cy + ry)));
    for (std::uint32_t y = y_lo; y <= y_hi; ++y) {
      for (std::uint32_t x = x_lo; x <= x_hi; ++x) {
        const double dx = (x - cx) / rx;
        const double dy = (y - cy) / ry;
        const bool inside =
            ellipse ? (dx * dx + dy * dy <= 1.0)
                    : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
        if (inside) img.at(y, x) = intensity;
      }
    }
  }
  return gaussian_blur3(img);
}

ToyImage gen_image(std::uint64_t seed, ImageId id, std::uint32_t size) {
  return gen_scene(derive_seed(seed, "geometry"), derive_seed(seed, "texture"),
                   id, size);
}

ToyImage crop_copy(const ToyImage& img, double scale,
                   std::pair<double, double> anchor, std::uint64_t seed,
                   double jitter_amp) {
  if (!(scale >= 0.2 && scale <= 1.0)) {
    throw InvalidScale("crop scale " + std::to_string(scale) +
                       " outside [0.2, 1.0]");
  }
  const double ax = std::clamp(anchor.first, 0.0, 1.0);
  const double ay = std::clamp(anchor.second, 0.0, 1.0);
  CropWindow win;
  win.w = scale * img.width;
  win.h = scale * img.height;
  win.x0 = ax * (img.width - win.w);
  win.y0 = ay * (img.height - win.h);
  ToyImage out = resample_window(img, win);
  if (jitter_amp > 0.0) {
    SplitMix64 rng(seed);
    const double shift = rng.uniform(-1.0, 1.0) * jitter_amp;
    for (double& p : out.pixels) p = clamp01(p + shift);
  }
  return out;
}

ToyImage flip_horizontal(const ToyImage& img) {
  ToyImage out = img;
  for (std::uint32_t y = 0; y < img.height; ++y) {
    for (std::uint32_t x = 0; x < img.width; ++x) {
      out.at(y, x) = img.at(y, img.width - 1 - x);
    }
  }
  return out;
}

ToyImage rotate90(const ToyImage& img) {
  if (img.height != img.width) {
    throw Error("rotate90 requires a square image");
  }
  ToyImage out = img;
  const std::uint32_t n = img.width;
  for (std::uint32_t y = 0; y < n; ++y) {
    for (std::uint32_t x = 0; x < n; ++x) {
      out.at(y, x) = img.at(n - 1 - x, y);
    }
  }
  return out;
}

ToyImage gaussian_blur3(const ToyImage& img) {
  // Separable [1 2 1]/4, borders clamped.
  ToyImage tmp = img;
  for (std::uint32_t y = 0; y < img.height; ++y) {
    for (std::uint32_t x = 0; x < img.width; ++x) {
      const std::uint32_t xl = x == 0 ? 0 : x - 1;
      const std::uint32_t xr = std::min(x + 1, img.width - 1);
      tmp.at(y, x) = 0.25 * img.at(y, xl) + 0.5 * img.at(y, x) +
                     0.25 * img.at(y, xr);
    }
  }
  ToyImage out = tmp;
  for (std::uint32_t y = 0; y < img.height; ++y) {
    const std::uint32_t yu = y == 0 ? 0 : y - 1;
    const std::uint32_t yd = std::min(y + 1, img.height - 1);
    for (std::uint32_t x = 0; x < img.width; ++x) {
      out.at(y, x) = 0.25 * tmp.at(yu, x) + 0.5 * tmp.at(y, x) +
                     0.25 * tmp.at(yd, x);
    }
  }
  return out;
}

ToyImage adjust_brightness_contrast(const ToyImage& img, double contrast,
                                    double brightness) {
  ToyImage out = img;
  for (double& p : out.pixels) {
    p = clamp01((p - 0.5) * contrast + 0.5 + brightness);
  }
  return out;
}

ToyImage pad_border(const ToyImage& img, std::uint32_t margin, double fill) {
  if (2 * margin >= img.width || 2 * margin >= img.height) {
    throw Error("pad_border margin too large");
  }
  ToyImage out = img;
  std::fill(out.pixels.begin(), out.pixels.end(), clamp01(fill));
  const std::uint32_t iw = img.width - 2 * margin;
  const std::uint32_t ih = img.height - 2 * margin;
  for (std::uint32_t y = 0; y < ih; ++y) {
    const double sy = (y + 0.5) * img.height / ih - 0.5;
    for (std::uint32_t x = 0; x < iw; ++x) {
      const double sx = (x + 0.5) * img.width / iw - 0.5;
      out.at(y + margin, x + margin) = sample_bilinear(img, sy, sx);
    }
  }
  return out;
}

ToyImage basic_edit(const ToyImage& img, std::uint64_t seed) {
  SplitMix64 rng(seed);
  // Inclusion flags drawn first, in fixed order, then parameters for the
  // included stages only.
  const bool do_flip = rng.uniform_int(2) == 1;
  const bool do_rot = rng.uniform_int(2) == 1;
  const bool do_blur = rng.uniform_int(2) == 1;
  const bool do_jitter = rng.uniform_int(2) == 1;
  const bool do_pad = rng.uniform_int(2) == 1;

  ToyImage out = img;
  if (do_flip) out = flip_horizontal(out);
  if (do_rot) out = rotate90(out);
  if (do_blur) out = gaussian_blur3(out);
  if (do_jitter) {
    const double contrast = rng.uniform(0.8, 1.2);
    const double brightness = rng.uniform(-0.1, 0.1);
    out = adjust_brightness_contrast(out, contrast, brightness);
  }
  if (do_pad) {
    const std::uint32_t margin = 2 + static_cast<std::uint32_t>(rng.uniform_int(5));
    const double fill = rng.uniform();
    out = pad_border(out, margin, fill);
  }
  return out;
}

HardNegativePair make_hard_negative(std::uint64_t seed, ImageId ref_id,
                                    ImageId neg_id, std::uint32_t size) {
  SplitMix64 rng(seed);
  HardNegativePair pair;
  pair.kind = rng.uniform() < 0.7 ? HardNegativeKind::SupersetCrop
                                  : HardNegativeKind::SimilarLayout;
  pair.label =
      RelationLabel{RelationKind::HardNegativeDirected, ref_id, neg_id};

  const std::uint64_t geom_seed = derive_seed(seed, "hn-geometry");
  const std::uint64_t tex_seed = derive_seed(seed, "hn-texture");

  if (pair.kind == HardNegativeKind::SupersetCrop) {
    // The negative IS the super-scene (or a strictly larger crop of it);
    // the reference is a crop taken from inside the negative's window.
    const ToyImage scene = gen_scene(geom_seed, tex_seed, neg_id, size);
    const double neg_scale =
        rng.uniform() < 0.5 ? 1.0 : rng.uniform(0.85, 0.95);
    const double neg_ax = rng.uniform();
    const double neg_ay = rng.uniform();
    pair.negative_window.w = neg_scale * size;
    pair.negative_window.h = neg_scale * size;
    pair.negative_window.x0 = neg_ax * (size - pair.negative_window.w);
    pair.negative_window.y0 = neg_ay * (size - pair.negative_window.h);

    const double rel = rng.uniform(0.45, 0.75);  // reference/negative extent
    const double in_ax = rng.uniform(0.1, 0.9);
    const double in_ay = rng.uniform(0.1, 0.9);
    pair.reference_window.w = rel * pair.negative_window.w;
    pair.reference_window.h = rel * pair.negative_window.h;
    pair.reference_window.x0 =
        pair.negative_window.x0 +
        in_ax * (pair.negative_window.w - pair.reference_window.w);
    pair.reference_window.y0 =
        pair.negative_window.y0 +
        in_ay * (pair.negative_window.h - pair.reference_window.h);

    pair.negative = resample_window(scene, pair.negative_window);
    pair.negative.id = neg_id;
    pair.reference = resample_window(scene, pair.reference_window);
    pair.reference.id = ref_id;
  } else {
    // Same shape layout, different textures; the negative keeps the full
    // scene so it carries no less content than the reference crop.
    const ToyImage scene_a = gen_scene(geom_seed, tex_seed, ref_id, size);
    const ToyImage scene_b =
        gen_scene(geom_seed, derive_seed(tex_seed, 1), ref_id, size);
    const double ref_scale = rng.uniform(0.7, 0.95);
    const double ax = rng.uniform();
    const double ay = rng.uniform();
    pair.reference_window.w = ref_scale * size;
    pair.reference_window.h = ref_scale * size;
    pair.reference_window.x0 = ax * (size - pair.reference_window.w);
    pair.reference_window.y0 = ay * (size - pair.reference_window.h);
    pair.negative_window = CropWindow{0.0, 0.0, double(size), double(size)};

    pair.reference = resample_window(scene_a, pair.reference_window);
    pair.reference.id = ref_id;
    pair.negative = scene_b;
    pair.negative.id = neg_id;
  }
  return pair;
}

void write_pgm(const std::filesystem::path& path, const ToyImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(img.width);
  for (std::uint32_t y = 0; y < img.height; ++y) {
    for (std::uint32_t x = 0; x < img.width; ++x) {
      const long q = std::lround(clamp01(img.at(y, x)) * 255.0);
      row[x] = static_cast<unsigned char>(q);
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw IoError("short write to " + path.string());
}

ToyImage read_pgm(const std::filesystem::path& path, ImageId id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") {
    throw BadMagic("expected P5 magic in " + path.string(), 0);
  }
  std::uint32_t width = 0, height = 0, maxval = 0;
  in >> width >> height >> maxval;
  if (!in || maxval != 255 || width == 0 || height == 0) {
    throw CodecError("bad PGM header in " + path.string(),
                     static_cast<std::size_t>(in.tellg()));
  }
  in.get();  // single whitespace after maxval
  ToyImage img;
  img.id = id;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(width) * height);
  std::vector<unsigned char> raw(img.pixels.size());
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw TruncatedFile("truncated PGM payload in " + path.string(),
                        static_cast<std::size_t>(in.gcount()));
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    img.pixels[i] = raw[i] / 255.0;
  }
  return img;
}

}  // namespace asl
