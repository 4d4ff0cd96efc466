#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "asl/dataset.hpp"
#include "asl/image.hpp"
#include "asl/rng.hpp"

using namespace asl;

namespace {

double mean_abs_diff(const ToyImage& a, const ToyImage& b) {
  REQUIRE(a.pixels.size() == b.pixels.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    sum += std::abs(a.pixels[i] - b.pixels[i]);
  }
  return sum / static_cast<double>(a.pixels.size());
}

ToyImage smooth_test_image(std::uint32_t size) {
  ToyImage img;
  img.id = 0;
  img.height = size;
  img.width = size;
  img.pixels.resize(static_cast<std::size_t>(size) * size);
  for (std::uint32_t y = 0; y < size; ++y) {
    for (std::uint32_t x = 0; x < size; ++x) {
      img.at(y, x) = 0.5 + 0.25 * std::sin(x / 5.0) + 0.2 * std::cos(y / 7.0);
    }
  }
  return img;
}

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path temp_dir(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / "asl_synth_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("gen_image: deterministic in (seed, id)") {
  const ToyImage a = gen_image(1, 0);
  const ToyImage b = gen_image(1, 0);
  CHECK(a.pixels == b.pixels);
}

TEST_CASE("gen_image: different ids differ in at least 1% of pixels") {
  const ToyImage a = gen_image(1, 0);
  const ToyImage b = gen_image(1, 1);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    if (a.pixels[i] != b.pixels[i]) ++differing;
  }
  CHECK(differing >= a.pixels.size() / 100);
}

TEST_CASE("gen_image: pixel range stays in [0,1]") {
  for (std::uint64_t id = 0; id < 16; ++id) {
    const ToyImage img = gen_image(42, id);
    for (double p : img.pixels) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("gen_scene: same geometry, different texture keeps layout") {
  const std::uint64_t g = derive_seed(5, "geometry");
  const ToyImage a = gen_scene(g, derive_seed(5, "t1"), 0);
  const ToyImage b = gen_scene(g, derive_seed(5, "t2"), 0);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    if (a.pixels[i] != b.pixels[i]) ++differing;
  }
  CHECK(differing >= a.pixels.size() / 100);  // textures differ
  const ToyImage a2 = gen_scene(g, derive_seed(5, "t1"), 0);
  CHECK(a.pixels == a2.pixels);  // still deterministic
}

TEST_CASE("crop_copy: identity crop") {
  const ToyImage img = gen_image(2, 3);
  const ToyImage out = crop_copy(img, 1.0, {0.0, 0.0}, 99, /*jitter_amp=*/0.0);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    CHECK(std::abs(out.pixels[i] - img.pixels[i]) < 1e-6);
  }
}

TEST_CASE("crop_copy: output keeps the input shape") {
  const ToyImage img = gen_image(2, 4);
  const ToyImage out = crop_copy(img, 0.5, {0.3, 0.7}, 5);
  CHECK(out.width == 64);
  CHECK(out.height == 64);
  for (double p : out.pixels) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("crop_copy: scale outside [0.2, 1.0] is InvalidScale") {
  const ToyImage img = gen_image(2, 5);
  CHECK_THROWS_AS(crop_copy(img, 0.1, {0.5, 0.5}, 1), InvalidScale);
  CHECK_THROWS_AS(crop_copy(img, 1.2, {0.5, 0.5}, 1), InvalidScale);
}

TEST_CASE("crop_copy: nested crops compose to one effective window") {
  const ToyImage img = smooth_test_image(64);
  const double s = 64.0;
  const std::pair<double, double> a1{0.25, 0.5};
  const std::pair<double, double> a2{0.75, 0.3};
  const ToyImage nested = crop_copy(crop_copy(img, 0.8, a1, 0, 0.0), 0.8, a2,
                                    0, 0.0);

  // First window: w1 = 0.8 s, x1 = a1 (s - w1). The second crop picks
  // x2 = a2 (s - w1) inside the resized first crop, which maps back to the
  // original at x1 + 0.8 x2 with extent 0.64 s.
  const double slack1 = s - 0.8 * s;
  const double x_eff = a1.first * slack1 + 0.8 * (a2.first * slack1);
  const double y_eff = a1.second * slack1 + 0.8 * (a2.second * slack1);
  const double slack_eff = s - 0.64 * s;
  const ToyImage direct = crop_copy(
      img, 0.64, {x_eff / slack_eff, y_eff / slack_eff}, 0, 0.0);

  CHECK(mean_abs_diff(nested, direct) <= 0.02);
}

TEST_CASE("basic_edit: output range and determinism") {
  const ToyImage img = gen_image(3, 0);
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const ToyImage a = basic_edit(img, seed);
    const ToyImage b = basic_edit(img, seed);
    CHECK(a.pixels == b.pixels);
    for (double p : a.pixels) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("basic_edit: identity composition is drawn with probability 2^-5") {
  const ToyImage img = gen_image(3, 1);
  bool found = false;
  // Each stage is included with p = 1/2, so ~1/32 of seeds are identities;
  // 300 seeds miss with probability (31/32)^300 ~ 7e-5.
  for (std::uint64_t seed = 0; seed < 300 && !found; ++seed) {
    const ToyImage out = basic_edit(img, seed);
    if (out.pixels == img.pixels) found = true;
  }
  CHECK(found);
}

TEST_CASE("flip_horizontal is an involution") {
  const ToyImage img = gen_image(3, 2);
  CHECK(flip_horizontal(flip_horizontal(img)).pixels == img.pixels);
}

TEST_CASE("make_hard_negative: label direction is always former=ref") {
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    const HardNegativePair pair = make_hard_negative(seed, 10, 20);
    CHECK(pair.label.kind == RelationKind::HardNegativeDirected);
    CHECK(pair.label.former == 10);
    CHECK(pair.label.latter == 20);
    CHECK(pair.reference.id == 10);
    CHECK(pair.negative.id == 20);
  }
}

TEST_CASE("make_hard_negative: superset windows strictly contain the reference") {
  int superset_seen = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const HardNegativePair pair = make_hard_negative(seed, 1, 2);
    if (pair.kind != HardNegativeKind::SupersetCrop) continue;
    ++superset_seen;
    CHECK(pair.negative_window.contains(pair.reference_window));
    CHECK(pair.negative_window.area() > pair.reference_window.area());
  }
  CHECK(superset_seen > 0);
}

TEST_CASE("make_hard_negative: shared window agrees after alignment") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 40 && checked < 8; ++seed) {
    const HardNegativePair pair = make_hard_negative(seed, 1, 2);
    if (pair.kind != HardNegativeKind::SupersetCrop) continue;
    ++checked;
    // The reference window, expressed in the negative image's coordinates.
    const CropWindow& wr = pair.reference_window;
    const CropWindow& wn = pair.negative_window;
    const double size = pair.negative.width;
    const double scale = wr.w / wn.w;
    const double x0 = (wr.x0 - wn.x0) * size / wn.w;
    const double y0 = (wr.y0 - wn.y0) * size / wn.h;
    const double ax = x0 / (size - scale * size);
    const double ay = y0 / (size - scale * size);
    const ToyImage realigned =
        crop_copy(pair.negative, scale, {ax, ay}, 0, /*jitter_amp=*/0.0);
    CHECK(mean_abs_diff(realigned, pair.reference) <= 0.02);
  }
  CHECK(checked > 0);
}

TEST_CASE("make_hard_negative: similar-layout variant exists and differs") {
  int similar_seen = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const HardNegativePair pair = make_hard_negative(seed, 1, 2);
    if (pair.kind != HardNegativeKind::SimilarLayout) continue;
    ++similar_seen;
    CHECK(pair.reference.pixels != pair.negative.pixels);
  }
  CHECK(similar_seen > 0);
}

TEST_CASE("pgm: round trip within quantization error") {
  const auto dir = temp_dir("pgm");
  const ToyImage img = gen_image(6, 0);
  write_pgm(dir / "img.pgm", img);
  const ToyImage back = read_pgm(dir / "img.pgm", img.id);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 0.5 / 255.0 + 1e-12);
  }
}

TEST_CASE("build_dataset: count contract") {
  const auto dir = temp_dir("counts");
  SynthConfig cfg;
  cfg.seed = 7;
  cfg.references = 100;
  cfg.positive_queries = 20;
  cfg.easy_negatives = 30;
  cfg.hard_negatives = 50;
  cfg.train_images = 10;
  cfg.train_hardneg_fraction = 0.2;
  const DatasetManifest m = build_dataset(cfg, dir);

  CHECK(m.references.size() == 100);
  CHECK(m.queries.size() == 100);
  CHECK(m.hard_negative_query_ids.size() == 50);
  std::size_t copy_labels = 0;
  for (const RelationLabel& l : m.labels) {
    if (l.kind == RelationKind::EditedCopy) ++copy_labels;
  }
  CHECK(copy_labels == 20);
  CHECK(m.train_images.size() == 10 + 2 * 2);  // 2 pairs from 0.2 * 10

  // Files exist for every id.
  for (ImageId id : m.references) CHECK(std::filesystem::exists(image_path(dir, id)));
  for (ImageId id : m.queries) CHECK(std::filesystem::exists(image_path(dir, id)));
  for (ImageId id : m.train_images) CHECK(std::filesystem::exists(image_path(dir, id)));

  // Round trips.
  const DatasetManifest back = read_manifest(dir / "manifest.json");
  CHECK(back.references == m.references);
  CHECK(back.queries == m.queries);
  CHECK(back.train_images == m.train_images);
  CHECK(back.hard_negative_query_ids == m.hard_negative_query_ids);
  CHECK(back.labels.size() == m.labels.size());
  const auto gt = read_gt_csv(dir / "gt.csv");
  CHECK(gt.size() == 20);
  const auto pairs = read_train_pairs_csv(dir / "train_pairs.csv");
  CHECK(pairs.size() == 2);
}

TEST_CASE("build_dataset: id disjointness and label soundness") {
  const auto dir = temp_dir("disjoint");
  SynthConfig cfg;
  cfg.seed = 9;
  cfg.references = 40;
  cfg.positive_queries = 10;
  cfg.easy_negatives = 10;
  cfg.hard_negatives = 20;
  cfg.train_images = 12;
  cfg.train_hardneg_fraction = 0.5;
  const DatasetManifest m = build_dataset(cfg, dir);

  std::set<ImageId> refs(m.references.begin(), m.references.end());
  std::set<ImageId> queries(m.queries.begin(), m.queries.end());
  std::set<ImageId> train(m.train_images.begin(), m.train_images.end());
  CHECK(refs.size() == m.references.size());
  CHECK(queries.size() == m.queries.size());
  CHECK(train.size() == m.train_images.size());
  for (ImageId id : queries) CHECK(!refs.count(id));
  for (ImageId id : train) {
    CHECK(!refs.count(id));
    CHECK(!queries.count(id));
  }

  for (const RelationLabel& l : m.labels) {
    CHECK(l.former != l.latter);
    if (l.kind == RelationKind::EditedCopy) {
      CHECK(refs.count(l.former));
      CHECK(queries.count(l.latter));
    } else {
      const bool test_side = refs.count(l.former) && queries.count(l.latter);
      const bool train_side = train.count(l.former) && train.count(l.latter);
      CHECK((test_side || train_side));
    }
  }
}

TEST_CASE("build_dataset: same seed twice is byte-identical") {
  const auto dir_a = temp_dir("det_a");
  const auto dir_b = temp_dir("det_b");
  SynthConfig cfg;
  cfg.seed = 21;
  cfg.references = 20;
  cfg.positive_queries = 5;
  cfg.easy_negatives = 5;
  cfg.hard_negatives = 8;
  cfg.train_images = 6;
  cfg.train_hardneg_fraction = 0.5;
  build_dataset(cfg, dir_a);
  build_dataset(cfg, dir_b);

  for (const char* name : {"manifest.json", "gt.csv", "train_pairs.csv"}) {
    CHECK(file_bytes(dir_a / name) == file_bytes(dir_b / name));
  }
  for (const auto& entry :
       std::filesystem::directory_iterator(dir_a / "images")) {
    const auto other = dir_b / "images" / entry.path().filename();
    REQUIRE(std::filesystem::exists(other));
    CHECK(file_bytes(entry.path()) == file_bytes(other));
  }
}

TEST_CASE("build_dataset: hard_neg=0 degenerates to a distractor-free set") {
  const auto dir = temp_dir("nohard");
  SynthConfig cfg;
  cfg.seed = 3;
  cfg.references = 12;
  cfg.positive_queries = 4;
  cfg.easy_negatives = 4;
  cfg.hard_negatives = 0;
  cfg.train_images = 4;
  cfg.train_hardneg_fraction = 0.0;
  const DatasetManifest m = build_dataset(cfg, dir);
  CHECK(m.hard_negative_query_ids.empty());
  CHECK(m.queries.size() == 8);
  for (const RelationLabel& l : m.labels) {
    CHECK(l.kind == RelationKind::EditedCopy);
  }
}

TEST_CASE("build_dataset: invalid configs name the offending field") {
  const auto dir = temp_dir("invalid");
  SynthConfig cfg;
  cfg.references = 0;
  try {
    build_dataset(cfg, dir);
    FAIL("expected ConfigInvalid");
  } catch (const ConfigInvalid& e) {
    CHECK(e.field == "refs");
  }
  cfg.references = 5;
  cfg.hard_negatives = 6;
  try {
    build_dataset(cfg, dir);
    FAIL("expected ConfigInvalid");
  } catch (const ConfigInvalid& e) {
    CHECK(e.field == "hard-neg");
  }
  cfg.hard_negatives = 2;
  cfg.train_hardneg_fraction = 1.5;
  CHECK_THROWS_AS(build_dataset(cfg, dir), ConfigInvalid);
}
