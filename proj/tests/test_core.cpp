#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "asl/core.hpp"
#include "asl/rng.hpp"

using namespace asl;

namespace {

Descriptor desc(ImageId id, std::vector<double> v) {
  return Descriptor{id, std::move(v)};
}

// Random descriptor whose components are exactly f32-representable, so the
// binary codec round trip can be checked bit for bit.
Descriptor random_f32_descriptor(SplitMix64& rng, ImageId id, std::size_t dim) {
  Descriptor d;
  d.id = id;
  d.vec.reserve(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    d.vec.push_back(static_cast<double>(static_cast<float>(rng.uniform(-8, 8))));
  }
  return d;
}

std::filesystem::path temp_file(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / "asl_core_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("norm: 3-4-5 triangle") {
  CHECK(norm(desc(0, {3, 4})) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("norm: zero vector") {
  CHECK(norm(desc(0, {0, 0, 0})) == 0.0);
  CHECK(norm(desc(0, std::vector<double>(17, 0.0))) == 0.0);
}

TEST_CASE("norm: ones vector of length 4") {
  CHECK(norm(desc(0, {1, 1, 1, 1})) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("norm_ratio: basic and identity cases") {
  CHECK(norm_ratio(desc(0, {0, 2}), desc(1, {1, 0})) ==
        doctest::Approx(2.0).epsilon(1e-12));
  const Descriptor a = desc(2, {0.3, -1.7, 2.2});
  CHECK(norm_ratio(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("norm_ratio: zero denominator is an error, not a value") {
  CHECK_THROWS_AS(norm_ratio(desc(0, {1, 1}), desc(1, {0, 0})),
                  ZeroNormDenominator);
}

TEST_CASE("norm_ratio: reciprocity over 1000 random pairs") {
  SplitMix64 rng(derive_seed(7, "reciprocity"));
  for (int t = 0; t < 1000; ++t) {
    Descriptor a = random_f32_descriptor(rng, 0, 8);
    Descriptor b = random_f32_descriptor(rng, 1, 8);
    if (norm(a) == 0.0 || norm(b) == 0.0) continue;
    const double forward = norm_ratio(a, b);
    const double backward = norm_ratio(b, a);
    CHECK(std::abs(forward * backward - 1.0) < 1e-9);
    if (std::abs(norm(a) - norm(b)) > 1e-12) {
      CHECK(forward != backward);
    }
  }
}

TEST_CASE("cosine_similarity: orthogonal, colinear, opposite") {
  CHECK(cosine_similarity(desc(0, {1, 0}), desc(1, {0, 1})) == 0.0);
  CHECK(cosine_similarity(desc(0, {2, 0}), desc(1, {5, 0})) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(desc(0, {1, 0}), desc(1, {-3, 0})) ==
        doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("cosine_similarity: exact symmetry and scale invariance") {
  SplitMix64 rng(derive_seed(11, "cosine"));
  for (int t = 0; t < 1000; ++t) {
    Descriptor a = random_f32_descriptor(rng, 0, 6);
    Descriptor b = random_f32_descriptor(rng, 1, 6);
    if (norm(a) == 0.0 || norm(b) == 0.0) continue;
    CHECK(cosine_similarity(a, b) == cosine_similarity(b, a));
    CHECK(cosine_similarity(a, b) <= 1.0 + 1e-12);
    CHECK(cosine_similarity(a, b) >= -1.0 - 1e-12);

    Descriptor a_scaled = a;
    const double alpha = rng.uniform(0.1, 10.0);
    for (double& v : a_scaled.vec) v *= alpha;
    CHECK(std::abs(cosine_similarity(a_scaled, b) - cosine_similarity(a, b)) <
          1e-9);
  }
}

TEST_CASE("cosine_similarity: zero norm is an error") {
  CHECK_THROWS_AS(cosine_similarity(desc(0, {0, 0}), desc(1, {1, 0})),
                  ZeroNormDenominator);
}

TEST_CASE("descriptor codec: empty file preserves dim") {
  const auto path = temp_file("empty.asld");
  write_descriptors(path, 13, {});
  const DescriptorFile file = read_descriptors(path);
  CHECK(file.dim == 13);
  CHECK(file.descriptors.empty());
}

TEST_CASE("descriptor codec: single record round trip") {
  const auto path = temp_file("single.asld");
  write_descriptors(path, 2, {desc(7, {1.5, -2.0})});
  const DescriptorFile file = read_descriptors(path);
  REQUIRE(file.descriptors.size() == 1);
  CHECK(file.descriptors[0].id == 7);
  CHECK(file.descriptors[0].vec == std::vector<double>{1.5, -2.0});
}

TEST_CASE("descriptor codec: bit-exact round trip property") {
  SplitMix64 rng(derive_seed(3, "codec"));
  const auto path = temp_file("roundtrip.asld");
  for (int t = 0; t < 20; ++t) {
    std::vector<Descriptor> descs;
    const std::size_t dim = 1 + rng.uniform_int(16);
    const std::size_t count = rng.uniform_int(10);
    for (std::size_t i = 0; i < count; ++i) {
      descs.push_back(random_f32_descriptor(rng, rng.next(), dim));
    }
    write_descriptors(path, static_cast<std::uint32_t>(dim), descs);
    const DescriptorFile back = read_descriptors(path);
    REQUIRE(back.descriptors.size() == descs.size());
    CHECK(back.dim == dim);
    for (std::size_t i = 0; i < count; ++i) {
      CHECK(back.descriptors[i].id == descs[i].id);
      CHECK(back.descriptors[i].vec == descs[i].vec);  // bitwise via operator==
    }
  }
}

TEST_CASE("descriptor codec: altered magic is BadMagic") {
  const auto path = temp_file("badmagic.asld");
  write_descriptors(path, 2, {desc(1, {0.5, 0.25})});
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  CHECK_THROWS_AS(read_descriptors(path), BadMagic);
}

TEST_CASE("descriptor codec: truncated payload names the offset") {
  const auto path = temp_file("trunc.asld");
  write_descriptors(path, 4, {desc(1, {1, 2, 3, 4})});
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full - 3);
  try {
    read_descriptors(path);
    FAIL("expected TruncatedFile");
  } catch (const TruncatedFile& e) {
    CHECK(e.offset > 0);
    CHECK(e.offset <= full - 3);
  }
}

TEST_CASE("descriptor codec: bad version is VersionMismatch") {
  const auto path = temp_file("badversion.asld");
  write_descriptors(path, 1, {desc(1, {1.0})});
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put(static_cast<char>(9));
  }
  CHECK_THROWS_AS(read_descriptors(path), VersionMismatch);
}

TEST_CASE("descriptor codec: wrong record length rejected at write") {
  const auto path = temp_file("wrongdim.asld");
  CHECK_THROWS_AS(write_descriptors(path, 3, {desc(1, {1.0, 2.0})}),
                  DimensionMismatch);
}

TEST_CASE("descriptor CSV fallback round trips") {
  SplitMix64 rng(derive_seed(5, "csv"));
  const auto path = temp_file("descs.csv");
  std::vector<Descriptor> descs;
  for (int i = 0; i < 5; ++i) {
    descs.push_back(random_f32_descriptor(rng, 100 + i, 3));
  }
  write_descriptors_csv(path, 3, descs);
  const DescriptorFile back = read_descriptors_csv(path);
  CHECK(back.dim == 3);
  REQUIRE(back.descriptors.size() == descs.size());
  for (std::size_t i = 0; i < descs.size(); ++i) {
    CHECK(back.descriptors[i].id == descs[i].id);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(static_cast<float>(back.descriptors[i].vec[k]) ==
            static_cast<float>(descs[i].vec[k]));
    }
  }
}

TEST_CASE("predictions file: round trip and duplicate rejection") {
  const auto path = temp_file("preds.csv");
  write_predictions(path, {Prediction{3, 1, 0.75}, Prediction{3, 2, 0.5}});
  const auto back = read_predictions(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].query == 3);
  CHECK(back[0].reference == 1);
  CHECK(back[0].score == doctest::Approx(0.75));

  std::ofstream out(path, std::ios::trunc);
  out << "query_id,ref_id,score\n3,1,0.5\n3,1,0.6\n";
  out.close();
  try {
    read_predictions(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
  }
}

TEST_CASE("rng: documented stream splitting is stable") {
  // Frozen values pin the generator contract; a change here breaks every
  // manifest and checkpoint reproducing documented runs.
  SplitMix64 rng(0);
  const std::uint64_t first = rng.next();
  CHECK(first == 16294208416658607535ULL);  // splitmix64(0) reference output
  CHECK(derive_seed(0, std::uint64_t{0}) != derive_seed(0, std::uint64_t{1}));
  CHECK(derive_seed(42, "a") != derive_seed(42, "b"));
  SplitMix64 r2(derive_seed(9, "x"));
  SplitMix64 r3(derive_seed(9, "x"));
  for (int i = 0; i < 8; ++i) CHECK(r2.next() == r3.next());
}
