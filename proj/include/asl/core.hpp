#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace asl {

using ImageId = std::uint64_t;

// Raw embedding of one image. Components are kept un-normalized on purpose:
// the vector direction feeds the symmetric distance stage while the norm
// carries the asymmetric content signal.
struct Descriptor {
  ImageId id = 0;
  std::vector<double> vec;
};

enum class RelationKind { EditedCopy, HardNegativeDirected };

// Directed ground-truth relation. For EditedCopy the latter image is the
// edited copy of the former. For HardNegativeDirected the latter is similar
// to but not an edited copy of the former (the reverse may still hold).
struct RelationLabel {
  RelationKind kind = RelationKind::EditedCopy;
  ImageId former = 0;
  ImageId latter = 0;
};

// One scored candidate pair emitted by the matcher; higher score = more
// confident copy.
struct Prediction {
  ImageId query = 0;
  ImageId reference = 0;
  double score = 0.0;
};

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A zero-norm descriptor reached a ratio or cosine computation. This means
// the encoder emitted a degenerate embedding; it is never clamped over.
struct ZeroNormDenominator : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct ConfigInvalid : Error {
  explicit ConfigInvalid(const std::string& field, const std::string& why)
      : Error(field + ": " + why), field(field) {}
  std::string field;
};

// CSV-level failure; line is 1-based.
struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line(line) {}
  std::size_t line;
};

struct CodecError : Error {
  CodecError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"),
        offset(offset) {}
  std::size_t offset;
};

struct BadMagic : CodecError {
  using CodecError::CodecError;
};
struct VersionMismatch : CodecError {
  using CodecError::CodecError;
};
struct DimensionMismatch : CodecError {
  using CodecError::CodecError;
};
struct TruncatedFile : CodecError {
  using CodecError::CodecError;
};

// Euclidean norm; 0 iff all components are zero.
double norm(const Descriptor& x);

// R(x_i -> x_j) = |x_i| / |x_j|. Asymmetric by construction:
// R(a,b) * R(b,a) == 1 for nonzero a, b. Throws ZeroNormDenominator when
// |x_j| == 0.
double norm_ratio(const Descriptor& x_i, const Descriptor& x_j);

// dot(a,b) / (|a| |b|), in [-1, 1]. Exactly symmetric in its arguments
// (per-component products commute and the summation order is the index
// order for both argument orders).
double cosine_similarity(const Descriptor& a, const Descriptor& b);

// Descriptor container file. Binary layout, all little-endian:
//   magic "ASLD" | u32 version = 1 | u32 dim | u64 count
//   count records of (u64 id, dim x f32)
// Components are stored as f32; the in-memory doubles are truncated on
// write, so round-trips are bit-exact exactly when every component is
// f32-representable (which holds for anything read from such a file).
struct DescriptorFile {
  std::uint32_t dim = 0;
  std::vector<Descriptor> descriptors;
};

void write_descriptors(const std::filesystem::path& path, std::uint32_t dim,
                       const std::vector<Descriptor>& descriptors);
DescriptorFile read_descriptors(const std::filesystem::path& path);

// Debugging fallback: header "id,v0,...,v{d-1}", one row per descriptor,
// components printed with 9 significant digits (lossless for f32 payloads).
void write_descriptors_csv(const std::filesystem::path& path,
                           std::uint32_t dim,
                           const std::vector<Descriptor>& descriptors);
DescriptorFile read_descriptors_csv(const std::filesystem::path& path);

// Predictions file: header "query_id,ref_id,score", score with 9
// significant digits.
void write_predictions(const std::filesystem::path& path,
                       const std::vector<Prediction>& predictions);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

}  // namespace asl
