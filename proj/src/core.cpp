#include "asl/core.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace asl {

double norm(const Descriptor& x) {
  double s = 0.0;
  for (double v : x.vec) s += v * v;
  return std::sqrt(s);
}

double norm_ratio(const Descriptor& x_i, const Descriptor& x_j) {
  const double denom = norm(x_j);
  if (denom == 0.0) {
    throw ZeroNormDenominator("norm_ratio: denominator descriptor id=" +
                              std::to_string(x_j.id) + " has zero norm");
  }
  return norm(x_i) / denom;
}

double cosine_similarity(const Descriptor& a, const Descriptor& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw ZeroNormDenominator(
        "cosine_similarity: zero-norm descriptor id=" +
        std::to_string(na == 0.0 ? a.id : b.id));
  }
  if (a.vec.size() != b.vec.size()) {
    throw DimensionMismatch("cosine_similarity: dim " +
                                std::to_string(a.vec.size()) + " vs " +
                                std::to_string(b.vec.size()),
                            0);
  }
  double dot = 0.0;
  for (std::size_t k = 0; k < a.vec.size(); ++k) dot += a.vec[k] * b.vec[k];
  return dot / (na * nb);
}

namespace {

constexpr char kDescMagic[4] = {'A', 'S', 'L', 'D'};
constexpr std::uint32_t kDescVersion = 1;

void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32le(out, bits);
}

// Byte-offset-tracking reader used by the binary codecs so every failure
// names where in the file it happened.
class ByteReader {
 public:
  explicit ByteReader(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    data_ = ss.str();
  }

  std::size_t offset() const { return pos_; }
  bool exhausted() const { return pos_ >= data_.size(); }

  void bytes(char* dst, std::size_t n, const char* what) {
    if (pos_ + n > data_.size()) {
      throw TruncatedFile(std::string("truncated while reading ") + what +
                              " from " + path_.string(),
                          pos_);
    }
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }

  std::uint32_t u32le(const char* what) {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4, what);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
           std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  }

  std::uint64_t u64le(const char* what) {
    std::uint64_t v = 0;
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8, what);
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  float f32le(const char* what) {
    std::uint32_t bits = u32le(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  double f64le(const char* what) {
    std::uint64_t bits = u64le(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

 private:
  std::filesystem::path path_;
  std::string data_;
  std::size_t pos_ = 0;
};

void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

void write_descriptors(const std::filesystem::path& path, std::uint32_t dim,
                       const std::vector<Descriptor>& descriptors) {
  std::string out;
  out.reserve(20 + descriptors.size() * (8 + 4ULL * dim));
  out.append(kDescMagic, 4);
  put_u32le(out, kDescVersion);
  put_u32le(out, dim);
  put_u64le(out, descriptors.size());
  for (const Descriptor& d : descriptors) {
    if (d.vec.size() != dim) {
      throw DimensionMismatch("write_descriptors: descriptor id=" +
                                  std::to_string(d.id) + " has dim " +
                                  std::to_string(d.vec.size()) + ", file dim " +
                                  std::to_string(dim),
                              out.size());
    }
    put_u64le(out, d.id);
    for (double v : d.vec) put_f32le(out, static_cast<float>(v));
  }
  write_file(path, out);
}

DescriptorFile read_descriptors(const std::filesystem::path& path) {
  ByteReader r(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kDescMagic, 4) != 0) {
    throw BadMagic("bad magic in " + path.string() + ", expected ASLD", 0);
  }
  const std::uint32_t version = r.u32le("version");
  if (version != kDescVersion) {
    throw VersionMismatch("unsupported descriptor file version " +
                              std::to_string(version),
                          4);
  }
  DescriptorFile file;
  file.dim = r.u32le("dim");
  const std::uint64_t count = r.u64le("count");
  file.descriptors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Descriptor d;
    d.id = r.u64le("record id");
    d.vec.resize(file.dim);
    for (std::uint32_t k = 0; k < file.dim; ++k) {
      const std::size_t off = r.offset();
      const float v = r.f32le("component");
      if (!std::isfinite(v)) {
        throw CodecError("non-finite component in descriptor id=" +
                             std::to_string(d.id),
                         off);
      }
      d.vec[k] = static_cast<double>(v);
    }
    file.descriptors.push_back(std::move(d));
  }
  return file;
}

void write_descriptors_csv(const std::filesystem::path& path,
                           std::uint32_t dim,
                           const std::vector<Descriptor>& descriptors) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "id";
  for (std::uint32_t k = 0; k < dim; ++k) out << ",v" << k;
  out << "\n";
  char buf[48];
  for (const Descriptor& d : descriptors) {
    if (d.vec.size() != dim) {
      throw DimensionMismatch("write_descriptors_csv: descriptor id=" +
                                  std::to_string(d.id) + " has dim " +
                                  std::to_string(d.vec.size()),
                              0);
    }
    out << d.id;
    for (double v : d.vec) {
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("short write to " + path.string());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::uint64_t parse_u64(const std::string& s, std::size_t line, const char* what) {
  try {
    std::size_t end = 0;
    const std::uint64_t v = std::stoull(s, &end);
    if (end != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("expected unsigned integer for ") + what +
                         ", got '" + s + "'",
                     line);
  }
}

double parse_f64(const std::string& s, std::size_t line, const char* what) {
  try {
    std::size_t end = 0;
    const double v = std::stod(s, &end);
    if (end != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("expected number for ") + what + ", got '" +
                         s + "'",
                     line);
  }
}

}  // namespace

DescriptorFile read_descriptors_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "id") {
    throw ParseError("descriptor CSV header must start with 'id'", 1);
  }
  DescriptorFile file;
  file.dim = static_cast<std::uint32_t>(header.size() - 1);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) +
                           " fields, got " + std::to_string(fields.size()),
                       lineno);
    }
    Descriptor d;
    d.id = parse_u64(fields[0], lineno, "id");
    d.vec.reserve(file.dim);
    for (std::uint32_t k = 0; k < file.dim; ++k) {
      const double v = parse_f64(fields[k + 1], lineno, "component");
      if (!std::isfinite(v)) throw ParseError("non-finite component", lineno);
      d.vec.push_back(v);
    }
    file.descriptors.push_back(std::move(d));
  }
  return file;
}

void write_predictions(const std::filesystem::path& path,
                       const std::vector<Prediction>& predictions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "query_id,ref_id,score\n";
  char buf[48];
  for (const Prediction& p : predictions) {
    std::snprintf(buf, sizeof(buf), "%.9g", p.score);
    out << p.query << ',' << p.reference << ',' << buf << "\n";
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  if (split_csv_line(line) !=
      std::vector<std::string>{"query_id", "ref_id", "score"}) {
    throw ParseError("predictions header must be 'query_id,ref_id,score'", 1);
  }
  std::vector<Prediction> preds;
  std::set<std::pair<ImageId, ImageId>> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) {
      throw ParseError("expected 3 fields, got " + std::to_string(fields.size()),
                       lineno);
    }
    Prediction p;
    p.query = parse_u64(fields[0], lineno, "query_id");
    p.reference = parse_u64(fields[1], lineno, "ref_id");
    p.score = parse_f64(fields[2], lineno, "score");
    if (!std::isfinite(p.score)) throw ParseError("non-finite score", lineno);
    if (!seen.insert({p.query, p.reference}).second) {
      throw ParseError("duplicate (query_id, ref_id) pair " +
                           std::to_string(p.query) + "," +
                           std::to_string(p.reference),
                       lineno);
    }
    preds.push_back(p);
  }
  return preds;
}

}  // namespace asl
