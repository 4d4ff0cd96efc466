#include "asl/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "asl/rng.hpp"

namespace asl {

void ParamGrads::resize_like(const EncoderParams& params) {
  w1.assign(params.w1.size(), 0.0);
  b1.assign(params.b1.size(), 0.0);
  w2.assign(params.w2.size(), 0.0);
  b2.assign(params.b2.size(), 0.0);
  proxies.assign(params.proxies.size(), 0.0);
}

void ParamGrads::zero() {
  std::fill(w1.begin(), w1.end(), 0.0);
  std::fill(b1.begin(), b1.end(), 0.0);
  std::fill(w2.begin(), w2.end(), 0.0);
  std::fill(b2.begin(), b2.end(), 0.0);
  std::fill(proxies.begin(), proxies.end(), 0.0);
}

void ParamGrads::scale(double factor) {
  for (double& v : w1) v *= factor;
  for (double& v : b1) v *= factor;
  for (double& v : w2) v *= factor;
  for (double& v : b2) v *= factor;
  for (double& v : proxies) v *= factor;
}

EncoderParams init_params(std::uint64_t seed, const EncoderDims& dims) {
  if (dims.height == 0 || dims.width == 0 || dims.hidden == 0 ||
      dims.out == 0 || dims.classes == 0) {
    throw ConfigInvalid("dims", "all encoder dimensions must be positive");
  }
  EncoderParams p;
  p.dims = dims;
  const std::size_t in = dims.input_size();

  SplitMix64 rng_w1(derive_seed(seed, "w1"));
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(in));
  p.w1.resize(static_cast<std::size_t>(dims.hidden) * in);
  for (double& v : p.w1) v = rng_w1.uniform(-bound1, bound1);
  p.b1.assign(dims.hidden, 0.0);

  SplitMix64 rng_w2(derive_seed(seed, "w2"));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  p.w2.resize(static_cast<std::size_t>(dims.out) * dims.hidden);
  for (double& v : p.w2) v = rng_w2.uniform(-bound2, bound2);
  p.b2.assign(dims.out, 0.0);

  SplitMix64 rng_px(derive_seed(seed, "proxies"));
  p.proxies.resize(static_cast<std::size_t>(dims.classes) * dims.out);
  for (std::uint32_t c = 0; c < dims.classes; ++c) {
    double* row = p.proxies.data() + static_cast<std::size_t>(c) * dims.out;
    double nrm = 0.0;
    for (std::uint32_t k = 0; k < dims.out; ++k) {
      row[k] = rng_px.normal();
      nrm += row[k] * row[k];
    }
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) nrm = 1.0;
    for (std::uint32_t k = 0; k < dims.out; ++k) row[k] /= nrm;
  }
  return p;
}

Descriptor forward(const EncoderParams& params, const ToyImage& img,
                   Tape* tape) {
  const EncoderDims& d = params.dims;
  if (img.height != d.height || img.width != d.width) {
    throw ShapeMismatch("forward: image " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + " does not match encoder " +
                        std::to_string(d.width) + "x" + std::to_string(d.height));
  }
  const std::size_t in = d.input_size();
  const std::vector<double>& x = img.pixels;

  std::vector<double> pre1(d.hidden);
  std::vector<double> act1(d.hidden);
  for (std::uint32_t h = 0; h < d.hidden; ++h) {
    const double* row = params.w1.data() + static_cast<std::size_t>(h) * in;
    double acc = params.b1[h];
    for (std::size_t k = 0; k < in; ++k) acc += row[k] * x[k];
    pre1[h] = acc;
    act1[h] = acc > 0.0 ? acc : 0.0;
  }

  Descriptor out;
  out.id = img.id;
  out.vec.resize(d.out);
  for (std::uint32_t o = 0; o < d.out; ++o) {
    const double* row = params.w2.data() + static_cast<std::size_t>(o) * d.hidden;
    double acc = params.b2[o];
    for (std::uint32_t h = 0; h < d.hidden; ++h) acc += row[h] * act1[h];
    out.vec[o] = acc;
  }

  if (tape != nullptr) {
    tape->input = x;
    tape->pre1 = std::move(pre1);
    tape->act1 = std::move(act1);
  }
  return out;
}

void backward(const EncoderParams& params, const Tape& tape,
              std::span<const double> grad_output, ParamGrads& grads) {
  const EncoderDims& d = params.dims;
  const std::size_t in = d.input_size();
  if (tape.input.size() != in || tape.pre1.size() != d.hidden ||
      tape.act1.size() != d.hidden || grad_output.size() != d.out) {
    throw TapeMismatch("backward: tape or gradient shape does not match params");
  }
  if (grads.w1.size() != params.w1.size()) grads.resize_like(params);

  // dL/db2 = g; dL/dw2 = g (outer) act1; dL/dact1 = w2^T g.
  std::vector<double> d_act1(d.hidden, 0.0);
  for (std::uint32_t o = 0; o < d.out; ++o) {
    const double g = grad_output[o];
    grads.b2[o] += g;
    if (g == 0.0) continue;
    const std::size_t row = static_cast<std::size_t>(o) * d.hidden;
    for (std::uint32_t h = 0; h < d.hidden; ++h) {
      grads.w2[row + h] += g * tape.act1[h];
      d_act1[h] += params.w2[row + h] * g;
    }
  }
  // Through the ReLU, then dL/dw1 = d_pre1 (outer) input.
  for (std::uint32_t h = 0; h < d.hidden; ++h) {
    const double d_pre = tape.pre1[h] > 0.0 ? d_act1[h] : 0.0;
    grads.b1[h] += d_pre;
    if (d_pre == 0.0) continue;
    const std::size_t row = static_cast<std::size_t>(h) * in;
    for (std::size_t k = 0; k < in; ++k) {
      grads.w1[row + k] += d_pre * tape.input[k];
    }
  }
}

namespace {

constexpr char kParamMagic[4] = {'A', 'S', 'L', 'P'};
constexpr std::uint32_t kParamVersion = 1;

void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64le(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

}  // namespace

void save_params(const std::filesystem::path& path,
                 const EncoderParams& params) {
  std::string out;
  out.reserve(28 + 8 * (params.w1.size() + params.b1.size() + params.w2.size() +
                        params.b2.size() + params.proxies.size()));
  out.append(kParamMagic, 4);
  put_u32le(out, kParamVersion);
  put_u32le(out, params.dims.height);
  put_u32le(out, params.dims.width);
  put_u32le(out, params.dims.hidden);
  put_u32le(out, params.dims.out);
  put_u32le(out, params.dims.classes);
  for (const auto* arr : {&params.w1, &params.b1, &params.w2, &params.b2,
                          &params.proxies}) {
    for (double v : *arr) put_f64le(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path.string());
}

EncoderParams load_params(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string data = ss.str();
  std::size_t pos = 0;

  auto need = [&](std::size_t n, const char* what) {
    if (pos + n > data.size()) {
      throw TruncatedFile(std::string("truncated while reading ") + what +
                              " from " + path.string(),
                          pos);
    }
  };
  auto u32 = [&](const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<unsigned char>(data[pos + i]);
    }
    pos += 4;
    return v;
  };
  auto f64_array = [&](std::vector<double>& dst, std::size_t count,
                       const char* what) {
    need(8 * count, what);
    dst.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) {
        bits = (bits << 8) | static_cast<unsigned char>(data[pos + 8 * i + b]);
      }
      std::memcpy(&dst[i], &bits, 8);
    }
    pos += 8 * count;
  };

  need(4, "magic");
  if (std::memcmp(data.data(), kParamMagic, 4) != 0) {
    throw BadMagic("bad magic in " + path.string() + ", expected ASLP", 0);
  }
  pos = 4;
  const std::uint32_t version = u32("version");
  if (version != kParamVersion) {
    throw VersionMismatch("unsupported checkpoint version " +
                              std::to_string(version),
                          4);
  }
  EncoderParams p;
  p.dims.height = u32("height");
  p.dims.width = u32("width");
  p.dims.hidden = u32("hidden");
  p.dims.out = u32("out");
  p.dims.classes = u32("classes");
  const std::size_t in = p.dims.input_size();
  f64_array(p.w1, static_cast<std::size_t>(p.dims.hidden) * in, "w1");
  f64_array(p.b1, p.dims.hidden, "b1");
  f64_array(p.w2, static_cast<std::size_t>(p.dims.out) * p.dims.hidden, "w2");
  f64_array(p.b2, p.dims.out, "b2");
  f64_array(p.proxies, static_cast<std::size_t>(p.dims.classes) * p.dims.out,
            "proxies");
  if (pos != data.size()) {
    throw CodecError("trailing bytes after checkpoint payload", pos);
  }
  return p;
}

}  // namespace asl
