#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "asl/core.hpp"
#include "asl/image.hpp"

namespace asl {

struct ShapeMismatch : Error {
  using Error::Error;
};
struct TapeMismatch : Error {
  using Error::Error;
};

struct EncoderDims {
  std::uint32_t height = kDefaultImageSize;
  std::uint32_t width = kDefaultImageSize;
  std::uint32_t hidden = 128;
  std::uint32_t out = 32;
  std::uint32_t classes = 1;

  std::size_t input_size() const {
    return static_cast<std::size_t>(height) * width;
  }
  bool operator==(const EncoderDims&) const = default;
};

// Weights of the toy encoder plus per-class proxy vectors for the metric
// loss. descriptor = w2 * relu(w1 * flatten(img) + b1) + b2; the output is
// deliberately not normalized so the norm stays a free, learnable signal.
struct EncoderParams {
  EncoderDims dims;
  std::vector<double> w1;       // hidden x input, row-major
  std::vector<double> b1;       // hidden
  std::vector<double> w2;       // out x hidden, row-major
  std::vector<double> b2;       // out
  std::vector<double> proxies;  // classes x out, row-major

  std::span<const double> proxy_row(std::uint32_t c) const {
    return {proxies.data() + static_cast<std::size_t>(c) * dims.out, dims.out};
  }
};

// Intermediate activations of one forward pass; everything backward() needs
// to produce exact gradients of any scalar function of the descriptor.
struct Tape {
  std::vector<double> input;  // flattened image
  std::vector<double> pre1;   // w1 * input + b1
  std::vector<double> act1;   // relu(pre1)
};

struct ParamGrads {
  std::vector<double> w1, b1, w2, b2, proxies;

  void resize_like(const EncoderParams& params);
  void zero();
  // theta -= lr * grad would be the plain step; the trainer combines these
  // with momentum and weight decay instead.
  void scale(double factor);
};

// Uniform weights in [-1/sqrt(fan_in), +1/sqrt(fan_in)], zero biases,
// unit-normalized proxy rows.
EncoderParams init_params(std::uint64_t seed, const EncoderDims& dims);

Descriptor forward(const EncoderParams& params, const ToyImage& img,
                   Tape* tape = nullptr);

// Accumulates (+=) into grads the exact gradients of
// <grad_output, descriptor> with respect to w1, b1, w2, b2. Proxy
// gradients are produced by the loss functions, not here.
void backward(const EncoderParams& params, const Tape& tape,
              std::span<const double> grad_output, ParamGrads& grads);

// Checkpoint: magic "ASLP" | u32 version = 1 | u32 height, width, hidden,
// out, classes | f64 arrays w1, b1, w2, b2, proxies, all little-endian.
void save_params(const std::filesystem::path& path,
                 const EncoderParams& params);
EncoderParams load_params(const std::filesystem::path& path);

}  // namespace asl
