#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "asl/core.hpp"

namespace asl {

// lambda = 0.25 balances the two terms in practice: with per-image classes
// the CosFace loss starts near ln(C) + s*m (an order of magnitude above the
// O(1) ratio term) and at 1.0 its gradients stall the norm learning for
// hundreds of epochs.
struct LossConfig {
  double lambda = 0.25;         // balance between ratio and metric terms
  double cosface_scale = 16.0;  // s
  double cosface_margin = 0.35; // m, in [0, 1)
  double triplet_margin = 0.3;
};

void validate(const LossConfig& cfg);

// value = exp(1 - R(x_i -> x_j)); strictly decreasing in the ratio, bounded
// by (0, e) on R > 0. Minimizing it pushes |x_i| above |x_j|.
struct RatioLoss {
  double value = 0.0;
  std::vector<double> d_x_i;
  std::vector<double> d_x_j;
};
RatioLoss ratio_loss(const Descriptor& x_i, const Descriptor& x_j);

// CosFace on the descriptor direction against class proxies: the target
// logit is s*(cos - m), the rest s*cos, through a max-subtracted softmax.
// Invariant to positive scaling of x, which is what leaves the norm free
// for the ratio term.
struct CosfaceLoss {
  double value = 0.0;
  std::vector<double> d_x;
  std::vector<double> d_proxies;  // classes x dim, row-major
};
CosfaceLoss cosface_loss(const Descriptor& x, std::uint32_t target_class,
                         std::span<const double> proxies,
                         std::uint32_t classes, double scale, double margin);

// max(0, D(a,p) - D(a,n) + margin) with D = 1 - cosine similarity;
// subgradient zero at the hinge point.
struct TripletLoss {
  double value = 0.0;
  std::vector<double> d_anchor;
  std::vector<double> d_positive;
  std::vector<double> d_negative;
};
TripletLoss triplet_loss(const Descriptor& anchor, const Descriptor& positive,
                         const Descriptor& negative, double margin);

// Combined objective: ratio_loss(x_i, x_j)
//   + lambda * (cosface(x_i, y_i) + cosface(x_j, y_j)) / 2.
// The caller supplies the (i = former/reference, j = latter/copy) ordering.
struct AslLoss {
  double value = 0.0;
  std::vector<double> d_x_i;
  std::vector<double> d_x_j;
  std::vector<double> d_proxies;
};
AslLoss asl_loss(const Descriptor& x_i, const Descriptor& x_j,
                 std::uint32_t class_i, std::uint32_t class_j,
                 std::span<const double> proxies, std::uint32_t classes,
                 const LossConfig& cfg);

}  // namespace asl
