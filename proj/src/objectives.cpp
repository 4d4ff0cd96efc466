#include "asl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace asl {

void validate(const LossConfig& cfg) {
  if (cfg.lambda < 0.0) throw ConfigInvalid("lambda", "must be >= 0");
  if (cfg.cosface_scale <= 0.0) throw ConfigInvalid("scale", "must be > 0");
  if (cfg.cosface_margin < 0.0 || cfg.cosface_margin >= 1.0) {
    throw ConfigInvalid("margin", "must be in [0, 1)");
  }
  if (cfg.triplet_margin <= 0.0) {
    throw ConfigInvalid("triplet-margin", "must be > 0");
  }
}

RatioLoss ratio_loss(const Descriptor& x_i, const Descriptor& x_j) {
  const double ni = norm(x_i);
  const double nj = norm(x_j);
  if (nj == 0.0 || ni == 0.0) {
    throw ZeroNormDenominator("ratio_loss: zero-norm descriptor id=" +
                              std::to_string(nj == 0.0 ? x_j.id : x_i.id));
  }
  const double ratio = ni / nj;
  RatioLoss out;
  out.value = std::exp(1.0 - ratio);
  out.d_x_i.resize(x_i.vec.size());
  out.d_x_j.resize(x_j.vec.size());
  // d/dx_i = -value * x_i / (|x_i| |x_j|); d/dx_j = +value * R * x_j / |x_j|^2
  const double ci = -out.value / (ni * nj);
  const double cj = out.value * ratio / (nj * nj);
  for (std::size_t k = 0; k < x_i.vec.size(); ++k) out.d_x_i[k] = ci * x_i.vec[k];
  for (std::size_t k = 0; k < x_j.vec.size(); ++k) out.d_x_j[k] = cj * x_j.vec[k];
  return out;
}

namespace {

struct CosWithGrad {
  double cos = 0.0;
  // d cos / d u = v/(|u||v|) - cos * u/|u|^2, and symmetrically for v.
  double inv_nu = 0.0;
  double inv_nv = 0.0;
};

CosWithGrad cos_parts(std::span<const double> u, std::span<const double> v,
                      ImageId id_u, ImageId id_v) {
  double nu = 0.0, nv = 0.0, dot = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    nu += u[k] * u[k];
    nv += v[k] * v[k];
    dot += u[k] * v[k];
  }
  nu = std::sqrt(nu);
  nv = std::sqrt(nv);
  if (nu == 0.0 || nv == 0.0) {
    throw ZeroNormDenominator("cosine: zero-norm vector id=" +
                              std::to_string(nu == 0.0 ? id_u : id_v));
  }
  CosWithGrad c;
  c.cos = dot / (nu * nv);
  c.inv_nu = 1.0 / nu;
  c.inv_nv = 1.0 / nv;
  return c;
}

}  // namespace

CosfaceLoss cosface_loss(const Descriptor& x, std::uint32_t target_class,
                         std::span<const double> proxies,
                         std::uint32_t classes, double scale, double margin) {
  const std::size_t dim = x.vec.size();
  if (classes == 0 || proxies.size() != static_cast<std::size_t>(classes) * dim) {
    throw DimensionMismatch("cosface_loss: proxies size " +
                                std::to_string(proxies.size()) +
                                " does not match classes x dim",
                            0);
  }
  if (target_class >= classes) {
    throw ConfigInvalid("target_class", "index out of range");
  }

  std::vector<CosWithGrad> cg(classes);
  std::vector<double> logits(classes);
  for (std::uint32_t c = 0; c < classes; ++c) {
    cg[c] = cos_parts(x.vec, proxies.subspan(static_cast<std::size_t>(c) * dim, dim),
                      x.id, c);
    logits[c] = scale * (cg[c].cos - (c == target_class ? margin : 0.0));
  }

  // Max-subtracted softmax keeps huge logits finite.
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  std::vector<double> p(classes);
  for (std::uint32_t c = 0; c < classes; ++c) {
    p[c] = std::exp(logits[c] - max_logit);
    denom += p[c];
  }
  for (double& v : p) v /= denom;

  CosfaceLoss out;
  out.value = -(logits[target_class] - max_logit) + std::log(denom);
  out.d_x.assign(dim, 0.0);
  out.d_proxies.assign(proxies.size(), 0.0);
  for (std::uint32_t c = 0; c < classes; ++c) {
    const double d_cos = scale * (p[c] - (c == target_class ? 1.0 : 0.0));
    if (d_cos == 0.0) continue;
    const double* proxy = proxies.data() + static_cast<std::size_t>(c) * dim;
    double* d_proxy = out.d_proxies.data() + static_cast<std::size_t>(c) * dim;
    const double k_px = cg[c].inv_nu * cg[c].inv_nv;
    const double k_xx = cg[c].cos * cg[c].inv_nu * cg[c].inv_nu;
    const double k_pp = cg[c].cos * cg[c].inv_nv * cg[c].inv_nv;
    for (std::size_t k = 0; k < dim; ++k) {
      out.d_x[k] += d_cos * (proxy[k] * k_px - x.vec[k] * k_xx);
      d_proxy[k] = d_cos * (x.vec[k] * k_px - proxy[k] * k_pp);
    }
  }
  return out;
}

TripletLoss triplet_loss(const Descriptor& anchor, const Descriptor& positive,
                         const Descriptor& negative, double margin) {
  const std::size_t dim = anchor.vec.size();
  if (positive.vec.size() != dim || negative.vec.size() != dim) {
    throw DimensionMismatch("triplet_loss: descriptor dimensions differ", 0);
  }
  const CosWithGrad ap = cos_parts(anchor.vec, positive.vec, anchor.id, positive.id);
  const CosWithGrad an = cos_parts(anchor.vec, negative.vec, anchor.id, negative.id);

  TripletLoss out;
  out.d_anchor.assign(dim, 0.0);
  out.d_positive.assign(dim, 0.0);
  out.d_negative.assign(dim, 0.0);
  const double slack = (1.0 - ap.cos) - (1.0 - an.cos) + margin;
  if (slack <= 0.0) return out;  // hinge inactive, subgradient zero
  out.value = slack;

  // d slack / d cos(a,p) = -1, d slack / d cos(a,n) = +1.
  for (std::size_t k = 0; k < dim; ++k) {
    const double d_cos_ap_da =
        positive.vec[k] * ap.inv_nu * ap.inv_nv -
        ap.cos * anchor.vec[k] * ap.inv_nu * ap.inv_nu;
    const double d_cos_ap_dp =
        anchor.vec[k] * ap.inv_nu * ap.inv_nv -
        ap.cos * positive.vec[k] * ap.inv_nv * ap.inv_nv;
    const double d_cos_an_da =
        negative.vec[k] * an.inv_nu * an.inv_nv -
        an.cos * anchor.vec[k] * an.inv_nu * an.inv_nu;
    const double d_cos_an_dn =
        anchor.vec[k] * an.inv_nu * an.inv_nv -
        an.cos * negative.vec[k] * an.inv_nv * an.inv_nv;
    out.d_anchor[k] = -d_cos_ap_da + d_cos_an_da;
    out.d_positive[k] = -d_cos_ap_dp;
    out.d_negative[k] = d_cos_an_dn;
  }
  return out;
}

AslLoss asl_loss(const Descriptor& x_i, const Descriptor& x_j,
                 std::uint32_t class_i, std::uint32_t class_j,
                 std::span<const double> proxies, std::uint32_t classes,
                 const LossConfig& cfg) {
  RatioLoss ratio = ratio_loss(x_i, x_j);
  CosfaceLoss mi = cosface_loss(x_i, class_i, proxies, classes,
                                cfg.cosface_scale, cfg.cosface_margin);
  CosfaceLoss mj = cosface_loss(x_j, class_j, proxies, classes,
                                cfg.cosface_scale, cfg.cosface_margin);

  AslLoss out;
  out.value = ratio.value + cfg.lambda * 0.5 * (mi.value + mj.value);
  out.d_x_i = std::move(ratio.d_x_i);
  out.d_x_j = std::move(ratio.d_x_j);
  const double w = cfg.lambda * 0.5;
  for (std::size_t k = 0; k < out.d_x_i.size(); ++k) out.d_x_i[k] += w * mi.d_x[k];
  for (std::size_t k = 0; k < out.d_x_j.size(); ++k) out.d_x_j[k] += w * mj.d_x[k];
  out.d_proxies.assign(proxies.size(), 0.0);
  for (std::size_t k = 0; k < proxies.size(); ++k) {
    out.d_proxies[k] = w * (mi.d_proxies[k] + mj.d_proxies[k]);
  }
  return out;
}

}  // namespace asl
