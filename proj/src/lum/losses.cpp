#include <algorithm>
#include <cmath>
#include <vector>

#include "hep/error.hpp"
#include "hep/lum.hpp"
#include "hep/ssim.hpp"

namespace hep::lum {
namespace {

void require_same_spatial(const Shape& a, const Shape& b, const char* what) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw ShapeMismatch(std::string(what) + ": " + a.str() + " vs " + b.str());
  }
}

// max(mean_c |d I|, eps) for one direction, as a constant (N, 1, H, W) tensor.
Tensor smoothness_denominator(const Tensor& grad, double epsilon) {
  const Shape s = grad.shape();
  Tensor out(Shape{s.n, 1, s.h, s.w}, 0.0);
  for (int n = 0; n < s.n; ++n) {
    double* o = out.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const double* g = grad.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) o[i] += std::abs(g[i]);
    }
    for (std::size_t i = 0; i < s.plane(); ++i) o[i] = std::max(o[i] / s.c, epsilon);
  }
  return out;
}

}  // namespace

PriorKind parse_prior_kind(const std::string& s) {
  if (s == "hep") return PriorKind::Hep;
  if (s == "l1") return PriorKind::L1;
  if (s == "mse") return PriorKind::Mse;
  if (s == "ssim") return PriorKind::Ssim;
  if (s == "maxent") return PriorKind::MaxEntropy;
  throw InvalidArgument("unknown prior '" + s + "' (hep, l1, mse, ssim, maxent)");
}

const char* prior_kind_name(PriorKind k) {
  switch (k) {
    case PriorKind::Hep: return "hep";
    case PriorKind::L1: return "l1";
    case PriorKind::Mse: return "mse";
    case PriorKind::Ssim: return "ssim";
    case PriorKind::MaxEntropy: return "maxent";
  }
  return "?";
}

Var loss_recon(const Var& reflectance, const Var& illumination, const Var& input) {
  if (!(reflectance.shape() == input.shape())) {
    throw ShapeMismatch("loss_recon: " + reflectance.shape().str() + " vs " + input.shape().str());
  }
  require_same_spatial(illumination.shape(), input.shape(), "loss_recon");
  return ops::mean(ops::abs(ops::sub(ops::mul_channel_broadcast(reflectance, illumination), input)));
}

Var loss_illum_smooth(const Var& illumination, const Tensor& input, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("smoothness epsilon must be positive");
  if (illumination.shape().c != 1) throw ShapeMismatch("illumination must have one channel");
  require_same_spatial(illumination.shape(), input.shape(), "loss_illum_smooth");
  Tensor dh, dv;
  {
    NoGradGuard no_grad;
    const Var in = Var::constant(input);
    dh = smoothness_denominator(ops::diff_horizontal(in).value(), epsilon);
    dv = smoothness_denominator(ops::diff_vertical(in).value(), epsilon);
  }
  using namespace ops;
  const Var h = mean(div(abs(diff_horizontal(illumination)), Var::constant(std::move(dh))));
  const Var v = mean(div(abs(diff_vertical(illumination)), Var::constant(std::move(dv))));
  return scale(add(h, v), 0.5);
}

Tensor equalize_batch(const Tensor& batch) {
  std::vector<Tensor> items;
  items.reserve(batch.shape().n);
  for (int n = 0; n < batch.shape().n; ++n) {
    items.push_back(hist_equalize(Image::from_tensor(batch, n)).to_tensor());
  }
  return stack(items);
}

Var loss_hep(const Var& reflectance, const Tensor& input, const Backbone& backbone,
             HepReference reference, const std::string& layer) {
  if (!(reflectance.shape() == input.shape())) {
    throw ShapeMismatch("loss_hep: " + reflectance.shape().str() + " vs " + input.shape().str());
  }
  Tensor target;
  {
    NoGradGuard no_grad;
    const Tensor ref = reference == HepReference::Equalized ? equalize_batch(input) : input;
    target = backbone.features(Var::constant(ref), layer).value();
  }
  const Var f = backbone.features(reflectance, layer);
  return ops::mean(ops::square(ops::sub(f, Var::constant(std::move(target)))));
}

Var ablation_prior_loss(PriorKind kind, const Var& reflectance, const Tensor& input,
                        const Backbone* backbone, HepReference reference, const std::string& layer) {
  using namespace ops;
  if (kind == PriorKind::Hep) {
    if (backbone == nullptr) throw InvalidArgument("the feature prior needs a backbone");
    return loss_hep(reflectance, input, *backbone, reference, layer);
  }
  if (!(reflectance.shape() == input.shape())) {
    throw ShapeMismatch("prior: " + reflectance.shape().str() + " vs " + input.shape().str());
  }
  if (kind == PriorKind::MaxEntropy) {
    Tensor target;
    {
      NoGradGuard no_grad;
      target = equalize_batch(channel_max(Var::constant(input)).value());
    }
    return mean(abs(sub(channel_max(reflectance), Var::constant(std::move(target)))));
  }
  const Var he = Var::constant(equalize_batch(input));
  switch (kind) {
    case PriorKind::L1: return mean(abs(sub(reflectance, he)));
    case PriorKind::Mse: return mean(square(sub(reflectance, he)));
    case PriorKind::Ssim: return add_scalar(scale(ssim_index(reflectance, he), -1.0), 1.0);
    default: break;
  }
  throw InvalidArgument("unknown prior kind");
}

Var loss_lum_total(const Var& recon, const Var& hep, const Var& smooth, const LumLossWeights& w) {
  const Var terms[] = {recon, hep, smooth};
  const double weights[] = {1.0, w.lambda_hep, w.lambda_is};
  return ops::weighted_sum(terms, weights);
}

LumLossTerms lum_losses(const Decomposition& d, const Tensor& input, const LumLossConfig& cfg,
                        const Backbone* backbone) {
  LumLossTerms t;
  // Disabled terms are not computed (the feature prior is the expensive one)
  // and read as zero in logs.
  const Var zero = Var::constant(Tensor::scalar(0.0));
  t.recon = cfg.use_recon ? loss_recon(d.reflectance, d.illumination, Var::constant(input)) : zero;
  t.prior = cfg.use_prior ? ablation_prior_loss(cfg.prior, d.reflectance, input, backbone,
                                                cfg.reference, cfg.layer)
                          : zero;
  t.smooth = cfg.use_smooth ? loss_illum_smooth(d.illumination, input, cfg.weights.epsilon) : zero;
  t.total = loss_lum_total(t.recon, t.prior, t.smooth, cfg.weights);
  return t;
}

}  // namespace hep::lum
