#include <cmath>

#include "hep/error.hpp"
#include "hep/ndm.hpp"

namespace hep::ndm {
namespace {

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ShapeMismatch(std::string(what) + ": " + a.str() + " vs " + b.str());
}

Var mean_abs_diff(const Var& a, const Var& b) { return ops::mean(ops::abs(ops::sub(a, b))); }

}  // namespace

Var loss_kl(const NoiseCode& code) {
  require_same(code.mu.shape(), code.logvar.shape(), "loss_kl");
  using namespace ops;
  const Var per = add_scalar(sub(add(square(code.mu), exp(code.logvar)), code.logvar), -1.0);
  return scale(sum(per), 0.5 / code.mu.shape().n);
}

Var loss_lsgan(const Var& d_real, const Var& d_fake, double a, double b) {
  using namespace ops;
  return add(scale(mean(square(add_scalar(d_real, -b))), 0.5),
             scale(mean(square(add_scalar(d_fake, -a))), 0.5));
}

Var loss_lsgan_generator(const Var& d_fake, double b) {
  return ops::scale(ops::mean(ops::square(ops::add_scalar(d_fake, -b))), 0.5);
}

Var loss_cycle(const Var& original, const Var& back_translated) {
  require_same(original.shape(), back_translated.shape(), "loss_cycle");
  return mean_abs_diff(original, back_translated);
}

Var loss_self_recon(const Var& rec, const Var& original) {
  require_same(rec.shape(), original.shape(), "loss_self_recon");
  return mean_abs_diff(rec, original);
}

Var loss_perceptual(const Var& generated, const Tensor& original, const Backbone& backbone,
                    const std::string& layer) {
  require_same(generated.shape(), original.shape(), "loss_perceptual");
  Tensor target;
  {
    NoGradGuard no_grad;
    target = backbone.features(Var::constant(original), layer).value();
  }
  return ops::mean(ops::square(ops::sub(backbone.features(generated, layer), Var::constant(std::move(target)))));
}

Var loss_color_constancy(const Var& generated) {
  if (generated.shape().c != 3) throw InvalidArgument("color constancy needs 3 channels");
  using namespace ops;
  const Var m = spatial_mean(generated);
  const Var r = slice_channels(m, 0, 1), g = slice_channels(m, 1, 2), b = slice_channels(m, 2, 3);
  const Var pairs = add(add(square(sub(r, g)), square(sub(r, b))), square(sub(g, b)));
  return mean(pairs);
}

std::vector<Var> background_terms(const Tensor& original, const Var& generated, const BlurBank& bank) {
  require_same(original.shape(), generated.shape(), "loss_background_consistency");
  std::vector<Var> terms;
  for (const BlurKernel& k : bank.kernels) {
    const std::vector<double> taps = gaussian_taps(k.sigma);
    Tensor blurred;
    {
      NoGradGuard no_grad;
      blurred = ops::separable_filter_reflect(Var::constant(original), taps).value();
    }
    terms.push_back(mean_abs_diff(Var::constant(std::move(blurred)),
                                  ops::separable_filter_reflect(generated, taps)));
  }
  return terms;
}

Var loss_background_consistency(const Tensor& original, const Var& generated, const BlurBank& bank) {
  const std::vector<Var> terms = background_terms(original, generated, bank);
  std::vector<double> weights;
  for (const BlurKernel& k : bank.kernels) weights.push_back(k.weight);
  return ops::weighted_sum(terms, weights);
}

Var loss_ndm_total(const NdmLossTerms& t, const NdmLossWeights& w) {
  const Var terms[] = {t.adv, t.kl, t.cc, t.col, t.per, t.bc, t.rec};
  const double weights[] = {1.0, w.kl, w.cc, w.col, w.per, w.bc, w.rec};
  return ops::weighted_sum(terms, weights);
}

NdmForward ndm_forward(const NdmNetworks& nets, const Var& noisy, const Var& clean,
                       std::mt19937_64& rng, NoiseSource clean_noise) {
  require_same(noisy.shape(), clean.shape(), "ndm_forward");
  const Shape s = noisy.shape();
  if (s.c != 3 || s.h % 4 != 0 || s.w % 4 != 0) {
    throw ShapeMismatch("ndm training needs RGB patches with sides divisible by 4, got " + s.str());
  }
  NdmForward f;
  f.code = nets.noise()(noisy, &rng);
  f.content_x = nets.content()(noisy);
  f.content_y = nets.content()(clean);
  const Var z = clean_noise == NoiseSource::Prior
                    ? Var::constant(Tensor::randn(f.code.sample.shape(), rng))
                    : f.code.sample;
  f.clean_from_noisy = nets.gen_y()(f.content_x);
  f.noisy_from_clean = nets.gen_x()(f.content_y, z);
  f.noisy_cycle = nets.gen_x()(nets.content()(f.clean_from_noisy), f.code.sample);
  f.clean_cycle = nets.gen_y()(nets.content()(f.noisy_from_clean));
  f.noisy_rec = nets.gen_x()(f.content_x, f.code.sample);
  f.clean_rec = nets.gen_y()(f.content_y);
  return f;
}

NdmLossTerms generator_losses(const NdmNetworks& nets, const NdmForward& f, const Tensor& noisy,
                              const Tensor& clean, const NdmLossConfig& cfg,
                              const Backbone* backbone) {
  const Var zero = Var::constant(Tensor::scalar(0.0));
  const Var x = Var::constant(noisy);
  const Var y = Var::constant(clean);
  NdmLossTerms t{zero, zero, zero, zero, zero, zero, zero};
  if (cfg.use_adv) {
    t.adv = ops::add(loss_lsgan_generator(nets.disc_y()(f.clean_from_noisy), cfg.label_real),
                     loss_lsgan_generator(nets.disc_x()(f.noisy_from_clean), cfg.label_real));
  }
  if (cfg.use_kl) t.kl = loss_kl(f.code);
  if (cfg.use_cc) t.cc = ops::add(loss_cycle(x, f.noisy_cycle), loss_cycle(y, f.clean_cycle));
  if (cfg.use_col) t.col = loss_color_constancy(f.clean_from_noisy);
  if (cfg.use_per) {
    if (backbone == nullptr) throw InvalidArgument("perceptual loss needs a backbone");
    t.per = loss_perceptual(f.clean_from_noisy, noisy, *backbone, cfg.layer);
  }
  if (cfg.use_bc) t.bc = loss_background_consistency(noisy, f.clean_from_noisy, cfg.bank);
  if (cfg.use_rec) t.rec = ops::add(loss_self_recon(f.noisy_rec, x), loss_self_recon(f.clean_rec, y));
  return t;
}

}  // namespace hep::ndm
