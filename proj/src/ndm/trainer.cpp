#include "hep/error.hpp"
#include "hep/ndm.hpp"

namespace hep::ndm {

NdmTrainer::NdmTrainer(NdmNetworks& nets, nn::AdamConfig adam, NdmLossConfig losses,
                       const Backbone* backbone)
    : nets_(nets), losses_(std::move(losses)), backbone_(backbone) {
  for (auto& [name, params] : nets_.parameter_sets()) opts_.emplace_back(*params, adam);
}

void NdmTrainer::set_lr(double lr) {
  for (auto& o : opts_) o.set_lr(lr);
}

double NdmTrainer::lr() const { return opts_.front().lr(); }

NdmStepStats NdmTrainer::step(const Tensor& noisy, const Tensor& clean, std::mt19937_64& rng) {
  NdmStepStats s = generator_step(noisy, clean, rng);
  if (losses_.use_adv) s.disc = discriminator_step(noisy, clean);
  return s;
}

NdmStepStats NdmTrainer::generator_step(const Tensor& noisy, const Tensor& clean,
                                        std::mt19937_64& rng) {
  auto sets = nets_.parameter_sets();
  for (auto& [name, p] : sets) p->zero_grad();

  const NdmForward f = ndm_forward(nets_, Var::constant(noisy), Var::constant(clean), rng,
                                   losses_.clean_noise);
  const NdmLossTerms t = generator_losses(nets_, f, noisy, clean, losses_, backbone_);
  const Var total = loss_ndm_total(t, losses_.weights);
  total.backward();
  // Encoders and generators only; discriminator grads from this pass are dropped.
  for (int i = 0; i < 4; ++i) opts_[i].step();
  sets[4].second->zero_grad();
  sets[5].second->zero_grad();
  fake_clean_ = f.clean_from_noisy.value();
  fake_noisy_ = f.noisy_from_clean.value();

  NdmStepStats s;
  s.adv = t.adv.item();
  s.kl = t.kl.item();
  s.cc = t.cc.item();
  s.col = t.col.item();
  s.per = t.per.item();
  s.bc = t.bc.item();
  s.rec = t.rec.item();
  s.total = total.item();
  return s;
}

double NdmTrainer::discriminator_step(const Tensor& noisy, const Tensor& clean) {
  if (fake_clean_.empty()) throw InvalidArgument("discriminator step before any generator step");
  auto sets = nets_.parameter_sets();
  sets[4].second->zero_grad();
  sets[5].second->zero_grad();
  const Var dy = loss_lsgan(nets_.disc_y()(Var::constant(clean)), nets_.disc_y()(Var::constant(fake_clean_)),
                            losses_.label_fake, losses_.label_real);
  const Var dx = loss_lsgan(nets_.disc_x()(Var::constant(noisy)), nets_.disc_x()(Var::constant(fake_noisy_)),
                            losses_.label_fake, losses_.label_real);
  const Var d = ops::add(dx, dy);
  d.backward();
  opts_[4].step();
  opts_[5].step();
  return d.item();
}

}  // namespace hep::ndm
