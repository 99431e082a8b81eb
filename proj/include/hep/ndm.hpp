#pragma once

// Noise disentanglement: unpaired translation between noisy reflectance
// maps (domain X) and clean images (domain Y) with a shared content encoder,
// a variational noise encoder, two generators and two LSGAN discriminators.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hep/backbone.hpp"
#include "hep/imaging.hpp"
#include "hep/nn.hpp"

namespace hep::ndm {

struct NdmConfig {
  int width = 32;      // base channels; content code has 2*width
  int noise_dim = 8;   // d
  int res_blocks = 4;
  std::uint64_t seed = 1;
};

struct NoiseCode {
  Var mu;      // (N, d, 1, 1)
  Var logvar;  // (N, d, 1, 1), clamped to [-10, 10]
  Var sample;  // mu + exp(logvar / 2) * eta
};

struct ResBlock {
  nn::Conv2d a, b;
  Var operator()(const Var& x) const;
};

struct ContentEncoder {
  nn::ParameterSet params;
  nn::Conv2d down1, down2;
  std::vector<ResBlock> blocks;
  Var operator()(const Var& x) const;
};

struct NoiseEncoder {
  nn::ParameterSet params;
  std::vector<nn::Conv2d> convs;
  nn::Linear mu_head, logvar_head;
  // eta ~ N(0,1) drawn from rng; pass nullptr for the mean (eta = 0).
  NoiseCode operator()(const Var& x, std::mt19937_64* rng) const;
};

struct Generator {
  nn::ParameterSet params;
  int noise_dim = 0;  // 0 for G_Y
  nn::Conv2d in;
  std::vector<ResBlock> blocks;
  nn::ConvTranspose2d up1, up2;
  nn::Conv2d out;
  // noise: (N, d, 1, 1), broadcast over the content grid; ignored when noise_dim == 0.
  Var operator()(const Var& content, const Var& noise = {}) const;
};

struct Discriminator {
  nn::ParameterSet params;
  std::vector<nn::Conv2d> convs;
  nn::Conv2d score;
  Var operator()(const Var& x) const;  // (N, 1, H/16, W/16) score map, no squashing
};

class NdmNetworks {
 public:
  explicit NdmNetworks(NdmConfig config = {});
  NdmNetworks(const NdmNetworks&) = delete;
  NdmNetworks& operator=(const NdmNetworks&) = delete;

  const NdmConfig& config() const { return config_; }

  // One object serves as both E_X^C and E_Y^C.
  ContentEncoder& content_encoder_x() { return content_; }
  ContentEncoder& content_encoder_y() { return content_; }
  const ContentEncoder& content() const { return content_; }
  const NoiseEncoder& noise() const { return noise_; }
  const Generator& gen_x() const { return gen_x_; }
  const Generator& gen_y() const { return gen_y_; }
  const Discriminator& disc_x() const { return disc_x_; }
  const Discriminator& disc_y() const { return disc_y_; }

  // Named parameter sets in checkpoint order: content_encoder,
  // noise_encoder, generator_x, generator_y, discriminator_x, discriminator_y.
  std::vector<std::pair<std::string, nn::ParameterSet*>> parameter_sets();
  std::vector<std::pair<std::string, const nn::ParameterSet*>> parameter_sets() const;
  std::uint64_t architecture_hash() const;

 private:
  NdmConfig config_;
  ContentEncoder content_;
  NoiseEncoder noise_;
  Generator gen_x_, gen_y_;
  Discriminator disc_x_, disc_y_;
};

// Clean-only path G_Y(E^C(noisy)); pads to a multiple of 4 and crops back.
Image denoise(const NdmNetworks& nets, const Image& noisy);
// Synthesizes a noisy-domain image from a clean one with z ~ N(0,1) from seed.
Image generate_noisy(const NdmNetworks& nets, const Image& clean, std::uint64_t seed);

struct NdmLossWeights {
  double kl = 0.01;
  double per = 0.1;
  double col = 0.5;
  double bc = 5.0;
  double cc = 10.0;
  double rec = 10.0;
};

// Noise code fed to G_X when translating a clean sample into the noisy domain.
enum class NoiseSource {
  Prior,    // z ~ N(0, 1)
  Encoder,  // the noise code encoded from the paired noisy sample of the batch
};

struct NdmLossConfig {
  NdmLossWeights weights;
  BlurBank bank;
  std::string layer = "conv3_2";
  NoiseSource clean_noise = NoiseSource::Prior;
  double label_fake = 0.0;  // a
  double label_real = 1.0;  // b
  bool use_adv = true;
  bool use_kl = true;
  bool use_cc = true;
  bool use_col = true;
  bool use_per = true;
  bool use_bc = true;
  bool use_rec = true;
};

// 1/2 sum_i (-logvar_i + mu_i^2 + exp(logvar_i) - 1), averaged over the batch.
Var loss_kl(const NoiseCode& code);
// Discriminator side: 1/2 E[(D(real) - b)^2] + 1/2 E[(D(fake) - a)^2].
Var loss_lsgan(const Var& d_real, const Var& d_fake, double a = 0.0, double b = 1.0);
// Generator side: 1/2 E[(D(fake) - b)^2].
Var loss_lsgan_generator(const Var& d_fake, double b = 1.0);
// mean |I - I~|; call once per domain and add.
Var loss_cycle(const Var& original, const Var& back_translated);
Var loss_self_recon(const Var& rec, const Var& original);
Var loss_perceptual(const Var& generated, const Tensor& original, const Backbone& backbone,
                    const std::string& layer = "conv3_2");
// Sum over channel pairs of squared differences of channel means, batch-averaged.
Var loss_color_constancy(const Var& generated);
// Unweighted mean |B_s(orig) - B_s(gen)| for every kernel in the bank.
std::vector<Var> background_terms(const Tensor& original, const Var& generated, const BlurBank& bank);
Var loss_background_consistency(const Tensor& original, const Var& generated,
                                const BlurBank& bank = {});

struct NdmLossTerms {
  Var adv, kl, cc, col, per, bc, rec;
};
Var loss_ndm_total(const NdmLossTerms& t, const NdmLossWeights& w = {});

// Every image produced in one generator pass.
struct NdmForward {
  NoiseCode code;  // E^N(x)
  Var content_x, content_y;
  Var clean_from_noisy;  // I_gc = G_Y(E^C(x))
  Var noisy_from_clean;  // I_gn = G_X(E^C(y), z)
  Var noisy_cycle;       // G_X(E^C(I_gc), z_x)
  Var clean_cycle;       // G_Y(E^C(I_gn))
  Var noisy_rec;         // G_X(E^C(x), z_x)
  Var clean_rec;         // G_Y(E^C(y))
};

NdmForward ndm_forward(const NdmNetworks& nets, const Var& noisy, const Var& clean,
                       std::mt19937_64& rng, NoiseSource clean_noise = NoiseSource::Prior);

// Generator-side terms; disabled terms are skipped and read as zero.
NdmLossTerms generator_losses(const NdmNetworks& nets, const NdmForward& f, const Tensor& noisy,
                              const Tensor& clean, const NdmLossConfig& cfg,
                              const Backbone* backbone);

struct NdmStepStats {
  double adv = 0, kl = 0, cc = 0, col = 0, per = 0, bc = 0, rec = 0, total = 0;
  double disc = 0;  // sum of both discriminator losses
};

// Alternating 1:1 updates: one generator-side Adam step (encoders and
// generators), then one discriminator step on the detached fakes of the
// same pass.
class NdmTrainer {
 public:
  NdmTrainer(NdmNetworks& nets, nn::AdamConfig adam, NdmLossConfig losses,
             const Backbone* backbone);

  NdmStepStats step(const Tensor& noisy, const Tensor& clean, std::mt19937_64& rng);
  // The two halves of step(); the discriminator half uses the fakes of the
  // latest generator half.
  NdmStepStats generator_step(const Tensor& noisy, const Tensor& clean, std::mt19937_64& rng);
  double discriminator_step(const Tensor& noisy, const Tensor& clean);
  void set_lr(double lr);
  double lr() const;

  // Adam state per parameter set, same order as NdmNetworks::parameter_sets().
  std::vector<nn::Adam>& optimizers() { return opts_; }
  const NdmLossConfig& losses() const { return losses_; }

 private:
  NdmNetworks& nets_;
  NdmLossConfig losses_;
  const Backbone* backbone_;
  std::vector<nn::Adam> opts_;
  Tensor fake_clean_;
  Tensor fake_noisy_;
};

}  // namespace hep::ndm
