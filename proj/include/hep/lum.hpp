#pragma once

// Light-up decomposition: low-light RGB (+ bright channel) -> reflectance
// (3 channels) and illumination (1 channel), both sigmoid-bounded.

#include <cstdint>
#include <string>

#include "hep/backbone.hpp"
#include "hep/imaging.hpp"
#include "hep/nn.hpp"

namespace hep::lum {

struct LumConfig {
  int width = 64;  // hidden channels
  std::uint64_t seed = 1;
};

struct Decomposition {
  Var reflectance;   // (N, 3, H, W)
  Var illumination;  // (N, 1, H, W)
};

struct DecompositionResult {
  Image reflectance;
  Image illumination;
};

class LumNetwork {
 public:
  explicit LumNetwork(LumConfig config = {});
  LumNetwork(const LumNetwork&) = delete;
  LumNetwork& operator=(const LumNetwork&) = delete;
  LumNetwork(LumNetwork&&) = default;
  LumNetwork& operator=(LumNetwork&&) = default;

  // x: (N, 4, H, W) with H and W even.
  Decomposition forward(const Var& x) const;
  // rgb: (N, 3, H, W); the bright channel is appended here.
  Decomposition forward_rgb(const Var& rgb) const;

  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }
  const LumConfig& config() const { return config_; }
  std::uint64_t architecture_hash() const { return params_.layout_hash(); }

 private:
  LumConfig config_;
  nn::ParameterSet params_;
  nn::Conv2d conv9x9_, conv1_, conv2_, conv3_;
  nn::ConvTranspose2d deconv_;
  nn::Conv2d fuse_, side_, head_r_, head_l_;
};

// Inference on one image of any size >= 2x2: reflect-pads odd dimensions to
// even, runs without recording a graph, and crops back.
DecompositionResult decompose(const LumNetwork& net, const Image& img);

struct LumLossWeights {
  double lambda_hep = 0.1;
  double lambda_is = 0.1;
  double epsilon = 0.01;
};

// Reference for the perceptual prior: the equalized input (default) or the
// raw input.
enum class HepReference { Equalized, Raw };

// Reflectance prior used in place of the feature-space term for ablations.
enum class PriorKind { Hep, L1, Mse, Ssim, MaxEntropy };

PriorKind parse_prior_kind(const std::string& s);
const char* prior_kind_name(PriorKind k);

struct LumLossConfig {
  LumLossWeights weights;
  PriorKind prior = PriorKind::Hep;
  HepReference reference = HepReference::Equalized;
  std::string layer = "conv4_1";
  // Ablation switches; a disabled term is skipped and logged as zero.
  bool use_recon = true;
  bool use_prior = true;
  bool use_smooth = true;
};

// mean |R * L - I| with L broadcast over channels.
Var loss_recon(const Var& reflectance, const Var& illumination, const Var& input);
// mean over pixels and both directions of |grad L| / max(mean_c |grad I|, eps).
Var loss_illum_smooth(const Var& illumination, const Tensor& input, double epsilon);
// Per-sample histogram equalization of a batch.
Tensor equalize_batch(const Tensor& batch);
// mean squared difference of backbone features of R and of the reference.
Var loss_hep(const Var& reflectance, const Tensor& input, const Backbone& backbone,
             HepReference reference = HepReference::Equalized,
             const std::string& layer = "conv4_1");
// L1 / MSE / 1-SSIM against HE(I); MaxEntropy compares max_c R with HE(max_c I).
// PriorKind::Hep needs a backbone.
Var ablation_prior_loss(PriorKind kind, const Var& reflectance, const Tensor& input,
                        const Backbone* backbone = nullptr,
                        HepReference reference = HepReference::Equalized,
                        const std::string& layer = "conv4_1");
Var loss_lum_total(const Var& recon, const Var& hep, const Var& smooth,
                   const LumLossWeights& w = {});

struct LumLossTerms {
  Var recon;
  Var prior;
  Var smooth;
  Var total;
};

LumLossTerms lum_losses(const Decomposition& d, const Tensor& input, const LumLossConfig& cfg,
                        const Backbone* backbone);

}  // namespace hep::lum
