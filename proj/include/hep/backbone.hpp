#pragma once

// Frozen ImageNet classification backbone used as a perceptual feature
// extractor. Only the VGG-19 convolutional trunk ships; layers are named
// conv{block}_{index}.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hep/archive.hpp"
#include "hep/autograd.hpp"
#include "hep/imaging.hpp"

namespace hep {

enum class TapPoint { PostRelu, PreRelu };

struct BackboneOptions {
  TapPoint tap = TapPoint::PostRelu;
  // ImageNet mean/std normalization of [0,1] RGB input.
  bool imagenet_normalize = true;
};

struct FeatureMap {
  Tensor data;  // (1, C, Hf, Wf)
  std::string layer;
};

class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual const std::string& name() const = 0;
  virtual const std::vector<std::string>& layers() const = 0;
  // Features at `layer` for a (N, 3, H, W) batch in [0,1]. Differentiable
  // with respect to x; the backbone's own weights never receive gradients.
  virtual Var features(const Var& x, const std::string& layer) const = 0;
  virtual std::uint64_t checksum() const = 0;
  // False when the weights are a seeded random init rather than a trained file.
  virtual bool pretrained() const = 0;
  virtual const BackboneOptions& options() const = 0;

  FeatureMap extract(const Image& img, const std::string& layer) const;
  bool has_layer(const std::string& layer) const;
};

class Vgg19 final : public Backbone {
 public:
  static const std::vector<std::string>& layer_registry();

  // Archive entries "<layer>.weight" (Cout, Cin, 3, 3) and "<layer>.bias"
  // (1, Cout, 1, 1) for all 16 conv layers. Throws MissingWeightsError.
  static std::shared_ptr<Vgg19> load(const std::filesystem::path& weights,
                                     BackboneOptions options = {});
  // He-initialized weights from a seed; no ImageNet knowledge.
  static std::shared_ptr<Vgg19> random(std::uint64_t seed, BackboneOptions options = {});

  const std::string& name() const override;
  const std::vector<std::string>& layers() const override { return layer_registry(); }
  Var features(const Var& x, const std::string& layer) const override;
  std::uint64_t checksum() const override;
  bool pretrained() const override { return pretrained_; }
  const BackboneOptions& options() const override { return options_; }

  NamedTensors weights() const;

 private:
  Vgg19(NamedTensors weights, bool pretrained, BackboneOptions options);

  std::vector<Var> weight_;
  std::vector<Var> bias_;
  bool pretrained_ = false;
  BackboneOptions options_;
};

// Registry hook: "vgg19" is the only entry. An empty path gives random weights.
std::shared_ptr<Backbone> make_backbone(const std::string& name,
                                        const std::filesystem::path& weights,
                                        BackboneOptions options = {}, std::uint64_t seed = 0);

// Conventional location of the converted weights: $HEP_BACKBONE_DIR/vgg19.params.
std::filesystem::path default_backbone_weights();

}  // namespace hep
