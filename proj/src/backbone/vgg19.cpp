#include <cmath>
#include <cstdlib>
#include <random>

#include "hep/backbone.hpp"
#include "hep/error.hpp"

namespace hep {
namespace {

struct ConvSpec {
  const char* name;
  int in;
  int out;
  bool pool_after;
};

// 2, 2, 4, 4, 4 convs per block with a 2x2 max pool closing each block.
constexpr ConvSpec kConvs[] = {
    {"conv1_1", 3, 64, false},    {"conv1_2", 64, 64, true},
    {"conv2_1", 64, 128, false},  {"conv2_2", 128, 128, true},
    {"conv3_1", 128, 256, false}, {"conv3_2", 256, 256, false},
    {"conv3_3", 256, 256, false}, {"conv3_4", 256, 256, true},
    {"conv4_1", 256, 512, false}, {"conv4_2", 512, 512, false},
    {"conv4_3", 512, 512, false}, {"conv4_4", 512, 512, true},
    {"conv5_1", 512, 512, false}, {"conv5_2", 512, 512, false},
    {"conv5_3", 512, 512, false}, {"conv5_4", 512, 512, true},
};
constexpr int kNumConvs = static_cast<int>(std::size(kConvs));

constexpr double kMean[3] = {0.485, 0.456, 0.406};
constexpr double kStd[3] = {0.229, 0.224, 0.225};

int layer_index(const std::string& layer) {
  for (int i = 0; i < kNumConvs; ++i) {
    if (layer == kConvs[i].name) return i;
  }
  throw UnknownLayerError("unknown backbone layer '" + layer + "'");
}

const Tensor& find_entry(const NamedTensors& weights, const std::string& key) {
  for (const auto& [name, t] : weights) {
    if (name == key) return t;
  }
  throw MissingWeightsError("backbone weights lack entry '" + key + "'");
}

}  // namespace

const std::vector<std::string>& Vgg19::layer_registry() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& c : kConvs) v.emplace_back(c.name);
    return v;
  }();
  return names;
}

Vgg19::Vgg19(NamedTensors weights, bool pretrained, BackboneOptions options)
    : pretrained_(pretrained), options_(options) {
  for (const auto& c : kConvs) {
    const std::string base = c.name;
    const Tensor& w = find_entry(weights, base + ".weight");
    const Tensor& b = find_entry(weights, base + ".bias");
    if (!(w.shape() == Shape{c.out, c.in, 3, 3}) || !(b.shape() == Shape{1, c.out, 1, 1})) {
      throw MissingWeightsError("backbone entry '" + base + "' has shape " + w.shape().str() +
                                " / " + b.shape().str());
    }
    weight_.push_back(Var::constant(w));
    bias_.push_back(Var::constant(b));
  }
}

std::shared_ptr<Vgg19> Vgg19::load(const std::filesystem::path& weights, BackboneOptions options) {
  if (weights.empty() || !std::filesystem::is_regular_file(weights)) {
    throw MissingWeightsError("backbone weight file not found: " + weights.string());
  }
  NamedTensors archive;
  try {
    archive = load_archive(weights);
  } catch (const MissingWeightsError&) {
    throw;
  } catch (const Error& e) {
    throw MissingWeightsError("cannot read backbone weights " + weights.string() + ": " + e.what());
  }
  return std::shared_ptr<Vgg19>(new Vgg19(std::move(archive), true, options));
}

std::shared_ptr<Vgg19> Vgg19::random(std::uint64_t seed, BackboneOptions options) {
  std::mt19937_64 rng(seed);
  NamedTensors w;
  for (const auto& c : kConvs) {
    const double stddev = std::sqrt(2.0 / (c.in * 9));
    w.emplace_back(std::string(c.name) + ".weight", Tensor::randn(Shape{c.out, c.in, 3, 3}, rng, stddev));
    w.emplace_back(std::string(c.name) + ".bias", Tensor(Shape{1, c.out, 1, 1}, 0.0));
  }
  return std::shared_ptr<Vgg19>(new Vgg19(std::move(w), false, options));
}

const std::string& Vgg19::name() const {
  static const std::string n = "vgg19";
  return n;
}

Var Vgg19::features(const Var& x, const std::string& layer) const {
  const int target = layer_index(layer);
  if (x.shape().c != 3) throw ShapeMismatch("backbone expects 3-channel input, got " + x.shape().str());
  Var h = x;
  if (options_.imagenet_normalize) {
    const double scale[3] = {1.0 / kStd[0], 1.0 / kStd[1], 1.0 / kStd[2]};
    const double shift[3] = {-kMean[0] / kStd[0], -kMean[1] / kStd[1], -kMean[2] / kStd[2]};
    h = ops::channel_affine(h, scale, shift);
  }
  for (int i = 0;; ++i) {
    h = ops::conv2d(h, weight_[i], bias_[i], 1, 1);
    if (i == target && options_.tap == TapPoint::PreRelu) return h;
    h = ops::relu(h);
    if (i == target) return h;
    if (kConvs[i].pool_after) h = ops::max_pool2x2(h);
  }
}

std::uint64_t Vgg19::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (int i = 0; i < kNumConvs; ++i) {
    h = hep::checksum(weight_[i].value(), h);
    h = hep::checksum(bias_[i].value(), h);
  }
  return h;
}

NamedTensors Vgg19::weights() const {
  NamedTensors out;
  for (int i = 0; i < kNumConvs; ++i) {
    out.emplace_back(std::string(kConvs[i].name) + ".weight", weight_[i].value());
    out.emplace_back(std::string(kConvs[i].name) + ".bias", bias_[i].value());
  }
  return out;
}

FeatureMap Backbone::extract(const Image& img, const std::string& layer) const {
  if (!has_layer(layer)) throw UnknownLayerError("unknown backbone layer '" + layer + "'");
  require_valid(img, "extract_features");
  NoGradGuard no_grad;
  Var f = features(Var::constant(img.to_tensor()), layer);
  return FeatureMap{f.value(), layer};
}

bool Backbone::has_layer(const std::string& layer) const {
  for (const auto& l : layers()) {
    if (l == layer) return true;
  }
  return false;
}

std::shared_ptr<Backbone> make_backbone(const std::string& name, const std::filesystem::path& weights,
                                        BackboneOptions options, std::uint64_t seed) {
  if (name != "vgg19") throw InvalidArgument("unknown backbone '" + name + "'");
  if (weights.empty()) return Vgg19::random(seed, options);
  return Vgg19::load(weights, options);
}

std::filesystem::path default_backbone_weights() {
  const char* dir = std::getenv("HEP_BACKBONE_DIR");
  if (dir == nullptr || *dir == '\0') return {};
  return std::filesystem::path(dir) / "vgg19.params";
}

}  // namespace hep
