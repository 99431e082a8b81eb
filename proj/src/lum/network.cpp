#include <random>

#include "hep/error.hpp"
#include "hep/lum.hpp"

namespace hep::lum {

LumNetwork::LumNetwork(LumConfig config) : config_(config) {
  if (config_.width < 1) throw InvalidArgument("lum width must be positive");
  std::mt19937_64 rng(config_.seed);
  const int w = config_.width;
  conv9x9_ = nn::Conv2d::create(params_, "conv9x9", 4, w, 9, 1, 4, rng);
  conv1_ = nn::Conv2d::create(params_, "conv1", w, w, 3, 1, 1, rng);
  conv2_ = nn::Conv2d::create(params_, "conv2", w, w, 3, 2, 1, rng);
  conv3_ = nn::Conv2d::create(params_, "conv3", w, w, 3, 1, 1, rng);
  deconv_ = nn::ConvTranspose2d::create(params_, "deconv", w, w, 3, 2, 1, 1, rng);
  fuse_ = nn::Conv2d::create(params_, "fuse", 2 * w, w, 3, 1, 1, rng);
  side_ = nn::Conv2d::create(params_, "side", 4, w, 3, 1, 1, rng);
  head_r_ = nn::Conv2d::create(params_, "head_reflectance", 2 * w, 3, 3, 1, 1, rng);
  head_l_ = nn::Conv2d::create(params_, "head_illumination", 2 * w, 1, 3, 1, 1, rng);
}

Decomposition LumNetwork::forward(const Var& x) const {
  const Shape s = x.shape();
  if (s.c != 4) throw ShapeMismatch("lum expects 4 input channels, got " + s.str());
  if (s.h < 2 || s.w < 2 || s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeMismatch("lum needs even spatial dimensions, got " + s.str());
  }
  using namespace ops;
  const Var f0 = conv9x9_(x);
  const Var f1 = relu(conv1_(f0));
  const Var f3 = relu(conv3_(relu(conv2_(f1))));
  const Var up = relu(deconv_(f3));
  const Var fused = relu(fuse_(concat_channels(std::vector<Var>{f1, up})));
  const Var feat = concat_channels(std::vector<Var>{fused, relu(side_(x))});
  return Decomposition{sigmoid(head_r_(feat)), sigmoid(head_l_(feat))};
}

Decomposition LumNetwork::forward_rgb(const Var& rgb) const {
  if (rgb.shape().c != 3) throw ShapeMismatch("lum expects RGB input, got " + rgb.shape().str());
  return forward(ops::concat_channels(std::vector<Var>{rgb, ops::channel_max(rgb)}));
}

DecompositionResult decompose(const LumNetwork& net, const Image& img) {
  require_valid(img, "decompose");
  if (img.channels() != 3) throw ShapeMismatch("decompose expects an RGB image");
  if (img.height() < 2 || img.width() < 2) throw ShapeMismatch("decompose needs at least 2x2 pixels");
  const int h = img.height() + img.height() % 2;
  const int w = img.width() + img.width() % 2;
  const Image padded = (h == img.height() && w == img.width()) ? img : pad_reflect_to(img, h, w);

  NoGradGuard no_grad;
  const Decomposition d = net.forward_rgb(Var::constant(padded.to_tensor()));
  DecompositionResult out{Image::from_tensor(d.reflectance.value()),
                          Image::from_tensor(d.illumination.value())};
  if (h != img.height() || w != img.width()) {
    out.reflectance = crop(out.reflectance, 0, 0, img.height(), img.width());
    out.illumination = crop(out.illumination, 0, 0, img.height(), img.width());
  }
  return out;
}

}  // namespace hep::lum
