#include "hep/error.hpp"
#include "hep/ndm.hpp"

namespace hep::ndm {
namespace {

ResBlock make_block(nn::ParameterSet& p, const std::string& name, int ch, std::mt19937_64& rng) {
  return ResBlock{nn::Conv2d::create(p, name + ".a", ch, ch, 3, 1, 1, rng),
                  nn::Conv2d::create(p, name + ".b", ch, ch, 3, 1, 1, rng)};
}

void build_generator(Generator& g, int in_ch, int width, int blocks, std::mt19937_64& rng) {
  const int c = 2 * width;
  g.in = nn::Conv2d::create(g.params, "in", in_ch, c, 3, 1, 1, rng);
  for (int i = 0; i < blocks; ++i) g.blocks.push_back(make_block(g.params, "res" + std::to_string(i), c, rng));
  g.up1 = nn::ConvTranspose2d::create(g.params, "up1", c, width, 3, 2, 1, 1, rng);
  g.up2 = nn::ConvTranspose2d::create(g.params, "up2", width, std::max(width / 2, 1), 3, 2, 1, 1, rng);
  g.out = nn::Conv2d::create(g.params, "out", std::max(width / 2, 1), 3, 3, 1, 1, rng);
}

void build_discriminator(Discriminator& d, int width, std::mt19937_64& rng) {
  int in = 3;
  for (int i = 0; i < 4; ++i) {
    const int out = width << i;
    d.convs.push_back(nn::Conv2d::create(d.params, "down" + std::to_string(i + 1), in, out, 4, 2, 1, rng));
    in = out;
  }
  d.score = nn::Conv2d::create(d.params, "score", in, 1, 3, 1, 1, rng);
}

}  // namespace

Var ResBlock::operator()(const Var& x) const { return ops::add(x, b(ops::relu(a(x)))); }

Var ContentEncoder::operator()(const Var& x) const {
  Var h = ops::relu(down2(ops::relu(down1(x))));
  for (const auto& blk : blocks) h = blk(h);
  return h;
}

NoiseCode NoiseEncoder::operator()(const Var& x, std::mt19937_64* rng) const {
  Var h = x;
  for (const auto& c : convs) h = ops::relu(c(h));
  const Var pooled = ops::global_avg_pool(h);
  NoiseCode code;
  code.mu = mu_head(pooled);
  code.logvar = ops::clamp(logvar_head(pooled), -10.0, 10.0);
  if (rng == nullptr) {
    code.sample = code.mu;
  } else {
    const Var eta = Var::constant(Tensor::randn(code.mu.shape(), *rng));
    code.sample = ops::add(code.mu, ops::mul(ops::exp(ops::scale(code.logvar, 0.5)), eta));
  }
  return code;
}

Var Generator::operator()(const Var& content, const Var& noise) const {
  Var h = content;
  if (noise_dim > 0) {
    if (!noise.defined() || noise.shape().c != noise_dim || noise.shape().n != content.shape().n) {
      throw ShapeMismatch("generator expects a (N, " + std::to_string(noise_dim) + ", 1, 1) noise code");
    }
    const Var parts[] = {content, ops::broadcast_spatial(noise, content.shape().h, content.shape().w)};
    h = ops::concat_channels(parts);
  }
  h = ops::relu(in(h));
  for (const auto& blk : blocks) h = blk(h);
  h = ops::relu(up2(ops::relu(up1(h))));
  return ops::sigmoid(out(h));
}

Var Discriminator::operator()(const Var& x) const {
  Var h = x;
  for (const auto& c : convs) h = ops::leaky_relu(c(h), 0.2);
  return score(h);
}

NdmNetworks::NdmNetworks(NdmConfig config) : config_(config) {
  if (config_.width < 2 || config_.noise_dim < 1 || config_.res_blocks < 0) {
    throw InvalidArgument("invalid NDM configuration");
  }
  std::mt19937_64 rng(config_.seed);
  const int w = config_.width;

  content_.down1 = nn::Conv2d::create(content_.params, "down1", 3, w, 3, 2, 1, rng);
  content_.down2 = nn::Conv2d::create(content_.params, "down2", w, 2 * w, 3, 2, 1, rng);
  for (int i = 0; i < config_.res_blocks; ++i) {
    content_.blocks.push_back(make_block(content_.params, "res" + std::to_string(i), 2 * w, rng));
  }

  int in = 3;
  for (int i = 0; i < 4; ++i) {
    const int out = w * std::min(1 << i, 4);
    noise_.convs.push_back(nn::Conv2d::create(noise_.params, "down" + std::to_string(i + 1), in, out, 3, 2, 1, rng));
    in = out;
  }
  noise_.mu_head = nn::Linear::create(noise_.params, "mu", in, config_.noise_dim, rng);
  noise_.logvar_head = nn::Linear::create(noise_.params, "logvar", in, config_.noise_dim, rng);

  gen_x_.noise_dim = config_.noise_dim;
  build_generator(gen_x_, 2 * w + config_.noise_dim, w, config_.res_blocks, rng);
  build_generator(gen_y_, 2 * w, w, config_.res_blocks, rng);
  build_discriminator(disc_x_, w, rng);
  build_discriminator(disc_y_, w, rng);
}

std::vector<std::pair<std::string, nn::ParameterSet*>> NdmNetworks::parameter_sets() {
  return {{"content_encoder", &content_.params}, {"noise_encoder", &noise_.params},
          {"generator_x", &gen_x_.params},       {"generator_y", &gen_y_.params},
          {"discriminator_x", &disc_x_.params},  {"discriminator_y", &disc_y_.params}};
}

std::vector<std::pair<std::string, const nn::ParameterSet*>> NdmNetworks::parameter_sets() const {
  return {{"content_encoder", &content_.params}, {"noise_encoder", &noise_.params},
          {"generator_x", &gen_x_.params},       {"generator_y", &gen_y_.params},
          {"discriminator_x", &disc_x_.params},  {"discriminator_y", &disc_y_.params}};
}

std::uint64_t NdmNetworks::architecture_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, p] : parameter_sets()) {
    h ^= p->layout_hash();
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

Image run_padded(const Image& img, int multiple, const std::function<Var(const Var&)>& fn) {
  require_valid(img, "ndm");
  if (img.channels() != 3) throw ShapeMismatch("ndm expects RGB images");
  const int h = (img.height() + multiple - 1) / multiple * multiple;
  const int w = (img.width() + multiple - 1) / multiple * multiple;
  const Image padded = (h == img.height() && w == img.width()) ? img : pad_reflect_to(img, h, w);
  NoGradGuard no_grad;
  Image out = Image::from_tensor(fn(Var::constant(padded.to_tensor())).value());
  if (h != img.height() || w != img.width()) out = crop(out, 0, 0, img.height(), img.width());
  return out;
}

}  // namespace

Image denoise(const NdmNetworks& nets, const Image& noisy) {
  return run_padded(noisy, 4, [&](const Var& x) { return nets.gen_y()(nets.content()(x)); });
}

Image generate_noisy(const NdmNetworks& nets, const Image& clean, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return run_padded(clean, 4, [&](const Var& y) {
    const Var z = Var::constant(Tensor::randn(Shape{1, nets.config().noise_dim, 1, 1}, rng));
    return nets.gen_x()(nets.content()(y), z);
  });
}

}  // namespace hep::ndm
