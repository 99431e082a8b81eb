#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "hep/error.hpp"
#include "hep/ndm.hpp"
#include "support/gradcheck.hpp"

using namespace hep;
using namespace hep::ndm;
using testing::gradcheck;
using testing::random_tensor;

namespace {

NdmConfig tiny(std::uint64_t seed = 1) { return NdmConfig{4, 8, 1, seed}; }

const Backbone& backbone() {
  static auto net = Vgg19::random(17);
  return *net;
}

Var scalar(double v) { return Var::constant(Tensor::scalar(v)); }

NoiseCode code_of(Tensor mu, Tensor logvar) {
  NoiseCode c;
  c.mu = Var::constant(std::move(mu));
  c.logvar = Var::constant(std::move(logvar));
  c.sample = c.mu;
  return c;
}

std::uint64_t checksum_of(const NdmNetworks& nets, int begin, int end) {
  std::uint64_t h = 0;
  const auto sets = nets.parameter_sets();
  for (int i = begin; i < end; ++i) h = h * 31 + sets[i].second->checksum();
  return h;
}

}  // namespace

TEST_CASE("network shapes and output ranges") {
  NdmNetworks nets(tiny());
  const Var x = Var::constant(random_tensor(Shape{2, 3, 32, 16}, 1));
  const Var c = nets.content()(x);
  CHECK(c.shape() == Shape{2, 8, 8, 4});
  CHECK(c.value().all_finite());
  std::mt19937_64 rng(3);
  const NoiseCode z = nets.noise()(x, &rng);
  CHECK(z.mu.shape() == Shape{2, 8, 1, 1});
  for (double v : z.logvar.value().values()) CHECK((v >= -10.0 && v <= 10.0));
  const Var gy = nets.gen_y()(c);
  const Var gx = nets.gen_x()(c, z.sample);
  CHECK(gy.shape() == x.shape());
  CHECK(gx.shape() == x.shape());
  for (double v : gx.value().values()) REQUIRE((v >= 0.0 && v <= 1.0));
  CHECK(nets.disc_x()(x).shape() == Shape{2, 1, 2, 1});
  CHECK_THROWS_AS(nets.gen_x()(c), ShapeMismatch);
}

TEST_CASE("one shared content encoder serves both domains") {
  NdmNetworks nets(tiny());
  CHECK(&nets.content_encoder_x() == &nets.content_encoder_y());
  auto& px = nets.content_encoder_x().params.entries();
  auto& py = nets.content_encoder_y().params.entries();
  REQUIRE(px.size() == py.size());
  for (std::size_t i = 0; i < px.size(); ++i) CHECK(px[i].second.node() == py[i].second.node());
  CHECK(nets.parameter_sets().size() == 6);
}

TEST_CASE("denoise and generate_noisy contracts") {
  NdmNetworks nets(tiny());
  std::mt19937_64 rng(4);
  Image img(13, 10, 3);
  for (double& v : img.pixels()) v = std::uniform_real_distribution<double>(0, 1)(rng);
  const Image a = denoise(nets, img), b = denoise(nets, img);
  CHECK(a.height() == 13);
  CHECK(a.width() == 10);
  CHECK(a.channels() == 3);
  CHECK(a.in_unit_range());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.pixels()[i] == b.pixels()[i]);
  const Image n1 = generate_noisy(nets, img, 9), n2 = generate_noisy(nets, img, 9), n3 = generate_noisy(nets, img, 10);
  double d12 = 0, d13 = 0;
  for (std::size_t i = 0; i < n1.size(); ++i) {
    d12 = std::max(d12, std::abs(n1.pixels()[i] - n2.pixels()[i]));
    d13 = std::max(d13, std::abs(n1.pixels()[i] - n3.pixels()[i]));
  }
  CHECK(d12 == 0.0);
  CHECK(d13 > 0.0);
  CHECK_THROWS_AS(denoise(nets, Image(8, 8, 1, 0.3)), ShapeMismatch);
}

TEST_CASE("KL term examples and limits") {
  CHECK(loss_kl(code_of(Tensor(Shape{1, 8, 1, 1}, 0.0), Tensor(Shape{1, 8, 1, 1}, 0.0))).item() == 0.0);
  CHECK(loss_kl(code_of(Tensor(Shape{1, 1, 1, 1}, 1.0), Tensor(Shape{1, 1, 1, 1}, 0.0))).item() ==
        doctest::Approx(0.5).epsilon(1e-15));
  double previous = 0.0;
  for (double lv = -1.0; lv >= -10.0; lv -= 1.0) {
    const double v = loss_kl(code_of(Tensor(Shape{1, 1, 1, 1}, 0.0), Tensor(Shape{1, 1, 1, 1}, lv))).item();
    CHECK(v > previous);
    CHECK(std::isfinite(v));
    previous = v;
  }
  // Closed form against random codes, averaged over the batch.
  const Tensor mu = random_tensor(Shape{3, 8, 1, 1}, 5, -1, 1);
  const Tensor lv = random_tensor(Shape{3, 8, 1, 1}, 6, -2, 2);
  double expect = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) expect += 0.5 * (-lv[i] + mu[i] * mu[i] + std::exp(lv[i]) - 1.0);
  CHECK(loss_kl(code_of(mu, lv)).item() == doctest::Approx(expect / 3.0).epsilon(1e-13));
  CHECK(loss_kl(code_of(mu, lv)).item() > 0.0);
}

TEST_CASE("least-squares adversarial examples") {
  const Var ones = Var::constant(Tensor(Shape{2, 1, 4, 4}, 1.0));
  const Var zeros = Var::constant(Tensor(Shape{2, 1, 4, 4}, 0.0));
  const Var half = Var::constant(Tensor(Shape{2, 1, 4, 4}, 0.5));
  CHECK(loss_lsgan(ones, zeros).item() == 0.0);
  CHECK(loss_lsgan(half, half).item() == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(loss_lsgan_generator(ones).item() == 0.0);
  CHECK(loss_lsgan_generator(zeros).item() == doctest::Approx(0.5));
  for (unsigned s = 0; s < 5; ++s) {
    const Var r = Var::constant(random_tensor(Shape{1, 1, 3, 3}, s, -2, 2));
    const Var f = Var::constant(random_tensor(Shape{1, 1, 3, 3}, s + 10, -2, 2));
    CHECK(loss_lsgan(r, f).item() >= 0.0);
  }
}

TEST_CASE("cycle and self-reconstruction examples") {
  const Tensor I = random_tensor(Shape{1, 3, 8, 8}, 7, 0.2, 0.8);
  Tensor off1 = I, off2 = I;
  for (double& v : off1.values()) v += 0.1;
  for (double& v : off2.values()) v += 0.2;
  const Var a = Var::constant(I), b = Var::constant(off1), c = Var::constant(off2);
  CHECK(loss_cycle(a, a).item() == 0.0);
  CHECK(std::abs(loss_cycle(a, b).item() - 0.1) < 1e-12);
  CHECK(loss_cycle(a, b).item() == loss_cycle(b, a).item());
  CHECK(loss_self_recon(a, a).item() == 0.0);
  CHECK(std::abs(loss_self_recon(c, a).item() - 0.2) < 1e-12);
  CHECK_THROWS_AS(loss_cycle(a, Var::constant(Tensor(Shape{1, 3, 8, 4}, 0.0))), ShapeMismatch);
}

TEST_CASE("colour constancy examples") {
  CHECK(loss_color_constancy(Var::constant(Tensor(Shape{1, 3, 5, 5}, 0.4))).item() == 0.0);
  Tensor t(Shape{1, 3, 4, 4});
  const double means[3] = {0.5, 0.3, 0.3};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 16; ++i) t.plane(0, c)[i] = means[c];
  CHECK(std::abs(loss_color_constancy(Var::constant(t)).item() - 0.08) < 1e-12);

  const Tensor r = random_tensor(Shape{1, 3, 6, 6}, 8);
  Tensor perm = r;
  std::mt19937 rng(1);
  std::vector<int> idx(36);
  for (int i = 0; i < 36; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 36; ++i) perm.plane(0, c)[i] = r.plane(0, c)[idx[i]];
  CHECK(loss_color_constancy(Var::constant(perm)).item() ==
        doctest::Approx(loss_color_constancy(Var::constant(r)).item()).epsilon(1e-12));
  CHECK_THROWS_AS(loss_color_constancy(Var::constant(Tensor(Shape{1, 1, 4, 4}, 0.0))), InvalidArgument);
}

TEST_CASE("background consistency examples") {
  const Tensor I = random_tensor(Shape{1, 3, 24, 24}, 9, 0.2, 0.8);
  CHECK(loss_background_consistency(I, Var::constant(I)).item() == 0.0);
  Tensor shifted = I;
  for (double& v : shifted.values()) v += 0.1;
  CHECK(std::abs(loss_background_consistency(I, Var::constant(shifted)).item() - 0.175) < 1e-6);

  // A zero-mean checkerboard is high frequency: the narrow blur keeps more of it.
  const Tensor flat(Shape{1, 3, 32, 32}, 0.5);
  Tensor board = flat;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) board.at(0, c, y, x) += ((x / 2 + y / 2) % 2 ? 0.1 : -0.1);
  const auto terms = background_terms(flat, Var::constant(board), BlurBank{});
  REQUIRE(terms.size() == 3);
  CHECK(terms[0].item() > terms[2].item());
  CHECK(terms[0].item() > 0.0);
}

TEST_CASE("perceptual term") {
  const Tensor I = random_tensor(Shape{1, 3, 16, 16}, 10);
  CHECK(loss_perceptual(Var::constant(I), I, backbone()).item() == 0.0);
  const double v = loss_perceptual(Var::constant(random_tensor(Shape{1, 3, 16, 16}, 11)), I, backbone()).item();
  CHECK(v > 0.0);
  CHECK(std::isfinite(v));
}

TEST_CASE("total weighting") {
  const Var z = scalar(0.0), one = scalar(1.0);
  CHECK(loss_ndm_total(NdmLossTerms{z, z, z, z, z, z, z}).item() == 0.0);
  CHECK(std::abs(loss_ndm_total(NdmLossTerms{one, one, one, one, one, one, one}).item() - 26.61) < 1e-12);
}

TEST_CASE("image-space losses are positive on differing arguments") {
  const Tensor a = random_tensor(Shape{1, 3, 16, 16}, 12);
  const Tensor b = random_tensor(Shape{1, 3, 16, 16}, 13);
  CHECK(loss_cycle(Var::constant(a), Var::constant(b)).item() > 0.0);
  CHECK(loss_self_recon(Var::constant(a), Var::constant(b)).item() > 0.0);
  CHECK(loss_background_consistency(a, Var::constant(b)).item() > 0.0);
  CHECK(loss_perceptual(Var::constant(b), a, backbone()).item() > 0.0);
}

TEST_CASE("loss gradients match central differences on 32x32 probes") {
  const Tensor I = random_tensor(Shape{1, 3, 32, 32}, 14);
  const Tensor G = random_tensor(Shape{1, 3, 32, 32}, 15);
  const double step = 1e-3, tol = 1e-3;
  const Var Ic = Var::constant(I);
  CHECK(gradcheck([&](const Var& g) { return loss_cycle(Ic, g); }, G, 40, step).relative_error < tol);
  CHECK(gradcheck([&](const Var& g) { return loss_self_recon(g, Ic); }, G, 40, step).relative_error < tol);
  CHECK(gradcheck([&](const Var& g) { return loss_color_constancy(g); }, G, 40, step).relative_error < tol);
  CHECK(gradcheck([&](const Var& g) { return loss_background_consistency(I, g); }, G, 40, step).relative_error < tol);
  CHECK(gradcheck([&](const Var& g) { return loss_perceptual(g, I, backbone()); }, G, 20, 1e-6).relative_error < 1e-5);

  const Tensor lv = random_tensor(Shape{2, 8, 1, 1}, 16, -2, 2);
  const Tensor mu = random_tensor(Shape{2, 8, 1, 1}, 17, -1, 1);
  CHECK(gradcheck([&](const Var& m) { return loss_kl(NoiseCode{m, Var::constant(lv), m}); }, mu, 0, step).relative_error < tol);
  CHECK(gradcheck([&](const Var& l) { return loss_kl(NoiseCode{Var::constant(mu), l, Var::constant(mu)}); }, lv, 0, step).relative_error < tol);
  const Tensor d = random_tensor(Shape{2, 1, 4, 4}, 18, -1, 2);
  CHECK(gradcheck([&](const Var& v) { return loss_lsgan(v, Var::constant(d)); }, d, 0, step).relative_error < tol);
}

TEST_CASE("alternating steps touch only their own parameters") {
  NdmNetworks nets(tiny(5));
  NdmLossConfig cfg;
  NdmTrainer trainer(nets, nn::AdamConfig{}, cfg, &backbone());
  const Tensor x = random_tensor(Shape{2, 3, 16, 16}, 19, 0.0, 0.5);
  const Tensor y = random_tensor(Shape{2, 3, 16, 16}, 20, 0.3, 1.0);
  std::mt19937_64 rng(1);

  const auto gen0 = checksum_of(nets, 0, 4), disc0 = checksum_of(nets, 4, 6);
  const NdmStepStats s = trainer.generator_step(x, y, rng);
  CHECK(std::isfinite(s.total));
  CHECK(s.total == doctest::Approx(s.adv + 0.01 * s.kl + 10 * s.cc + 0.5 * s.col + 0.1 * s.per + 5 * s.bc + 10 * s.rec));
  const auto gen1 = checksum_of(nets, 0, 4);
  CHECK(gen1 != gen0);
  CHECK(checksum_of(nets, 4, 6) == disc0);

  const double d = trainer.discriminator_step(x, y);
  CHECK(std::isfinite(d));
  CHECK(d >= 0.0);
  CHECK(checksum_of(nets, 0, 4) == gen1);
  CHECK(checksum_of(nets, 4, 6) != disc0);
}

TEST_CASE("gradient of the total is the weighted sum of component gradients") {
  NdmNetworks nets(tiny(6));
  NdmLossConfig cfg;
  const Tensor x = random_tensor(Shape{1, 3, 16, 16}, 21, 0.0, 0.5);
  const Tensor y = random_tensor(Shape{1, 3, 16, 16}, 22, 0.3, 1.0);
  auto& gy = const_cast<Generator&>(nets.gen_y()).params;
  auto grads = [&](int which) {
    for (auto& [n, p] : nets.parameter_sets()) p->zero_grad();
    std::mt19937_64 rng(3);
    const NdmForward f = ndm_forward(nets, Var::constant(x), Var::constant(y), rng);
    const NdmLossTerms t = generator_losses(nets, f, x, y, cfg, &backbone());
    const Var parts[] = {loss_ndm_total(t), t.adv, t.kl, t.cc, t.col, t.per, t.bc, t.rec};
    parts[which].backward();
    std::vector<Tensor> g;
    for (auto& [n, p] : gy.entries()) g.push_back(p.grad().empty() ? Tensor(p.shape(), 0.0) : p.grad());
    return g;
  };
  const double w[] = {1.0, 0.01, 10, 0.5, 0.1, 5, 10};
  const auto total = grads(0);
  std::vector<std::vector<Tensor>> parts;
  for (int i = 1; i <= 7; ++i) parts.push_back(grads(i));
  double worst = 0, scale = 0;
  for (std::size_t p = 0; p < total.size(); ++p) {
    for (std::size_t i = 0; i < total[p].size(); ++i) {
      double combined = 0;
      for (int k = 0; k < 7; ++k) combined += w[k] * parts[k][p][i];
      worst = std::max(worst, std::abs(combined - total[p][i]));
      scale = std::max(scale, std::abs(total[p][i]));
    }
  }
  CHECK(worst <= 1e-10 * std::max(scale, 1.0));
}

TEST_CASE("training steps run and stay finite") {
  NdmNetworks nets(tiny(7));
  NdmLossConfig cfg;
  cfg.use_per = false;
  NdmTrainer trainer(nets, nn::AdamConfig{1e-3}, cfg, nullptr);
  const Tensor x = random_tensor(Shape{2, 3, 16, 16}, 23, 0.0, 0.5);
  const Tensor y = random_tensor(Shape{2, 3, 16, 16}, 24, 0.3, 1.0);
  std::mt19937_64 rng(2);
  double first = 0, last = 0;
  for (int i = 0; i < 15; ++i) {
    const NdmStepStats s = trainer.step(x, y, rng);
    REQUIRE(std::isfinite(s.total));
    REQUIRE(std::isfinite(s.disc));
    if (i == 0) first = s.rec;
    last = s.rec;
  }
  CHECK(last < first);
}
