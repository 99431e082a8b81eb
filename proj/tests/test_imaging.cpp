#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hep/error.hpp"
#include "hep/image_io.hpp"
#include "hep/imaging.hpp"

using namespace hep;
namespace fs = std::filesystem;

namespace {

Image random_image(int h, int w, int c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  Image img(h, w, c);
  for (double& v : img.pixels()) v = d(rng);
  return img;
}

// O(N^2) CDF: fraction of pixels in the channel whose 8-bit level is <= this one.
Image brute_force_he(const Image& img) {
  Image out(img.height(), img.width(), img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    auto in = img.channel(c);
    auto o = out.channel(c);
    for (std::size_t i = 0; i < in.size(); ++i) {
      const long level = std::lround(in[i] * 255.0);
      long count = 0;
      for (double v : in) count += std::lround(v * 255.0) <= level ? 1 : 0;
      o[i] = static_cast<double>(count) / static_cast<double>(in.size());
    }
  }
  return out;
}

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "hep_test_imaging";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("hist_equalize: worked examples") {
  Image two(1, 2, 1, std::vector<double>{0.0, 1.0});
  const Image he = hist_equalize(two);
  CHECK(he.at(0, 0, 0) == 0.5);
  CHECK(he.at(0, 1, 0) == 1.0);

  for (double v : {0.0, 0.3, 1.0}) {
    const Image out = hist_equalize(Image(4, 5, 3, v));
    for (double p : out.pixels()) CHECK(p == 1.0);
  }

  // Exactly uniform histogram: 256 distinct levels, once each.
  Image ramp(16, 16, 1);
  for (int i = 0; i < 256; ++i) ramp.channel(0)[i] = i / 255.0;
  const Image out = hist_equalize(ramp);
  const Image oracle = brute_force_he(ramp);
  for (int i = 0; i < 256; ++i) {
    CHECK(out.channel(0)[i] == oracle.channel(0)[i]);
    CHECK(std::abs(out.channel(0)[i] - ramp.channel(0)[i]) <= 1.0 / 256.0 + 1e-15);
    if (i > 0) CHECK(out.channel(0)[i] > out.channel(0)[i - 1]);
  }
}

TEST_CASE("hist_equalize matches the brute-force CDF oracle bitwise") {
  std::mt19937 rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 40), w = 1 + static_cast<int>(rng() % 40);
    const Image img = random_image(h, w, 3, trial);
    const Image a = hist_equalize(img);
    const Image b = brute_force_he(img);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.pixels()[i] == b.pixels()[i]);
  }
}

TEST_CASE("hist_equalize properties: monotone and CDF-linear on its support") {
  const Image img = random_image(32, 32, 3, 9);
  const Image out = hist_equalize(img);
  for (int c = 0; c < 3; ++c) {
    auto in = img.channel(c);
    auto o = out.channel(c);
    for (std::size_t i = 0; i < in.size(); i += 7) {
      for (std::size_t j = 0; j < in.size(); j += 5) {
        if (in[i] <= in[j]) CHECK(o[i] <= o[j]);
      }
      // Fraction of outputs <= o[i] equals o[i] exactly.
      std::size_t count = 0;
      for (double v : o) count += v <= o[i] ? 1 : 0;
      CHECK(static_cast<double>(count) / o.size() == doctest::Approx(o[i]).epsilon(1e-15));
    }
  }
}

TEST_CASE("hist_equalize errors and joint mode") {
  CHECK_THROWS_AS(hist_equalize(Image()), InvalidArgument);
  Image nan(2, 2, 1, 0.5);
  nan.at(1, 1, 0) = std::nan("");
  CHECK_THROWS_AS(hist_equalize(nan), InvalidArgument);

  // Joint mode: one pooled histogram, so equal values map equally across channels.
  Image img(1, 2, 3);
  img.at(0, 0, 0) = 0.2;
  img.at(0, 1, 0) = 0.8;
  img.at(0, 0, 1) = 0.8;
  img.at(0, 1, 1) = 0.2;
  img.at(0, 0, 2) = 0.2;
  img.at(0, 1, 2) = 0.2;
  const Image joint = hist_equalize(img, HistogramMode::Joint);
  CHECK(joint.at(0, 1, 0) == joint.at(0, 0, 1));
  CHECK(joint.at(0, 0, 0) == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("bright_channel") {
  Image px(1, 1, 3, std::vector<double>{0.1, 0.5, 0.3});
  CHECK(bright_channel(px).at(0, 0, 0) == 0.5);
  const Image dark = bright_channel(Image(3, 3, 3, 0.0));
  for (double p : dark.pixels()) CHECK(p == 0.0);
  CHECK(bright_channel(Image(1, 1, 3, 0.2)).at(0, 0, 0) == 0.2);
  CHECK_THROWS_AS(bright_channel(Image(2, 2, 1, 0.1)), InvalidArgument);

  const Image img = random_image(8, 9, 3, 4);
  const Image b = bright_channel(img);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 9; ++x) CHECK(b.at(y, x, 0) >= img.at(y, x, c));
  }
}

TEST_CASE("spatial_gradient") {
  const GradientPair flat = spatial_gradient(Image(5, 6, 3, 0.4));
  for (double v : flat.horizontal.pixels()) CHECK(v == 0.0);
  for (double v : flat.vertical.pixels()) CHECK(v == 0.0);

  Image ramp(1, 3, 1, std::vector<double>{0.0, 0.5, 1.0});
  const GradientPair g = spatial_gradient(ramp);
  CHECK(g.horizontal.at(0, 0, 0) == 0.5);
  CHECK(g.horizontal.at(0, 1, 0) == 0.5);
  CHECK(g.horizontal.at(0, 2, 0) == 0.0);

  // Vertical stripes of width 2.
  Image stripes(4, 8, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) stripes.at(y, x, 0) = (x / 2) % 2 ? 1.0 : 0.0;
  const GradientPair s = spatial_gradient(stripes);
  for (double v : s.vertical.pixels()) CHECK(v == 0.0);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 8; ++x) {
      const double expect = x + 1 < 8 ? stripes.at(y, x + 1, 0) - stripes.at(y, x, 0) : 0.0;
      CHECK(s.horizontal.at(y, x, 0) == expect);
    }
  }
  CHECK(s.horizontal.at(0, 1, 0) == 1.0);

  // Linearity.
  const Image a = random_image(6, 7, 3, 1), b = random_image(6, 7, 3, 2);
  Image mix(6, 7, 3);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.pixels()[i] = 0.3 * a.pixels()[i] + 0.6 * b.pixels()[i];
  const GradientPair ga = spatial_gradient(a), gb = spatial_gradient(b), gm = spatial_gradient(mix);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    CHECK(gm.horizontal.pixels()[i] ==
          doctest::Approx(0.3 * ga.horizontal.pixels()[i] + 0.6 * gb.horizontal.pixels()[i]));
    CHECK(gm.vertical.pixels()[i] ==
          doctest::Approx(0.3 * ga.vertical.pixels()[i] + 0.6 * gb.vertical.pixels()[i]));
  }
}

TEST_CASE("gaussian kernel geometry") {
  for (double sigma : {0.5, 1.5, 5.0, 9.0, 15.0}) {
    const auto taps = gaussian_taps(sigma);
    CHECK(taps.size() % 2 == 1);
    CHECK(static_cast<double>(taps.size()) >= 6.0 * sigma + 1.0);
    CHECK(static_cast<double>(taps.size()) < 6.0 * sigma + 3.0);
    double total = 0.0;
    for (double t : taps) total += t;
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  CHECK(gaussian_taps(5.0).size() == 31);
  CHECK(gaussian_taps(15.0).size() == 91);
  CHECK_THROWS_AS(gaussian_taps(0.0), InvalidArgument);
  CHECK_THROWS_AS(gaussian_blur(Image(3, 3, 1, 0.5), -1.0), InvalidArgument);
}

TEST_CASE("gaussian_blur: constants, impulse response, mean, shift covariance") {
  for (double sigma : {1.0, 5.0, 15.0}) {
    const Image out = gaussian_blur(Image(20, 13, 3, 0.37), sigma);
    for (double v : out.pixels()) CHECK(std::abs(v - 0.37) < 1e-6);
  }

  Image impulse(31, 31, 1, 0.0);
  impulse.at(15, 15, 0) = 1.0;
  const Image resp = gaussian_blur(impulse, 5.0);
  // Brute-force 2-D kernel: exp(-(dx^2+dy^2)/(2 sigma^2)) normalised over the 31x31 support.
  double total = 0.0;
  for (int y = -15; y <= 15; ++y)
    for (int x = -15; x <= 15; ++x) total += std::exp(-(x * x + y * y) / 50.0);
  for (int y = 0; y < 31; ++y) {
    for (int x = 0; x < 31; ++x) {
      const double k = std::exp(-((x - 15) * (x - 15) + (y - 15) * (y - 15)) / 50.0) / total;
      CHECK(std::abs(resp.at(y, x, 0) - k) < 1e-6);
    }
  }

  const Image img = random_image(40, 37, 3, 77);
  for (double sigma : {5.0, 9.0, 15.0}) {
    CHECK(std::abs(gaussian_blur(img, sigma).mean() - img.mean()) < 1e-5);
  }

  // Shifting the input shifts the output, away from the borders.
  const Image big = random_image(60, 60, 1, 5);
  const Image shifted = crop(big, 3, 2, 57, 58);
  const Image b1 = gaussian_blur(big, 2.0), b2 = gaussian_blur(shifted, 2.0);
  for (int y = 15; y < 40; ++y) {
    for (int x = 15; x < 40; ++x) CHECK(std::abs(b1.at(y + 3, x + 2, 0) - b2.at(y, x, 0)) < 1e-6);
  }
}

TEST_CASE("image I/O round trip and error classes") {
  const fs::path dir = temp_dir();
  const Image half(7, 5, 3, 0.5);
  save_image(half, dir / "half.png");
  const Image back = load_image(dir / "half.png");
  REQUIRE(back.height() == 7);
  REQUIRE(back.width() == 5);
  REQUIRE(back.channels() == 3);
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(std::abs(back.pixels()[i] - 0.5) <= 1.0 / 255.0);

  const Image rnd = random_image(9, 11, 3, 3);
  save_image(rnd, dir / "rnd16.png", 16);
  const Image r16 = load_image(dir / "rnd16.png");
  CHECK(r16.in_unit_range());
  for (std::size_t i = 0; i < rnd.size(); ++i) CHECK(std::abs(r16.pixels()[i] - rnd.pixels()[i]) <= 0.5 / 65535.0 + 1e-12);

  const Image gray = random_image(4, 4, 1, 8);
  save_image(gray, dir / "gray.png");
  CHECK(load_image(dir / "gray.png").channels() == 1);

  CHECK_THROWS_AS(load_image(dir / "does_not_exist.png"), UnreadableFileError);
  {
    std::ofstream(dir / "text.png") << "definitely not an image";
  }
  CHECK_THROWS_AS(load_image(dir / "text.png"), UnsupportedFormatError);

  // Truncate a valid PNG.
  const auto size = fs::file_size(dir / "rnd16.png");
  fs::copy_file(dir / "rnd16.png", dir / "trunc.png", fs::copy_options::overwrite_existing);
  fs::resize_file(dir / "trunc.png", size / 2);
  CHECK_THROWS_AS(load_image(dir / "trunc.png"), CorruptFileError);

  // A JPEG header followed by garbage.
  {
    std::ofstream f(dir / "bad.jpg", std::ios::binary);
    const unsigned char hdr[] = {0xFF, 0xD8, 0xFF, 0xE0, 0x00, 0x10, 'J', 'F', 'I', 'F', 0x00};
    f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  }
  CHECK_THROWS_AS(load_image(dir / "bad.jpg"), CorruptFileError);
}

TEST_CASE("read observers see every load") {
  const fs::path dir = temp_dir();
  save_image(Image(2, 2, 1, 0.1), dir / "seen.png");
  std::vector<fs::path> seen;
  {
    ScopedReadObserver obs([&](const fs::path& p) { seen.push_back(p); });
    (void)load_image(dir / "seen.png");
  }
  (void)load_image(dir / "seen.png");
  REQUIRE(seen.size() == 1);
  CHECK(seen[0] == dir / "seen.png");
}
