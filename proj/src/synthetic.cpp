#include "hep/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hep::synthetic {

Image dead_leaves(int height, int width, std::uint64_t seed, int channels) {
  Image img(height, width, channels, 0.5);
  std::vector<char> covered(static_cast<std::size_t>(height) * width, 0);
  std::size_t remaining = covered.size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double rmin = 2.0, rmax = 0.35 * std::max(height, width);
  // Front-to-back: a pixel keeps the first disc that lands on it.
  for (int leaf = 0; leaf < 4000 && remaining > 0; ++leaf) {
    // Radius density proportional to r^-3.
    const double a = 1 / (rmin * rmin), b = 1 / (rmax * rmax);
    const double r = 1 / std::sqrt(a - u(rng) * (a - b));
    const double cy = u(rng) * height, cx = u(rng) * width;
    double color[3];
    const double base = u(rng);
    for (int c = 0; c < 3; ++c) color[c] = std::clamp(base + 0.25 * (u(rng) - 0.5), 0.0, 1.0);
    const double freq = 0.05 + 0.4 * u(rng), phase = 6.283 * u(rng), angle = 3.1416 * u(rng);
    const double amp = 0.15 * u(rng);
    const int y0 = std::max(0, static_cast<int>(cy - r)), y1 = std::min(height - 1, static_cast<int>(cy + r));
    const int x0 = std::max(0, static_cast<int>(cx - r)), x1 = std::min(width - 1, static_cast<int>(cx + r));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        if (dy * dy + dx * dx > r * r) continue;
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        if (covered[i]) continue;
        covered[i] = 1;
        --remaining;
        const double t = amp * std::sin(freq * (dx * std::cos(angle) + dy * std::sin(angle)) + phase);
        for (int c = 0; c < channels; ++c) img.at(y, x, c) = std::clamp(color[c] + t, 0.0, 1.0);
      }
    }
  }
  // Sensor grain: exactly flat regions make local-contrast statistics degenerate.
  std::normal_distribution<double> grain(0.0, 1.5 / 255.0);
  for (double& v : img.pixels()) v = std::round(std::clamp(v + grain(rng), 0.0, 1.0) * 255.0) / 255.0;
  return img;
}

Image darken(const Image& bright, std::uint64_t seed, const LowLightParams& p) {
  Image out = bright;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> n(0.0, p.noise_sigma);
  for (double& v : out.pixels()) {
    const double d = p.exposure * std::pow(v, p.gamma) + n(rng);
    v = std::round(std::clamp(d, 0.0, 1.0) * 255.0) / 255.0;
  }
  return out;
}

Pair low_light_pair(int height, int width, std::uint64_t seed, const LowLightParams& p) {
  Image high = dead_leaves(height, width, seed);
  Image low = darken(high, seed, p);
  return {std::move(low), std::move(high)};
}

Image add_noise(const Image& img, double sigma, std::uint64_t seed) {
  Image out = img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (double& v : out.pixels()) v = std::clamp(v + n(rng), 0.0, 1.0);
  return out;
}

}  // namespace hep::synthetic
