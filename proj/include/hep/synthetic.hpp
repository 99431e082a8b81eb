#pragma once

// Procedural stand-ins for natural photographs: dead-leaves scenes (occluding
// textured discs with a power-law radius distribution) and low-light pairs
// derived from them. Deterministic in the seed.

#include <cstdint>

#include "hep/imaging.hpp"

namespace hep::synthetic {

Image dead_leaves(int height, int width, std::uint64_t seed, int channels = 3);

struct LowLightParams {
  double exposure = 0.12;  // linear gain after the gamma drop
  double gamma = 1.8;
  double noise_sigma = 0.02;
};

// Darkened, noisy, 8-bit quantized copy of `bright`.
Image darken(const Image& bright, std::uint64_t seed, const LowLightParams& p = {});

struct Pair {
  Image low;
  Image high;
};

Pair low_light_pair(int height, int width, std::uint64_t seed, const LowLightParams& p = {});

// Additive Gaussian noise, clamped to [0,1].
Image add_noise(const Image& img, double sigma, std::uint64_t seed);

}  // namespace hep::synthetic
