#pragma once

#include "hep/autograd.hpp"

namespace hep {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;  // (K1 * data range)^2 with range 1
  double c2 = 0.03 * 0.03;
};

// Mean local SSIM over every channel and sample, Gaussian window, no padding.
// Differentiable in both arguments. Throws ShapeMismatch when the inputs
// differ or are smaller than the window.
Var ssim_index(const Var& x, const Var& y, const SsimParams& p = {});

}  // namespace hep
