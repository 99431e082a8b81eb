#include "hep/ssim.hpp"

#include <cmath>
#include <vector>

#include "hep/error.hpp"

namespace hep {

Var ssim_index(const Var& x, const Var& y, const SsimParams& p) {
  if (!(x.shape() == y.shape())) {
    throw ShapeMismatch("ssim: " + x.shape().str() + " vs " + y.shape().str());
  }
  if (x.shape().h < p.window || x.shape().w < p.window) {
    throw ShapeMismatch("ssim: image " + x.shape().str() + " smaller than the " +
                        std::to_string(p.window) + "x" + std::to_string(p.window) + " window");
  }
  std::vector<double> taps(p.window);
  double total = 0.0;
  const int r = p.window / 2;
  for (int i = 0; i < p.window; ++i) {
    taps[i] = std::exp(-0.5 * (i - r) * (i - r) / (p.sigma * p.sigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;

  using namespace ops;
  auto blur = [&](const Var& v) { return separable_filter_valid(v, taps); };
  const Var mx = blur(x);
  const Var my = blur(y);
  const Var mxx = mul(mx, mx);
  const Var myy = mul(my, my);
  const Var mxy = mul(mx, my);
  const Var sxx = sub(blur(mul(x, x)), mxx);
  const Var syy = sub(blur(mul(y, y)), myy);
  const Var sxy = sub(blur(mul(x, y)), mxy);
  const Var num = mul(add_scalar(scale(mxy, 2.0), p.c1), add_scalar(scale(sxy, 2.0), p.c2));
  const Var den = mul(add_scalar(add(mxx, myy), p.c1), add_scalar(add(sxx, syy), p.c2));
  return mean(div(num, den));
}

}  // namespace hep
