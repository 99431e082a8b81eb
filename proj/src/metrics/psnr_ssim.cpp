#include <cmath>

#include "hep/error.hpp"
#include "hep/metrics.hpp"
#include "hep/ssim.hpp"

namespace hep::metrics {
namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
    throw ShapeMismatch(std::string(what) + ": images differ in shape");
  }
  if (a.empty()) throw InvalidArgument(std::string(what) + ": empty image");
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels()[i] - b.pixels()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  NoGradGuard no_grad;
  return ssim_index(Var::constant(a.to_tensor()), Var::constant(b.to_tensor())).item();
}

}  // namespace hep::metrics
