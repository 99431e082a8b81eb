#include "hep/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "hep/autograd.hpp"
#include "hep/error.hpp"

namespace hep {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) throw InvalidArgument("negative image dimension");
  pixels_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Image::Image(int height, int width, int channels, std::vector<double> planar)
    : height_(height), width_(width), channels_(channels), pixels_(std::move(planar)) {
  if (pixels_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeMismatch("image buffer size does not match dimensions");
  }
}

Image Image::from_tensor(const Tensor& t, int n) {
  const Shape s = t.shape();
  if (n < 0 || n >= s.n) throw InvalidArgument("from_tensor: sample index out of range");
  const double* begin = t.plane(n, 0);
  return Image(s.h, s.w, s.c, std::vector<double>(begin, begin + s.c * s.plane()));
}

Tensor Image::to_tensor() const { return Tensor(Shape{1, channels_, height_, width_}, pixels_); }

std::span<double> Image::channel(int c) {
  return std::span<double>(pixels_).subspan(static_cast<std::size_t>(c) * height_ * width_,
                                            static_cast<std::size_t>(height_) * width_);
}

std::span<const double> Image::channel(int c) const {
  return std::span<const double>(pixels_).subspan(static_cast<std::size_t>(c) * height_ * width_,
                                                  static_cast<std::size_t>(height_) * width_);
}

bool Image::in_unit_range() const {
  return std::all_of(pixels_.begin(), pixels_.end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

double Image::mean() const {
  if (pixels_.empty()) return 0.0;
  double acc = 0.0;
  for (double v : pixels_) acc += v;
  return acc / static_cast<double>(pixels_.size());
}

void require_valid(const Image& img, const char* what) {
  if (img.empty() || img.height() < 1 || img.width() < 1) {
    throw InvalidArgument(std::string(what) + ": empty image");
  }
  for (double v : img.pixels()) {
    if (std::isnan(v)) throw InvalidArgument(std::string(what) + ": NaN pixel");
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidArgument(std::string(what) + ": pixel outside [0, 1]");
    }
  }
}

int histogram_bin(double v) {
  const long b = std::lround(v * 255.0);
  return static_cast<int>(std::clamp(b, 0L, 255L));
}

Image hist_equalize(const Image& img, HistogramMode mode) {
  require_valid(img, "hist_equalize");
  if (img.channels() != 1 && img.channels() != 3) {
    throw InvalidArgument("hist_equalize: expects 1 or 3 channels");
  }
  Image out(img.height(), img.width(), img.channels());
  const auto equalize = [](std::span<const double> in_plane, const std::array<double, 256>& cdf,
                           std::span<double> out_plane) {
    for (std::size_t i = 0; i < in_plane.size(); ++i) out_plane[i] = cdf[histogram_bin(in_plane[i])];
  };
  const auto build_cdf = [](const std::array<long long, 256>& hist, long long total) {
    std::array<double, 256> cdf{};
    long long running = 0;
    for (int b = 0; b < kHistogramBins; ++b) {
      running += hist[b];
      cdf[b] = static_cast<double>(running) / static_cast<double>(total);
    }
    return cdf;
  };

  if (mode == HistogramMode::PerChannel) {
    for (int c = 0; c < img.channels(); ++c) {
      std::array<long long, 256> hist{};
      for (double v : img.channel(c)) ++hist[histogram_bin(v)];
      const auto cdf = build_cdf(hist, static_cast<long long>(img.channel(c).size()));
      equalize(img.channel(c), cdf, out.channel(c));
    }
  } else {
    std::array<long long, 256> hist{};
    for (double v : img.pixels()) ++hist[histogram_bin(v)];
    const auto cdf = build_cdf(hist, static_cast<long long>(img.size()));
    for (int c = 0; c < img.channels(); ++c) equalize(img.channel(c), cdf, out.channel(c));
  }
  return out;
}

Image bright_channel(const Image& img) {
  if (img.channels() != 3) throw InvalidArgument("bright_channel: expects a 3-channel image");
  Image out(img.height(), img.width(), 1);
  auto r = img.channel(0), g = img.channel(1), b = img.channel(2);
  auto o = out.channel(0);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::max({r[i], g[i], b[i]});
  return out;
}

GradientPair spatial_gradient(const Image& img) {
  if (img.empty()) throw InvalidArgument("spatial_gradient: empty image");
  NoGradGuard guard;
  const Var x = Var::constant(img.to_tensor());
  return GradientPair{Image::from_tensor(ops::diff_horizontal(x).value()),
                      Image::from_tensor(ops::diff_vertical(x).value())};
}

std::vector<double> gaussian_taps(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("gaussian sigma must be > 0");
  int len = static_cast<int>(std::ceil(6.0 * sigma + 1.0));
  if (len % 2 == 0) ++len;
  const int r = len / 2;
  std::vector<double> taps(len);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    taps[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += taps[i + r];
  }
  for (double& t : taps) t /= total;
  return taps;
}

Image gaussian_blur(const Image& img, double sigma) {
  const auto taps = gaussian_taps(sigma);
  if (img.empty()) throw InvalidArgument("gaussian_blur: empty image");
  NoGradGuard guard;
  return Image::from_tensor(ops::separable_filter_reflect(Var::constant(img.to_tensor()), taps).value());
}

Image crop(const Image& img, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > img.height() || left + w > img.width()) {
    throw InvalidArgument("crop " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                          std::to_string(top) + "," + std::to_string(left) +
                          ") does not fit image " + std::to_string(img.height()) + "x" +
                          std::to_string(img.width()));
  }
  Image out(h, w, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(y, x, c) = img.at(top + y, left + x, c);
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height(), img.width(), img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
    }
  }
  return out;
}

Image pad_reflect_to(const Image& img, int h, int w) {
  if (h < img.height() || w < img.width()) throw InvalidArgument("pad_reflect_to: target smaller");
  const auto reflect = [](int i, int n) {
    const int period = 2 * n;
    int m = i % period;
    return m < n ? m : period - 1 - m;
  };
  Image out(h, w, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out.at(y, x, c) = img.at(reflect(y, img.height()), reflect(x, img.width()), c);
      }
    }
  }
  return out;
}

Image concat_channels(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeMismatch("concat_channels: spatial size differs");
  }
  std::vector<double> px(a.pixels().begin(), a.pixels().end());
  px.insert(px.end(), b.pixels().begin(), b.pixels().end());
  return Image(a.height(), a.width(), a.channels() + b.channels(), std::move(px));
}

}  // namespace hep
