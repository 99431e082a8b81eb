#pragma once

// Deterministic image primitives. Images are H x W x C real arrays stored
// planar (one contiguous H*W plane per channel) so they convert to network
// tensors without reshuffling.

#include <span>
#include <vector>

#include "hep/tensor.hpp"

namespace hep {

class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);
  Image(int height, int width, int channels, std::vector<double> planar);

  // Sample `n` of an (N, C, H, W) tensor.
  static Image from_tensor(const Tensor& t, int n = 0);
  Tensor to_tensor() const;  // (1, C, H, W)

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return pixels_.empty(); }
  std::size_t size() const { return pixels_.size(); }

  double& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }
  std::span<double> channel(int c);
  std::span<const double> channel(int c) const;
  std::span<const double> pixels() const { return pixels_; }
  std::span<double> pixels() { return pixels_; }

  // Every element finite and inside [0, 1].
  bool in_unit_range() const;
  double mean() const;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> pixels_;
};

struct GradientPair {
  Image horizontal;  // I(y, x+1) - I(y, x), zero in the last column
  Image vertical;    // I(y+1, x) - I(y, x), zero in the last row
};

struct BlurKernel {
  double sigma;
  double weight;
};

struct BlurBank {
  std::vector<BlurKernel> kernels{{5.0, 0.25}, {9.0, 0.5}, {15.0, 1.0}};
};

enum class HistogramMode {
  PerChannel,  // one 256-bin histogram per channel
  Joint,       // a single histogram pooled over all channels
};

constexpr int kHistogramBins = 256;

// Histogram bin of a [0,1] value: round(v * 255).
int histogram_bin(double v);

Image hist_equalize(const Image& img, HistogramMode mode = HistogramMode::PerChannel);
Image bright_channel(const Image& img);
GradientPair spatial_gradient(const Image& img);

// Normalized 1-D Gaussian taps; length is the smallest odd integer >= 6*sigma + 1.
std::vector<double> gaussian_taps(double sigma);
// Separable Gaussian blur with half-sample symmetric (reflective) borders.
Image gaussian_blur(const Image& img, double sigma);

// Crop of size h x w at (top, left); throws if it does not fit.
Image crop(const Image& img, int top, int left, int h, int w);
Image flip_horizontal(const Image& img);
// Symmetric padding on the bottom/right up to the given size.
Image pad_reflect_to(const Image& img, int h, int w);
// Concatenate channels (e.g. RGB + bright channel).
Image concat_channels(const Image& a, const Image& b);

// Throws InvalidArgument when the image is empty, non-finite, or outside [0,1].
void require_valid(const Image& img, const char* what);

}  // namespace hep
