#pragma once

// Dense NCHW float64 tensor. Every tensor in the toolkit is 4-D; vectors are
// stored as (N, F, 1, 1) and scalars as (1, 1, 1, 1).

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hep {

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, v); }
  // Standard normal entries from the given engine.
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);
  static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  double* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const double* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  double item() const;
  void fill(double v);
  Tensor reshaped(Shape shape) const;
  // Sample `n` of a batch as a (1, C, H, W) tensor.
  Tensor sample(int n) const;

  double sum() const;
  double mean() const;
  bool all_finite() const;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

// Stacks (1, C, H, W) tensors along N.
Tensor stack(std::span<const Tensor> items);

double max_abs_diff(const Tensor& a, const Tensor& b);

// FNV-1a over the raw bytes; used for parameter checksums.
std::uint64_t checksum(const Tensor& t, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace hep
