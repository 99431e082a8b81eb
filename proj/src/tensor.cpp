#include "hep/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "hep/error.hpp"

namespace hep {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeMismatch("tensor data size " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.str());
  }
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
  Tensor t(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data_) v = dist(rng);
  return t;
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data_) v = dist(rng);
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeMismatch("item() on tensor of shape " + shape_.str());
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != data_.size()) {
    throw ShapeMismatch("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

Tensor Tensor::sample(int n) const {
  Shape s = shape_;
  s.n = 1;
  const std::size_t stride = s.numel();
  std::vector<double> v(data_.begin() + static_cast<std::ptrdiff_t>(n * stride),
                        data_.begin() + static_cast<std::ptrdiff_t>((n + 1) * stride));
  return Tensor(s, std::move(v));
}

double Tensor::sum() const {
  double acc = 0.0;
  for (double v : data_) acc += v;
  return acc;
}

double Tensor::mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(size()); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw InvalidArgument("stack of zero tensors");
  Shape s = items.front().shape();
  s.n = 0;
  for (const Tensor& t : items) {
    const Shape& ts = t.shape();
    if (ts.c != s.c || ts.h != s.h || ts.w != s.w) throw ShapeMismatch("stack: mismatched item shapes");
    s.n += ts.n;
  }
  std::vector<double> v;
  v.reserve(s.numel());
  for (const Tensor& t : items) v.insert(v.end(), t.values().begin(), t.values().end());
  return Tensor(s, std::move(v));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) throw ShapeMismatch("max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::uint64_t checksum(const Tensor& t, std::uint64_t seed) {
  std::uint64_t h = seed;
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
  const std::size_t n = t.size() * sizeof(double);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace hep
