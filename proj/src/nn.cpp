#include "hep/nn.hpp"

#include <cmath>

#include "hep/error.hpp"
#include "hep/simd/kernels.hpp"

namespace hep::nn {
namespace {

std::uint64_t fnv(std::uint64_t h, const void* data, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

Var& ParameterSet::add_weight(const std::string& name, Shape shape, int fan_in,
                              std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  return add(name, Tensor::randn(shape, rng, stddev));
}

Var& ParameterSet::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor(shape, 0.0));
}

Var& ParameterSet::add(const std::string& name, Tensor value) {
  if (find(name) != nullptr) throw InvalidArgument("duplicate parameter name " + name);
  entries_.emplace_back(name, Var::parameter(std::move(value)));
  return entries_.back().second;
}

Var* ParameterSet::find(const std::string& name) {
  for (auto& [n, v] : entries_) {
    if (n == name) return &v;
  }
  return nullptr;
}

std::size_t ParameterSet::count() const {
  std::size_t total = 0;
  for (const auto& [n, v] : entries_) total += v.value().size();
  return total;
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [n, v] : entries_) h = hep::checksum(v.value(), h);
  return h;
}

std::uint64_t ParameterSet::layout_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [n, v] : entries_) {
    h = fnv(h, n.data(), n.size());
    const Shape s = v.shape();
    const int dims[4] = {s.n, s.c, s.h, s.w};
    h = fnv(h, dims, sizeof(dims));
  }
  return h;
}

void ParameterSet::zero_grad() {
  for (auto& [n, v] : entries_) v.zero_grad();
}

std::vector<std::pair<std::string, Tensor>> ParameterSet::snapshot() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(entries_.size());
  for (const auto& [n, v] : entries_) out.emplace_back(n, v.value());
  return out;
}

void ParameterSet::restore(const std::vector<std::pair<std::string, Tensor>>& values) {
  for (auto& [name, var] : entries_) {
    const Tensor* found = nullptr;
    for (const auto& [n, t] : values) {
      if (n == name) {
        found = &t;
        break;
      }
    }
    if (found == nullptr) throw CheckpointMismatchError("checkpoint lacks parameter " + name);
    if (!(found->shape() == var.shape())) {
      throw CheckpointMismatchError("parameter " + name + " has shape " + found->shape().str() +
                                    ", expected " + var.shape().str());
    }
    var.mutable_value() = *found;
  }
}

Conv2d Conv2d::create(ParameterSet& params, const std::string& name, int in_ch, int out_ch,
                      int kernel, int stride, int pad, std::mt19937_64& rng) {
  Conv2d c;
  c.weight = params.add_weight(name + ".weight", Shape{out_ch, in_ch, kernel, kernel},
                               in_ch * kernel * kernel, rng);
  c.bias = params.add_zeros(name + ".bias", Shape{1, out_ch, 1, 1});
  c.stride = stride;
  c.pad = pad;
  return c;
}

ConvTranspose2d ConvTranspose2d::create(ParameterSet& params, const std::string& name, int in_ch,
                                        int out_ch, int kernel, int stride, int pad,
                                        int output_pad, std::mt19937_64& rng) {
  ConvTranspose2d c;
  // Each output pixel sees about in_ch * (kernel / stride)^2 inputs.
  const int fan_in = std::max(1, in_ch * kernel * kernel / (stride * stride));
  c.weight =
      params.add_weight(name + ".weight", Shape{in_ch, out_ch, kernel, kernel}, fan_in, rng);
  c.bias = params.add_zeros(name + ".bias", Shape{1, out_ch, 1, 1});
  c.stride = stride;
  c.pad = pad;
  c.output_pad = output_pad;
  return c;
}

Linear Linear::create(ParameterSet& params, const std::string& name, int in_features,
                      int out_features, std::mt19937_64& rng) {
  Linear l;
  l.weight = params.add_weight(name + ".weight", Shape{out_features, in_features, 1, 1},
                               in_features, rng);
  l.bias = params.add_zeros(name + ".bias", Shape{1, out_features, 1, 1});
  return l;
}

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(&params), config_(config) {
  for (const auto& [n, v] : params.entries()) {
    m_.emplace_back(v.shape(), 0.0);
    v_.emplace_back(v.shape(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const simd::AdamStep s{config_.lr,
                         config_.beta1,
                         config_.beta2,
                         config_.eps,
                         config_.weight_decay,
                         1.0 - std::pow(config_.beta1, t),
                         1.0 - std::pow(config_.beta2, t)};
  auto& entries = params_->entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Var& p = entries[i].second;
    if (p.grad().empty()) continue;
    simd::active().adam(p.mutable_value().data(), p.grad().data(), m_[i].data(), v_[i].data(),
                        p.value().size(), s);
  }
}

std::vector<std::pair<std::string, Tensor>> Adam::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  const auto& entries = params_->entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out.emplace_back(entries[i].first + ".adam_m", m_[i]);
    out.emplace_back(entries[i].first + ".adam_v", v_[i]);
  }
  return out;
}

void Adam::load_state(const std::vector<std::pair<std::string, Tensor>>& state, long long steps) {
  const auto& entries = params_->entries();
  auto lookup = [&](const std::string& key) -> const Tensor& {
    for (const auto& [n, t] : state) {
      if (n == key) return t;
    }
    throw CheckpointMismatchError("optimizer state lacks " + key);
  };
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Tensor& m = lookup(entries[i].first + ".adam_m");
    const Tensor& v = lookup(entries[i].first + ".adam_v");
    if (!(m.shape() == m_[i].shape()) || !(v.shape() == v_[i].shape())) {
      throw CheckpointMismatchError("optimizer state shape mismatch for " + entries[i].first);
    }
    m_[i] = m;
    v_[i] = v;
  }
  steps_ = steps;
}

}  // namespace hep::nn
