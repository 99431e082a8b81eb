#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hep/autograd.hpp"

namespace hep::nn {

// Ordered, named collection of trainable leaves owned by one network.
class ParameterSet {
 public:
  // Fan-in scaled normal init (std = sqrt(2 / fan_in)), as used for ReLU nets.
  Var& add_weight(const std::string& name, Shape shape, int fan_in, std::mt19937_64& rng);
  Var& add_zeros(const std::string& name, Shape shape);
  Var& add(const std::string& name, Tensor value);

  std::vector<std::pair<std::string, Var>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  Var* find(const std::string& name);

  std::size_t count() const;  // total scalar parameters
  std::uint64_t checksum() const;
  // Names and shapes only; used as the architecture fingerprint.
  std::uint64_t layout_hash() const;
  void zero_grad();

  std::vector<std::pair<std::string, Tensor>> snapshot() const;
  // Copies values in by name; throws CheckpointMismatchError on any
  // missing name or shape difference.
  void restore(const std::vector<std::pair<std::string, Tensor>>& values);

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

struct Conv2d {
  Var weight;
  Var bias;
  int stride = 1;
  int pad = 0;

  static Conv2d create(ParameterSet& params, const std::string& name, int in_ch, int out_ch,
                       int kernel, int stride, int pad, std::mt19937_64& rng);
  Var operator()(const Var& x) const { return ops::conv2d(x, weight, bias, stride, pad); }
};

struct ConvTranspose2d {
  Var weight;
  Var bias;
  int stride = 2;
  int pad = 1;
  int output_pad = 1;

  static ConvTranspose2d create(ParameterSet& params, const std::string& name, int in_ch,
                                int out_ch, int kernel, int stride, int pad, int output_pad,
                                std::mt19937_64& rng);
  Var operator()(const Var& x) const {
    return ops::conv_transpose2d(x, weight, bias, stride, pad, output_pad);
  }
};

struct Linear {
  Var weight;
  Var bias;

  static Linear create(ParameterSet& params, const std::string& name, int in_features,
                       int out_features, std::mt19937_64& rng);
  Var operator()(const Var& x) const { return ops::linear(x, weight, bias); }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Adam with L2 weight decay added to the gradient. Moments are keyed by the
// parameter order of the set it was built for.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  long long step_count() const { return steps_; }

  // Applies one update from the accumulated grads; params without grads are skipped.
  void step();

  std::vector<std::pair<std::string, Tensor>> state() const;
  void load_state(const std::vector<std::pair<std::string, Tensor>>& state, long long steps);

 private:
  ParameterSet* params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long long steps_ = 0;
};

}  // namespace hep::nn
