#include "hep/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "hep/error.hpp"
#include "hep/simd/kernels.hpp"

namespace hep {
namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw ShapeMismatch(std::string(op) + ": shape " + a.shape().str() + " vs " +
                        b.shape().str());
  }
}

// Applies f elementwise; backward multiplies upstream by df(x, y).
template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return Var::make(std::move(out), {a}, [df](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * df(in.value[i], self.value[i]);
    }
  });
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  if (!requires_grad) return;
  if (grad.empty()) {
    grad = g;
    return;
  }
  simd::active().axpy(1.0, g.data(), grad.data(), grad.size());
}

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

Var Var::make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var& v) { return v.defined() && v.requires_grad(); });
  if (!needs) return out;
  out.node_->requires_grad = true;
  out.node_->inputs.reserve(inputs.size());
  for (Var& v : inputs) {
    // Undefined inputs (e.g. a missing bias) become inert constants.
    out.node_->inputs.push_back(v.defined() ? v.node_ : std::make_shared<Node>());
  }
  out.node_->backward = std::move(backward);
  return out;
}

void Var::backward() const {
  if (value().size() != 1) throw ShapeMismatch("backward() without seed needs a scalar");
  backward(Tensor(value().shape(), 1.0));
}

void Var::backward(const Tensor& seed) const {
  if (!requires_grad()) return;
  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && !visited.contains(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Interior nodes are done; release their buffers and edges.
  for (Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->inputs.clear();
      n->grad = Tensor();
    }
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace ops {

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  simd::active().axpy(1.0, b.value().data(), out.data(), out.size());
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad);
    self.inputs[1]->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  simd::active().axpy(-1.0, b.value().data(), out.data(), out.size());
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) {
      Tensor& g = self.inputs[1]->grad_buffer();
      simd::active().axpy(-1.0, self.grad.data(), g.data(), g.size());
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  simd::active().mul(a.value().data(), b.value().data(), out.data(), out.size());
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      const Tensor& other = self.inputs[1 - k]->value;
      Tensor& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    const Tensor& bv = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      Tensor& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / bv[i];
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] / bv[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var mul_channel_broadcast(const Var& a, const Var& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sb.c != 1 || sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeMismatch("mul_channel_broadcast: " + sa.str() + " vs " + sb.str());
  }
  Tensor out(sa);
  const std::size_t plane = sa.plane();
  for (int n = 0; n < sa.n; ++n) {
    const double* bp = b.value().plane(n, 0);
    for (int c = 0; c < sa.c; ++c) {
      simd::active().mul(a.value().plane(n, c), bp, out.plane(n, c), plane);
    }
  }
  return Var::make(std::move(out), {a, b}, [plane](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const Shape s = self.value.shape();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* g = self.grad.data() + self.grad.index(n, c, 0, 0);
        if (na.requires_grad) {
          double* ga = na.grad_buffer().plane(n, c);
          const double* bp = nb.value.plane(n, 0);
          for (std::size_t i = 0; i < plane; ++i) ga[i] += g[i] * bp[i];
        }
        if (nb.requires_grad) {
          double* gb = nb.grad_buffer().plane(n, 0);
          const double* ap = na.value.plane(n, c);
          for (std::size_t i = 0; i < plane; ++i) gb[i] += g[i] * ap[i];
        }
      }
    }
  });
}

Var channel_affine(const Var& a, std::span<const double> scale_in,
                   std::span<const double> shift_in) {
  const Shape s = a.shape();
  if (scale_in.size() != static_cast<std::size_t>(s.c) ||
      shift_in.size() != static_cast<std::size_t>(s.c)) {
    throw ShapeMismatch("channel_affine: coefficient count does not match channels");
  }
  std::vector<double> sc(scale_in.begin(), scale_in.end());
  Tensor out(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* x = a.value().plane(n, c);
      double* y = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) y[i] = x[i] * sc[c] + shift_in[c];
    }
  }
  return Var::make(std::move(out), {a}, [sc, plane](Node& self) {
    Node& in = *self.inputs[0];
    const Shape s = self.value.shape();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        simd::active().axpy(sc[c], self.grad.data() + self.grad.index(n, c, 0, 0),
                            in.grad_buffer().plane(n, c), plane);
      }
    }
  });
}

Var sum(const Var& a) {
  return Var::make(Tensor::scalar(a.value().sum()), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
  });
}

Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a.value().size());
  return Var::make(Tensor::scalar(a.value().sum() * inv), {a}, [inv](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const double up = self.grad[0] * inv;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
  });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  if (terms.size() != weights.size()) throw InvalidArgument("weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().size() != 1) throw ShapeMismatch("weighted_sum expects scalars");
    total += weights[i] * terms[i].item();
  }
  std::vector<double> w(weights.begin(), weights.end());
  return Var::make(Tensor::scalar(total), std::vector<Var>(terms.begin(), terms.end()),
                   [w](Node& self) {
                     for (std::size_t i = 0; i < w.size(); ++i) {
                       Node& in = *self.inputs[i];
                       if (in.requires_grad) in.grad_buffer()[0] += w[i] * self.grad[0];
                     }
                   });
}

Var channel_max(const Var& a) {
  const Shape s = a.shape();
  Shape os = s;
  os.c = 1;
  Tensor out(os);
  std::vector<int> argmax(os.numel(), 0);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double best = a.value().plane(n, 0)[i];
      int arg = 0;
      for (int c = 1; c < s.c; ++c) {
        const double v = a.value().plane(n, c)[i];
        if (v > best) {
          best = v;
          arg = c;
        }
      }
      out.plane(n, 0)[i] = best;
      argmax[n * plane + i] = arg;
    }
  }
  return Var::make(std::move(out), {a}, [argmax = std::move(argmax), plane](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const int batch = self.value.shape().n;
    for (int n = 0; n < batch; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        g.plane(n, argmax[n * plane + i])[i] += self.grad.plane(n, 0)[i];
      }
    }
  });
}

Var spatial_mean(const Var& a) {
  const Shape s = a.shape();
  Tensor out(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  const double inv = 1.0 / static_cast<double>(plane);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = a.value().plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      out.at(n, c, 0, 0) = acc * inv;
    }
  }
  return Var::make(std::move(out), {a}, [plane, inv](Node& self) {
    Node& in = *self.inputs[0];
    const Shape s = in.value.shape();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double up = self.grad.at(n, c, 0, 0) * inv;
        double* g = in.grad_buffer().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) g[i] += up;
      }
    }
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels of nothing");
  Shape s = parts.front().shape();
  s.c = 0;
  for (const Var& p : parts) {
    const Shape ps = p.shape();
    if (ps.n != s.n || ps.h != s.h || ps.w != s.w) {
      throw ShapeMismatch("concat_channels: " + ps.str() + " vs " + parts.front().shape().str());
    }
    s.c += ps.c;
  }
  Tensor out(s);
  const std::size_t plane = s.plane();
  std::vector<int> offsets;
  for (int n = 0; n < s.n; ++n) {
    int c0 = 0;
    for (const Var& p : parts) {
      const int pc = p.shape().c;
      std::copy_n(p.value().plane(n, 0), plane * pc, out.plane(n, c0));
      c0 += pc;
    }
  }
  int c0 = 0;
  for (const Var& p : parts) {
    offsets.push_back(c0);
    c0 += p.shape().c;
  }
  return Var::make(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                   [offsets, plane](Node& self) {
                     const int batch = self.value.shape().n;
                     for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                       Node& in = *self.inputs[k];
                       if (!in.requires_grad) continue;
                       const int pc = in.value.shape().c;
                       for (int n = 0; n < batch; ++n) {
                         simd::active().axpy(1.0, self.grad.plane(n, offsets[k]),
                                             in.grad_buffer().plane(n, 0), plane * pc);
                       }
                     }
                   });
}

Var slice_channels(const Var& a, int begin, int end) {
  const Shape s = a.shape();
  if (begin < 0 || end > s.c || begin >= end) throw InvalidArgument("slice_channels: bad range");
  Shape os = s;
  os.c = end - begin;
  Tensor out(os);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(a.value().plane(n, begin), plane * os.c, out.plane(n, 0));
  }
  return Var::make(std::move(out), {a}, [begin, plane](Node& self) {
    Node& in = *self.inputs[0];
    const Shape os = self.value.shape();
    for (int n = 0; n < os.n; ++n) {
      simd::active().axpy(1.0, self.grad.plane(n, 0), in.grad_buffer().plane(n, begin),
                          plane * os.c);
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(shape);
  return Var::make(std::move(out), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    in.accumulate(self.grad.reshaped(in.value.shape()));
  });
}

Var broadcast_spatial(const Var& a, int h, int w) {
  const Shape s = a.shape();
  if (s.h != 1 || s.w != 1) throw ShapeMismatch("broadcast_spatial expects (N, D, 1, 1)");
  Tensor out(Shape{s.n, s.c, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) std::fill_n(out.plane(n, c), plane, a.value().at(n, c, 0, 0));
  }
  return Var::make(std::move(out), {a}, [plane](Node& self) {
    Node& in = *self.inputs[0];
    const Shape s = in.value.shape();
    Tensor& g = in.grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* up = self.grad.plane(n, c);
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += up[i];
        g.at(n, c, 0, 0) += acc;
      }
    }
  });
}

}  // namespace ops
}  // namespace hep
