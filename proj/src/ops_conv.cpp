#include <algorithm>
#include <limits>

#include "hep/autograd.hpp"
#include "hep/error.hpp"
#include "hep/simd/kernels.hpp"

namespace hep::ops {
namespace {

struct Geometry {
  int channels;
  int in_h, in_w;    // padded-source image
  int kernel, stride, pad;
  int out_h, out_w;  // sliding-window grid
  std::size_t rows() const { return static_cast<std::size_t>(channels) * kernel * kernel; }
  std::size_t cols() const { return static_cast<std::size_t>(out_h) * out_w; }
};

void im2col(const double* img, const Geometry& g, double* col) {
  const std::size_t p = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    const double* plane = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        double* row = col + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * p;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
void col2im(const double* col, const Geometry& g, double* img) {
  const std::size_t p = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    double* plane = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const double* row =
            col + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * p;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.out_w;
          double* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

std::vector<double> transposed(const double* m, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = m[r * cols + c];
  }
  return t;
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate) {
  simd::active().gemm(m, n, k, a, k, b, n, c, n, accumulate);
}

void add_bias(Tensor& out, const Var& bias) {
  if (!bias.defined()) return;
  const Shape s = out.shape();
  if (bias.value().size() != static_cast<std::size_t>(s.c)) {
    throw ShapeMismatch("bias has " + std::to_string(bias.value().size()) + " entries for " +
                        std::to_string(s.c) + " channels");
  }
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double b = bias.value()[c];
      double* p = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
}

void bias_backward(Node& bias, const Tensor& grad) {
  if (!bias.requires_grad) return;
  const Shape s = grad.shape();
  Tensor& g = bias.grad_buffer();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = grad.plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      g[c] += acc;
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw ShapeMismatch("conv2d: input " + xs.str() + " weight " + ws.str());
  }
  if (stride < 1 || pad < 0) throw InvalidArgument("conv2d: bad stride/padding");
  const int k = ws.h;
  const int oh = (xs.h + 2 * pad - k) / stride + 1;
  const int ow = (xs.w + 2 * pad - k) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeMismatch("conv2d: input too small for kernel");
  const Geometry geo{xs.c, xs.h, xs.w, k, stride, pad, oh, ow};
  const int cout = ws.n;

  Tensor out(Shape{xs.n, cout, oh, ow});
  std::vector<double> col(geo.rows() * geo.cols());
  for (int n = 0; n < xs.n; ++n) {
    im2col(x.value().plane(n, 0), geo, col.data());
    gemm(cout, geo.cols(), geo.rows(), weight.value().data(), col.data(), out.plane(n, 0), false);
  }
  add_bias(out, bias);

  return Var::make(std::move(out), {x, weight, bias}, [geo, cout](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    const int batch = self.value.shape().n;
    std::vector<double> col(geo.rows() * geo.cols());
    std::vector<double> w_t;
    if (nx.requires_grad) w_t = transposed(nw.value.data(), cout, geo.rows());
    for (int n = 0; n < batch; ++n) {
      const double* dy = self.grad.plane(n, 0);
      if (nw.requires_grad) {
        im2col(nx.value.plane(n, 0), geo, col.data());
        const std::vector<double> col_t = transposed(col.data(), geo.rows(), geo.cols());
        gemm(cout, geo.rows(), geo.cols(), dy, col_t.data(), nw.grad_buffer().data(), true);
      }
      if (nx.requires_grad) {
        gemm(geo.rows(), geo.cols(), cout, w_t.data(), dy, col.data(), false);
        col2im(col.data(), geo, nx.grad_buffer().plane(n, 0));
      }
    }
    bias_backward(*self.inputs[2], self.grad);
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad,
                     int output_pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.n != xs.c || ws.h != ws.w) {
    throw ShapeMismatch("conv_transpose2d: input " + xs.str() + " weight " + ws.str());
  }
  if (stride < 1 || pad < 0 || output_pad < 0 || output_pad >= stride) {
    throw InvalidArgument("conv_transpose2d: bad stride/padding");
  }
  const int k = ws.h;
  const int cout = ws.c;
  const int oh = (xs.h - 1) * stride - 2 * pad + k + output_pad;
  const int ow = (xs.w - 1) * stride - 2 * pad + k + output_pad;
  if (oh <= 0 || ow <= 0) throw ShapeMismatch("conv_transpose2d: empty output");
  // The output plays the role of a conv input whose sliding grid is x's grid.
  const Geometry geo{cout, oh, ow, k, stride, pad, xs.h, xs.w};
  const int cin = xs.c;

  Tensor out(Shape{xs.n, cout, oh, ow});
  const std::vector<double> w_t = transposed(weight.value().data(), cin, geo.rows());
  std::vector<double> col(geo.rows() * geo.cols());
  for (int n = 0; n < xs.n; ++n) {
    gemm(geo.rows(), geo.cols(), cin, w_t.data(), x.value().plane(n, 0), col.data(), false);
    col2im(col.data(), geo, out.plane(n, 0));
  }
  add_bias(out, bias);

  return Var::make(std::move(out), {x, weight, bias}, [geo, cin](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    const int batch = self.value.shape().n;
    std::vector<double> col(geo.rows() * geo.cols());
    for (int n = 0; n < batch; ++n) {
      im2col(self.grad.plane(n, 0), geo, col.data());
      if (nx.requires_grad) {
        gemm(cin, geo.cols(), geo.rows(), nw.value.data(), col.data(),
             nx.grad_buffer().plane(n, 0), true);
      }
      if (nw.requires_grad) {
        const std::vector<double> col_t = transposed(col.data(), geo.rows(), geo.cols());
        gemm(cin, geo.rows(), geo.cols(), nx.value.plane(n, 0), col_t.data(),
             nw.grad_buffer().data(), true);
      }
    }
    bias_backward(*self.inputs[2], self.grad);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const std::size_t features = static_cast<std::size_t>(xs.c) * xs.h * xs.w;
  const std::size_t wf = static_cast<std::size_t>(ws.c) * ws.h * ws.w;
  if (features != wf) throw ShapeMismatch("linear: input " + xs.str() + " weight " + ws.str());
  const int outs = ws.n;
  Tensor out(Shape{xs.n, outs, 1, 1});
  const std::vector<double> w_t = transposed(weight.value().data(), outs, features);
  gemm(xs.n, outs, features, x.value().data(), w_t.data(), out.data(), false);
  add_bias(out, bias);
  return Var::make(std::move(out), {x, weight, bias}, [features, outs](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    const int batch = self.value.shape().n;
    if (nx.requires_grad) {
      gemm(batch, features, outs, self.grad.data(), nw.value.data(), nx.grad_buffer().data(),
           true);
    }
    if (nw.requires_grad) {
      const std::vector<double> g_t = transposed(self.grad.data(), batch, outs);
      gemm(outs, features, batch, g_t.data(), nx.value.data(), nw.grad_buffer().data(), true);
    }
    bias_backward(*self.inputs[2], self.grad);
  });
}

Var max_pool2x2(const Var& x) {
  const Shape s = x.shape();
  const int oh = s.h / 2;
  const int ow = s.w / 2;
  if (oh == 0 || ow == 0) throw ShapeMismatch("max_pool2x2: input smaller than 2x2");
  Tensor out(Shape{s.n, s.c, oh, ow});
  std::vector<std::size_t> arg(out.size());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      const std::size_t base = x.value().index(n, c, 0, 0);
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_i = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t i = static_cast<std::size_t>(2 * y + dy) * s.w + 2 * xx + dx;
              if (p[i] > best) {
                best = p[i];
                best_i = i;
              }
            }
          }
          out[o] = best;
          arg[o] = base + best_i;
        }
      }
    }
  }
  return Var::make(std::move(out), {x}, [arg = std::move(arg)](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

Var global_avg_pool(const Var& x) { return spatial_mean(x); }

}  // namespace hep::ops
