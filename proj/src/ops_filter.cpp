#include <vector>

#include "hep/autograd.hpp"
#include "hep/error.hpp"

namespace hep::ops {
namespace {

// Half-sample symmetric extension (d c b a | a b c d | d c b a), period 2n.
int reflect_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

// Filters `count` samples spaced by `stride`; taps are centred.
void filter_line_reflect(const double* in, double* out, int count, std::size_t stride,
                         const std::vector<double>& taps) {
  const int r = static_cast<int>(taps.size() / 2);
  for (int i = 0; i < count; ++i) {
    double acc = 0.0;
    for (int k = -r; k <= r; ++k) acc += taps[k + r] * in[reflect_index(i + k, count) * stride];
    out[i * stride] = acc;
  }
}

void filter_line_reflect_adjoint(const double* grad_out, double* grad_in, int count,
                                 std::size_t stride, const std::vector<double>& taps) {
  const int r = static_cast<int>(taps.size() / 2);
  for (int i = 0; i < count; ++i) {
    const double g = grad_out[i * stride];
    for (int k = -r; k <= r; ++k) grad_in[reflect_index(i + k, count) * stride] += taps[k + r] * g;
  }
}

// Both passes over one (H, W) plane. `adjoint` applies the transpose in
// reverse order.
void filter_plane_reflect(const double* in, double* out, int h, int w,
                          const std::vector<double>& taps, bool adjoint) {
  std::vector<double> tmp(static_cast<std::size_t>(h) * w, 0.0);
  if (!adjoint) {
    for (int y = 0; y < h; ++y) {
      filter_line_reflect(in + static_cast<std::size_t>(y) * w, tmp.data() + static_cast<std::size_t>(y) * w, w, 1, taps);
    }
    for (int x = 0; x < w; ++x) filter_line_reflect(tmp.data() + x, out + x, h, w, taps);
  } else {
    for (int x = 0; x < w; ++x) filter_line_reflect_adjoint(in + x, tmp.data() + x, h, w, taps);
    for (int y = 0; y < h; ++y) {
      filter_line_reflect_adjoint(tmp.data() + static_cast<std::size_t>(y) * w,
                                  out + static_cast<std::size_t>(y) * w, w, 1, taps);
    }
  }
}

void check_taps(std::span<const double> taps) {
  if (taps.empty() || taps.size() % 2 == 0) throw InvalidArgument("filter taps must have odd length");
}

}  // namespace

Var diff_horizontal(const Var& x) {
  const Shape s = x.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      double* o = out.plane(n, c);
      for (int y = 0; y < s.h; ++y) {
        for (int xx = 0; xx + 1 < s.w; ++xx) {
          o[y * s.w + xx] = p[y * s.w + xx + 1] - p[y * s.w + xx];
        }
      }
    }
  }
  return Var::make(std::move(out), {x}, [](Node& self) {
    const Shape s = self.value.shape();
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* up = self.grad.plane(n, c);
        double* gp = g.plane(n, c);
        for (int y = 0; y < s.h; ++y) {
          for (int xx = 0; xx + 1 < s.w; ++xx) {
            const double v = up[y * s.w + xx];
            gp[y * s.w + xx + 1] += v;
            gp[y * s.w + xx] -= v;
          }
        }
      }
    }
  });
}

Var diff_vertical(const Var& x) {
  const Shape s = x.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      double* o = out.plane(n, c);
      for (int y = 0; y + 1 < s.h; ++y) {
        for (int xx = 0; xx < s.w; ++xx) o[y * s.w + xx] = p[(y + 1) * s.w + xx] - p[y * s.w + xx];
      }
    }
  }
  return Var::make(std::move(out), {x}, [](Node& self) {
    const Shape s = self.value.shape();
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* up = self.grad.plane(n, c);
        double* gp = g.plane(n, c);
        for (int y = 0; y + 1 < s.h; ++y) {
          for (int xx = 0; xx < s.w; ++xx) {
            const double v = up[y * s.w + xx];
            gp[(y + 1) * s.w + xx] += v;
            gp[y * s.w + xx] -= v;
          }
        }
      }
    }
  });
}

Var separable_filter_reflect(const Var& x, std::span<const double> taps_in) {
  check_taps(taps_in);
  std::vector<double> taps(taps_in.begin(), taps_in.end());
  const Shape s = x.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      filter_plane_reflect(x.value().plane(n, c), out.plane(n, c), s.h, s.w, taps, false);
    }
  }
  return Var::make(std::move(out), {x}, [taps = std::move(taps)](Node& self) {
    const Shape s = self.value.shape();
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        filter_plane_reflect(self.grad.plane(n, c), g.plane(n, c), s.h, s.w, taps, true);
      }
    }
  });
}

Var separable_filter_valid(const Var& x, std::span<const double> taps_in) {
  check_taps(taps_in);
  std::vector<double> taps(taps_in.begin(), taps_in.end());
  const Shape s = x.shape();
  const int len = static_cast<int>(taps.size());
  const int oh = s.h - len + 1;
  const int ow = s.w - len + 1;
  if (oh <= 0 || ow <= 0) throw ShapeMismatch("separable_filter_valid: image smaller than window");
  Tensor out(Shape{s.n, s.c, oh, ow});
  std::vector<double> tmp(static_cast<std::size_t>(s.h) * ow);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      for (int y = 0; y < s.h; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          double acc = 0.0;
          for (int k = 0; k < len; ++k) acc += taps[k] * p[y * s.w + xx + k];
          tmp[static_cast<std::size_t>(y) * ow + xx] = acc;
        }
      }
      double* o = out.plane(n, c);
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          double acc = 0.0;
          for (int k = 0; k < len; ++k) acc += taps[k] * tmp[static_cast<std::size_t>(y + k) * ow + xx];
          o[y * ow + xx] = acc;
        }
      }
    }
  }
  return Var::make(std::move(out), {x}, [taps = std::move(taps)](Node& self) {
    const Shape os = self.value.shape();
    const Shape s = self.inputs[0]->value.shape();
    const int len = static_cast<int>(taps.size());
    Tensor& g = self.inputs[0]->grad_buffer();
    std::vector<double> tmp(static_cast<std::size_t>(s.h) * os.w);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        std::fill(tmp.begin(), tmp.end(), 0.0);
        const double* up = self.grad.plane(n, c);
        for (int y = 0; y < os.h; ++y) {
          for (int xx = 0; xx < os.w; ++xx) {
            const double v = up[y * os.w + xx];
            for (int k = 0; k < len; ++k) tmp[static_cast<std::size_t>(y + k) * os.w + xx] += taps[k] * v;
          }
        }
        double* gp = g.plane(n, c);
        for (int y = 0; y < s.h; ++y) {
          for (int xx = 0; xx < os.w; ++xx) {
            const double v = tmp[static_cast<std::size_t>(y) * os.w + xx];
            for (int k = 0; k < len; ++k) gp[y * s.w + xx + k] += taps[k] * v;
          }
        }
      }
    }
  });
}

}  // namespace hep::ops
