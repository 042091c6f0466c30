#include "tpnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "tpnet/errors.hpp"

namespace tpnet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

const Shape kScalarShape{1, 1, 1, 1, 1};

// Sliding-window geometry shared by conv and its adjoint.
struct Geo {
  int channels = 0;
  std::array<int, 3> in{};
  std::array<int, 3> k{};
  std::array<int, 3> s{};
  std::array<int, 3> p{};
  std::array<int, 3> out{};

  int rows() const { return channels * k[0] * k[1] * k[2]; }
  int cols() const { return out[0] * out[1] * out[2]; }
  int in_size() const { return in[0] * in[1] * in[2]; }
  bool pointwise() const {
    return k == std::array<int, 3>{1, 1, 1} && s == std::array<int, 3>{1, 1, 1} &&
           p == std::array<int, 3>{0, 0, 0};
  }
};

void im2col(const double* src, const Geo& g, double* col) {
  const int P = g.cols();
  int row = 0;
  for (int c = 0; c < g.channels; ++c) {
    const double* plane = src + static_cast<std::size_t>(c) * g.in_size();
    for (int a = 0; a < g.k[0]; ++a)
      for (int b = 0; b < g.k[1]; ++b)
        for (int e = 0; e < g.k[2]; ++e, ++row) {
          double* dst = col + static_cast<std::size_t>(row) * P;
          for (int od = 0; od < g.out[0]; ++od) {
            const int id = od * g.s[0] - g.p[0] + a;
            for (int oh = 0; oh < g.out[1]; ++oh) {
              const int ih = oh * g.s[1] - g.p[1] + b;
              double* d = dst + (static_cast<std::size_t>(od) * g.out[1] + oh) * g.out[2];
              if (id < 0 || id >= g.in[0] || ih < 0 || ih >= g.in[1]) {
                std::fill(d, d + g.out[2], 0.0);
                continue;
              }
              const double* s = plane + (static_cast<std::size_t>(id) * g.in[1] + ih) * g.in[2];
              for (int ow = 0; ow < g.out[2]; ++ow) {
                const int iw = ow * g.s[2] - g.p[2] + e;
                d[ow] = (iw >= 0 && iw < g.in[2]) ? s[iw] : 0.0;
              }
            }
          }
        }
  }
}

// Adjoint of im2col; accumulates into dst.
void col2im(const double* col, const Geo& g, double* dst) {
  const int P = g.cols();
  int row = 0;
  for (int c = 0; c < g.channels; ++c) {
    double* plane = dst + static_cast<std::size_t>(c) * g.in_size();
    for (int a = 0; a < g.k[0]; ++a)
      for (int b = 0; b < g.k[1]; ++b)
        for (int e = 0; e < g.k[2]; ++e, ++row) {
          const double* src = col + static_cast<std::size_t>(row) * P;
          for (int od = 0; od < g.out[0]; ++od) {
            const int id = od * g.s[0] - g.p[0] + a;
            if (id < 0 || id >= g.in[0]) continue;
            for (int oh = 0; oh < g.out[1]; ++oh) {
              const int ih = oh * g.s[1] - g.p[1] + b;
              if (ih < 0 || ih >= g.in[1]) continue;
              const double* s = src + (static_cast<std::size_t>(od) * g.out[1] + oh) * g.out[2];
              double* d = plane + (static_cast<std::size_t>(id) * g.in[1] + ih) * g.in[2];
              for (int ow = 0; ow < g.out[2]; ++ow) {
                const int iw = ow * g.s[2] - g.p[2] + e;
                if (iw >= 0 && iw < g.in[2]) d[iw] += s[ow];
              }
            }
          }
        }
  }
}

void check_bias(const Var& bias, int channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.shape() != Shape{channels, 1, 1, 1, 1})
    throw ShapeError(std::string(op) + ": bias shape " + to_string(bias.shape()) +
                     " does not match " + std::to_string(channels) + " channels");
}

void add_bias(Tensor& out, const Tensor& bias) {
  const int N = out.dim(0), C = out.dim(1);
  const std::size_t P = numel(out.shape()) / (static_cast<std::size_t>(N) * C);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      double* d = out.ptr() + (static_cast<std::size_t>(n) * C + c) * P;
      const double b = bias[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < P; ++i) d[i] += b;
    }
}

void accumulate_bias_grad(const Tensor& dout, Tensor& dbias) {
  const int N = dout.dim(0), C = dout.dim(1);
  const std::size_t P = numel(dout.shape()) / (static_cast<std::size_t>(N) * C);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* d = dout.ptr() + (static_cast<std::size_t>(n) * C + c) * P;
      double acc = 0.0;
      for (std::size_t i = 0; i < P; ++i) acc += d[i];
      dbias[static_cast<std::size_t>(c)] += acc;
    }
}

template <typename F, typename DF>
Var unary(const Var& x, F f, DF df) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_op(std::move(out), {x}, [df](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& gx = in.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += self.grad[i] * df(in.value[i], self.value[i]);
  });
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
}

}  // namespace

Var conv3d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& cg) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws[1] != xs[1])
    throw ShapeError("conv3d: input has " + std::to_string(xs[1]) + " channels, weight expects " +
                     std::to_string(ws[1]));
  if (ws[2] != cg.kernel[0] || ws[3] != cg.kernel[1] || ws[4] != cg.kernel[2])
    throw ShapeError("conv3d: weight shape " + to_string(ws) + " disagrees with kernel");
  check_bias(bias, ws[0], "conv3d");

  Geo g;
  g.channels = xs[1];
  g.in = {xs[2], xs[3], xs[4]};
  g.k = cg.kernel;
  g.s = cg.stride;
  g.p = cg.padding;
  for (int i = 0; i < 3; ++i) {
    const int span = g.in[i] + 2 * g.p[i] - g.k[i];
    if (span < 0) throw ShapeError("conv3d: kernel larger than padded input " + to_string(xs));
    g.out[i] = span / g.s[i] + 1;
  }
  const int N = xs[0], Co = ws[0], K = g.rows(), P = g.cols();
  Tensor out({N, Co, g.out[0], g.out[1], g.out[2]});

  ConstMapMat wm(weight.value().ptr(), Co, K);
  std::vector<double> col(g.pointwise() ? 0 : static_cast<std::size_t>(K) * P);
  for (int n = 0; n < N; ++n) {
    const double* xn = x.value().ptr() + static_cast<std::size_t>(n) * g.channels * g.in_size();
    const double* colp = xn;
    if (!g.pointwise()) {
      im2col(xn, g, col.data());
      colp = col.data();
    }
    MapMat on(out.ptr() + static_cast<std::size_t>(n) * Co * P, Co, P);
    on.noalias() = wm * ConstMapMat(colp, K, P);
  }
  if (bias.defined()) add_bias(out, bias.value());

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(std::move(out), std::move(inputs), [g, N, Co, K, P](Node& self) {
    Node& xin = *self.inputs[0];
    Node& win = *self.inputs[1];
    const Tensor& dout = self.grad;
    ConstMapMat wm(win.value.ptr(), Co, K);
    std::vector<double> col(static_cast<std::size_t>(K) * P);
    for (int n = 0; n < N; ++n) {
      ConstMapMat dn(dout.ptr() + static_cast<std::size_t>(n) * Co * P, Co, P);
      const std::size_t xoff = static_cast<std::size_t>(n) * g.channels * g.in_size();
      if (win.requires_grad) {
        const double* colp = xin.value.ptr() + xoff;
        if (!g.pointwise()) {
          im2col(colp, g, col.data());
          colp = col.data();
        }
        MapMat dw(win.grad_buffer().ptr(), Co, K);
        dw.noalias() += dn * ConstMapMat(colp, K, P).transpose();
      }
      if (xin.requires_grad) {
        if (g.pointwise()) {
          MapMat dx(xin.grad_buffer().ptr() + xoff, K, P);
          dx.noalias() += wm.transpose() * dn;
        } else {
          MapMat dc(col.data(), K, P);
          dc.noalias() = wm.transpose() * dn;
          col2im(col.data(), g, xin.grad_buffer().ptr() + xoff);
        }
      }
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad)
      accumulate_bias_grad(dout, self.inputs[2]->grad_buffer());
  });
}

Var conv_transpose3d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& cg) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws[0] != xs[1])
    throw ShapeError("conv_transpose3d: input has " + std::to_string(xs[1]) +
                     " channels, weight expects " + std::to_string(ws[0]));
  if (ws[2] != cg.kernel[0] || ws[3] != cg.kernel[1] || ws[4] != cg.kernel[2])
    throw ShapeError("conv_transpose3d: weight shape " + to_string(ws) + " disagrees with kernel");
  check_bias(bias, ws[1], "conv_transpose3d");

  const int N = xs[0], Ci = xs[1], Co = ws[1];
  // The geometry of the equivalent forward conv, run from output to input.
  Geo g;
  g.channels = Co;
  g.k = cg.kernel;
  g.s = cg.stride;
  g.p = cg.padding;
  g.out = {xs[2], xs[3], xs[4]};
  for (int i = 0; i < 3; ++i) {
    g.in[i] = (g.out[i] - 1) * g.s[i] - 2 * g.p[i] + g.k[i];
    if (g.in[i] <= 0) throw ShapeError("conv_transpose3d: empty output for " + to_string(xs));
  }
  const int K = g.rows(), Pin = g.cols();
  Tensor out({N, Co, g.in[0], g.in[1], g.in[2]});
  ConstMapMat wm(weight.value().ptr(), Ci, K);
  std::vector<double> col(static_cast<std::size_t>(K) * Pin);
  for (int n = 0; n < N; ++n) {
    ConstMapMat xn(x.value().ptr() + static_cast<std::size_t>(n) * Ci * Pin, Ci, Pin);
    MapMat cm(col.data(), K, Pin);
    cm.noalias() = wm.transpose() * xn;
    col2im(col.data(), g, out.ptr() + static_cast<std::size_t>(n) * Co * g.in_size());
  }
  if (bias.defined()) add_bias(out, bias.value());

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(std::move(out), std::move(inputs), [g, N, Ci, Co, K, Pin](Node& self) {
    Node& xin = *self.inputs[0];
    Node& win = *self.inputs[1];
    const Tensor& dout = self.grad;
    ConstMapMat wm(win.value.ptr(), Ci, K);
    std::vector<double> col(static_cast<std::size_t>(K) * Pin);
    for (int n = 0; n < N; ++n) {
      im2col(dout.ptr() + static_cast<std::size_t>(n) * Co * g.in_size(), g, col.data());
      ConstMapMat cm(col.data(), K, Pin);
      const std::size_t xoff = static_cast<std::size_t>(n) * Ci * Pin;
      if (xin.requires_grad) {
        MapMat dx(xin.grad_buffer().ptr() + xoff, Ci, Pin);
        dx.noalias() += wm * cm;
      }
      if (win.requires_grad) {
        MapMat dw(win.grad_buffer().ptr(), Ci, K);
        dw.noalias() += ConstMapMat(xin.value.ptr() + xoff, Ci, Pin) * cm.transpose();
      }
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad)
      accumulate_bias_grad(dout, self.inputs[2]->grad_buffer());
  });
}

Var relu(const Var& x) {
  return unary(
      // NaN passes through so non-finite inputs still surface in the loss.
      x, [](double v) { return v < 0.0 ? 0.0 : v; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var square(const Var& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var sqrt_shifted(const Var& x, double eps) {
  const double base = std::sqrt(eps);
  return unary(
      x, [eps, base](double v) { return std::sqrt(v + eps) - base; },
      [eps](double v, double) { return 0.5 / std::sqrt(v + eps); });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& in = *self.inputs[static_cast<std::size_t>(k)];
      if (!in.requires_grad) continue;
      Tensor& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& in = *self.inputs[static_cast<std::size_t>(k)];
      if (!in.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      Tensor& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    if (na.requires_grad) {
      Tensor& g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      Tensor& g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

Var scale(const Var& x, double s) {
  return unary(
      x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& x, double s) {
  return unary(
      x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return make_op(Tensor(kScalarShape, acc), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const double d = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var global_avg_pool(const Var& x) {
  const Shape& s = x.shape();
  const int N = s[0], C = s[1];
  const std::size_t P = static_cast<std::size_t>(s[2]) * s[3] * s[4];
  Tensor out({N, C, 1, 1, 1});
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(N) * C; ++nc) {
    double acc = 0.0;
    const double* d = x.value().ptr() + nc * P;
    for (std::size_t i = 0; i < P; ++i) acc += d[i];
    out[nc] = acc / static_cast<double>(P);
  }
  return make_op(std::move(out), {x}, [N, C, P](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(N) * C; ++nc) {
      const double d = self.grad[nc] / static_cast<double>(P);
      double* gp = g.ptr() + nc * P;
      for (std::size_t i = 0; i < P; ++i) gp[i] += d;
    }
  });
}

Var channel_mean(const Var& x) {
  const Shape& s = x.shape();
  const int N = s[0], C = s[1];
  const std::size_t P = static_cast<std::size_t>(s[2]) * s[3] * s[4];
  Tensor out({N, 1, s[2], s[3], s[4]});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* d = x.value().ptr() + (static_cast<std::size_t>(n) * C + c) * P;
      double* o = out.ptr() + static_cast<std::size_t>(n) * P;
      for (std::size_t i = 0; i < P; ++i) o[i] += d[i] / C;
    }
  return make_op(std::move(out), {x}, [N, C, P](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        double* gp = g.ptr() + (static_cast<std::size_t>(n) * C + c) * P;
        const double* d = self.grad.ptr() + static_cast<std::size_t>(n) * P;
        for (std::size_t i = 0; i < P; ++i) gp[i] += d[i] / C;
      }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3] || sa[4] != sb[4])
    throw ShapeError("concat_channels: " + to_string(sa) + " vs " + to_string(sb));
  const int N = sa[0], Ca = sa[1], Cb = sb[1];
  const std::size_t P = static_cast<std::size_t>(sa[2]) * sa[3] * sa[4];
  Tensor out({N, Ca + Cb, sa[2], sa[3], sa[4]});
  for (int n = 0; n < N; ++n) {
    double* o = out.ptr() + static_cast<std::size_t>(n) * (Ca + Cb) * P;
    const double* pa = a.value().ptr() + static_cast<std::size_t>(n) * Ca * P;
    const double* pb = b.value().ptr() + static_cast<std::size_t>(n) * Cb * P;
    std::copy(pa, pa + Ca * P, o);
    std::copy(pb, pb + Cb * P, o + Ca * P);
  }
  return make_op(std::move(out), {a, b}, [N, Ca, Cb, P](Node& self) {
    for (int n = 0; n < N; ++n) {
      const double* d = self.grad.ptr() + static_cast<std::size_t>(n) * (Ca + Cb) * P;
      if (self.inputs[0]->requires_grad) {
        double* g = self.inputs[0]->grad_buffer().ptr() + static_cast<std::size_t>(n) * Ca * P;
        for (std::size_t i = 0; i < Ca * P; ++i) g[i] += d[i];
      }
      if (self.inputs[1]->requires_grad) {
        double* g = self.inputs[1]->grad_buffer().ptr() + static_cast<std::size_t>(n) * Cb * P;
        for (std::size_t i = 0; i < Cb * P; ++i) g[i] += d[Ca * P + i];
      }
    }
  });
}

Var broadcast_spatial(const Var& x, int d, int h, int w) {
  const Shape& s = x.shape();
  if (s[2] != 1 || s[3] != 1 || s[4] != 1)
    throw ShapeError("broadcast_spatial: expects N x C x 1 x 1 x 1, got " + to_string(s));
  const int N = s[0], C = s[1];
  const std::size_t P = static_cast<std::size_t>(d) * h * w;
  Tensor out({N, C, d, h, w});
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(N) * C; ++nc)
    std::fill(out.ptr() + nc * P, out.ptr() + (nc + 1) * P, x.value()[nc]);
  return make_op(std::move(out), {x}, [N, C, P](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(N) * C; ++nc) {
      double acc = 0.0;
      const double* d = self.grad.ptr() + nc * P;
      for (std::size_t i = 0; i < P; ++i) acc += d[i];
      g[nc] += acc;
    }
  });
}

Var gather_rows(const Var& table, std::span<const int> indices) {
  const Shape& s = table.shape();
  const int R = s[0];
  const std::size_t E = static_cast<std::size_t>(s[1]) * s[2] * s[3] * s[4];
  const int N = static_cast<int>(indices.size());
  Tensor out({N, s[1], s[2], s[3], s[4]});
  std::vector<int> idx(indices.begin(), indices.end());
  for (int n = 0; n < N; ++n) {
    if (idx[static_cast<std::size_t>(n)] < 0 || idx[static_cast<std::size_t>(n)] >= R)
      throw ValueError("gather_rows: index out of range");
    const double* row = table.value().ptr() + static_cast<std::size_t>(idx[static_cast<std::size_t>(n)]) * E;
    std::copy(row, row + E, out.ptr() + static_cast<std::size_t>(n) * E);
  }
  return make_op(std::move(out), {table}, [idx, E](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t n = 0; n < idx.size(); ++n) {
      double* row = g.ptr() + static_cast<std::size_t>(idx[n]) * E;
      const double* d = self.grad.ptr() + n * E;
      for (std::size_t i = 0; i < E; ++i) row[i] += d[i];
    }
  });
}

Var filter2d_replicate(const Var& x, std::span<const double> kernel, int side) {
  if (side % 2 == 0 || kernel.size() != static_cast<std::size_t>(side) * side)
    throw ShapeError("filter2d_replicate: kernel must be odd and square");
  const Shape& s = x.shape();
  const int H = s[3], W = s[4], r = side / 2;
  const std::size_t slices = static_cast<std::size_t>(s[0]) * s[1] * s[2];
  std::vector<double> k(kernel.begin(), kernel.end());
  auto clamp_index = [](int v, int n) { return std::clamp(v, 0, n - 1); };
  Tensor out(s);
  for (std::size_t sl = 0; sl < slices; ++sl) {
    const double* src = x.value().ptr() + sl * H * W;
    double* dst = out.ptr() + sl * H * W;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int a = 0; a < side; ++a) {
          const int si = clamp_index(i + a - r, H);
          for (int b = 0; b < side; ++b)
            acc += k[static_cast<std::size_t>(a * side + b)] * src[si * W + clamp_index(j + b - r, W)];
        }
        dst[i * W + j] = acc;
      }
  }
  return make_op(std::move(out), {x}, [k, side, r, H, W, slices, clamp_index](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t sl = 0; sl < slices; ++sl) {
      const double* d = self.grad.ptr() + sl * H * W;
      double* gx = g.ptr() + sl * H * W;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const double v = d[i * W + j];
          for (int a = 0; a < side; ++a) {
            const int si = clamp_index(i + a - r, H);
            for (int b = 0; b < side; ++b)
              gx[si * W + clamp_index(j + b - r, W)] += k[static_cast<std::size_t>(a * side + b)] * v;
          }
        }
    }
  });
}

}  // namespace tpnet
