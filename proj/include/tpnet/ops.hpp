#pragma once

#include <array>
#include <span>

#include "tpnet/autograd.hpp"

namespace tpnet {

// Kernel/stride/padding triples are ordered (depth, height, width).
struct ConvGeometry {
  std::array<int, 3> kernel{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> padding{0, 0, 0};
};

// x: N x Ci x D x H x W, weight: Co x Ci x kd x kh x kw, bias: Co x 1 x 1 x 1 x 1
// or undefined. Cross-correlation, zero padding.
Var conv3d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g);

// Adjoint of conv3d. weight: Ci x Co x kd x kh x kw. Output extent per axis is
// (in - 1) * stride - 2 * padding + kernel.
Var conv_transpose3d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var square(const Var& x);
// sqrt(x + eps) - sqrt(eps): smooth at zero, exactly 0 there. Requires x >= 0.
Var sqrt_shifted(const Var& x, double eps);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);

// Reductions to a 1x1x1x1x1 scalar.
Var sum(const Var& x);
Var mean(const Var& x);

// N x C x D x H x W -> N x C x 1 x 1 x 1
Var global_avg_pool(const Var& x);
// N x C x D x H x W -> N x 1 x D x H x W
Var channel_mean(const Var& x);
Var concat_channels(const Var& a, const Var& b);
// N x C x 1 x 1 x 1 -> N x C x d x h x w
Var broadcast_spatial(const Var& x, int d, int h, int w);
// table: R x E x 1 x 1 x 1; returns rows[indices] as N x E x 1 x 1 x 1
Var gather_rows(const Var& table, std::span<const int> indices);

// Per (n, c, d) slice 2D correlation with a fixed odd-sized kernel (row-major,
// side x side), replicate-padded so the output keeps H x W.
Var filter2d_replicate(const Var& x, std::span<const double> kernel, int side);

}  // namespace tpnet
