#include "tpnet/losses.hpp"

#include <array>
#include <cmath>

#include "tpnet/errors.hpp"
#include "tpnet/ops.hpp"

namespace tpnet {

namespace {

const Shape kScalar{1, 1, 1, 1, 1};

void check_batch(const Var& pred, std::span<const Interval> gt, const char* op) {
  const Shape& s = pred.shape();
  if (s[1] != 2 || s[2] != 1 || s[3] != 1 || s[4] != 1)
    throw ShapeError(std::string(op) + ": expected N x 2 interval tensor, got " + to_string(s));
  if (s[0] < 1 || static_cast<std::size_t>(s[0]) != gt.size())
    throw ValueError(std::string(op) + ": prediction batch " + std::to_string(s[0]) +
                     " does not match ground-truth batch " + std::to_string(gt.size()));
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// d IoU / d(start, end) of the first argument.
std::array<double, 2> iou_gradient(const Interval& a, const Interval& b) {
  const double lo = std::max(a.start, b.start);
  const double hi = std::min(a.end, b.end);
  const double inter = std::max(0.0, hi - lo);
  const double uni = a.length() + b.length() - inter;
  if (uni <= 0.0) return {0.0, 0.0};
  double dinter_ds = 0.0, dinter_de = 0.0;
  if (hi - lo > 0.0) {
    if (a.start > b.start) dinter_ds = -1.0;
    if (a.end < b.end) dinter_de = 1.0;
  }
  const bool positive = a.end > a.start;
  const double dlen_ds = positive ? -1.0 : 0.0;
  const double dlen_de = positive ? 1.0 : 0.0;
  const double duni_ds = dlen_ds - dinter_ds;
  const double duni_de = dlen_de - dinter_de;
  return {(dinter_ds * uni - inter * duni_ds) / (uni * uni),
          (dinter_de * uni - inter * duni_de) / (uni * uni)};
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
  const int side = 2 * radius + 1;
  std::vector<double> k(static_cast<std::size_t>(side) * side);
  double total = 0.0;
  for (int a = -radius; a <= radius; ++a)
    for (int b = -radius; b <= radius; ++b) {
      const double v = std::exp(-(a * a + b * b) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>((a + radius) * side + b + radius)] = v;
      total += v;
    }
  for (double& v : k) v /= total;
  return k;
}

constexpr std::array<double, 9> kSobelX{-1, 0, 1, -2, 0, 2, -1, 0, 1};
constexpr std::array<double, 9> kSobelY{-1, -2, -1, 0, 0, 0, 1, 2, 1};

}  // namespace

Tensor intervals_to_tensor(std::span<const Interval> intervals) {
  Tensor t({static_cast<int>(intervals.size()), 2, 1, 1, 1});
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    t[2 * i] = intervals[i].start;
    t[2 * i + 1] = intervals[i].end;
  }
  return t;
}

std::vector<Interval> tensor_to_intervals(const Tensor& t) {
  if (t.dim(1) != 2 || numel(t.shape()) != static_cast<std::size_t>(t.dim(0)) * 2)
    throw ShapeError("tensor_to_intervals: expected N x 2, got " + to_string(t.shape()));
  std::vector<Interval> out(static_cast<std::size_t>(t.dim(0)));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {t[2 * i], t[2 * i + 1]};
  return out;
}

double interval_iou(const Interval& a, const Interval& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

Var l_reg(const Var& pred, std::span<const Interval> gt) {
  check_batch(pred, gt, "l_reg");
  std::vector<Interval> target(gt.begin(), gt.end());
  const Tensor& p = pred.value();
  double loss = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j)
    loss += std::abs(p[2 * j] - target[j].start) + std::abs(p[2 * j + 1] - target[j].end);
  return make_op(Tensor(kScalar, loss), {pred}, [target](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const double d = self.grad[0];
    for (std::size_t j = 0; j < target.size(); ++j) {
      g[2 * j] += d * sign(in.value[2 * j] - target[j].start);
      g[2 * j + 1] += d * sign(in.value[2 * j + 1] - target[j].end);
    }
  });
}

Var l_tiou(const Var& pred, std::span<const Interval> gt) {
  check_batch(pred, gt, "l_tiou");
  std::vector<Interval> target(gt.begin(), gt.end());
  const Tensor& p = pred.value();
  const double n = static_cast<double>(target.size());
  double loss = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j)
    loss += 1.0 - interval_iou({p[2 * j], p[2 * j + 1]}, target[j]);
  return make_op(Tensor(kScalar, loss / n), {pred}, [target, n](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const double d = self.grad[0];
    for (std::size_t j = 0; j < target.size(); ++j) {
      const auto diou = iou_gradient({in.value[2 * j], in.value[2 * j + 1]}, target[j]);
      g[2 * j] -= d * diou[0] / n;
      g[2 * j + 1] -= d * diou[1] / n;
    }
  });
}

Var texture_extract(const Var& feature, const EdgeParams& params) {
  if (feature.shape()[2] < 2)
    throw ValueError("texture_extract: feature depth must be >= 2, got " +
                     std::to_string(feature.shape()[2]));
  if (!all_finite(feature.value())) throw NumericError("texture_extract: non-finite feature");
  const auto blur = gaussian_kernel(params.blur_sigma, params.blur_radius);
  Var reduced = channel_mean(feature);
  Var smoothed = filter2d_replicate(reduced, blur, 2 * params.blur_radius + 1);
  Var gx = filter2d_replicate(smoothed, kSobelX, 3);
  Var gy = filter2d_replicate(smoothed, kSobelY, 3);
  Var magnitude = sqrt_shifted(add(square(gx), square(gy)), params.magnitude_eps);
  return tanh(scale(magnitude, 1.0 / params.squash_scale));
}

TplTerms l_tpl(const Var& stack, int k, double margin) {
  const Shape& s = stack.shape();
  if (s[1] != 1) throw ShapeError("l_tpl: expected a single-channel stack, got " + to_string(s));
  if (numel(s) == 0) throw ValueError("l_tpl: empty texture stack");
  if (s[2] < 2) throw ValueError("l_tpl: stack needs at least 2 slices");
  if (k < 1) throw ValueError("l_tpl: sampling interval k must be >= 1");

  const int N = s[0], D = s[2];
  const std::size_t P = static_cast<std::size_t>(s[3]) * s[4];
  const Tensor& m = stack.value();
  auto slice = [&](const Tensor& t, int n, int d) {
    return t.ptr() + (static_cast<std::size_t>(n) * D + d) * P;
  };
  auto msd = [&](int n, int d0, int d1) {
    const double* a = slice(m, n, d0);
    const double* b = slice(m, n, d1);
    double acc = 0.0;
    for (std::size_t i = 0; i < P; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(P);
  };

  // Mean over (n, d) of the pair distance at offset `gap`, optionally hinged.
  auto pair_loss = [&](int gap, bool hinge) {
    const int pairs = D - gap;
    const double norm = 1.0 / (static_cast<double>(N) * pairs);
    std::vector<double> coeff(static_cast<std::size_t>(N) * pairs);
    double loss = 0.0;
    for (int n = 0; n < N; ++n)
      for (int d = 0; d < pairs; ++d) {
        const double dist = msd(n, d, d + gap);
        double c;
        if (hinge) {
          const double h = margin - dist;
          loss += h > 0.0 ? h : 0.0;
          c = h > 0.0 ? -1.0 : 0.0;
        } else {
          loss += dist;
          c = 1.0;
        }
        coeff[static_cast<std::size_t>(n) * pairs + d] = c;
      }
    const double scale = norm * 2.0 / static_cast<double>(P);
    return make_op(Tensor(kScalar, loss * norm), {stack},
                   [coeff, gap, pairs, N, D, P, scale](Node& self) {
                     Node& in = *self.inputs[0];
                     Tensor& g = in.grad_buffer();
                     const double up = self.grad[0] * scale;
                     for (int n = 0; n < N; ++n)
                       for (int d = 0; d < pairs; ++d) {
                         const double c = coeff[static_cast<std::size_t>(n) * pairs + d] * up;
                         if (c == 0.0) continue;
                         const std::size_t oa = (static_cast<std::size_t>(n) * D + d) * P;
                         const std::size_t ob = oa + static_cast<std::size_t>(gap) * P;
                         for (std::size_t i = 0; i < P; ++i) {
                           const double diff = in.value[oa + i] - in.value[ob + i];
                           g[oa + i] += c * diff;
                           g[ob + i] -= c * diff;
                         }
                       }
                   });
  };

  TplTerms out;
  out.con = pair_loss(1, false);
  if (D > k) {
    out.icon = pair_loss(k, true);
  } else {
    out.icon = Var(Tensor(kScalar, 0.0));
    out.icon_active = false;
  }
  return out;
}

LossReport make_report(double l_reg, double l_tiou, double l_con, double l_icon,
                       const LossSwitches& switches) {
  LossReport r;
  r.l_reg = l_reg;
  r.l_tiou = switches.enable_tiou ? l_tiou : 0.0;
  r.l_con = switches.enable_tpl ? l_con : 0.0;
  r.l_icon = switches.enable_tpl ? l_icon : 0.0;
  r.l_tpl = r.l_con + r.l_icon;
  r.l_total = (r.l_reg + r.l_tiou) + r.l_tpl;
  return r;
}

TotalLoss l_total(const Var& reg, const Var& tiou, const Var& con, const Var& icon,
                  const LossSwitches& switches) {
  auto value = [](const Var& v) { return v.defined() ? v.value()[0] : 0.0; };
  const bool use_tiou = switches.enable_tiou && tiou.defined();
  const bool use_tpl = switches.enable_tpl && con.defined() && icon.defined();
  TotalLoss out;
  out.report = make_report(value(reg), use_tiou ? value(tiou) : 0.0, use_tpl ? value(con) : 0.0,
                           use_tpl ? value(icon) : 0.0, switches);
  Var zero(Tensor(kScalar, 0.0));
  Var head = add(reg, use_tiou ? tiou : zero);
  Var tpl = use_tpl ? add(con, icon) : zero;
  out.total = add(head, tpl);
  return out;
}

}  // namespace tpnet
