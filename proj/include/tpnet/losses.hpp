#pragma once

#include <span>
#include <vector>

#include "tpnet/autograd.hpp"
#include "tpnet/interval.hpp"

namespace tpnet {

// Interval batches travel through the graph as N x 2 x 1 x 1 x 1 tensors
// holding (start, end) per item.
Tensor intervals_to_tensor(std::span<const Interval> intervals);
std::vector<Interval> tensor_to_intervals(const Tensor& t);

// Overlap / union of two 1D intervals; lengths clamp at zero and a
// non-positive union gives 0.
double interval_iou(const Interval& a, const Interval& b);

// Sum over the batch of |s - s_gt| + |e - e_gt|.
Var l_reg(const Var& pred, std::span<const Interval> gt);
// Mean over the batch of 1 - IoU(pred, gt).
Var l_tiou(const Var& pred, std::span<const Interval> gt);

struct EdgeParams {
  double blur_sigma = 1.0;
  int blur_radius = 2;
  double magnitude_eps = 1e-4;
  double squash_scale = 1.0;
};

// Differentiable edge pipeline applied per depth slice of a feature map:
// channel mean, Gaussian blur, Sobel gradients, magnitude, tanh squashing.
// Input N x C x D x H x W with D >= 2; output N x 1 x D x H x W in [0, 1).
Var texture_extract(const Var& feature, const EdgeParams& params = {});

struct TplTerms {
  Var con;
  Var icon;
  bool icon_active = true;  // false when the stack has no pair at distance k
};

// Consistency (neighbouring slices) and hinged inconsistency (slices k apart)
// terms over an N x 1 x D x H x W texture stack. Distances are mean-squared
// over pixels.
TplTerms l_tpl(const Var& stack, int k, double margin = 0.1);

struct LossSwitches {
  bool enable_tiou = true;
  bool enable_tpl = true;
};

struct LossReport {
  double l_reg = 0.0;
  double l_tiou = 0.0;
  double l_tpl = 0.0;
  double l_con = 0.0;
  double l_icon = 0.0;
  double l_total = 0.0;

  bool operator==(const LossReport&) const = default;
};

// Unit-weight sum: l_tpl = l_con + l_icon, l_total = (l_reg + l_tiou) + l_tpl.
// A disabled term is reported as exactly 0.
LossReport make_report(double l_reg, double l_tiou, double l_con, double l_icon,
                       const LossSwitches& switches = {});

struct TotalLoss {
  Var total;
  LossReport report;
};

// Graph version of make_report; undefined Vars are treated as disabled terms.
TotalLoss l_total(const Var& reg, const Var& tiou, const Var& con, const Var& icon,
                  const LossSwitches& switches = {});

}  // namespace tpnet
