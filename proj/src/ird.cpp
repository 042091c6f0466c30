#include "tpnet/ird.hpp"

#include <algorithm>

#include <cmath>

#include "tpnet/errors.hpp"

namespace tpnet {

namespace {

const Shape kScalar{1, 1, 1, 1, 1};
const ConvGeometry kUpsample{{1, 4, 4}, {1, 2, 2}, {0, 1, 1}};

// Prior so the initial sigmoid output is ~0.1 everywhere.
constexpr double kHeatmapBiasInit = -2.19;

}  // namespace

void DetectorConfig::validate() const {
  if (widths.empty()) throw ConfigError("detector needs at least one encoder stage");
  if (decoder_widths.size() > widths.size())
    throw ConfigError("detector decoder cannot upsample beyond the input resolution");
  if (blocks_per_stage < 1 || stem_width < 1 || embed_dim < 1 || head_width < 1)
    throw ConfigError("detector widths and block counts must be positive");
  for (int w : widths)
    if (w < 1) throw ConfigError("detector widths must be positive");
  for (int w : decoder_widths)
    if (w < 1) throw ConfigError("detector decoder widths must be positive");
}

Detector::Detector(DetectorConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(init_seed);
  const int total_blocks = static_cast<int>(config_.widths.size()) * config_.blocks_per_stage;
  const double branch_gain = 1.0 / std::sqrt(static_cast<double>(total_blocks));

  stem_ = make_conv(params_, "stem", 1, config_.stem_width, spatial3x3(2), rng);
  int in = config_.stem_width;
  for (std::size_t s = 0; s < config_.widths.size(); ++s)
    for (int b = 0; b < config_.blocks_per_stage; ++b) {
      const std::string name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      blocks_.emplace_back(params_, name, in, config_.widths[s], b == 0 ? 2 : 1, rng, branch_gain);
      in = config_.widths[s];
    }
  for (std::size_t i = 0; i < config_.decoder_widths.size(); ++i) {
    decoder_.push_back(make_deconv(params_, "decoder" + std::to_string(i + 1), in,
                                   config_.decoder_widths[i], kUpsample, rng));
    in = config_.decoder_widths[i];
  }
  Tensor table({3, config_.embed_dim, 1, 1, 1});
  for (std::size_t i = 0; i < table.size(); ++i) table[i] = rng.normal();
  embedding_ = params_.add("condition_embedding", std::move(table));

  const int fused = in + config_.embed_dim;
  heat1_ = make_conv(params_, "heatmap.conv1", fused, config_.head_width, spatial3x3(1), rng);
  heat2_ = make_conv(params_, "heatmap.conv2", config_.head_width, 1, pointwise(), rng);
  heat2_.bias.mutable_value().fill(kHeatmapBiasInit);
  offset1_ = make_conv(params_, "offset.conv1", fused, config_.head_width, spatial3x3(1), rng);
  offset2_ = make_conv(params_, "offset.conv2", config_.head_width, 2, pointwise(), rng);
}

Var Detector::condition_embedding(std::span<const Condition> conditions) const {
  std::vector<int> idx;
  idx.reserve(conditions.size());
  for (Condition c : conditions) idx.push_back(static_cast<int>(c));
  return gather_rows(embedding_, idx);
}

DetectorOutput Detector::forward(const Var& slices, std::span<const Condition> conditions) const {
  const Shape& s = slices.shape();
  if (s[1] != 1 || s[2] != 1)
    throw ShapeError("detector input must be N x 1 x 1 x S x S, got " + to_string(s));
  if (s[3] != s[4]) throw ShapeError("detector input must be square, got " + to_string(s));
  const int stride = config_.total_stride();
  if (s[3] % stride != 0)
    throw ShapeError("detector input side " + std::to_string(s[3]) +
                     " is not divisible by the total stride " + std::to_string(stride));
  if (static_cast<std::size_t>(s[0]) != conditions.size())
    throw ValueError("detector: one condition per batch item required");

  Var x = relu(stem_(slices));
  for (const auto& block : blocks_) x = block(x);
  for (const auto& up : decoder_) x = relu(up(x));
  const Shape& fs = x.shape();
  Var cond = broadcast_spatial(condition_embedding(conditions), 1, fs[3], fs[4]);
  Var fused = concat_channels(x, cond);
  DetectorOutput out;
  out.heatmap = sigmoid(heat2_(relu(heat1_(fused))));
  out.offsets = offset2_(relu(offset1_(fused)));
  return out;
}

Tensor gaussian_target(std::array<double, 2> position, double sigma, int rows, int cols) {
  if (!(sigma > 0.0)) throw ValueError("gaussian_target: sigma must be positive");
  if (rows < 1 || cols < 1) throw ValueError("gaussian_target: empty shape");
  if (!(position[0] >= 0.0 && position[0] < rows && position[1] >= 0.0 && position[1] < cols))
    throw ValueError("gaussian_target: position outside the heatmap");
  const int pr = std::min(static_cast<int>(std::lround(position[0])), rows - 1);
  const int pc = std::min(static_cast<int>(std::lround(position[1])), cols - 1);
  Tensor t({1, 1, 1, rows, cols});
  const double denom = 2.0 * sigma * sigma;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double d2 = static_cast<double>((r - pr) * (r - pr) + (c - pc) * (c - pc));
      t.at(0, 0, 0, r, c) = std::exp(-d2 / denom);
    }
  return t;
}

Var focal_loss(const Var& pred, const Tensor& target, double alpha, double beta, double eps) {
  if (pred.shape() != target.shape())
    throw ShapeError("focal_loss: prediction " + to_string(pred.shape()) + " vs target " +
                     to_string(target.shape()));
  const Tensor& p = pred.value();
  double loss = 0.0;
  int peaks = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], eps, 1.0 - eps);
    const double y = target[i];
    if (y == 1.0) {
      loss -= std::pow(1.0 - q, alpha) * std::log(q);
      ++peaks;
    } else {
      loss -= std::pow(1.0 - y, beta) * std::pow(q, alpha) * std::log(1.0 - q);
    }
  }
  const double norm = 1.0 / std::max(peaks, 1);
  return make_op(Tensor(kScalar, loss * norm), {pred},
                 [target, alpha, beta, eps, norm](Node& self) {
                   Node& in = *self.inputs[0];
                   Tensor& g = in.grad_buffer();
                   const double up = self.grad[0] * norm;
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const double raw = in.value[i];
                     if (raw < eps || raw > 1.0 - eps) continue;  // clamped: flat
                     const double q = raw;
                     const double y = target[i];
                     double d;
                     if (y == 1.0) {
                       d = alpha * std::pow(1.0 - q, alpha - 1.0) * std::log(q) -
                           std::pow(1.0 - q, alpha) / q;
                     } else {
                       d = -std::pow(1.0 - y, beta) *
                           (alpha * std::pow(q, alpha - 1.0) * std::log(1.0 - q) -
                            std::pow(q, alpha) / (1.0 - q));
                     }
                     g[i] += up * d;
                   }
                 });
}

Var offset_l1_loss(const Var& offsets, std::span<const std::array<double, 2>> gt_offsets,
                   std::span<const PeakPixel> peaks) {
  const Shape& s = offsets.shape();
  if (s[1] != 2 || s[2] != 1) throw ShapeError("offset_l1_loss: expected N x 2 x 1 x H x W");
  if (gt_offsets.size() != static_cast<std::size_t>(s[0]) || peaks.size() != gt_offsets.size())
    throw ValueError("offset_l1_loss: one target and one peak per batch item required");
  std::vector<std::size_t> idx;
  std::vector<double> target;
  for (std::size_t n = 0; n < peaks.size(); ++n) {
    const auto& p = peaks[n];
    if (p.row < 0 || p.row >= s[3] || p.col < 0 || p.col >= s[4])
      throw ValueError("offset_l1_loss: peak pixel outside the offset map");
    for (int ch = 0; ch < 2; ++ch) {
      idx.push_back(offsets.value().index(static_cast<int>(n), ch, 0, p.row, p.col));
      target.push_back(gt_offsets[n][static_cast<std::size_t>(ch)]);
    }
  }
  const double norm = 1.0 / static_cast<double>(peaks.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i)
    loss += std::abs(offsets.value()[idx[i]] - target[i]);
  return make_op(Tensor(kScalar, loss * norm), {offsets}, [idx, target, norm](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double diff = in.value[idx[i]] - target[i];
      g[idx[i]] += self.grad[0] * norm * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
    }
  });
}

std::array<double, 2> extract_peak(const Tensor& heatmap, const Tensor& offsets, int stride) {
  const int H = heatmap.dim(3), W = heatmap.dim(4);
  if (H < 1 || W < 1) throw ValueError("extract_peak: empty heatmap");
  int br = 0, bc = 0;
  double best = heatmap.at(0, 0, 0, 0, 0);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const double v = heatmap.at(0, 0, 0, r, c);
      if (v > best) {
        best = v;
        br = r;
        bc = c;
      }
    }
  double dr = 0.0, dc = 0.0;
  if (!offsets.empty()) {
    dr = offsets.at(0, 0, 0, br, bc);
    dc = offsets.at(0, 1, 0, br, bc);
  }
  return {(br + dr) * stride, (bc + dc) * stride};
}

HeatmapTarget heatmap_target_for(std::array<double, 2> position, int stride, int rows, int cols) {
  const double r = position[0] / stride, c = position[1] / stride;
  HeatmapTarget t;
  t.peak.row = std::clamp(static_cast<int>(std::lround(r)), 0, rows - 1);
  t.peak.col = std::clamp(static_cast<int>(std::lround(c)), 0, cols - 1);
  t.offset = {r - t.peak.row, c - t.peak.col};
  return t;
}

std::array<int, 3> crop_window(std::array<int, 3> dims, std::array<double, 2> position, int crop_hw,
                               int crop_d) {
  if (crop_hw < 1 || crop_d < 1) throw ValueError("crop sizes must be positive");
  if (crop_hw > dims[1] || crop_hw > dims[2] || crop_d > dims[0])
    throw ValueError("crop " + std::to_string(crop_d) + "x" + std::to_string(crop_hw) + "x" +
                     std::to_string(crop_hw) + " larger than volume " + std::to_string(dims[0]) +
                     "x" + std::to_string(dims[1]) + "x" + std::to_string(dims[2]));
  auto place = [crop_hw](double centre, int extent) {
    const int start = static_cast<int>(std::floor(centre - crop_hw / 2.0 + 0.5));
    return std::clamp(start, 0, extent - crop_hw);
  };
  return {std::clamp((dims[0] - crop_d) / 2, 0, dims[0] - crop_d), place(position[0], dims[1]),
          place(position[1], dims[2])};
}

Crop crop_subvolume(const Volume& volume, std::array<double, 2> position, int crop_hw, int crop_d) {
  Crop out;
  out.origin = crop_window({volume.depth, volume.height, volume.width}, position, crop_hw, crop_d);
  out.volume = Volume(crop_d, crop_hw, crop_hw, volume.spacing_mm);
  for (int d = 0; d < crop_d; ++d)
    for (int h = 0; h < crop_hw; ++h) {
      const float* src = &volume.voxels[volume.index(d + out.origin[0], h + out.origin[1], out.origin[2])];
      std::copy(src, src + crop_hw, &out.volume.voxels[out.volume.index(d, h, 0)]);
    }
  return out;
}

}  // namespace tpnet
