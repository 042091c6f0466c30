#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "tpnet/interval.hpp"
#include "tpnet/nn.hpp"
#include "tpnet/phantom.hpp"

namespace tpnet {

// Lightweight implant-region detector: residual encoder (total stride 32),
// three-deconvolution decoder (back to stride 4), condition embedding
// concatenated with the last decoder map, heatmap + offset heads.
struct DetectorConfig {
  std::vector<int> widths{16, 32, 64, 128};
  int blocks_per_stage = 2;
  int stem_width = 16;
  std::vector<int> decoder_widths{64, 32, 32};
  int embed_dim = 32;
  int head_width = 32;

  int total_stride() const { return 2 << widths.size(); }
  int output_stride() const { return total_stride() >> decoder_widths.size(); }
  void validate() const;
  bool operator==(const DetectorConfig&) const = default;
};

// heatmap: N x 1 x 1 x Ho x Wo in (0, 1); offsets: N x 2 x 1 x Ho x Wo
// (row, col) sub-pixel refinement in output-pixel units.
struct DetectorOutput {
  Var heatmap;
  Var offsets;
};

class Detector {
 public:
  Detector(DetectorConfig config, std::uint64_t init_seed);

  // slices: N x 1 x 1 x S x S with S divisible by the total stride.
  DetectorOutput forward(const Var& slices, std::span<const Condition> conditions) const;
  // Learned 3-row table lookup; one row per condition token.
  Var condition_embedding(std::span<const Condition> conditions) const;

  const DetectorConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  DetectorConfig config_;
  ParameterSet params_;
  Conv stem_;
  std::vector<ResBlock2D> blocks_;
  std::vector<Deconv> decoder_;
  Var embedding_;
  Conv heat1_, heat2_, offset1_, offset2_;
};

// exp(-d^2 / (2 sigma^2)) around the rounded position; 1 x 1 x 1 x rows x cols.
Tensor gaussian_target(std::array<double, 2> position, double sigma, int rows, int cols);

// Penalty-reduced pixel-wise focal loss for Gaussian heatmaps, normalized by
// the number of peak pixels (target == 1). pred is clamped to [eps, 1 - eps].
Var focal_loss(const Var& pred, const Tensor& target, double alpha = 2.0, double beta = 4.0,
               double eps = 1e-4);

struct PeakPixel {
  int row = 0;
  int col = 0;
};

// Batch mean of |pred_dr - dr| + |pred_dc - dc| read at each item's peak pixel.
Var offset_l1_loss(const Var& offsets, std::span<const std::array<double, 2>> gt_offsets,
                   std::span<const PeakPixel> peaks);

// Argmax (ties: smallest row, then smallest column) refined by its offsets and
// scaled by the output stride. Uses batch item 0.
std::array<double, 2> extract_peak(const Tensor& heatmap, const Tensor& offsets, int stride);

// Heatmap peak pixel and sub-pixel offset for an input-pixel position.
struct HeatmapTarget {
  PeakPixel peak;
  std::array<double, 2> offset{0.0, 0.0};
};
HeatmapTarget heatmap_target_for(std::array<double, 2> position, int stride, int rows, int cols);

struct Crop {
  Volume volume;
  std::array<int, 3> origin{0, 0, 0};  // (d, h, w) of the first voxel in the source
};

// Origin (d, h, w) of the crop window for a volume of size dims = (D, H, W).
std::array<int, 3> crop_window(std::array<int, 3> dims, std::array<double, 2> position, int crop_hw,
                               int crop_d);

// crop_d x crop_hw x crop_hw window: spatially centred on `position` then
// shifted inside the bounds; depth centred on D/2 then clamped.
Crop crop_subvolume(const Volume& volume, std::array<double, 2> position, int crop_hw, int crop_d);

inline Interval to_crop_coordinates(const Interval& iv, const Crop& crop) {
  return iv.shifted(-crop.origin[0]);
}
inline Interval to_volume_coordinates(const Interval& iv, const Crop& crop) {
  return iv.shifted(crop.origin[0]);
}

}  // namespace tpnet
