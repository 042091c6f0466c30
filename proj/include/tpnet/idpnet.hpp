#pragma once

#include <cstdint>
#include <vector>

#include "tpnet/interval.hpp"
#include "tpnet/nn.hpp"

namespace tpnet {

// Depth-prediction network. Channel widths and strides are configuration;
// each (2+1)D stage halves D, H and W, each 2D stage halves H and W.
struct DepthNetConfig {
  std::vector<int> widths3d{8, 16};
  std::vector<int> widths2d{32, 64};
  std::vector<int> decoder_widths{32, 16, 16};
  int head_hidden = 32;

  int depth_stride() const { return 1 << widths3d.size(); }
  int spatial_stride() const { return 1 << (widths3d.size() + widths2d.size()); }
  int feature_channels() const { return widths2d.empty() ? widths3d.back() : widths2d.back(); }
  void validate() const;
  bool operator==(const DepthNetConfig&) const = default;
};

class DepthNet {
 public:
  DepthNet(DepthNetConfig config, std::uint64_t init_seed);

  // N x 1 x D x H x W -> N x C x D/ds x H/ss x W/ss
  Var encode(const Var& volume) const;
  // Spatial x8 (three x2 deconvolutions), depth unchanged.
  Var decode(const Var& feature) const;
  // Pool, 1x1 conv, ReLU, 1x1 conv, ReLU: N x 2 of (start, length) in units of
  // the input depth.
  Var head_normalized(const Var& decoded) const;

  struct Output {
    Var interval;  // N x 2 (start, end) in input-slice units
    Var feature;   // encoder output, supervised by the texture loss
  };
  Output forward(const Var& volume) const;

  const DepthNetConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  DepthNetConfig config_;
  ParameterSet params_;
  std::vector<ResBlock2Plus1D> blocks3d_;
  std::vector<ResBlock2D> blocks2d_;
  std::vector<Deconv> decoder_;
  Conv head1_, head2_;
};

// (s, len) normalized -> (s * depth, (s + len) * depth); end >= start whenever
// len >= 0.
Var to_interval(const Var& normalized, int depth);

}  // namespace tpnet
