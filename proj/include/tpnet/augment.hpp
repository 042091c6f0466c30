#pragma once

#include <array>
#include <cstdint>

#include "tpnet/config.hpp"
#include "tpnet/phantom.hpp"
#include "tpnet/tensor.hpp"

namespace tpnet {

// One detector training example: a square 1 x 1 x 1 x S x S slice with its
// implant position (row, col) and condition.
struct IrdSample {
  Tensor image;
  std::array<double, 2> position{0.0, 0.0};
  Condition condition = Condition::middle;
};

// Output pixel x (either axis) samples the source at a * x + b (bilinear,
// borders replicated); flip mirrors columns afterwards.
struct IrdTransform {
  std::array<double, 2> a{1.0, 1.0};  // (row, col)
  std::array<double, 2> b{0.0, 0.0};
  bool flip = false;

  bool is_identity() const { return a == std::array<double, 2>{1.0, 1.0} &&
                                    b == std::array<double, 2>{0.0, 0.0} && !flip; }
};

// Draws crop (factor in [crop_min, 1], window containing the position),
// scale (about the centre, skipped when it would push the position out of the
// image) and flip. Deterministic in `seed`.
IrdTransform draw_ird_transform(const IrdSample& sample, const AugmentConfig& config,
                                std::uint64_t seed);
IrdSample apply_ird_transform(const IrdSample& sample, const IrdTransform& t);
IrdSample augment_ird(const IrdSample& sample, const AugmentConfig& config, std::uint64_t seed);

// Voxel (d, h, w) -> (d, h, W - 1 - w).
Volume flip_horizontal(const Volume& v);
// Horizontal flip with probability flip_prob (when enabled); returns whether
// it flipped. The depth interval is unaffected by construction.
bool augment_idpnet(Volume& crop, const AugmentConfig& config, std::uint64_t seed);

}  // namespace tpnet
