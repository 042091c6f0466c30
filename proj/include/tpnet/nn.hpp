#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tpnet/ops.hpp"
#include "tpnet/rng.hpp"

namespace tpnet {

// Ordered, named collection of trainable leaves. Names are unique and the
// order is the registration order, so serialization is stable.
class ParameterSet {
 public:
  Var add(const std::string& name, Tensor init);
  const Var& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var>> items_;
  std::map<std::string, std::size_t> index_;
};

// He-normal weights: std = gain * sqrt(2 / fan_in).
Tensor he_normal(const Shape& shape, double fan_in, Rng& rng, double gain = 1.0);

struct Conv {
  Var weight;
  Var bias;  // undefined when the layer has no bias
  ConvGeometry geo;

  Var operator()(const Var& x) const { return conv3d(x, weight, bias, geo); }
};

struct Deconv {
  Var weight;
  Var bias;
  ConvGeometry geo;

  Var operator()(const Var& x) const { return conv_transpose3d(x, weight, bias, geo); }
};

Conv make_conv(ParameterSet& params, const std::string& name, int in, int out,
               const ConvGeometry& geo, Rng& rng, bool with_bias = true, double gain = 1.0);
Deconv make_deconv(ParameterSet& params, const std::string& name, int in, int out,
                   const ConvGeometry& geo, Rng& rng, bool with_bias = true);

ConvGeometry spatial3x3(int stride = 1);
ConvGeometry temporal3(int stride = 1);
ConvGeometry pointwise(std::array<int, 3> stride = {1, 1, 1});

// 2D basic residual block acting independently on each depth slice
// (kernels 1x3x3). Strides spatially only.
class ResBlock2D {
 public:
  ResBlock2D() = default;
  ResBlock2D(ParameterSet& params, const std::string& name, int in, int out, int stride, Rng& rng,
             double branch_gain);
  Var operator()(const Var& x) const;

 private:
  Conv conv1_, conv2_;
  Conv shortcut_;
  bool has_shortcut_ = false;
};

// Factored (2+1)D residual block: each 3x3x3 convolution is split into a
// 1x3x3 spatial and a 3x1x1 temporal convolution with a rectifier between.
// Strides all three axes.
class ResBlock2Plus1D {
 public:
  ResBlock2Plus1D() = default;
  ResBlock2Plus1D(ParameterSet& params, const std::string& name, int in, int out, int stride,
                  Rng& rng, double branch_gain);
  Var operator()(const Var& x) const;

  // Width of the intermediate (spatial -> temporal) projection, chosen so the
  // factored pair has the parameter count of a full 3x3x3 convolution.
  static int mid_channels(int in, int out);

 private:
  Conv spatial1_, temporal1_, spatial2_, temporal2_;
  Conv shortcut_;
  bool has_shortcut_ = false;
};

}  // namespace tpnet
