#include "tpnet/nn.hpp"

#include <algorithm>
#include <cmath>

#include "tpnet/errors.hpp"

namespace tpnet {

Var ParameterSet::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ValueError("duplicate parameter name: " + name);
  index_[name] = items_.size();
  items_.emplace_back(name, Var(std::move(init), true));
  return items_.back().second;
}

const Var& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter: " + name);
  return items_[it->second].second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : items_) n += v.value().size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, v] : items_) {
    Var handle = v;
    handle.zero_grad();
  }
}

Tensor he_normal(const Shape& shape, double fan_in, Rng& rng, double gain) {
  Tensor t(shape);
  const double std = gain * std::sqrt(2.0 / std::max(fan_in, 1.0));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std * rng.normal();
  return t;
}

Conv make_conv(ParameterSet& params, const std::string& name, int in, int out,
               const ConvGeometry& geo, Rng& rng, bool with_bias, double gain) {
  const auto& k = geo.kernel;
  Conv c;
  c.geo = geo;
  c.weight = params.add(name + ".weight", he_normal({out, in, k[0], k[1], k[2]},
                                                    static_cast<double>(in) * k[0] * k[1] * k[2],
                                                    rng, gain));
  if (with_bias) c.bias = params.add(name + ".bias", Tensor({out, 1, 1, 1, 1}));
  return c;
}

Deconv make_deconv(ParameterSet& params, const std::string& name, int in, int out,
                   const ConvGeometry& geo, Rng& rng, bool with_bias) {
  const auto& k = geo.kernel;
  const auto& s = geo.stride;
  // Each output voxel receives in * volume(kernel) / volume(stride) terms.
  const double fan_in = static_cast<double>(in) * k[0] * k[1] * k[2] / (s[0] * s[1] * s[2]);
  Deconv d;
  d.geo = geo;
  d.weight = params.add(name + ".weight", he_normal({in, out, k[0], k[1], k[2]}, fan_in, rng));
  if (with_bias) d.bias = params.add(name + ".bias", Tensor({out, 1, 1, 1, 1}));
  return d;
}

ConvGeometry spatial3x3(int stride) {
  return ConvGeometry{{1, 3, 3}, {1, stride, stride}, {0, 1, 1}};
}

ConvGeometry temporal3(int stride) { return ConvGeometry{{3, 1, 1}, {stride, 1, 1}, {1, 0, 0}}; }

ConvGeometry pointwise(std::array<int, 3> stride) {
  return ConvGeometry{{1, 1, 1}, stride, {0, 0, 0}};
}

ResBlock2D::ResBlock2D(ParameterSet& params, const std::string& name, int in, int out, int stride,
                       Rng& rng, double branch_gain) {
  conv1_ = make_conv(params, name + ".conv1", in, out, spatial3x3(stride), rng);
  conv2_ = make_conv(params, name + ".conv2", out, out, spatial3x3(1), rng, true, branch_gain);
  has_shortcut_ = stride != 1 || in != out;
  if (has_shortcut_)
    shortcut_ = make_conv(params, name + ".shortcut", in, out, pointwise({1, stride, stride}), rng,
                          false);
}

Var ResBlock2D::operator()(const Var& x) const {
  Var branch = conv2_(relu(conv1_(x)));
  Var skip = has_shortcut_ ? shortcut_(x) : x;
  return relu(add(branch, skip));
}

int ResBlock2Plus1D::mid_channels(int in, int out) {
  constexpr int t = 3, d = 3;
  const int mid = (t * d * d * in * out) / (d * d * in + t * out);
  return std::max(mid, 1);
}

ResBlock2Plus1D::ResBlock2Plus1D(ParameterSet& params, const std::string& name, int in, int out,
                                 int stride, Rng& rng, double branch_gain) {
  const int mid1 = mid_channels(in, out);
  const int mid2 = mid_channels(out, out);
  spatial1_ = make_conv(params, name + ".conv1.spatial", in, mid1, spatial3x3(stride), rng);
  temporal1_ = make_conv(params, name + ".conv1.temporal", mid1, out, temporal3(stride), rng);
  spatial2_ = make_conv(params, name + ".conv2.spatial", out, mid2, spatial3x3(1), rng);
  temporal2_ =
      make_conv(params, name + ".conv2.temporal", mid2, out, temporal3(1), rng, true, branch_gain);
  has_shortcut_ = stride != 1 || in != out;
  if (has_shortcut_)
    shortcut_ = make_conv(params, name + ".shortcut", in, out, pointwise({stride, stride, stride}),
                          rng, false);
}

Var ResBlock2Plus1D::operator()(const Var& x) const {
  Var h = relu(temporal1_(relu(spatial1_(x))));
  Var branch = temporal2_(relu(spatial2_(h)));
  Var skip = has_shortcut_ ? shortcut_(x) : x;
  return relu(add(branch, skip));
}

}  // namespace tpnet
