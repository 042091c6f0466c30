#include "tpnet/idpnet.hpp"

#include <cmath>

#include "tpnet/errors.hpp"

namespace tpnet {

namespace {
const ConvGeometry kUpsample{{1, 4, 4}, {1, 2, 2}, {0, 1, 1}};
}

void DepthNetConfig::validate() const {
  if (widths3d.empty()) throw ConfigError("depth network needs at least one (2+1)D stage");
  if (decoder_widths.empty()) throw ConfigError("depth network needs a decoder");
  if (head_hidden < 1) throw ConfigError("head_hidden must be positive");
  for (const auto* list : {&widths3d, &widths2d, &decoder_widths})
    for (int w : *list)
      if (w < 1) throw ConfigError("depth network widths must be positive");
}

DepthNet::DepthNet(DepthNetConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(init_seed);
  const auto total_blocks = static_cast<double>(config_.widths3d.size() + config_.widths2d.size());
  const double branch_gain = 1.0 / std::sqrt(total_blocks);
  int in = 1;
  for (std::size_t i = 0; i < config_.widths3d.size(); ++i) {
    blocks3d_.emplace_back(params_, "encoder3d." + std::to_string(i + 1), in, config_.widths3d[i],
                           2, rng, branch_gain);
    in = config_.widths3d[i];
  }
  for (std::size_t i = 0; i < config_.widths2d.size(); ++i) {
    blocks2d_.emplace_back(params_, "encoder2d." + std::to_string(i + 1), in, config_.widths2d[i],
                           2, rng, branch_gain);
    in = config_.widths2d[i];
  }
  for (std::size_t i = 0; i < config_.decoder_widths.size(); ++i) {
    decoder_.push_back(make_deconv(params_, "decoder" + std::to_string(i + 1), in,
                                   config_.decoder_widths[i], kUpsample, rng));
    in = config_.decoder_widths[i];
  }
  head1_ = make_conv(params_, "head.conv1", in, config_.head_hidden, pointwise(), rng);
  head2_ = make_conv(params_, "head.conv2", config_.head_hidden, 2, pointwise(), rng);
  // Zero output weights with bias (0.25, 0.5): the initial prediction is
  // (0.25 D, 0.75 D) for every input.
  head2_.weight.mutable_value().fill(0.0);
  head2_.bias.mutable_value()[0] = 0.25;
  head2_.bias.mutable_value()[1] = 0.5;
}

Var DepthNet::encode(const Var& volume) const {
  const Shape& s = volume.shape();
  if (s[1] != 1) throw ShapeError("depth network input must have one channel, got " + to_string(s));
  const int ds = config_.depth_stride(), ss = config_.spatial_stride();
  if (s[2] % ds != 0 || s[3] % ss != 0 || s[4] % ss != 0)
    throw ShapeError("input " + to_string(s) + " not divisible by depth stride " +
                     std::to_string(ds) + " and spatial stride " + std::to_string(ss));
  Var x = volume;
  for (const auto& b : blocks3d_) x = b(x);
  // Kernels of the 2D stages are 1 x 3 x 3, so every depth slice is processed
  // independently, exactly as if depth were folded into the batch axis.
  for (const auto& b : blocks2d_) x = b(x);
  return x;
}

Var DepthNet::decode(const Var& feature) const {
  Var x = feature;
  for (const auto& up : decoder_) x = relu(up(x));
  return x;
}

Var DepthNet::head_normalized(const Var& decoded) const {
  return relu(head2_(relu(head1_(global_avg_pool(decoded)))));
}

DepthNet::Output DepthNet::forward(const Var& volume) const {
  Output out;
  out.feature = encode(volume);
  out.interval = to_interval(head_normalized(decode(out.feature)), volume.shape()[2]);
  return out;
}

Var to_interval(const Var& normalized, int depth) {
  const Shape& s = normalized.shape();
  if (s[1] != 2 || s[2] != 1 || s[3] != 1 || s[4] != 1)
    throw ShapeError("to_interval: expected N x 2 x 1 x 1 x 1, got " + to_string(s));
  const double D = depth;
  Tensor out(s);
  for (int n = 0; n < s[0]; ++n) {
    const double start = normalized.value()[2 * n];
    const double len = normalized.value()[2 * n + 1];
    out[2 * n] = start * D;
    out[2 * n + 1] = (start + len) * D;
  }
  return make_op(std::move(out), {normalized}, [D](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t n = 0; n < g.size() / 2; ++n) {
      g[2 * n] += D * (self.grad[2 * n] + self.grad[2 * n + 1]);
      g[2 * n + 1] += D * self.grad[2 * n + 1];
    }
  });
}

}  // namespace tpnet
