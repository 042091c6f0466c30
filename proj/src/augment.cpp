#include "tpnet/augment.hpp"

#include <algorithm>
#include <cmath>

#include "tpnet/errors.hpp"
#include "tpnet/rng.hpp"

namespace tpnet {

IrdTransform draw_ird_transform(const IrdSample& sample, const AugmentConfig& config,
                                std::uint64_t seed) {
  const Shape& s = sample.image.shape();
  const std::array<int, 2> size{s[3], s[4]};
  Rng rng(seed);
  IrdTransform t;
  // Draw every random number unconditionally so the stream layout does not
  // depend on which augmentations are enabled.
  const double factor = config.crop_min + (1.0 - config.crop_min) * rng.uniform();
  const std::array<double, 2> u_origin{rng.uniform(), rng.uniform()};
  const double scale = rng.uniform(config.scale_min, config.scale_max);
  const bool flip = rng.bernoulli(config.flip_prob);

  if (config.random_crop && factor < 1.0) {
    for (int ax = 0; ax < 2; ++ax) {
      const double S = size[ax];
      const double u = factor;  // source pixels per output pixel
      const double cs = u * S;
      const double p = sample.position[ax];
      // Window [o, o + cs] in continuous coordinates (pixel i spans
      // [i - 0.5, i + 0.5]) that keeps the mapped position inside [0, S - 1].
      const double lo = std::max(-0.5, p - cs + 0.5 * u);
      const double hi = std::min(S - 0.5 - cs, p - 0.5 * u);
      const double o = lo + (hi - lo) * u_origin[ax];
      t.a[ax] = u;
      t.b[ax] = o + 0.5 * u - 0.5;
    }
  }

  if (config.random_scale && scale != 1.0) {
    IrdTransform scaled = t;
    bool inside = true;
    for (int ax = 0; ax < 2; ++ax) {
      const double c = 0.5 * (size[ax] - 1);
      scaled.a[ax] = t.a[ax] / scale;
      scaled.b[ax] = t.a[ax] * c * (1.0 - 1.0 / scale) + t.b[ax];
      const double q = (sample.position[ax] - scaled.b[ax]) / scaled.a[ax];
      if (q < 0.0 || q > size[ax] - 1) inside = false;
    }
    if (inside) t = scaled;
  }

  t.flip = config.random_flip && flip;
  return t;
}

IrdSample apply_ird_transform(const IrdSample& sample, const IrdTransform& t) {
  const Shape& s = sample.image.shape();
  if (s[0] != 1 || s[1] != 1 || s[2] != 1)
    throw ShapeError("augment: expected a 1x1x1xHxW slice, got " + to_string(s));
  if (t.is_identity()) return sample;
  const int H = s[3], W = s[4];
  IrdSample out;
  out.image = Tensor(s);
  const Tensor& src = sample.image;

  auto sample_at = [&](double r, double c) {
    r = std::clamp(r, 0.0, static_cast<double>(H - 1));
    c = std::clamp(c, 0.0, static_cast<double>(W - 1));
    const int r0 = static_cast<int>(std::floor(r)), c0 = static_cast<int>(std::floor(c));
    const int r1 = std::min(r0 + 1, H - 1), c1 = std::min(c0 + 1, W - 1);
    const double fr = r - r0, fc = c - c0;
    const double top = (1 - fc) * src[static_cast<std::size_t>(r0) * W + c0] +
                       fc * src[static_cast<std::size_t>(r0) * W + c1];
    const double bot = (1 - fc) * src[static_cast<std::size_t>(r1) * W + c0] +
                       fc * src[static_cast<std::size_t>(r1) * W + c1];
    return (1 - fr) * top + fr * bot;
  };

  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const int jj = t.flip ? W - 1 - j : j;
      out.image[static_cast<std::size_t>(i) * W + j] =
          sample_at(t.a[0] * i + t.b[0], t.a[1] * jj + t.b[1]);
    }

  out.position = {(sample.position[0] - t.b[0]) / t.a[0], (sample.position[1] - t.b[1]) / t.a[1]};
  // Guard against rounding just outside the image.
  out.position[0] = std::clamp(out.position[0], 0.0, static_cast<double>(H - 1));
  out.position[1] = std::clamp(out.position[1], 0.0, static_cast<double>(W - 1));
  out.condition = sample.condition;
  if (t.flip) {
    out.position[1] = (W - 1) - out.position[1];
    out.condition = mirrored(sample.condition);
  }
  return out;
}

IrdSample augment_ird(const IrdSample& sample, const AugmentConfig& config, std::uint64_t seed) {
  return apply_ird_transform(sample, draw_ird_transform(sample, config, seed));
}

Volume flip_horizontal(const Volume& v) {
  Volume out = v;
  for (int d = 0; d < v.depth; ++d)
    for (int h = 0; h < v.height; ++h)
      for (int w = 0; w < v.width; ++w) out.at(d, h, v.width - 1 - w) = v.at(d, h, w);
  return out;
}

bool augment_idpnet(Volume& crop, const AugmentConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  const bool flip = rng.bernoulli(config.flip_prob);
  if (!config.random_flip || !flip) return false;
  crop = flip_horizontal(crop);
  return true;
}

}  // namespace tpnet
