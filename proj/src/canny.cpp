#include "tpnet/canny.hpp"

#include <algorithm>
#include <cmath>

#include "tpnet/errors.hpp"

namespace tpnet {

namespace {

std::vector<double> blur(const std::vector<double>& img, int rows, int cols, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& v : k) v /= total;
  // Separable, replicate border.
  std::vector<double> tmp(img.size()), out(img.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * img[r * cols + std::clamp(c + i, 0, cols - 1)];
      tmp[r * cols + c] = acc;
    }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * tmp[std::clamp(r + i, 0, rows - 1) * cols + c];
      out[r * cols + c] = acc;
    }
  return out;
}

}  // namespace

std::vector<std::uint8_t> canny(const std::vector<double>& image, int rows, int cols,
                                const CannyParams& params) {
  if (rows < 1 || cols < 1 || image.size() != static_cast<std::size_t>(rows) * cols)
    throw ShapeError("canny: image size does not match rows x cols");
  if (params.low_threshold > params.high_threshold)
    throw ValueError("canny: low threshold above high threshold");

  const auto smooth = blur(image, rows, cols, params.sigma);
  auto px = [&](int r, int c) {
    return smooth[std::clamp(r, 0, rows - 1) * cols + std::clamp(c, 0, cols - 1)];
  };
  const std::size_t n = image.size();
  std::vector<double> mag(n);
  std::vector<std::uint8_t> dir(n);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double gx = px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1) - px(r - 1, c - 1) -
                        2 * px(r, c - 1) - px(r + 1, c - 1);
      const double gy = px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1) - px(r - 1, c - 1) -
                        2 * px(r - 1, c) - px(r - 1, c + 1);
      mag[r * cols + c] = std::hypot(gx, gy);
      // Quantize to 0, 45, 90, 135 degrees.
      double angle = std::atan2(gy, gx) * 180.0 / 3.14159265358979323846;
      if (angle < 0) angle += 180.0;
      std::uint8_t q = 0;
      if (angle >= 22.5 && angle < 67.5)
        q = 1;
      else if (angle >= 67.5 && angle < 112.5)
        q = 2;
      else if (angle >= 112.5 && angle < 157.5)
        q = 3;
      dir[r * cols + c] = q;
    }

  auto m = [&](int r, int c) {
    if (r < 0 || r >= rows || c < 0 || c >= cols) return 0.0;
    return mag[r * cols + c];
  };
  // 0 = none, 1 = weak, 2 = strong
  std::vector<std::uint8_t> cls(n, 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double v = mag[r * cols + c];
      if (v < params.low_threshold) continue;
      double a, b;
      switch (dir[r * cols + c]) {
        case 0:
          a = m(r, c - 1), b = m(r, c + 1);
          break;
        case 1:  // gradient along +x,+y (rows grow downward)
          a = m(r - 1, c - 1), b = m(r + 1, c + 1);
          break;
        case 2:
          a = m(r - 1, c), b = m(r + 1, c);
          break;
        default:
          a = m(r - 1, c + 1), b = m(r + 1, c - 1);
          break;
      }
      if (v < a || v < b) continue;
      cls[r * cols + c] = v >= params.high_threshold ? 2 : 1;
    }

  std::vector<std::uint8_t> edges(n, 0);
  std::vector<int> stack;
  for (std::size_t i = 0; i < n; ++i)
    if (cls[i] == 2) {
      edges[i] = 1;
      stack.push_back(static_cast<int>(i));
    }
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    const int r = i / cols, c = i % cols;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = r + dr, cc = c + dc;
        if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
        const int j = rr * cols + cc;
        if (cls[j] == 1 && !edges[j]) {
          edges[j] = 1;
          stack.push_back(j);
        }
      }
  }
  return edges;
}

}  // namespace tpnet
