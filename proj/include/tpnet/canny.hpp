#pragma once

#include <cstdint>
#include <vector>

namespace tpnet {

struct CannyParams {
  double sigma = 1.0;
  double low_threshold = 0.08;   // Sobel magnitude units on [0, 1] intensities
  double high_threshold = 0.20;
};

// Classical Canny: Gaussian blur, Sobel, non-maximum suppression along the
// quantized gradient direction, hysteresis with 8-connectivity. Returns a
// binary (0/1) map of size rows x cols, row-major.
std::vector<std::uint8_t> canny(const std::vector<double>& image, int rows, int cols,
                                const CannyParams& params = {});

}  // namespace tpnet
