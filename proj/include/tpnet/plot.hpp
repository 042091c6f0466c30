#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tpnet {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal SVG line chart with axes, tick labels and a legend.
void write_line_plot_svg(const std::filesystem::path& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<Series>& series);

// 8-bit RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // 3 * width * height

  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(3) * w * h, 0) {}
  void set(int row, int col, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

// Binary PPM (P6).
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

}  // namespace tpnet
