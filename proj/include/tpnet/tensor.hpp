#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tpnet {

// Every tensor in the library is 5D, laid out N x C x D x H x W (row-major).
// 2D images use D = 1, pooled vectors use D = H = W = 1.
using Shape = std::array<int, 5>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int v : s) n *= static_cast<std::size_t>(v);
  return n;
}

std::string to_string(const Shape& s);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Shape& shape, double fill = 0.0);
  Tensor(const Shape& shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int c, int d, int h, int w) const {
    return (((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + d) * shape_[3] + h) *
               shape_[4] +
           w;
  }
  double& at(int n, int c, int d, int h, int w) { return data_[index(n, c, d, h, w)]; }
  double at(int n, int c, int d, int h, int w) const { return data_[index(n, c, d, h, w)]; }

  void fill(double v);
  // Same data, new shape with equal element count.
  Tensor reshaped(const Shape& shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_{0, 0, 0, 0, 0};
  std::vector<double> data_;
};

// Concatenates along the batch axis; all items must share C, D, H, W.
Tensor stack_batch(std::span<const Tensor> items);
// Extracts batch item n as a tensor with N = 1.
Tensor batch_item(const Tensor& t, int n);

bool all_finite(const Tensor& t);

}  // namespace tpnet
