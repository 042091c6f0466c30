#include "tpnet/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "tpnet/errors.hpp"

namespace tpnet {

std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(const Shape& shape, double fill) : shape_(shape), data_(numel(shape), fill) {
  for (int v : shape)
    if (v < 0) throw ShapeError("negative dimension in " + to_string(shape));
}

Tensor::Tensor(const Shape& shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != numel(shape))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(const Shape& shape) const {
  if (numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  return Tensor(shape, data_);
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack_batch: no items");
  Shape s = items[0].shape();
  int total = 0;
  for (const auto& t : items) {
    const Shape& o = t.shape();
    if (o[1] != s[1] || o[2] != s[2] || o[3] != s[3] || o[4] != s[4])
      throw ShapeError("stack_batch: mismatched item shape " + to_string(o));
    total += o[0];
  }
  s[0] = total;
  std::vector<double> data;
  data.reserve(numel(s));
  for (const auto& t : items) data.insert(data.end(), t.data().begin(), t.data().end());
  return Tensor(s, std::move(data));
}

Tensor batch_item(const Tensor& t, int n) {
  Shape s = t.shape();
  if (n < 0 || n >= s[0]) throw ShapeError("batch_item: index out of range");
  s[0] = 1;
  const std::size_t len = numel(s);
  auto first = t.data().begin() + static_cast<std::ptrdiff_t>(len * static_cast<std::size_t>(n));
  return Tensor(s, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(len)));
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace tpnet
