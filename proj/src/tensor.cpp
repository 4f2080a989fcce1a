#include "rankiqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rankiqa/errors.hpp"

namespace rankiqa {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " holds " +
                     std::to_string(shape_numel(shape_)) + " elements but " +
                     std::to_string(data_.size()) + " values were given");
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(shape_));
  }
  return shape_[axis];
}

float& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

float Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::reshape(Shape shape) {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " +
                     shape_string(shape));
  }
  shape_ = std::move(shape);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

Tensor batch_item(const Tensor& batch, std::size_t i) {
  if (batch.rank() == 0 || i >= batch.dim(0)) {
    throw ShapeError("batch index " + std::to_string(i) + " out of range for " +
                     shape_string(batch.shape()));
  }
  Shape shape = batch.shape();
  const std::size_t stride = batch.size() / shape[0];
  shape[0] = 1;
  const auto first = batch.data().begin() + static_cast<std::ptrdiff_t>(i * stride);
  return Tensor(std::move(shape), std::vector<float>(first, first + static_cast<std::ptrdiff_t>(stride)));
}

Tensor stack(const std::vector<Tensor>& items) {
  if (items.empty()) throw ShapeError("cannot stack an empty list of tensors");
  const Shape& inner = items.front().shape();
  std::vector<float> data;
  data.reserve(items.size() * items.front().size());
  for (const auto& t : items) {
    if (t.shape() != inner) {
      throw ShapeError("cannot stack " + shape_string(t.shape()) + " with " + shape_string(inner));
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace rankiqa
