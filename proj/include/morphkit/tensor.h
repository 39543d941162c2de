#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace morphkit {

using Shape = std::vector<size_t>;

size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::initializer_list<double> values);
  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t dim(size_t i) const { return shape_.at(i); }
  size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }
  // 2-D access.
  double& at(size_t r, size_t c) { return data_[r * shape_[1] + c]; }
  double at(size_t r, size_t c) const { return data_[r * shape_[1] + c]; }

  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace morphkit
