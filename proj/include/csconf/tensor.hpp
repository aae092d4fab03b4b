#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace csconf {

// N-dimensional array of 32-bit floats, row-major. Every dimension is
// positive and every element finite; both are checked on construction.
class Tensor {
 public:
  Tensor(std::vector<std::uint64_t> shape, std::vector<float> data);

  const std::vector<std::uint64_t>& shape() const { return shape_; }
  std::span<const float> data() const { return data_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::uint64_t dim(std::size_t axis) const { return shape_.at(axis); }

  float operator[](std::size_t i) const { return data_[i]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::uint64_t> shape_;
  std::vector<float> data_;
};

}  // namespace csconf
