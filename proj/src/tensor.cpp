#include "csconf/tensor.hpp"

#include <cmath>
#include <string>

#include "csconf/error.hpp"

namespace csconf {

Tensor::Tensor(std::vector<std::uint64_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw ArgumentError("tensor needs at least one dimension");
  std::uint64_t count = 1;
  for (auto d : shape_) {
    if (d == 0) throw ArgumentError("tensor dimensions must be positive");
    count *= d;
  }
  if (count != data_.size()) {
    throw ArgumentError("tensor shape covers " + std::to_string(count) + " elements but data has " +
                        std::to_string(data_.size()));
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw ArgumentError("tensor elements must be finite");
  }
}

}  // namespace csconf
