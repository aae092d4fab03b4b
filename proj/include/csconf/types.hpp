#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csconf/tensor.hpp"

namespace csconf {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Samples along rows, classes along columns.
using LogitMatrix = RowMatrix<double>;
using ProbMatrix = RowMatrix<double>;

enum class Task { Classification, Segmentation };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Eigen::Index row_argmax(const Eigen::DenseBase<Derived>& row) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < row.size(); ++k) {
    if (row(k) > row(best)) best = k;
  }
  return best;
}

template <typename Derived>
std::vector<int> argmax_rows(const Eigen::DenseBase<Derived>& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = static_cast<int>(row_argmax(m.row(i)));
  return out;
}

// Logits of N samples over c classes, with optional ground truth.
class PredictionSet {
 public:
  explicit PredictionSet(LogitMatrix logits, std::optional<std::vector<int>> labels = std::nullopt);

  // logits: [N, c]; labels: [N] holding integral values.
  static PredictionSet from_tensors(const Tensor& logits, const Tensor* labels);

  const LogitMatrix& logits() const { return logits_; }
  Eigen::Index size() const { return logits_.rows(); }
  int class_count() const { return static_cast<int>(logits_.cols()); }

  bool has_labels() const { return labels_.has_value(); }
  // Throws DataError when the set carries no labels.
  const std::vector<int>& labels() const;

  // Predicted class per sample from the raw logits.
  const std::vector<int>& predicted() const { return predicted_; }

  Tensor logits_tensor() const;
  std::optional<Tensor> labels_tensor() const;

  PredictionSet subset(std::span<const Eigen::Index> rows) const;

 private:
  LogitMatrix logits_;
  std::optional<std::vector<int>> labels_;
  std::vector<int> predicted_;
};

PredictionSet concatenate(std::span<const PredictionSet> parts);

// One segmentation volume. Pixels are stored as a flat PredictionSet whose
// rows follow the row-major order of the spatial grid.
class SegCase {
 public:
  SegCase(std::vector<std::uint64_t> spatial_shape, PredictionSet pixels);

  // logits: [c, D1, ..., Dk] with k in {2, 3}; labels: [D1, ..., Dk].
  static SegCase from_tensors(const Tensor& logits, const Tensor* labels);

  const std::vector<std::uint64_t>& spatial_shape() const { return spatial_shape_; }
  const PredictionSet& pixels() const { return pixels_; }
  int class_count() const { return pixels_.class_count(); }
  bool has_labels() const { return pixels_.has_labels(); }

  Tensor logits_tensor() const;
  std::optional<Tensor> labels_tensor() const;

 private:
  std::vector<std::uint64_t> spatial_shape_;
  PredictionSet pixels_;
};

// A loaded collection of entries sharing role, task and class count.
struct Dataset {
  std::string id;
  Task task = Task::Classification;
  int class_count = 0;
  std::vector<std::string> entry_ids;
  std::vector<PredictionSet> sets;  // classification entries
  std::vector<SegCase> cases;       // segmentation entries

  bool has_labels() const;
  // All classification entries stacked in manifest order.
  PredictionSet pooled() const;
};

}  // namespace csconf
