#include "csconf/types.hpp"

#include <string>

#include "csconf/error.hpp"
#include "csconf/tensor_io.hpp"

namespace csconf {

std::string_view task_name(Task task) {
  return task == Task::Classification ? "classification" : "segmentation";
}

Task parse_task(std::string_view name) {
  if (name == "classification" || name == "cls") return Task::Classification;
  if (name == "segmentation" || name == "seg") return Task::Segmentation;
  throw ArgumentError("unknown task '" + std::string(name) + "'");
}

PredictionSet::PredictionSet(LogitMatrix logits, std::optional<std::vector<int>> labels)
    : logits_(std::move(logits)), labels_(std::move(labels)) {
  if (logits_.rows() < 1) throw ArgumentError("prediction set needs at least one sample");
  if (logits_.cols() < 2) throw ArgumentError("prediction set needs at least two classes");
  if (!logits_.allFinite()) throw ArgumentError("logits must be finite");
  if (labels_) {
    if (static_cast<Eigen::Index>(labels_->size()) != logits_.rows()) {
      throw ArgumentError("label count does not match sample count");
    }
    for (int y : *labels_) {
      if (y < 0 || y >= logits_.cols()) throw ArgumentError("label out of range: " + std::to_string(y));
    }
  }
  predicted_ = argmax_rows(logits_);
}

PredictionSet PredictionSet::from_tensors(const Tensor& logits, const Tensor* labels) {
  if (logits.ndim() != 2) throw DataError("classification logits must have shape [N, c]");
  const auto n = static_cast<Eigen::Index>(logits.dim(0));
  const auto c = static_cast<Eigen::Index>(logits.dim(1));
  LogitMatrix m = Eigen::Map<const RowMatrix<float>>(logits.data().data(), n, c).cast<double>();
  std::optional<std::vector<int>> y;
  if (labels) {
    if (labels->size() != static_cast<std::size_t>(n)) throw DataError("labels must have one entry per sample");
    y = labels_from_tensor(*labels);
  }
  try {
    return PredictionSet(std::move(m), std::move(y));
  } catch (const ArgumentError& e) {
    throw DataError(e.what());
  }
}

const std::vector<int>& PredictionSet::labels() const {
  if (!labels_) throw DataError("prediction set has no labels");
  return *labels_;
}

Tensor PredictionSet::logits_tensor() const {
  std::vector<float> data(static_cast<std::size_t>(logits_.size()));
  Eigen::Map<RowMatrix<float>>(data.data(), logits_.rows(), logits_.cols()) = logits_.cast<float>();
  return Tensor({static_cast<std::uint64_t>(logits_.rows()), static_cast<std::uint64_t>(logits_.cols())},
                std::move(data));
}

std::optional<Tensor> PredictionSet::labels_tensor() const {
  if (!labels_) return std::nullopt;
  return labels_to_tensor(*labels_, {static_cast<std::uint64_t>(labels_->size())});
}

PredictionSet PredictionSet::subset(std::span<const Eigen::Index> rows) const {
  LogitMatrix m(static_cast<Eigen::Index>(rows.size()), logits_.cols());
  std::optional<std::vector<int>> y;
  if (labels_) y.emplace();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    m.row(static_cast<Eigen::Index>(k)) = logits_.row(rows[k]);
    if (y) y->push_back((*labels_)[static_cast<std::size_t>(rows[k])]);
  }
  return PredictionSet(std::move(m), std::move(y));
}

PredictionSet concatenate(std::span<const PredictionSet> parts) {
  if (parts.empty()) throw ArgumentError("nothing to concatenate");
  const Eigen::Index c = parts.front().class_count();
  Eigen::Index n = 0;
  bool labelled = true;
  for (const auto& p : parts) {
    if (p.class_count() != c) throw DataError("class counts differ between prediction sets");
    n += p.size();
    labelled = labelled && p.has_labels();
  }
  LogitMatrix m(n, c);
  std::optional<std::vector<int>> y;
  if (labelled) y.emplace();
  Eigen::Index row = 0;
  for (const auto& p : parts) {
    m.middleRows(row, p.size()) = p.logits();
    row += p.size();
    if (y) y->insert(y->end(), p.labels().begin(), p.labels().end());
  }
  return PredictionSet(std::move(m), std::move(y));
}

SegCase::SegCase(std::vector<std::uint64_t> spatial_shape, PredictionSet pixels)
    : spatial_shape_(std::move(spatial_shape)), pixels_(std::move(pixels)) {
  if (spatial_shape_.size() < 2 || spatial_shape_.size() > 3) {
    throw ArgumentError("segmentation cases need 2 or 3 spatial dimensions");
  }
  std::uint64_t n = 1;
  for (auto d : spatial_shape_) n *= d;
  if (n != static_cast<std::uint64_t>(pixels_.size())) throw ArgumentError("spatial shape does not match pixel count");
}

SegCase SegCase::from_tensors(const Tensor& logits, const Tensor* labels) {
  if (logits.ndim() < 3 || logits.ndim() > 4) throw DataError("segmentation logits must have shape [c, D1, ..., Dk], k in {2,3}");
  std::vector<std::uint64_t> spatial(logits.shape().begin() + 1, logits.shape().end());
  const auto c = static_cast<Eigen::Index>(logits.dim(0));
  const auto n = static_cast<Eigen::Index>(logits.size()) / c;
  // Stored class-major; the pixel matrix is its transpose.
  LogitMatrix m = Eigen::Map<const RowMatrix<float>>(logits.data().data(), c, n).transpose().cast<double>();
  std::optional<std::vector<int>> y;
  if (labels) {
    if (labels->shape() != spatial) throw DataError("label volume shape does not match logits spatial shape");
    y = labels_from_tensor(*labels);
  }
  try {
    return SegCase(std::move(spatial), PredictionSet(std::move(m), std::move(y)));
  } catch (const ArgumentError& e) {
    throw DataError(e.what());
  }
}

Tensor SegCase::logits_tensor() const {
  const auto& m = pixels_.logits();
  std::vector<float> data(static_cast<std::size_t>(m.size()));
  Eigen::Map<RowMatrix<float>>(data.data(), m.cols(), m.rows()) = m.transpose().cast<float>();
  std::vector<std::uint64_t> shape{static_cast<std::uint64_t>(m.cols())};
  shape.insert(shape.end(), spatial_shape_.begin(), spatial_shape_.end());
  return Tensor(std::move(shape), std::move(data));
}

std::optional<Tensor> SegCase::labels_tensor() const {
  if (!pixels_.has_labels()) return std::nullopt;
  return labels_to_tensor(pixels_.labels(), spatial_shape_);
}

bool Dataset::has_labels() const {
  for (const auto& s : sets) {
    if (!s.has_labels()) return false;
  }
  for (const auto& c : cases) {
    if (!c.has_labels()) return false;
  }
  return !(sets.empty() && cases.empty());
}

PredictionSet Dataset::pooled() const {
  if (task != Task::Classification) throw DataError("pooling requires a classification dataset");
  return concatenate(sets);
}

}  // namespace csconf
