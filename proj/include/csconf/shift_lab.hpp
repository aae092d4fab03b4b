#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csconf/types.hpp"

namespace csconf {

// ---------------------------------------------------------------------------
// Classification task

struct TaskSpec {
  std::uint64_t seed = 1;
  int class_count = 2;
  std::vector<int> counts;             // training samples per class
  std::vector<int> validation_counts;  // empty: same as counts
  int feature_dim = 2;
  double separation = 3.0;  // distance of every class mean from the origin
  double noise = 1.0;       // per-feature standard deviation

  double imbalance_ratio() const;
  void validate() const;  // throws ArgumentError
};

// n_j = round(max_count * ratio^(-j / (c - 1))), the usual long-tail profile.
std::vector<int> long_tail_counts(int class_count, int max_count, double ratio);

struct FeatureSet {
  RowMatrix<double> features;  // [N, feature_dim]
  std::vector<int> labels;
};

struct ClassificationTask {
  TaskSpec spec;
  RowMatrix<double> means;  // [class_count, feature_dim]
  FeatureSet train;
  FeatureSet validation;
};

ClassificationTask gen_classification_task(const TaskSpec& spec);

// Fresh draws from the task's class-conditional distributions, grouped by
// class in ascending order. `stream` selects an independent sub-stream.
FeatureSet sample_features(const ClassificationTask& task, std::span<const int> counts, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Toy softmax-regression model

struct SoftmaxRegression {
  RowMatrix<double> weights;  // [feature_dim, class_count]
  Eigen::RowVectorXd bias;    // [class_count]
  double final_loss = 0.0;

  LogitMatrix logits(const RowMatrix<double>& features) const;
};

struct SoftmaxObjective {
  double loss = 0.0;
  RowMatrix<double> grad_weights;
  Eigen::RowVectorXd grad_bias;
};

// Mean cross-entropy of softmax(X W + b) against labels, with gradient.
SoftmaxObjective softmax_regression_objective(const RowMatrix<double>& features, std::span<const int> labels,
                                              const RowMatrix<double>& weights, const Eigen::RowVectorXd& bias);

// Full-batch gradient descent from all-zero parameters. Throws ArgumentError
// if fewer than two classes are represented.
SoftmaxRegression train_softmax_regression(const RowMatrix<double>& features, std::span<const int> labels,
                                           int class_count, int steps, double rate);

// ---------------------------------------------------------------------------
// Shifts

enum class ShiftKind { LabelShift, FeatureNoise, FeatureScale, Gamma, Blur, Contrast, MeanShift };

std::string_view shift_kind_name(ShiftKind kind);
ShiftKind parse_shift_kind(std::string_view name);

struct MagnitudeRange {
  double lo;
  double hi;
};

// label_shift [0, 1]      interpolation from the current prior to target_prior
// feature_noise [0, 5]    std of added Gaussian noise
// feature_scale [-0.9, 5] x * (1 + m)
// gamma [-0.9, 3]         rescale to [0, 1], x^(1 + m), rescale back
// blur [0, 5]             Gaussian filter std in pixels
// contrast [-0.9, 5]      (x - mean) * (1 + m) + mean
// mean_shift [-5, 5]      x + m
MagnitudeRange magnitude_range(ShiftKind kind);

struct ShiftSpec {
  ShiftKind kind = ShiftKind::FeatureNoise;
  double magnitude = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> target_prior;  // label_shift only

  void validate() const;
};

// "<kind> <magnitude> [seed=<n>] [prior=p0,p1,...]"
std::string format_shift_spec(const ShiftSpec& s);
ShiftSpec parse_shift_spec(std::string_view line);

// Deterministic largest-remainder quotas: counts summing to `total` that
// are proportional to `prior`.
std::vector<int> quota_counts(std::span<const double> prior, int total);

// Classification shifts: label_shift, feature_noise, feature_scale, mean_shift.
FeatureSet apply_shift(const FeatureSet& data, const ShiftSpec& shift, int class_count);

// Image shifts: every kind except label_shift.
RowMatrix<double> apply_shift(const RowMatrix<double>& image, const ShiftSpec& shift);

// ---------------------------------------------------------------------------
// Segmentation task

struct SegTaskSpec {
  std::uint64_t seed = 1;
  int train_cases = 12;
  int validation_cases = 16;
  int size = 64;
  double blob_sigma_min = 2.5;  // pixels; mask radius is 1.1774 * sigma
  double blob_sigma_max = 4.5;
  double contrast = 1.0;        // blob peak intensity above background
  double noise = 0.25;          // background Gaussian noise std
  int train_steps = 400;
  double train_rate = 1.0;
  double logit_scale = 1.0;     // multiplies trained logits; > 1 gives an overconfident segmenter

  void validate() const;
};

struct SegSample {
  RowMatrix<double> image;  // [size, size]
  std::vector<int> mask;    // row-major, 1 = foreground
};

// Per-pixel logistic model over (intensity, 3x3 mean, 5x5 mean) features.
struct ToySegmenter {
  SoftmaxRegression model;

  static RowMatrix<double> pixel_features(const RowMatrix<double>& image);
  SegCase predict(const SegSample& sample, bool with_labels = true) const;
};

struct SegmentationTask {
  SegTaskSpec spec;
  std::vector<SegSample> train;
  std::vector<SegSample> validation;
  ToySegmenter segmenter;
};

SegmentationTask gen_segmentation_task(const SegTaskSpec& spec);

std::vector<SegSample> sample_images(const SegTaskSpec& spec, int count, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Synthesis configuration

// Text grammar: key=value lines for the task, then zero or more
// "shift <shift spec>" lines; '#' starts a comment.
struct SynthConfig {
  Task task = Task::Classification;
  TaskSpec classification;
  SegTaskSpec segmentation;
  int target_scale = 2;  // classification targets draw target_scale x validation counts before shifting
  int train_steps = 1000;  // classification model schedule
  double train_rate = 0.5;
  int target_cases = 16;   // segmentation cases per target setting
  std::vector<ShiftSpec> shifts;
};

SynthConfig default_synth_config(Task task, std::uint64_t seed);
std::string format_synth_config(const SynthConfig& cfg);
SynthConfig parse_synth_config(const std::string& text);

struct SynthOutput {
  Dataset validation;
  std::vector<Dataset> targets;
};

// Runs the generators end to end: trains the toy model, predicts on
// validation and on each shifted target.
SynthOutput synthesize(const SynthConfig& cfg);

}  // namespace csconf
