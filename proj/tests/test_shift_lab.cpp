#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "csconf/calibration.hpp"
#include "csconf/segmentation.hpp"
#include "csconf/shift_lab.hpp"
#include "test_util.hpp"

using namespace csconf;

namespace {

std::vector<int> class_counts(const std::vector<int>& labels, int c) {
  std::vector<int> n(static_cast<std::size_t>(c), 0);
  for (int y : labels) ++n[static_cast<std::size_t>(y)];
  return n;
}

TaskSpec two_class_spec(std::vector<int> counts) {
  TaskSpec s;
  s.seed = 3;
  s.class_count = 2;
  s.counts = std::move(counts);
  return s;
}

const SegmentationTask& default_seg_task() {
  static const SegmentationTask task = gen_segmentation_task(SegTaskSpec{});
  return task;
}

}  // namespace

// ---------------------------------------------------------------------------
// Random source

TEST(SplitMix64, KnownSequenceAndRanges) {
  // Reference outputs of SplitMix64 seeded with 0.
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(rng.next(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(rng.next(), 0x06C45D188009454FULL);
  SplitMix64 r(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_EQ(derive_seed(5, 9), derive_seed(5, 9));
}

TEST(SplitMix64, NormalMoments) {
  SplitMix64 rng(7);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.04);
}

// ---------------------------------------------------------------------------
// Classification task

TEST(ClassificationTask, CountsMatchSpecExactly) {
  const auto t = gen_classification_task(two_class_spec({1000, 10}));
  EXPECT_EQ(class_counts(t.train.labels, 2), (std::vector<int>{1000, 10}));
  EXPECT_EQ(class_counts(t.validation.labels, 2), (std::vector<int>{1000, 10}));
  EXPECT_DOUBLE_EQ(t.spec.imbalance_ratio(), 100.0);
  EXPECT_EQ(t.train.features.rows(), 1010);
}

TEST(ClassificationTask, BalancedPrior) {
  const auto t = gen_classification_task(two_class_spec({100, 100}));
  const auto n = class_counts(t.train.labels, 2);
  EXPECT_DOUBLE_EQ(static_cast<double>(n[0]) / 200.0, 0.5);
  EXPECT_DOUBLE_EQ(t.spec.imbalance_ratio(), 1.0);
}

TEST(ClassificationTask, Deterministic) {
  TaskSpec s = two_class_spec({50, 20});
  s.validation_counts = {30, 30};
  const auto a = gen_classification_task(s);
  const auto b = gen_classification_task(s);
  EXPECT_EQ(a.train.features, b.train.features);
  EXPECT_EQ(a.validation.features, b.validation.features);
  EXPECT_EQ(a.train.labels, b.train.labels);
  s.seed = 4;
  EXPECT_NE(gen_classification_task(s).train.features, a.train.features);
}

TEST(ClassificationTask, LongTailProfileAndValidation) {
  EXPECT_EQ(long_tail_counts(5, 2000, 100.0), (std::vector<int>{2000, 632, 200, 63, 20}));
  TaskSpec s;
  s.counts = {0, 5};
  EXPECT_THROW(s.validate(), ArgumentError);
  s.counts = {5};
  EXPECT_THROW(s.validate(), ArgumentError);
}

// ---------------------------------------------------------------------------
// Softmax regression

TEST(SoftmaxRegression, SeparableDataReachesHighAccuracy) {
  TaskSpec s = two_class_spec({200, 200});
  s.separation = 4.0;
  s.noise = 0.5;
  const auto t = gen_classification_task(s);
  const auto m = train_softmax_regression(t.train.features, t.train.labels, 2, 2000, 0.5);
  const PredictionSet p(m.logits(t.train.features), t.train.labels);
  EXPECT_GE(real_accuracy(p), 0.99);
}

TEST(SoftmaxRegression, ZeroStepsGivesUniformPredictions) {
  const auto t = gen_classification_task(two_class_spec({20, 20}));
  const auto m = train_softmax_regression(t.train.features, t.train.labels, 2, 0, 0.5);
  EXPECT_TRUE(m.weights.isZero(0.0));
  EXPECT_TRUE(m.bias.isZero(0.0));
  const ProbMatrix p = softmax(m.logits(t.train.features), 1.0);
  EXPECT_TRUE((p.array() == 0.5).all());
}

TEST(SoftmaxRegression, GradientMatchesFiniteDifferences) {
  TaskSpec s;
  s.seed = 9;
  s.class_count = 3;
  s.counts = {4, 3, 2};
  s.feature_dim = 3;
  const auto t = gen_classification_task(s);
  const auto& x = t.train.features;
  const auto& y = t.train.labels;
  SplitMix64 rng(1);
  RowMatrix<double> w(3, 3);
  Eigen::RowVectorXd b(3);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 0.5 * rng.normal();
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.5 * rng.normal();
  const auto obj = softmax_regression_objective(x, y, w, b);
  const double eps = 1e-4;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    RowMatrix<double> wp = w, wm = w;
    wp.data()[k] += eps;
    wm.data()[k] -= eps;
    const double fd = (softmax_regression_objective(x, y, wp, b).loss - softmax_regression_objective(x, y, wm, b).loss) / (2 * eps);
    const double an = obj.grad_weights.data()[k];
    EXPECT_LE(std::abs(fd - an), 1e-5 * std::max(1.0, std::abs(an)));
  }
  for (Eigen::Index k = 0; k < b.size(); ++k) {
    Eigen::RowVectorXd bp = b, bm = b;
    bp(k) += eps;
    bm(k) -= eps;
    const double fd = (softmax_regression_objective(x, y, w, bp).loss - softmax_regression_objective(x, y, w, bm).loss) / (2 * eps);
    EXPECT_LE(std::abs(fd - obj.grad_bias(k)), 1e-5 * std::max(1.0, std::abs(obj.grad_bias(k))));
  }
}

TEST(SoftmaxRegression, SingleClassDataRejected) {
  RowMatrix<double> x = RowMatrix<double>::Ones(3, 2);
  EXPECT_THROW(train_softmax_regression(x, std::vector<int>{1, 1, 1}, 2, 10, 0.1), ArgumentError);
}

// ---------------------------------------------------------------------------
// Shifts

TEST(Shift, ZeroMagnitudeIsIdentity) {
  const auto t = gen_classification_task(two_class_spec({30, 10}));
  for (ShiftKind k : {ShiftKind::LabelShift, ShiftKind::FeatureNoise, ShiftKind::FeatureScale, ShiftKind::MeanShift}) {
    ShiftSpec s{k, 0.0, 5, {}};
    if (k == ShiftKind::LabelShift) s.target_prior = {0.5, 0.5};
    const auto out = apply_shift(t.validation, s, 2);
    EXPECT_EQ(out.features, t.validation.features) << shift_kind_name(k);
    EXPECT_EQ(out.labels, t.validation.labels);
  }
  const auto& img = default_seg_task().validation.front().image;
  for (ShiftKind k : {ShiftKind::FeatureNoise, ShiftKind::FeatureScale, ShiftKind::Gamma, ShiftKind::Blur,
                      ShiftKind::Contrast, ShiftKind::MeanShift}) {
    EXPECT_EQ(apply_shift(img, ShiftSpec{k, 0.0, 5, {}}), img) << shift_kind_name(k);
  }
}

TEST(Shift, GammaOnConstantImage) {
  const RowMatrix<double> img = RowMatrix<double>::Constant(8, 8, 0.37);
  EXPECT_EQ(apply_shift(img, ShiftSpec{ShiftKind::Gamma, 1.0, 0, {}}), img);
}

TEST(Shift, ImageKindsClosedForms) {
  RowMatrix<double> img(2, 2);
  img << 0.0, 1.0, 2.0, 4.0;
  RowMatrix<double> g = apply_shift(img, ShiftSpec{ShiftKind::Gamma, 1.0, 0, {}});
  EXPECT_NEAR(g(0, 1), 4.0 * 0.0625, 1e-15);
  EXPECT_NEAR(g(1, 0), 4.0 * 0.25, 1e-15);
  EXPECT_DOUBLE_EQ(g(1, 1), 4.0);
  RowMatrix<double> c = apply_shift(img, ShiftSpec{ShiftKind::Contrast, 1.0, 0, {}});
  EXPECT_NEAR(c(0, 0), -1.75, 1e-15);
  EXPECT_NEAR(c.mean(), img.mean(), 1e-15);
  EXPECT_NEAR(apply_shift(img, ShiftSpec{ShiftKind::MeanShift, -0.5, 0, {}})(1, 1), 3.5, 1e-15);
  EXPECT_NEAR(apply_shift(img, ShiftSpec{ShiftKind::FeatureScale, 0.5, 0, {}})(1, 1), 6.0, 1e-15);
  const RowMatrix<double> flat = RowMatrix<double>::Constant(9, 9, 2.0);
  EXPECT_TRUE(apply_shift(flat, ShiftSpec{ShiftKind::Blur, 1.5, 0, {}}).isApprox(flat, 1e-12));
}

TEST(Shift, ShapesPreservedAndInvalidRejected) {
  const auto& img = default_seg_task().validation.front().image;
  const auto b = apply_shift(img, ShiftSpec{ShiftKind::Blur, 1.2, 0, {}});
  EXPECT_EQ(b.rows(), img.rows());
  EXPECT_EQ(b.cols(), img.cols());
  EXPECT_THROW(apply_shift(img, ShiftSpec{ShiftKind::LabelShift, 0.5, 0, {0.5, 0.5}}), ArgumentError);
  EXPECT_THROW(apply_shift(img, ShiftSpec{ShiftKind::Gamma, 10.0, 0, {}}), ArgumentError);
  const auto t = gen_classification_task(two_class_spec({10, 10}));
  EXPECT_THROW(apply_shift(t.validation, ShiftSpec{ShiftKind::Blur, 1.0, 0, {}}, 2), ArgumentError);
  EXPECT_THROW(apply_shift(t.validation, ShiftSpec{ShiftKind::LabelShift, 0.5, 0, {1.0}}, 2), ArgumentError);
}

TEST(Shift, LabelShiftQuotas) {
  const auto t = gen_classification_task(two_class_spec({500, 500}));
  const auto out = apply_shift(t.validation, ShiftSpec{ShiftKind::LabelShift, 1.0, 3, {0.9, 0.1}}, 2);
  const auto n = class_counts(out.labels, 2);
  EXPECT_NEAR(n[0], 900, 1);
  EXPECT_NEAR(n[1], 100, 1);
  EXPECT_EQ(out.labels.size(), 1000u);
}

TEST(Shift, LabelShiftOnlyReusesOriginalRows) {
  const auto t = gen_classification_task(two_class_spec({60, 20}));
  const auto out = apply_shift(t.validation, ShiftSpec{ShiftKind::LabelShift, 0.7, 3, {0.1, 0.9}}, 2);
  for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
    bool found = false;
    for (Eigen::Index k = 0; k < t.validation.features.rows() && !found; ++k) {
      found = out.features.row(i) == t.validation.features.row(k) &&
              out.labels[static_cast<std::size_t>(i)] == t.validation.labels[static_cast<std::size_t>(k)];
    }
    EXPECT_TRUE(found) << "row " << i;
  }
}

TEST(Shift, QuotaCountsLargestRemainder) {
  EXPECT_EQ(quota_counts(std::vector<double>{0.5, 0.5}, 3), (std::vector<int>{2, 1}));
  EXPECT_EQ(quota_counts(std::vector<double>{0.2, 0.3, 0.5}, 10), (std::vector<int>{2, 3, 5}));
  const auto q = quota_counts(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}, 100);
  EXPECT_EQ(q[0] + q[1] + q[2], 100);
}

TEST(Shift, SpecTextRoundTrip) {
  const ShiftSpec s{ShiftKind::LabelShift, 0.25, 17, {0.125, 0.875}};
  const ShiftSpec r = parse_shift_spec(format_shift_spec(s));
  EXPECT_EQ(r.kind, s.kind);
  EXPECT_EQ(r.magnitude, s.magnitude);
  EXPECT_EQ(r.seed, s.seed);
  EXPECT_EQ(r.target_prior, s.target_prior);
  EXPECT_THROW(parse_shift_spec("warp 0.5"), FormatError);
}

// ---------------------------------------------------------------------------
// Segmentation task

TEST(SegmentationTask, ForegroundFractionBounded) {
  const auto& t = default_seg_task();
  for (const auto* group : {&t.train, &t.validation}) {
    for (const auto& s : *group) {
      const double frac = std::count(s.mask.begin(), s.mask.end(), 1) / static_cast<double>(s.mask.size());
      EXPECT_LE(frac, 0.05);
      EXPECT_GT(frac, 0.0);
    }
  }
}

TEST(SegmentationTask, ToySegmenterDice) {
  const auto& t = default_seg_task();
  std::vector<SegCase> cases;
  for (const auto& s : t.validation) cases.push_back(t.segmenter.predict(s));
  EXPECT_GE(mean_real_dsc(cases, 1), 0.7);
}

TEST(SegmentationTask, Deterministic) {
  SegTaskSpec s;
  s.train_cases = 3;
  s.validation_cases = 2;
  s.size = 32;
  s.train_steps = 50;
  const auto a = gen_segmentation_task(s);
  const auto b = gen_segmentation_task(s);
  EXPECT_EQ(a.validation[1].image, b.validation[1].image);
  EXPECT_EQ(a.validation[1].mask, b.validation[1].mask);
  EXPECT_EQ(a.segmenter.model.weights, b.segmenter.model.weights);
  EXPECT_EQ(a.segmenter.predict(a.validation[0]).pixels().logits(), b.segmenter.predict(b.validation[0]).pixels().logits());
}

// ---------------------------------------------------------------------------
// Synthesis configuration

TEST(SynthConfig, TextRoundTrip) {
  for (Task task : {Task::Classification, Task::Segmentation}) {
    const SynthConfig cfg = default_synth_config(task, 7);
    const std::string text = format_synth_config(cfg);
    EXPECT_EQ(format_synth_config(parse_synth_config(text)), text);
  }
  EXPECT_EQ(default_synth_config(Task::Classification, 1).shifts.size(), 20u);
  EXPECT_GE(default_synth_config(Task::Segmentation, 1).shifts.size(), 10u);
  EXPECT_THROW(parse_synth_config("task=classification\nbogus=1\n"), FormatError);
}

TEST(Synthesize, ClassificationTargetsShapeAndDeterminism) {
  SynthConfig cfg = default_synth_config(Task::Classification, 5);
  cfg.shifts.resize(3);
  const SynthOutput a = synthesize(cfg);
  const SynthOutput b = synthesize(cfg);
  ASSERT_EQ(a.targets.size(), 3u);
  EXPECT_EQ(a.validation.pooled().logits(), b.validation.pooled().logits());
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(a.targets[k].id, b.targets[k].id);
    EXPECT_EQ(a.targets[k].pooled().logits(), b.targets[k].pooled().logits());
    EXPECT_EQ(a.targets[k].class_count, 5);
  }
}
