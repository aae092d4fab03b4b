#include "csconf/shift_lab.hpp"

#include <algorithm>
#include <charconv>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "csconf/calibration.hpp"
#include "csconf/error.hpp"
#include "csconf/random.hpp"

namespace csconf {

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kValidationStream = 2;
constexpr std::uint64_t kTargetStreamBase = 100;

// Shortest text that parses back to the same double.
std::string fmt_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_real(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || !std::isfinite(v)) throw FormatError("bad number for " + what + ": '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw FormatError("bad integer for " + what + ": '" + s + "'");
  return v;
}

std::uint64_t parse_seed(const std::string& s) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || s.front() == '-') throw FormatError("bad seed '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

std::string join_ints(std::span<const int> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> parse_ints(const std::string& s, const std::string& what) {
  std::vector<int> v;
  for (const auto& p : split(s, ',')) v.push_back(static_cast<int>(parse_int(p, what)));
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Edge-replicating box mean with the given radius.
RowMatrix<double> box_mean(const RowMatrix<double>& img, int radius) {
  const Eigen::Index h = img.rows(), w = img.cols();
  RowMatrix<double> out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const auto yy = std::clamp<Eigen::Index>(y + dy, 0, h - 1);
        for (int dx = -radius; dx <= radius; ++dx) s += img(yy, std::clamp<Eigen::Index>(x + dx, 0, w - 1));
      }
      out(y, x) = s / static_cast<double>((2 * radius + 1) * (2 * radius + 1));
    }
  }
  return out;
}

Eigen::Index reflect(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * n - 2;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

RowMatrix<double> gaussian_blur(const RowMatrix<double>& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto& v : k) v /= ksum;
  const Eigen::Index h = img.rows(), w = img.cols();
  RowMatrix<double> tmp(h, w), out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[static_cast<std::size_t>(i + radius)] * img(y, reflect(x + i, w));
      tmp(y, x) = s;
    }
  }
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[static_cast<std::size_t>(i + radius)] * tmp(reflect(y + i, h), x);
      out(y, x) = s;
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Classification task

double TaskSpec::imbalance_ratio() const {
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  return static_cast<double>(*hi) / static_cast<double>(*lo);
}

void TaskSpec::validate() const {
  if (class_count < 2) throw ArgumentError("task needs at least two classes");
  if (counts.size() != static_cast<std::size_t>(class_count)) throw ArgumentError("counts must list every class");
  if (!validation_counts.empty() && validation_counts.size() != counts.size()) {
    throw ArgumentError("validation_counts must list every class");
  }
  for (int n : counts) {
    if (n < 1) throw ArgumentError("class counts must be >= 1");
  }
  for (int n : validation_counts) {
    if (n < 1) throw ArgumentError("class counts must be >= 1");
  }
  if (feature_dim < 1) throw ArgumentError("feature_dim must be >= 1");
  if (!(noise > 0.0) || !(separation >= 0.0)) throw ArgumentError("noise must be positive and separation non-negative");
}

std::vector<int> long_tail_counts(int class_count, int max_count, double ratio) {
  if (class_count < 2 || max_count < 1 || !(ratio >= 1.0)) throw ArgumentError("invalid long-tail profile");
  std::vector<int> out;
  for (int j = 0; j < class_count; ++j) {
    const double n = max_count * std::pow(ratio, -static_cast<double>(j) / (class_count - 1));
    out.push_back(std::max(1, static_cast<int>(std::lround(n))));
  }
  return out;
}

FeatureSet sample_features(const ClassificationTask& task, std::span<const int> counts, std::uint64_t stream) {
  const auto& spec = task.spec;
  if (counts.size() != static_cast<std::size_t>(spec.class_count)) throw ArgumentError("counts must list every class");
  SplitMix64 rng(derive_seed(spec.seed, stream));
  const int total = std::accumulate(counts.begin(), counts.end(), 0);
  FeatureSet out;
  out.features.resize(total, spec.feature_dim);
  out.labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (int j = 0; j < spec.class_count; ++j) {
    for (int k = 0; k < counts[static_cast<std::size_t>(j)]; ++k, ++row) {
      for (int f = 0; f < spec.feature_dim; ++f) out.features(row, f) = task.means(j, f) + spec.noise * rng.normal();
      out.labels.push_back(j);
    }
  }
  return out;
}

ClassificationTask gen_classification_task(const TaskSpec& spec) {
  spec.validate();
  ClassificationTask task;
  task.spec = spec;
  // Means sit evenly on a circle in the first two feature axes (on a line
  // when there is only one axis).
  task.means = RowMatrix<double>::Zero(spec.class_count, spec.feature_dim);
  for (int j = 0; j < spec.class_count; ++j) {
    if (spec.feature_dim == 1) {
      task.means(j, 0) = spec.separation * (j - 0.5 * (spec.class_count - 1));
    } else {
      const double a = 2.0 * std::numbers::pi * j / spec.class_count;
      task.means(j, 0) = spec.separation * std::cos(a);
      task.means(j, 1) = spec.separation * std::sin(a);
    }
  }
  task.train = sample_features(task, spec.counts, kTrainStream);
  task.validation =
      sample_features(task, spec.validation_counts.empty() ? spec.counts : spec.validation_counts, kValidationStream);
  return task;
}

// ---------------------------------------------------------------------------
// Softmax regression

LogitMatrix SoftmaxRegression::logits(const RowMatrix<double>& features) const {
  LogitMatrix z = features * weights;
  z.rowwise() += bias;
  return z;
}

SoftmaxObjective softmax_regression_objective(const RowMatrix<double>& features, std::span<const int> labels,
                                              const RowMatrix<double>& weights, const Eigen::RowVectorXd& bias) {
  const Eigen::Index n = features.rows();
  LogitMatrix p = features * weights;
  p.rowwise() += bias;
  SoftmaxObjective out;
  const Eigen::VectorXd m = p.rowwise().maxCoeff();
  p.colwise() -= m;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) loss -= p(i, labels[static_cast<std::size_t>(i)]);
  p = p.array().exp();
  const Eigen::VectorXd sum = p.rowwise().sum();
  loss += sum.array().log().sum();
  p.array().colwise() /= sum.array();
  for (Eigen::Index i = 0; i < n; ++i) p(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  p /= static_cast<double>(n);
  out.loss = loss / static_cast<double>(n);
  out.grad_weights = features.transpose() * p;
  out.grad_bias = p.colwise().sum();
  return out;
}

SoftmaxRegression train_softmax_regression(const RowMatrix<double>& features, std::span<const int> labels,
                                           int class_count, int steps, double rate) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows() || features.rows() == 0) {
    throw ArgumentError("one label per feature row expected");
  }
  std::vector<int> seen(static_cast<std::size_t>(class_count), 0);
  for (int y : labels) {
    if (y < 0 || y >= class_count) throw ArgumentError("label out of range");
    seen[static_cast<std::size_t>(y)] = 1;
  }
  if (std::accumulate(seen.begin(), seen.end(), 0) < class_count) {
    throw ArgumentError("every class needs at least one training sample");
  }
  SoftmaxRegression m;
  m.weights = RowMatrix<double>::Zero(features.cols(), class_count);
  m.bias = Eigen::RowVectorXd::Zero(class_count);
  for (int s = 0; s < steps; ++s) {
    const auto obj = softmax_regression_objective(features, labels, m.weights, m.bias);
    m.weights -= rate * obj.grad_weights;
    m.bias -= rate * obj.grad_bias;
  }
  m.final_loss = softmax_regression_objective(features, labels, m.weights, m.bias).loss;
  return m;
}

// ---------------------------------------------------------------------------
// Shifts

namespace {

constexpr std::array<std::string_view, 7> kShiftNames = {"label_shift", "feature_noise", "feature_scale", "gamma",
                                                         "blur",        "contrast",      "mean_shift"};

}  // namespace

std::string_view shift_kind_name(ShiftKind kind) { return kShiftNames[static_cast<std::size_t>(kind)]; }

ShiftKind parse_shift_kind(std::string_view name) {
  for (std::size_t i = 0; i < kShiftNames.size(); ++i) {
    if (kShiftNames[i] == name) return static_cast<ShiftKind>(i);
  }
  throw FormatError("unknown shift kind '" + std::string(name) + "'");
}

MagnitudeRange magnitude_range(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::LabelShift: return {0.0, 1.0};
    case ShiftKind::FeatureNoise: return {0.0, 5.0};
    case ShiftKind::FeatureScale: return {-0.9, 5.0};
    case ShiftKind::Gamma: return {-0.9, 3.0};
    case ShiftKind::Blur: return {0.0, 5.0};
    case ShiftKind::Contrast: return {-0.9, 5.0};
    case ShiftKind::MeanShift: return {-5.0, 5.0};
  }
  throw ArgumentError("unknown shift kind");
}

void ShiftSpec::validate() const {
  const auto r = magnitude_range(kind);
  if (!(magnitude >= r.lo && magnitude <= r.hi)) {
    throw ArgumentError(std::string(shift_kind_name(kind)) + " magnitude " + fmt_real(magnitude) + " outside [" +
                        fmt_real(r.lo) + ", " + fmt_real(r.hi) + "]");
  }
  if (kind == ShiftKind::LabelShift) {
    if (target_prior.size() < 2) throw ArgumentError("label_shift needs a target prior");
    double s = 0.0;
    for (double p : target_prior) {
      if (!(p >= 0.0)) throw ArgumentError("prior entries must be non-negative");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-6) throw ArgumentError("prior must sum to 1");
  } else if (!target_prior.empty()) {
    throw ArgumentError("only label_shift takes a prior");
  }
}

std::string format_shift_spec(const ShiftSpec& s) {
  std::string out = std::string(shift_kind_name(s.kind)) + " " + fmt_real(s.magnitude) + " seed=" + std::to_string(s.seed);
  if (!s.target_prior.empty()) {
    out += " prior=";
    for (std::size_t i = 0; i < s.target_prior.size(); ++i) out += (i ? "," : "") + fmt_real(s.target_prior[i]);
  }
  return out;
}

ShiftSpec parse_shift_spec(std::string_view line) {
  std::istringstream in{std::string(line)};
  std::string kind, mag, tok;
  if (!(in >> kind >> mag)) throw FormatError("shift spec needs '<kind> <magnitude>'");
  ShiftSpec s;
  s.kind = parse_shift_kind(kind);
  s.magnitude = parse_real(mag, "shift magnitude");
  while (in >> tok) {
    if (tok.rfind("seed=", 0) == 0) {
      s.seed = parse_seed(tok.substr(5));
    } else if (tok.rfind("prior=", 0) == 0) {
      for (const auto& p : split(tok.substr(6), ',')) s.target_prior.push_back(parse_real(p, "prior"));
    } else {
      throw FormatError("unexpected shift token '" + tok + "'");
    }
  }
  try {
    s.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  return s;
}

std::vector<int> quota_counts(std::span<const double> prior, int total) {
  const double sum = std::accumulate(prior.begin(), prior.end(), 0.0);
  if (prior.empty() || !(sum > 0.0) || total < 0) throw ArgumentError("invalid prior for quota counts");
  std::vector<int> out(prior.size());
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t j = 0; j < prior.size(); ++j) {
    const double exact = prior[j] / sum * total;
    const double fl = std::floor(exact + 1e-9);
    out[j] = static_cast<int>(fl);
    assigned += out[j];
    rem.emplace_back(exact - fl, j);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) out[rem[k % rem.size()].second] += 1;
  return out;
}

FeatureSet apply_shift(const FeatureSet& data, const ShiftSpec& shift, int class_count) {
  shift.validate();
  if (shift.kind == ShiftKind::Gamma || shift.kind == ShiftKind::Blur || shift.kind == ShiftKind::Contrast) {
    throw ArgumentError(std::string(shift_kind_name(shift.kind)) + " applies to images only");
  }
  if (shift.magnitude == 0.0) return data;
  const double m = shift.magnitude;
  FeatureSet out = data;
  switch (shift.kind) {
    case ShiftKind::FeatureNoise: {
      SplitMix64 rng(derive_seed(shift.seed, 0));
      for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
        for (Eigen::Index f = 0; f < out.features.cols(); ++f) out.features(i, f) += m * rng.normal();
      }
      return out;
    }
    case ShiftKind::FeatureScale: out.features *= 1.0 + m; return out;
    case ShiftKind::MeanShift: out.features.array() += m; return out;
    case ShiftKind::LabelShift: break;
    default: break;
  }

  if (shift.target_prior.size() != static_cast<std::size_t>(class_count)) {
    throw ArgumentError("label_shift prior must have one entry per class");
  }
  const int n = static_cast<int>(data.labels.size());
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(class_count));
  for (int i = 0; i < n; ++i) {
    const int y = data.labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= class_count) throw ArgumentError("label out of range");
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }
  std::vector<double> prior(static_cast<std::size_t>(class_count));
  for (int j = 0; j < class_count; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    prior[jj] = (1.0 - m) * static_cast<double>(by_class[jj].size()) / n + m * shift.target_prior[jj];
  }
  const auto quota = quota_counts(prior, n);
  std::vector<Eigen::Index> chosen;
  chosen.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < class_count; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    auto idx = by_class[jj];
    const auto want = static_cast<std::size_t>(quota[jj]);
    if (want == 0) continue;
    if (idx.empty()) throw ArgumentError("label_shift cannot create samples for an absent class");
    // Seeded Fisher-Yates; whole passes repeat the class when upsampling.
    SplitMix64 rng(derive_seed(shift.seed, 1 + jj));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    for (std::size_t k = 0; k < want; ++k) chosen.push_back(idx[k % idx.size()]);
  }
  std::sort(chosen.begin(), chosen.end());
  out.features.resize(static_cast<Eigen::Index>(chosen.size()), data.features.cols());
  out.labels.clear();
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    out.features.row(static_cast<Eigen::Index>(k)) = data.features.row(chosen[k]);
    out.labels.push_back(data.labels[static_cast<std::size_t>(chosen[k])]);
  }
  return out;
}

RowMatrix<double> apply_shift(const RowMatrix<double>& image, const ShiftSpec& shift) {
  shift.validate();
  if (shift.kind == ShiftKind::LabelShift) throw ArgumentError("label_shift applies to classification data only");
  if (shift.magnitude == 0.0) return image;
  const double m = shift.magnitude;
  RowMatrix<double> out = image;
  switch (shift.kind) {
    case ShiftKind::FeatureNoise: {
      SplitMix64 rng(derive_seed(shift.seed, 0));
      for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += m * rng.normal();
      break;
    }
    case ShiftKind::FeatureScale: out *= 1.0 + m; break;
    case ShiftKind::MeanShift: out.array() += m; break;
    case ShiftKind::Gamma: {
      const double lo = image.minCoeff(), hi = image.maxCoeff();
      if (hi > lo) {
        out = (((image.array() - lo) / (hi - lo)).pow(1.0 + m) * (hi - lo) + lo).matrix();
      }
      break;
    }
    case ShiftKind::Contrast: {
      const double mean = image.mean();
      out = ((image.array() - mean) * (1.0 + m) + mean).matrix();
      break;
    }
    case ShiftKind::Blur: out = gaussian_blur(image, m); break;
    case ShiftKind::LabelShift: break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation task

void SegTaskSpec::validate() const {
  if (train_cases < 1 || validation_cases < 1) throw ArgumentError("segmentation task needs cases");
  if (size < 16) throw ArgumentError("image size must be >= 16");
  if (!(blob_sigma_min > 0.0) || blob_sigma_max < blob_sigma_min) throw ArgumentError("invalid blob size range");
  if (3.0 * blob_sigma_max + 1.0 >= 0.5 * size) throw ArgumentError("blob too large for the image");
  if (!(noise >= 0.0) || !(contrast > 0.0)) throw ArgumentError("invalid noise or contrast");
  if (train_steps < 0 || !(train_rate > 0.0)) throw ArgumentError("invalid training schedule");
  if (!(logit_scale > 0.0) || !std::isfinite(logit_scale)) throw ArgumentError("logit_scale must be positive");
}

std::vector<SegSample> sample_images(const SegTaskSpec& spec, int count, std::uint64_t stream) {
  spec.validate();
  SplitMix64 rng(derive_seed(spec.seed, stream));
  std::vector<SegSample> out;
  const int n = spec.size;
  for (int k = 0; k < count; ++k) {
    const double sigma = spec.blob_sigma_min + (spec.blob_sigma_max - spec.blob_sigma_min) * rng.uniform();
    const double margin = 3.0 * sigma + 1.0;
    const double cy = margin + (n - 1 - 2 * margin) * rng.uniform();
    const double cx = margin + (n - 1 - 2 * margin) * rng.uniform();
    // Foreground is where the blob is above half its peak.
    const double r2_mask = 2.0 * std::log(2.0) * sigma * sigma;
    SegSample s;
    s.image.resize(n, n);
    s.mask.resize(static_cast<std::size_t>(n * n));
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        s.image(y, x) = spec.contrast * std::exp(-r2 / (2.0 * sigma * sigma)) + spec.noise * rng.normal();
        s.mask[static_cast<std::size_t>(y * n + x)] = r2 <= r2_mask ? 1 : 0;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

RowMatrix<double> ToySegmenter::pixel_features(const RowMatrix<double>& image) {
  const RowMatrix<double> m3 = box_mean(image, 1);
  const RowMatrix<double> m5 = box_mean(image, 2);
  RowMatrix<double> f(image.size(), 3);
  f.col(0) = Eigen::Map<const Eigen::VectorXd>(image.data(), image.size());
  f.col(1) = Eigen::Map<const Eigen::VectorXd>(m3.data(), m3.size());
  f.col(2) = Eigen::Map<const Eigen::VectorXd>(m5.data(), m5.size());
  return f;
}

SegCase ToySegmenter::predict(const SegSample& sample, bool with_labels) const {
  LogitMatrix z = model.logits(pixel_features(sample.image));
  std::optional<std::vector<int>> labels;
  if (with_labels) labels = sample.mask;
  return SegCase({static_cast<std::uint64_t>(sample.image.rows()), static_cast<std::uint64_t>(sample.image.cols())},
                 PredictionSet(std::move(z), std::move(labels)));
}

SegmentationTask gen_segmentation_task(const SegTaskSpec& spec) {
  spec.validate();
  SegmentationTask task;
  task.spec = spec;
  task.train = sample_images(spec, spec.train_cases, kTrainStream);
  task.validation = sample_images(spec, spec.validation_cases, kValidationStream);
  const Eigen::Index per = static_cast<Eigen::Index>(spec.size) * spec.size;
  RowMatrix<double> features(per * spec.train_cases, 3);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(features.rows()));
  for (int k = 0; k < spec.train_cases; ++k) {
    features.middleRows(k * per, per) = ToySegmenter::pixel_features(task.train[static_cast<std::size_t>(k)].image);
    const auto& mask = task.train[static_cast<std::size_t>(k)].mask;
    labels.insert(labels.end(), mask.begin(), mask.end());
  }
  // Train on standardized features, then fold the scaling back into the weights.
  const Eigen::RowVectorXd mu = features.colwise().mean();
  const Eigen::RowVectorXd sd =
      ((features.rowwise() - mu).array().square().colwise().mean().sqrt()).max(1e-12).matrix();
  const RowMatrix<double> standardized = (features.rowwise() - mu).array().rowwise() / sd.array();
  SoftmaxRegression model = train_softmax_regression(standardized, labels, 2, spec.train_steps, spec.train_rate);
  model.weights = model.weights.array().colwise() / sd.transpose().array();
  model.bias -= mu * model.weights;
  model.weights *= spec.logit_scale;
  model.bias *= spec.logit_scale;
  task.segmenter.model = std::move(model);
  return task;
}

// ---------------------------------------------------------------------------
// Synthesis configuration

SynthConfig default_synth_config(Task task, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.task = task;
  if (task == Task::Classification) {
    auto& s = cfg.classification;
    s.seed = seed;
    s.class_count = 5;
    s.counts = long_tail_counts(5, 2000, 100.0);
    // Balanced held-out data, as in long-tailed benchmarks.
    s.validation_counts = std::vector<int>(5, 400);
    s.feature_dim = 2;
    s.separation = 3.0;
    s.noise = 1.0;
    std::vector<double> train_prior;
    for (int n : s.counts) train_prior.push_back(static_cast<double>(n));
    const double total = std::accumulate(train_prior.begin(), train_prior.end(), 0.0);
    for (auto& p : train_prior) p /= total;
    std::vector<double> reversed(train_prior.rbegin(), train_prior.rend());
    std::uint64_t k = 1;
    for (const auto& prior : {train_prior, reversed}) {
      for (double m : {0.1, 0.2, 0.3, 0.4, 0.5}) cfg.shifts.push_back({ShiftKind::LabelShift, m, k++, prior});
    }
    for (double m : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}) {
      cfg.shifts.push_back({ShiftKind::FeatureNoise, m, k++, {}});
    }
  } else {
    cfg.segmentation.seed = seed;
    std::uint64_t k = 1;
    // Magnitudes keep some predicted foreground in every case.
    const std::vector<std::pair<ShiftKind, double>> shifts = {
        {ShiftKind::Gamma, 0.3},         {ShiftKind::Gamma, 0.6},        {ShiftKind::Gamma, -0.3},
        {ShiftKind::Contrast, -0.3},     {ShiftKind::Contrast, 0.3},     {ShiftKind::MeanShift, -0.1},
        {ShiftKind::MeanShift, 0.1},     {ShiftKind::Blur, 0.7},         {ShiftKind::Blur, 1.2},
        {ShiftKind::FeatureNoise, 0.1},  {ShiftKind::FeatureNoise, 0.2}, {ShiftKind::FeatureScale, -0.2},
        {ShiftKind::FeatureScale, 0.2},
    };
    for (const auto& [kind, m] : shifts) cfg.shifts.push_back({kind, m, k++, {}});
  }
  return cfg;
}

std::string format_synth_config(const SynthConfig& cfg) {
  std::ostringstream out;
  out << "task=" << (cfg.task == Task::Classification ? "cls" : "seg") << '\n';
  if (cfg.task == Task::Classification) {
    const auto& s = cfg.classification;
    out << "seed=" << s.seed << '\n';
    out << "class_count=" << s.class_count << '\n';
    out << "counts=" << join_ints(s.counts) << '\n';
    if (!s.validation_counts.empty()) out << "validation_counts=" << join_ints(s.validation_counts) << '\n';
    out << "feature_dim=" << s.feature_dim << '\n';
    out << "separation=" << fmt_real(s.separation) << '\n';
    out << "noise=" << fmt_real(s.noise) << '\n';
    out << "target_scale=" << cfg.target_scale << '\n';
    out << "train_steps=" << cfg.train_steps << '\n';
    out << "train_rate=" << fmt_real(cfg.train_rate) << '\n';
  } else {
    const auto& s = cfg.segmentation;
    out << "seed=" << s.seed << '\n';
    out << "train_cases=" << s.train_cases << '\n';
    out << "validation_cases=" << s.validation_cases << '\n';
    out << "target_cases=" << cfg.target_cases << '\n';
    out << "size=" << s.size << '\n';
    out << "blob_sigma_min=" << fmt_real(s.blob_sigma_min) << '\n';
    out << "blob_sigma_max=" << fmt_real(s.blob_sigma_max) << '\n';
    out << "contrast=" << fmt_real(s.contrast) << '\n';
    out << "noise=" << fmt_real(s.noise) << '\n';
    out << "train_steps=" << s.train_steps << '\n';
    out << "train_rate=" << fmt_real(s.train_rate) << '\n';
    out << "logit_scale=" << fmt_real(s.logit_scale) << '\n';
  }
  for (const auto& sh : cfg.shifts) out << "shift " << format_shift_spec(sh) << '\n';
  return out.str();
}

SynthConfig parse_synth_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::vector<ShiftSpec> shifts;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("shift ", 0) == 0) {
      shifts.push_back(parse_shift_spec(line.substr(6)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected key=value or 'shift ...': '" + line + "'");
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  std::map<std::string, std::string> keys;
  for (const auto& [k, v] : kv) {
    if (!keys.emplace(k, v).second) throw FormatError("repeated key '" + k + "'");
  }
  if (!keys.count("task")) throw FormatError("config needs task=cls|seg");
  Task task;
  try {
    task = parse_task(keys["task"]);
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  const std::uint64_t seed = keys.count("seed") ? parse_seed(keys["seed"]) : 1;
  SynthConfig cfg = default_synth_config(task, seed);
  cfg.shifts = std::move(shifts);
  keys.erase("task");
  keys.erase("seed");
  for (const auto& [k, v] : keys) {
    if (task == Task::Classification) {
      auto& s = cfg.classification;
      if (k == "class_count") s.class_count = static_cast<int>(parse_int(v, k));
      else if (k == "counts") s.counts = parse_ints(v, k);
      else if (k == "validation_counts") s.validation_counts = parse_ints(v, k);
      else if (k == "feature_dim") s.feature_dim = static_cast<int>(parse_int(v, k));
      else if (k == "separation") s.separation = parse_real(v, k);
      else if (k == "noise") s.noise = parse_real(v, k);
      else if (k == "target_scale") cfg.target_scale = static_cast<int>(parse_int(v, k));
      else if (k == "train_steps") cfg.train_steps = static_cast<int>(parse_int(v, k));
      else if (k == "train_rate") cfg.train_rate = parse_real(v, k);
      else throw FormatError("unknown classification key '" + k + "'");
    } else {
      auto& s = cfg.segmentation;
      if (k == "train_cases") s.train_cases = static_cast<int>(parse_int(v, k));
      else if (k == "validation_cases") s.validation_cases = static_cast<int>(parse_int(v, k));
      else if (k == "target_cases") cfg.target_cases = static_cast<int>(parse_int(v, k));
      else if (k == "size") s.size = static_cast<int>(parse_int(v, k));
      else if (k == "blob_sigma_min") s.blob_sigma_min = parse_real(v, k);
      else if (k == "blob_sigma_max") s.blob_sigma_max = parse_real(v, k);
      else if (k == "contrast") s.contrast = parse_real(v, k);
      else if (k == "noise") s.noise = parse_real(v, k);
      else if (k == "train_steps") s.train_steps = static_cast<int>(parse_int(v, k));
      else if (k == "train_rate") s.train_rate = parse_real(v, k);
      else if (k == "logit_scale") s.logit_scale = parse_real(v, k);
      else throw FormatError("unknown segmentation key '" + k + "'");
    }
  }
  try {
    if (task == Task::Classification) {
      cfg.classification.validate();
      if (cfg.target_scale < 1 || cfg.train_steps < 0 || !(cfg.train_rate > 0.0)) {
        throw ArgumentError("invalid target_scale or training schedule");
      }
    } else {
      cfg.segmentation.validate();
      if (cfg.target_cases < 1) throw ArgumentError("target_cases must be >= 1");
    }
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  return cfg;
}

namespace {

std::string setting_id(std::size_t k, const ShiftSpec& s) {
  std::ostringstream out;
  out << "target_" << std::setw(2) << std::setfill('0') << k << '_' << shift_kind_name(s.kind);
  return out.str();
}

}  // namespace

SynthOutput synthesize(const SynthConfig& cfg) {
  SynthOutput out;
  if (cfg.task == Task::Classification) {
    const auto task = gen_classification_task(cfg.classification);
    const int c = cfg.classification.class_count;
    const auto model = train_softmax_regression(task.train.features, task.train.labels, c, cfg.train_steps, cfg.train_rate);
    const auto make = [&](std::string id, const FeatureSet& fs) {
      Dataset d;
      d.id = std::move(id);
      d.task = Task::Classification;
      d.class_count = c;
      d.entry_ids = {"all"};
      d.sets.emplace_back(model.logits(fs.features), fs.labels);
      return d;
    };
    out.validation = make("validation", task.validation);
    const auto& vc = task.spec.validation_counts.empty() ? task.spec.counts : task.spec.validation_counts;
    std::vector<int> base_counts;
    for (int n : vc) base_counts.push_back(n * cfg.target_scale);
    for (std::size_t k = 0; k < cfg.shifts.size(); ++k) {
      const FeatureSet base = sample_features(task, base_counts, kTargetStreamBase + k);
      out.targets.push_back(make(setting_id(k, cfg.shifts[k]), apply_shift(base, cfg.shifts[k], c)));
    }
  } else {
    const auto task = gen_segmentation_task(cfg.segmentation);
    const auto make = [&](std::string id, const std::vector<SegSample>& samples) {
      Dataset d;
      d.id = std::move(id);
      d.task = Task::Segmentation;
      d.class_count = 2;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        std::ostringstream name;
        name << "case_" << std::setw(3) << std::setfill('0') << i;
        d.entry_ids.push_back(name.str());
        d.cases.push_back(task.segmenter.predict(samples[i]));
      }
      return d;
    };
    out.validation = make("validation", task.validation);
    for (std::size_t k = 0; k < cfg.shifts.size(); ++k) {
      auto samples = sample_images(cfg.segmentation, cfg.target_cases, kTargetStreamBase + k);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        ShiftSpec s = cfg.shifts[k];
        s.seed = derive_seed(s.seed, i);
        samples[i].image = apply_shift(samples[i].image, s);
      }
      out.targets.push_back(make(setting_id(k, cfg.shifts[k]), samples));
    }
  }
  return out;
}

}  // namespace csconf
