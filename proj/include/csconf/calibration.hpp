#pragma once

#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "csconf/error.hpp"
#include "csconf/types.hpp"

namespace csconf {

enum class Method { AC, TS, VS, DOC, ATC, TS_ATC, CS_TS, CS_DOC, CS_ATC, CS_TS_ATC };

// Lowercase command-line spelling ("cs_ts_atc").
std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);
std::span<const Method> all_methods();
bool is_class_specific(Method m);

inline constexpr double kMinTemperature = 0.01;
inline constexpr double kMaxTemperature = 1000.0;

// ---------------------------------------------------------------------------
// Softmax

// Row-wise softmax of logits / temperature, evaluated with max subtraction.
template <typename Derived>
ProbMatrix softmax(const Eigen::MatrixBase<Derived>& logits, double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("softmax: temperature must be positive");
  ProbMatrix out = logits.template cast<double>() / temperature;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return out;
}

// Same, with one temperature per sample.
template <typename Derived>
ProbMatrix softmax(const Eigen::MatrixBase<Derived>& logits, const Eigen::VectorXd& temperatures) {
  if (temperatures.size() != logits.rows()) throw ArgumentError("softmax: one temperature per row expected");
  if (!(temperatures.array() > 0.0).all()) throw ArgumentError("softmax: temperature must be positive");
  ProbMatrix out = logits.template cast<double>();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    row /= temperatures(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return out;
}

// Mean over rows of the largest softmax(logits / T) entry.
double mean_max_probability(const LogitMatrix& logits, double temperature);

// ---------------------------------------------------------------------------
// Validation statistics grouped by predicted class

struct ClasswiseStats {
  Eigen::VectorXi counts;           // N_j, samples predicted as j
  Eigen::VectorXd accuracy;         // fraction of those that are correct; NaN when N_j == 0
  Eigen::VectorXd mean_confidence;  // mean max softmax probability; NaN when N_j == 0
  double overall_accuracy = 0.0;
  double overall_confidence = 0.0;

  bool defined(int j) const { return counts(j) > 0; }
};

ClasswiseStats classwise_stats(const PredictionSet& val);

// ---------------------------------------------------------------------------
// Calibrator

// Fitted parameters. Scalars belong to the class-agnostic methods (and hold
// the global fallback value for class-specific ones); vectors have one entry
// per class.
struct Calibrator {
  Method method = Method::AC;
  int class_count = 0;

  std::optional<double> temperature;
  Eigen::VectorXd class_temperature;
  Eigen::VectorXd vs_scale;
  Eigen::VectorXd vs_bias;
  std::optional<double> difference;
  Eigen::VectorXd class_difference;
  std::optional<double> threshold;
  Eigen::VectorXd class_threshold;

  std::vector<bool> fallback;  // one flag per class
  std::optional<double> vs_nll;

  bool all_fallback() const;
  // Throws ArgumentError when an invariant is broken or a required
  // parameter for `method` is missing.
  void validate() const;
};

struct BisectionOptions {
  double residual = 1e-6;
  int max_iterations = 200;
};

struct VectorScalingOptions {
  int steps = 2000;
  double rate = 0.01;
};

struct FitOptions {
  BisectionOptions bisection;
  VectorScalingOptions vector_scaling;
};

struct TemperatureFit {
  double temperature = 1.0;
  bool fallback = false;
  double residual = 0.0;
  int iterations = 0;
};

// Bisection for T in [kMinTemperature, kMaxTemperature] such that the mean
// max probability of `logits` equals `target`. Targets outside the reachable
// range clamp to the nearest bound with `fallback` set.
TemperatureFit match_mean_confidence(const LogitMatrix& logits, double target,
                                     const BisectionOptions& opts = {});

// Order-statistic ATC threshold: with k = round(n * target) and confidences
// sorted descending, t = s[k] (0-based), t = 0 for k = n, t = 1 for k = 0.
double atc_threshold(std::span<const double> confidences, double target);

Calibrator fit_ac(const PredictionSet& val);
Calibrator fit_ts(const PredictionSet& val, const BisectionOptions& opts = {});
Calibrator fit_cs_ts(const PredictionSet& val, const BisectionOptions& opts = {});
Calibrator fit_doc(const PredictionSet& val);
Calibrator fit_cs_doc(const PredictionSet& val);
Calibrator fit_atc(const PredictionSet& val, bool on_calibrated, const BisectionOptions& opts = {});
Calibrator fit_cs_atc(const PredictionSet& val, bool on_calibrated, const BisectionOptions& opts = {});
Calibrator fit_vs(const PredictionSet& val, const VectorScalingOptions& opts = {});

Calibrator fit(Method method, const PredictionSet& val, const FitOptions& opts = {});

// Mean negative log-likelihood of softmax(scale * z + bias) and its gradient.
struct VectorScalingObjective {
  double nll = 0.0;
  Eigen::VectorXd grad_scale;
  Eigen::VectorXd grad_bias;
};

VectorScalingObjective vector_scaling_objective(const LogitMatrix& logits, std::span<const int> labels,
                                                const Eigen::VectorXd& scale, const Eigen::VectorXd& bias);

// Per-sample temperature T_{y'_i} (or the scalar T) for TS-family calibrators.
Eigen::VectorXd sample_temperatures(const PredictionSet& preds, const Calibrator& cal);

ProbMatrix apply_temperature(const PredictionSet& preds, const Calibrator& cal);
ProbMatrix apply_vector_scaling(const PredictionSet& preds, const Calibrator& cal);
// Unclipped: predicted entry minus d_{y'}, others plus d_{y'} / (c - 1).
ProbMatrix apply_doc(const PredictionSet& preds, const Calibrator& cal);
// Indicator matrix 1[p_ij > t_{y'_i}] over (temperature-calibrated, for
// the TS-ATC variants) probabilities.
ProbMatrix apply_threshold(const PredictionSet& preds, const Calibrator& cal);

// Dispatches to the transform matching cal.method; AC yields plain softmax.
ProbMatrix calibrated_probabilities(const PredictionSet& preds, const Calibrator& cal);

// Per-sample contribution whose mean is the accuracy estimate.
Eigen::VectorXd sample_scores(const PredictionSet& preds, const Calibrator& cal);

// Estimated accuracy in [0, 1]. Labels are not used.
double estimate_accuracy(const PredictionSet& target, const Calibrator& cal);

// Fraction of samples whose argmax matches the label.
double real_accuracy(const PredictionSet& preds);

}  // namespace csconf
