#include "csconf/calibration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

namespace csconf {

namespace {

constexpr std::array kMethods = {Method::AC,     Method::TS,     Method::VS,     Method::DOC,    Method::ATC,
                                 Method::TS_ATC, Method::CS_TS,  Method::CS_DOC, Method::CS_ATC, Method::CS_TS_ATC};

constexpr std::array<std::string_view, 10> kMethodNames = {"ac",    "ts",     "vs",     "doc",    "atc",
                                                           "ts_atc", "cs_ts", "cs_doc", "cs_atc", "cs_ts_atc"};

double row_max_probability(const Eigen::Ref<const Eigen::RowVectorXd>& z, double temperature) {
  const double zmax = z.maxCoeff();
  return 1.0 / ((z.array() - zmax) / temperature).exp().sum();
}

std::vector<Eigen::Index> rows_predicted_as(const PredictionSet& preds, int j) {
  std::vector<Eigen::Index> rows;
  const auto& pred = preds.predicted();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == j) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return rows;
}

Eigen::VectorXd row_maxima(const ProbMatrix& p) { return p.rowwise().maxCoeff(); }

bool uses_temperature(Method m) {
  return m == Method::TS || m == Method::CS_TS || m == Method::TS_ATC || m == Method::CS_TS_ATC;
}

bool uses_threshold(Method m) { return m == Method::ATC || m == Method::TS_ATC || m == Method::CS_ATC || m == Method::CS_TS_ATC; }

Calibrator blank(Method m, int class_count) {
  Calibrator cal;
  cal.method = m;
  cal.class_count = class_count;
  cal.fallback.assign(static_cast<std::size_t>(class_count), false);
  return cal;
}

}  // namespace

std::string_view method_name(Method m) { return kMethodNames[static_cast<std::size_t>(m)]; }

std::optional<Method> parse_method(std::string_view name) {
  for (std::size_t i = 0; i < kMethods.size(); ++i) {
    if (kMethodNames[i] == name) return kMethods[i];
  }
  return std::nullopt;
}

std::span<const Method> all_methods() { return kMethods; }

bool is_class_specific(Method m) {
  return m == Method::CS_TS || m == Method::CS_DOC || m == Method::CS_ATC || m == Method::CS_TS_ATC;
}

double mean_max_probability(const LogitMatrix& logits, double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) sum += row_max_probability(logits.row(i), temperature);
  return sum / static_cast<double>(logits.rows());
}

ClasswiseStats classwise_stats(const PredictionSet& val) {
  const auto& labels = val.labels();
  const auto& pred = val.predicted();
  const int c = val.class_count();
  ClasswiseStats s;
  s.counts = Eigen::VectorXi::Zero(c);
  Eigen::VectorXd correct = Eigen::VectorXd::Zero(c);
  Eigen::VectorXd conf = Eigen::VectorXd::Zero(c);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int j = pred[i];
    const double p = row_max_probability(val.logits().row(static_cast<Eigen::Index>(i)), 1.0);
    s.counts(j) += 1;
    conf(j) += p;
    if (labels[i] == j) correct(j) += 1.0;
  }
  const double n = static_cast<double>(val.size());
  s.overall_accuracy = correct.sum() / n;
  s.overall_confidence = conf.sum() / n;
  s.accuracy.resize(c);
  s.mean_confidence.resize(c);
  for (int j = 0; j < c; ++j) {
    const double nj = s.counts(j);
    s.accuracy(j) = nj > 0 ? correct(j) / nj : std::numeric_limits<double>::quiet_NaN();
    s.mean_confidence(j) = nj > 0 ? conf(j) / nj : std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

bool Calibrator::all_fallback() const {
  return !fallback.empty() && std::all_of(fallback.begin(), fallback.end(), [](bool b) { return b; });
}

void Calibrator::validate() const {
  const auto fail = [&](const std::string& what) {
    throw ArgumentError(std::string(method_name(method)) + " calibrator: " + what);
  };
  if (class_count < 2) fail("class_count must be >= 2");
  if (fallback.size() != static_cast<std::size_t>(class_count)) fail("one fallback flag per class expected");
  const auto check_vec = [&](const Eigen::VectorXd& v, const char* name) {
    if (v.size() != class_count) fail(std::string(name) + " must have class_count entries");
    if (!v.allFinite()) fail(std::string(name) + " must be finite");
  };
  const auto check_temp = [&](double t) {
    if (!(t >= kMinTemperature && t <= kMaxTemperature)) fail("temperature outside [0.01, 1000]");
  };
  const auto check_thr = [&](double t) {
    if (!(t >= 0.0 && t <= 1.0)) fail("threshold outside [0, 1]");
  };
  if (uses_temperature(method)) {
    if (!temperature) fail("missing temperature");
    check_temp(*temperature);
  }
  if (method == Method::CS_TS || method == Method::CS_TS_ATC) {
    check_vec(class_temperature, "class_temperature");
    for (double t : class_temperature) check_temp(t);
  }
  if (uses_threshold(method)) {
    if (!threshold) fail("missing threshold");
    check_thr(*threshold);
  }
  if (method == Method::CS_ATC || method == Method::CS_TS_ATC) {
    check_vec(class_threshold, "class_threshold");
    for (double t : class_threshold) check_thr(t);
  }
  if (method == Method::DOC || method == Method::CS_DOC) {
    if (!difference || !std::isfinite(*difference)) fail("missing difference");
  }
  if (method == Method::CS_DOC) check_vec(class_difference, "class_difference");
  if (method == Method::VS) {
    check_vec(vs_scale, "vs_scale");
    check_vec(vs_bias, "vs_bias");
  }
}

TemperatureFit match_mean_confidence(const LogitMatrix& logits, double target, const BisectionOptions& opts) {
  TemperatureFit fit;
  const double f_cold = mean_max_probability(logits, kMinTemperature);
  const double f_hot = mean_max_probability(logits, kMaxTemperature);
  if (target >= f_cold) {
    fit.temperature = kMinTemperature;
    fit.residual = target - f_cold;
    fit.fallback = fit.residual >= opts.residual;
    return fit;
  }
  if (target <= f_hot) {
    fit.temperature = kMaxTemperature;
    fit.residual = f_hot - target;
    fit.fallback = fit.residual >= opts.residual;
    return fit;
  }
  // f is decreasing in T; bisect on log T.
  double lo = std::log(kMinTemperature);
  double hi = std::log(kMaxTemperature);
  double best_t = 1.0;
  double best_r = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opts.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double t = std::exp(mid);
    const double f = mean_max_probability(logits, t);
    const double r = std::abs(f - target);
    fit.iterations = it;
    if (r < best_r) {
      best_r = r;
      best_t = t;
    }
    if (r < opts.residual) break;
    if (f > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  fit.temperature = best_t;
  fit.residual = best_r;
  return fit;
}

double atc_threshold(std::span<const double> confidences, double target) {
  const auto n = static_cast<long>(confidences.size());
  if (n == 0) throw ArgumentError("atc_threshold: no confidences");
  const long k = std::clamp(std::lround(static_cast<double>(n) * target), 0L, n);
  if (k == n) return 0.0;
  if (k == 0) return 1.0;
  std::vector<double> s(confidences.begin(), confidences.end());
  std::nth_element(s.begin(), s.begin() + k, s.end(), std::greater<>());
  return s[static_cast<std::size_t>(k)];
}

Calibrator fit_ac(const PredictionSet& val) { return blank(Method::AC, val.class_count()); }

Calibrator fit_ts(const PredictionSet& val, const BisectionOptions& opts) {
  const auto stats = classwise_stats(val);
  Calibrator cal = blank(Method::TS, val.class_count());
  const double alpha = stats.overall_accuracy;
  const auto fit = match_mean_confidence(val.logits(), alpha, opts);
  cal.temperature = fit.temperature;
  const bool fallback = fit.fallback || alpha <= 0.0 || alpha >= 1.0;
  cal.fallback.assign(cal.fallback.size(), fallback);
  return cal;
}

Calibrator fit_cs_ts(const PredictionSet& val, const BisectionOptions& opts) {
  const auto stats = classwise_stats(val);
  const Calibrator global = fit_ts(val, opts);
  const int c = val.class_count();
  Calibrator cal = blank(Method::CS_TS, c);
  cal.temperature = global.temperature;
  cal.class_temperature = Eigen::VectorXd::Constant(c, *global.temperature);
  for (int j = 0; j < c; ++j) {
    const double a = stats.accuracy(j);
    if (!stats.defined(j) || a <= 0.0 || a >= 1.0) {
      cal.fallback[static_cast<std::size_t>(j)] = true;
      continue;
    }
    const auto rows = rows_predicted_as(val, j);
    const PredictionSet sub = val.subset(rows);
    const auto fit = match_mean_confidence(sub.logits(), a, opts);
    if (fit.fallback) {
      cal.fallback[static_cast<std::size_t>(j)] = true;
    } else {
      cal.class_temperature(j) = fit.temperature;
    }
  }
  return cal;
}

Calibrator fit_doc(const PredictionSet& val) {
  const auto stats = classwise_stats(val);
  Calibrator cal = blank(Method::DOC, val.class_count());
  cal.difference = stats.overall_confidence - stats.overall_accuracy;
  return cal;
}

Calibrator fit_cs_doc(const PredictionSet& val) {
  const auto stats = classwise_stats(val);
  const int c = val.class_count();
  Calibrator cal = blank(Method::CS_DOC, c);
  const double d = stats.overall_confidence - stats.overall_accuracy;
  cal.difference = d;
  cal.class_difference.resize(c);
  for (int j = 0; j < c; ++j) {
    if (stats.defined(j)) {
      cal.class_difference(j) = stats.mean_confidence(j) - stats.accuracy(j);
    } else {
      cal.class_difference(j) = d;
      cal.fallback[static_cast<std::size_t>(j)] = true;
    }
  }
  return cal;
}

Calibrator fit_atc(const PredictionSet& val, bool on_calibrated, const BisectionOptions& opts) {
  const auto stats = classwise_stats(val);
  Calibrator cal = blank(on_calibrated ? Method::TS_ATC : Method::ATC, val.class_count());
  ProbMatrix probs;
  if (on_calibrated) {
    const Calibrator ts = fit_ts(val, opts);
    cal.temperature = ts.temperature;
    cal.fallback = ts.fallback;
    probs = softmax(val.logits(), *ts.temperature);
  } else {
    probs = softmax(val.logits(), 1.0);
  }
  const Eigen::VectorXd conf = row_maxima(probs);
  cal.threshold = atc_threshold({conf.data(), static_cast<std::size_t>(conf.size())}, stats.overall_accuracy);
  return cal;
}

Calibrator fit_cs_atc(const PredictionSet& val, bool on_calibrated, const BisectionOptions& opts) {
  const auto stats = classwise_stats(val);
  const int c = val.class_count();
  Calibrator cal = blank(on_calibrated ? Method::CS_TS_ATC : Method::CS_ATC, c);
  ProbMatrix probs;
  if (on_calibrated) {
    const Calibrator cs = fit_cs_ts(val, opts);
    cal.temperature = cs.temperature;
    cal.class_temperature = cs.class_temperature;
    cal.fallback = cs.fallback;
    probs = apply_temperature(val, cs);
  } else {
    probs = softmax(val.logits(), 1.0);
  }
  const Eigen::VectorXd conf = row_maxima(probs);
  const double global = atc_threshold({conf.data(), static_cast<std::size_t>(conf.size())}, stats.overall_accuracy);
  cal.threshold = global;
  cal.class_threshold = Eigen::VectorXd::Constant(c, global);
  for (int j = 0; j < c; ++j) {
    if (!stats.defined(j)) {
      cal.fallback[static_cast<std::size_t>(j)] = true;
      continue;
    }
    std::vector<double> sub;
    for (auto i : rows_predicted_as(val, j)) sub.push_back(conf(i));
    cal.class_threshold(j) = atc_threshold(sub, stats.accuracy(j));
  }
  return cal;
}

VectorScalingObjective vector_scaling_objective(const LogitMatrix& logits, std::span<const int> labels,
                                                const Eigen::VectorXd& scale, const Eigen::VectorXd& bias) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  LogitMatrix scaled = (logits.array().rowwise() * scale.transpose().array()).rowwise() + bias.transpose().array();
  VectorScalingObjective out;
  out.grad_scale = Eigen::VectorXd::Zero(c);
  out.grad_bias = Eigen::VectorXd::Zero(c);
  double nll = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto row = scaled.row(i);
    const double m = row.maxCoeff();
    const Eigen::RowVectorXd e = (row.array() - m).exp();
    const double sum = e.sum();
    const int y = labels[static_cast<std::size_t>(i)];
    nll -= (row(y) - m) - std::log(sum);
    for (Eigen::Index j = 0; j < c; ++j) {
      const double g = (e(j) / sum - (j == y ? 1.0 : 0.0)) * inv_n;
      out.grad_scale(j) += g * logits(i, j);
      out.grad_bias(j) += g;
    }
  }
  out.nll = nll * inv_n;
  return out;
}

Calibrator fit_vs(const PredictionSet& val, const VectorScalingOptions& opts) {
  const auto& labels = val.labels();
  const int c = val.class_count();
  Calibrator cal = blank(Method::VS, c);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(c);
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(c);
  for (int step = 0; step < opts.steps; ++step) {
    const auto obj = vector_scaling_objective(val.logits(), labels, scale, bias);
    scale -= opts.rate * obj.grad_scale;
    bias -= opts.rate * obj.grad_bias;
  }
  cal.vs_nll = vector_scaling_objective(val.logits(), labels, scale, bias).nll;
  cal.vs_scale = std::move(scale);
  cal.vs_bias = std::move(bias);
  return cal;
}

Calibrator fit(Method method, const PredictionSet& val, const FitOptions& opts) {
  if (!val.has_labels()) throw DataError("fitting a calibrator requires validation labels");
  switch (method) {
    case Method::AC: return fit_ac(val);
    case Method::TS: return fit_ts(val, opts.bisection);
    case Method::VS: return fit_vs(val, opts.vector_scaling);
    case Method::DOC: return fit_doc(val);
    case Method::ATC: return fit_atc(val, false, opts.bisection);
    case Method::TS_ATC: return fit_atc(val, true, opts.bisection);
    case Method::CS_TS: return fit_cs_ts(val, opts.bisection);
    case Method::CS_DOC: return fit_cs_doc(val);
    case Method::CS_ATC: return fit_cs_atc(val, false, opts.bisection);
    case Method::CS_TS_ATC: return fit_cs_atc(val, true, opts.bisection);
  }
  throw ArgumentError("unknown method");
}

Eigen::VectorXd sample_temperatures(const PredictionSet& preds, const Calibrator& cal) {
  if (cal.class_count != preds.class_count()) throw DataError("calibrator and predictions disagree on class count");
  if (cal.method == Method::AC) return Eigen::VectorXd::Ones(preds.size());
  if (!uses_temperature(cal.method) || !cal.temperature) {
    throw ArgumentError(std::string(method_name(cal.method)) + " calibrator has no temperature");
  }
  if (cal.method == Method::CS_TS || cal.method == Method::CS_TS_ATC) {
    Eigen::VectorXd t(preds.size());
    const auto& pred = preds.predicted();
    for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = cal.class_temperature(pred[static_cast<std::size_t>(i)]);
    return t;
  }
  return Eigen::VectorXd::Constant(preds.size(), *cal.temperature);
}

ProbMatrix apply_temperature(const PredictionSet& preds, const Calibrator& cal) {
  return softmax(preds.logits(), sample_temperatures(preds, cal));
}

ProbMatrix apply_vector_scaling(const PredictionSet& preds, const Calibrator& cal) {
  if (cal.method != Method::VS) throw ArgumentError("not a vector-scaling calibrator");
  if (cal.class_count != preds.class_count()) throw DataError("calibrator and predictions disagree on class count");
  LogitMatrix z = (preds.logits().array().rowwise() * cal.vs_scale.transpose().array()).rowwise() +
                  cal.vs_bias.transpose().array();
  return softmax(z, 1.0);
}

ProbMatrix apply_doc(const PredictionSet& preds, const Calibrator& cal) {
  if (cal.method != Method::DOC && cal.method != Method::CS_DOC) throw ArgumentError("not a DoC calibrator");
  if (cal.class_count != preds.class_count()) throw DataError("calibrator and predictions disagree on class count");
  ProbMatrix p = softmax(preds.logits(), 1.0);
  const auto& pred = preds.predicted();
  const double others = static_cast<double>(preds.class_count() - 1);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const int y = pred[static_cast<std::size_t>(i)];
    const double d = cal.method == Method::CS_DOC ? cal.class_difference(y) : *cal.difference;
    const double keep = p(i, y) - d;
    p.row(i).array() += d / others;
    p(i, y) = keep;
  }
  return p;
}

ProbMatrix apply_threshold(const PredictionSet& preds, const Calibrator& cal) {
  if (!uses_threshold(cal.method)) throw ArgumentError("not an ATC calibrator");
  if (cal.class_count != preds.class_count()) throw DataError("calibrator and predictions disagree on class count");
  const bool calibrated = cal.method == Method::TS_ATC || cal.method == Method::CS_TS_ATC;
  ProbMatrix p = calibrated ? apply_temperature(preds, cal) : softmax(preds.logits(), 1.0);
  const bool per_class = cal.method == Method::CS_ATC || cal.method == Method::CS_TS_ATC;
  const auto& pred = preds.predicted();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double t = per_class ? cal.class_threshold(pred[static_cast<std::size_t>(i)]) : *cal.threshold;
    p.row(i) = (p.row(i).array() > t).cast<double>();
  }
  return p;
}

ProbMatrix calibrated_probabilities(const PredictionSet& preds, const Calibrator& cal) {
  switch (cal.method) {
    case Method::AC:
    case Method::TS:
    case Method::CS_TS: return apply_temperature(preds, cal);
    case Method::VS: return apply_vector_scaling(preds, cal);
    case Method::DOC:
    case Method::CS_DOC: return apply_doc(preds, cal);
    case Method::ATC:
    case Method::TS_ATC:
    case Method::CS_ATC:
    case Method::CS_TS_ATC: return apply_threshold(preds, cal);
  }
  throw ArgumentError("unknown method");
}

Eigen::VectorXd sample_scores(const PredictionSet& preds, const Calibrator& cal) {
  cal.validate();
  if (cal.class_count != preds.class_count()) throw DataError("calibrator and predictions disagree on class count");
  const auto& pred = preds.predicted();
  switch (cal.method) {
    case Method::DOC:
    case Method::CS_DOC: {
      // The adjusted predicted-class entry.
      const ProbMatrix p = apply_doc(preds, cal);
      Eigen::VectorXd s(p.rows());
      for (Eigen::Index i = 0; i < p.rows(); ++i) s(i) = p(i, pred[static_cast<std::size_t>(i)]);
      return s;
    }
    case Method::ATC:
    case Method::TS_ATC:
    case Method::CS_ATC:
    case Method::CS_TS_ATC: return row_maxima(apply_threshold(preds, cal));
    default: return row_maxima(calibrated_probabilities(preds, cal));
  }
}

double estimate_accuracy(const PredictionSet& target, const Calibrator& cal) {
  return std::clamp(sample_scores(target, cal).mean(), 0.0, 1.0);
}

double real_accuracy(const PredictionSet& preds) {
  const auto& labels = preds.labels();
  const auto& pred = preds.predicted();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace csconf
