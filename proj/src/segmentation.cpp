#include "csconf/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

namespace csconf {

namespace {

// Sorting before summation makes the mean independent of case order.
double order_free_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double dice_terms(double overlap, double predicted, double rest) {
  const double den = predicted + overlap + rest;
  return den == 0.0 ? 1.0 : 2.0 * overlap / den;
}

void require_labels(std::span<const SegCase> cases) {
  for (const auto& c : cases) {
    if (!c.has_labels()) throw DataError("segmentation case has no labels");
  }
}

void check_class(int j, int class_count) {
  if (j < 0 || j >= class_count) throw ArgumentError("class " + std::to_string(j) + " outside calibrator classes");
}

// Soft Dice of class j as a function of that class's own parameter, with
// all other classes' calibrated probabilities frozen.
struct ClassResponse {
  struct CaseTerms {
    double predicted = 0.0;       // |P|, pixels whose raw argmax is j
    double rest = 0.0;            // sum of calibrated p_j over the other pixels
    LogitMatrix logits;           // rows of the predicted-j pixels
    std::vector<double> conf;     // base confidences of the predicted-j pixels
  };
  std::vector<CaseTerms> cases;
  bool any_predicted = false;

  double at_temperature(double t) const {
    std::vector<double> v;
    v.reserve(cases.size());
    for (const auto& c : cases) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < c.logits.rows(); ++i) {
        const auto row = c.logits.row(i);
        s += 1.0 / ((row.array() - row.maxCoeff()) / t).exp().sum();
      }
      v.push_back(dice_terms(s, c.predicted, c.rest));
    }
    return order_free_mean(std::move(v));
  }

  double at_threshold(double t) const {
    std::vector<double> v;
    v.reserve(cases.size());
    for (const auto& c : cases) {
      const auto k = std::count_if(c.conf.begin(), c.conf.end(), [t](double p) { return p > t; });
      v.push_back(dice_terms(static_cast<double>(k), c.predicted, c.rest));
    }
    return order_free_mean(std::move(v));
  }
};

ClassResponse build_response(std::span<const SegCase> cases, const Calibrator& params, int j) {
  ClassResponse r;
  const bool thresholded = params.method == Method::CS_ATC || params.method == Method::CS_TS_ATC;
  for (const auto& sc : cases) {
    const PredictionSet& px = sc.pixels();
    const ProbMatrix cal = calibrated_probabilities(px, params);
    ProbMatrix base;
    if (thresholded) base = params.method == Method::CS_TS_ATC ? apply_temperature(px, params) : softmax(px.logits(), 1.0);
    ClassResponse::CaseTerms t;
    std::vector<Eigen::Index> rows;
    const auto& pred = px.predicted();
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (pred[i] == j) {
        rows.push_back(ii);
        if (thresholded) t.conf.push_back(base.row(ii).maxCoeff());
      } else {
        t.rest += cal(ii, j);
      }
    }
    t.predicted = static_cast<double>(rows.size());
    r.any_predicted = r.any_predicted || !rows.empty();
    if (!thresholded) {
      t.logits.resize(static_cast<Eigen::Index>(rows.size()), px.class_count());
      for (std::size_t k = 0; k < rows.size(); ++k) t.logits.row(static_cast<Eigen::Index>(k)) = px.logits().row(rows[k]);
    }
    r.cases.push_back(std::move(t));
  }
  return r;
}

struct ParameterFit {
  double value = 0.0;
  bool clamped = false;
};

ParameterFit grid_temperature(const ClassResponse& r, double target, int points) {
  const double lo = std::log(kMinTemperature), hi = std::log(kMaxTemperature);
  ParameterFit best;
  double best_r = std::numeric_limits<double>::infinity();
  double gmin = best_r, gmax = -best_r;
  for (int g = 0; g < points; ++g) {
    const double t = std::exp(lo + (hi - lo) * g / (points - 1));
    const double v = r.at_temperature(t);
    gmin = std::min(gmin, v);
    gmax = std::max(gmax, v);
    if (std::abs(v - target) < best_r) {
      best_r = std::abs(v - target);
      best.value = t;
    }
  }
  best.clamped = target < gmin || target > gmax;
  return best;
}

ParameterFit fit_temperature(const ClassResponse& r, double target, const SegFitOptions& opts) {
  if (opts.temperature_search == SearchMode::Grid) return grid_temperature(r, target, opts.temperature_grid);
  double lo = std::log(kMinTemperature), hi = std::log(kMaxTemperature);
  const double g_lo = r.at_temperature(kMinTemperature);
  const double g_hi = r.at_temperature(kMaxTemperature);
  const bool strict = opts.temperature_search == SearchMode::Auto;
  if (strict && g_lo < g_hi) return grid_temperature(r, target, opts.temperature_grid);
  if (target >= g_lo) return {kMinTemperature, target - g_lo >= opts.bisection.residual};
  if (target <= g_hi) return {kMaxTemperature, g_hi - target >= opts.bisection.residual};
  // Decreasing in T. Any midpoint outside the current bracket means the
  // response is not monotone, and the grid takes over.
  double f_lo = g_lo, f_hi = g_hi;
  double best_t = 1.0, best_r = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.bisection.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = r.at_temperature(std::exp(mid));
    if (strict && (f > f_lo || f < f_hi)) return grid_temperature(r, target, opts.temperature_grid);
    if (std::abs(f - target) < best_r) {
      best_r = std::abs(f - target);
      best_t = std::exp(mid);
    }
    if (best_r < opts.bisection.residual) break;
    if (f > target) {
      lo = mid;
      f_lo = f;
    } else {
      hi = mid;
      f_hi = f;
    }
  }
  return {best_t, false};
}

ParameterFit fit_threshold(const ClassResponse& r, double target, int points) {
  ParameterFit best;
  double best_r = std::numeric_limits<double>::infinity();
  double gmin = best_r, gmax = -best_r;
  for (int g = 0; g < points; ++g) {
    const double t = static_cast<double>(g) / (points - 1);
    const double v = r.at_threshold(t);
    gmin = std::min(gmin, v);
    gmax = std::max(gmax, v);
    if (std::abs(v - target) < best_r) {
      best_r = std::abs(v - target);
      best.value = t;
    }
  }
  best.clamped = target < gmin || target > gmax;
  return best;
}

ProbMatrix raw_probabilities(const SegCase& c) { return softmax(c.pixels().logits(), 1.0); }

}  // namespace

bool seg_method_supported(Method m) {
  return m == Method::AC || m == Method::CS_TS || m == Method::CS_ATC || m == Method::CS_TS_ATC || m == Method::CS_DOC;
}

double real_dsc(const SegCase& c, int j) {
  const auto& labels = c.pixels().labels();
  const auto& pred = c.pixels().predicted();
  std::size_t both = 0, p = 0, g = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool in_p = pred[i] == j;
    const bool in_g = labels[i] == j;
    p += in_p;
    g += in_g;
    both += in_p && in_g;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double mean_real_dsc(std::span<const SegCase> cases, int j) {
  if (cases.empty()) throw ArgumentError("no segmentation cases");
  std::vector<double> v;
  for (const auto& c : cases) v.push_back(real_dsc(c, j));
  return order_free_mean(std::move(v));
}

double soft_dsc_case(const SegCase& c, const ProbMatrix& calibrated, int j) {
  const auto& pred = c.pixels().predicted();
  if (calibrated.rows() != static_cast<Eigen::Index>(pred.size()) || j >= calibrated.cols()) {
    throw ArgumentError("calibrated probabilities do not match the case");
  }
  double overlap = 0.0, predicted = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == j) {
      predicted += 1.0;
      overlap += calibrated(static_cast<Eigen::Index>(i), j);
    }
  }
  const double den = predicted + calibrated.col(j).sum();
  return den == 0.0 ? 1.0 : 2.0 * overlap / den;
}

double soft_dsc(std::span<const SegCase> cases, std::span<const ProbMatrix> calibrated, int j) {
  if (cases.empty()) throw ArgumentError("no segmentation cases");
  if (cases.size() != calibrated.size()) throw ArgumentError("one probability matrix per case expected");
  std::vector<double> v;
  for (std::size_t z = 0; z < cases.size(); ++z) v.push_back(soft_dsc_case(cases[z], calibrated[z], j));
  return order_free_mean(std::move(v));
}

std::vector<ProbMatrix> calibrated_case_probabilities(std::span<const SegCase> cases, const Calibrator& params) {
  std::vector<ProbMatrix> out;
  out.reserve(cases.size());
  for (const auto& c : cases) out.push_back(calibrated_probabilities(c.pixels(), params));
  return out;
}

SegCalibrator fit_seg_calibrator(std::span<const SegCase> cases, Method method, const SegFitOptions& opts) {
  if (!seg_method_supported(method)) {
    throw DataError("method '" + std::string(method_name(method)) + "' is not available for segmentation");
  }
  if (cases.empty()) throw DataError("no validation cases");
  require_labels(cases);
  const int c = cases.front().class_count();
  for (const auto& sc : cases) {
    if (sc.class_count() != c) throw DataError("validation cases disagree on class count");
  }
  bool foreground = false;
  for (const auto& sc : cases) {
    for (int y : sc.pixels().labels()) foreground = foreground || y != 0;
  }
  if (!foreground) throw DataError("no foreground class present in any validation case");

  std::vector<PredictionSet> parts;
  parts.reserve(cases.size());
  for (const auto& sc : cases) parts.push_back(sc.pixels());
  const PredictionSet pooled = concatenate(parts);

  SegCalibrator out;
  out.method = method;
  out.class_count = c;
  out.val_real_dsc.resize(c);
  for (int j = 0; j < c; ++j) out.val_real_dsc(j) = mean_real_dsc(cases, j);

  // Stage 1 is the pixel-level class-specific fit; its background entry is
  // final, foreground entries only seed stage 2.
  switch (method) {
    case Method::AC:
    case Method::CS_DOC: out.params = fit_ac(pooled); break;
    case Method::CS_TS: out.params = fit_cs_ts(pooled, opts.bisection); break;
    case Method::CS_ATC: out.params = fit_cs_atc(pooled, false, opts.bisection); break;
    case Method::CS_TS_ATC: out.params = fit_cs_atc(pooled, true, opts.bisection); break;
    default: break;
  }
  Calibrator& p = out.params;

  if (method == Method::CS_TS || method == Method::CS_ATC || method == Method::CS_TS_ATC) {
    std::vector<bool> stage2_fallback(static_cast<std::size_t>(c), false);
    const int sweeps = c > 2 ? std::max(1, opts.max_sweeps) : 1;
    for (int sweep = 0; sweep < sweeps; ++sweep) {
      for (int j = 1; j < c; ++j) {
        const ClassResponse r = build_response(cases, p, j);
        const auto jj = static_cast<std::size_t>(j);
        if (!r.any_predicted) {
          if (method == Method::CS_TS) {
            p.class_temperature(j) = *p.temperature;
          } else {
            p.class_threshold(j) = *p.threshold;
          }
          stage2_fallback[jj] = true;
          continue;
        }
        if (method == Method::CS_TS) {
          const auto f = fit_temperature(r, out.val_real_dsc(j), opts);
          p.class_temperature(j) = f.value;
          stage2_fallback[jj] = f.clamped;
        } else {
          const auto f = fit_threshold(r, out.val_real_dsc(j), opts.threshold_grid);
          p.class_threshold(j) = f.value;
          stage2_fallback[jj] = f.clamped;
        }
      }
    }
    // Stage-1 flags for foreground classes concern accuracy matching, which
    // stage 2 replaces.
    for (int j = 1; j < c; ++j) p.fallback[static_cast<std::size_t>(j)] = stage2_fallback[static_cast<std::size_t>(j)];
  }

  out.fallback = p.fallback;
  const auto probs = method == Method::CS_DOC ? calibrated_case_probabilities(cases, fit_ac(pooled))
                                              : calibrated_case_probabilities(cases, p);
  out.val_soft_dsc.resize(c);
  for (int j = 0; j < c; ++j) out.val_soft_dsc(j) = soft_dsc(cases, probs, j);
  return out;
}

namespace {

std::vector<double> case_estimates(std::span<const SegCase> cases, const SegCalibrator& cal, int j) {
  check_class(j, cal.class_count);
  for (const auto& sc : cases) {
    if (sc.class_count() != cal.class_count) throw DataError("target cases and calibrator disagree on class count");
  }
  std::vector<double> v;
  v.reserve(cases.size());
  for (const auto& sc : cases) {
    if (cal.method == Method::CS_DOC) {
      v.push_back(cal.val_real_dsc(j) - cal.val_soft_dsc(j) + soft_dsc_case(sc, raw_probabilities(sc), j));
    } else {
      v.push_back(soft_dsc_case(sc, calibrated_probabilities(sc.pixels(), cal.params), j));
    }
  }
  return v;
}

}  // namespace

double estimate_dsc(std::span<const SegCase> cases, const SegCalibrator& cal, int j) {
  if (cases.empty()) throw ArgumentError("no segmentation cases");
  return std::clamp(order_free_mean(case_estimates(cases, cal, j)), 0.0, 1.0);
}

double DiceReport::mean_estimated() const {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += r.estimated;
  return s / static_cast<double>(rows.size());
}

std::optional<double> DiceReport::mean_real() const {
  if (rows.empty()) return std::nullopt;
  double s = 0.0;
  for (const auto& r : rows) {
    if (!r.real) return std::nullopt;
    s += *r.real;
  }
  return s / static_cast<double>(rows.size());
}

DiceReport make_dice_report(std::span<const SegCase> cases, const SegCalibrator& cal) {
  DiceReport rep;
  rep.method = cal.method;
  bool labelled = !cases.empty();
  for (const auto& sc : cases) labelled = labelled && sc.has_labels();
  for (int j = 1; j < cal.class_count; ++j) {
    DiceReport::Row row;
    row.class_index = j;
    row.case_estimated = case_estimates(cases, cal, j);
    for (auto& v : row.case_estimated) v = std::clamp(v, 0.0, 1.0);
    row.estimated = estimate_dsc(cases, cal, j);
    row.fallback = cal.fallback.at(static_cast<std::size_t>(j));
    if (labelled) {
      for (const auto& sc : cases) row.case_real.push_back(real_dsc(sc, j));
      row.real = mean_real_dsc(cases, j);
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

std::string format_dice_report(const DiceReport& report) {
  std::ostringstream out;
  out << std::setprecision(6) << std::fixed;
  out << "class\treal_dsc\testimated_dsc\tmethod\tfallback\n";
  for (const auto& r : report.rows) {
    out << r.class_index << '\t';
    if (r.real) {
      out << *r.real;
    } else {
      out << '-';
    }
    out << '\t' << r.estimated << '\t' << method_name(report.method) << '\t' << (r.fallback ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace csconf
