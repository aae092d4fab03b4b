#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csconf/calibration.hpp"
#include "csconf/types.hpp"

namespace csconf {

// Class 0 is background. `params` holds per-class temperatures and/or
// thresholds applied by predicted class, exactly as in classification.
struct SegCalibrator {
  Method method = Method::AC;
  int class_count = 0;
  Calibrator params;
  Eigen::VectorXd val_soft_dsc;  // sDSC_j on validation after calibration
  Eigen::VectorXd val_real_dsc;  // mean per-case hard Dice
  std::vector<bool> fallback;
};

bool seg_method_supported(Method m);

// Hard Dice of the argmax mask against ground truth for class j. Both masks
// empty gives 1, exactly one empty gives 0.
double real_dsc(const SegCase& c, int j);
double mean_real_dsc(std::span<const SegCase> cases, int j);

// Soft Dice: the mask is the raw argmax, the overlap uses `calibrated`.
// A case whose denominator is zero contributes 1.
double soft_dsc_case(const SegCase& c, const ProbMatrix& calibrated, int j);
double soft_dsc(std::span<const SegCase> cases, std::span<const ProbMatrix> calibrated, int j);

std::vector<ProbMatrix> calibrated_case_probabilities(std::span<const SegCase> cases, const Calibrator& params);

enum class SearchMode { Auto, Bisection, Grid };

struct SegFitOptions {
  BisectionOptions bisection;
  SearchMode temperature_search = SearchMode::Auto;
  int temperature_grid = 256;
  int threshold_grid = 1024;
  int max_sweeps = 3;  // Gauss-Seidel passes over foreground classes when c > 2
};

SegCalibrator fit_seg_calibrator(std::span<const SegCase> cases, Method method,
                                 const SegFitOptions& opts = {});

// Estimated Dice for class j on target cases, clamped to [0, 1].
double estimate_dsc(std::span<const SegCase> cases, const SegCalibrator& cal, int j);

struct DiceReport {
  struct Row {
    int class_index = 0;
    std::optional<double> real;
    double estimated = 0.0;
    bool fallback = false;
    std::vector<double> case_estimated;
    std::vector<double> case_real;  // empty without labels
  };
  Method method = Method::AC;
  std::vector<Row> rows;  // foreground classes, ascending

  // Mean estimated Dice over foreground classes.
  double mean_estimated() const;
  std::optional<double> mean_real() const;
};

DiceReport make_dice_report(std::span<const SegCase> cases, const SegCalibrator& cal);

// Tab-separated: class, real_dsc (or "-"), estimated_dsc, method, fallback.
std::string format_dice_report(const DiceReport& report);

}  // namespace csconf
