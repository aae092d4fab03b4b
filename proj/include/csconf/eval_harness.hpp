#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csconf/calibration.hpp"
#include "csconf/segmentation.hpp"
#include "csconf/types.hpp"

namespace csconf {

// Mean and population standard deviation of |pred - real|, in percentage points.
struct ErrorSummary {
  double mean = 0.0;
  double std = 0.0;
};

ErrorSummary mae(std::span<const double> pred, std::span<const double> real);

// Coefficient of determination 1 - SS_res / SS_tot.
double r2(std::span<const double> pred, std::span<const double> real);

struct ReportRow {
  std::string setting;
  Method method = Method::AC;
  double predicted = 0.0;
  std::optional<double> real;
};

struct MethodSummary {
  Method method = Method::AC;
  std::size_t count = 0;  // rows with real performance
  ErrorSummary error;
  std::optional<double> r2;  // absent with < 2 rows or constant real values
  bool fallback = false;     // the fitted calibrator flagged any class
};

struct EstimateReport {
  Task task = Task::Classification;
  std::vector<ReportRow> rows;
  std::vector<MethodSummary> summaries;
};

// Aggregates rows per method, in the order given by `methods`.
std::vector<MethodSummary> summarize(std::span<const ReportRow> rows, std::span<const Method> methods);

struct BenchmarkOptions {
  FitOptions fit;
  SegFitOptions seg;
};

// Fits every method on `validation` once, then estimates on every target.
// Segmentation performance is the mean Dice over foreground classes.
EstimateReport run_benchmark(const Dataset& validation, std::span<const Dataset> targets,
                             std::span<const Method> methods, const BenchmarkOptions& opts = {});

// Tab-separated rows followed by a blank line and the per-method summary.
std::string format_report_table(const EstimateReport& report);

// One JSON object per line: {"type":"row",...} then {"type":"summary",...}.
std::string format_report_jsonl(const EstimateReport& report);

}  // namespace csconf
