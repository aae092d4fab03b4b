#include "csconf/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "csconf/error.hpp"

namespace csconf {

namespace {

// (pred, real) pairs in a canonical order so every sum below is
// independent of the order settings were supplied in.
std::vector<std::pair<double, double>> sorted_pairs(std::span<const double> pred, std::span<const double> real) {
  if (pred.size() != real.size()) throw ArgumentError("predicted and real lists differ in length");
  if (pred.empty()) throw ArgumentError("empty predicted/real lists");
  std::vector<std::pair<double, double>> v;
  v.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) v.emplace_back(pred[i], real[i]);
  std::sort(v.begin(), v.end());
  return v;
}

double mean_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

ErrorSummary mae(std::span<const double> pred, std::span<const double> real) {
  const auto pairs = sorted_pairs(pred, real);
  std::vector<double> err;
  err.reserve(pairs.size());
  for (const auto& [p, r] : pairs) err.push_back(std::abs(p - r) * 100.0);
  ErrorSummary out;
  out.mean = mean_of(err);
  std::vector<double> dev;
  dev.reserve(err.size());
  for (double e : err) dev.push_back((e - out.mean) * (e - out.mean));
  out.std = std::sqrt(mean_of(dev));
  return out;
}

double r2(std::span<const double> pred, std::span<const double> real) {
  const auto pairs = sorted_pairs(pred, real);
  if (pairs.size() < 2) throw ArgumentError("r2 needs at least two points");
  std::vector<double> rv;
  for (const auto& pr : pairs) rv.push_back(pr.second);
  const double mean = mean_of(rv);
  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto& [p, r] : pairs) {
    ss_res += (r - p) * (r - p);
    ss_tot += (r - mean) * (r - mean);
  }
  if (!(ss_tot > 0.0)) throw ArgumentError("r2 undefined: real values have no variance");
  return 1.0 - ss_res / ss_tot;
}

std::vector<MethodSummary> summarize(std::span<const ReportRow> rows, std::span<const Method> methods) {
  std::vector<MethodSummary> out;
  for (Method m : methods) {
    MethodSummary s;
    s.method = m;
    std::vector<double> pred, real;
    for (const auto& r : rows) {
      if (r.method != m || !r.real) continue;
      pred.push_back(r.predicted);
      real.push_back(*r.real);
    }
    s.count = pred.size();
    if (!pred.empty()) s.error = mae(pred, real);
    if (pred.size() >= 2) {
      try {
        s.r2 = r2(pred, real);
      } catch (const ArgumentError&) {
        s.r2.reset();
      }
    }
    out.push_back(s);
  }
  return out;
}

EstimateReport run_benchmark(const Dataset& validation, std::span<const Dataset> targets,
                             std::span<const Method> methods, const BenchmarkOptions& opts) {
  if (!validation.has_labels()) throw DataError("benchmark validation data must be labelled");
  for (const auto& t : targets) {
    if (t.task != validation.task) throw DataError("target '" + t.id + "' has a different task than validation");
    if (t.class_count != validation.class_count) throw DataError("target '" + t.id + "' has a different class count");
  }
  EstimateReport rep;
  rep.task = validation.task;
  std::vector<bool> flagged;

  if (validation.task == Task::Classification) {
    const PredictionSet val = validation.pooled();
    std::vector<Calibrator> cals;
    for (Method m : methods) {
      cals.push_back(fit(m, val, opts.fit));
      const auto& f = cals.back().fallback;
      flagged.push_back(std::any_of(f.begin(), f.end(), [](bool b) { return b; }));
    }
    for (const auto& t : targets) {
      const PredictionSet target = t.pooled();
      std::optional<double> real;
      if (t.has_labels()) real = real_accuracy(target);
      for (std::size_t k = 0; k < methods.size(); ++k) {
        rep.rows.push_back({t.id, methods[k], estimate_accuracy(target, cals[k]), real});
      }
    }
  } else {
    for (Method m : methods) {
      if (!seg_method_supported(m)) {
        throw DataError("method '" + std::string(method_name(m)) + "' cannot estimate Dice for segmentation");
      }
    }
    std::vector<SegCalibrator> cals;
    for (Method m : methods) {
      cals.push_back(fit_seg_calibrator(validation.cases, m, opts.seg));
      const auto& f = cals.back().fallback;
      flagged.push_back(std::any_of(f.begin() + 1, f.end(), [](bool b) { return b; }));
    }
    const int c = validation.class_count;
    for (const auto& t : targets) {
      std::optional<double> real;
      if (t.has_labels()) {
        double s = 0.0;
        for (int j = 1; j < c; ++j) s += mean_real_dsc(t.cases, j);
        real = s / (c - 1);
      }
      for (std::size_t k = 0; k < methods.size(); ++k) {
        double s = 0.0;
        for (int j = 1; j < c; ++j) s += estimate_dsc(t.cases, cals[k], j);
        rep.rows.push_back({t.id, methods[k], s / (c - 1), real});
      }
    }
  }
  rep.summaries = summarize(rep.rows, methods);
  for (std::size_t k = 0; k < rep.summaries.size(); ++k) rep.summaries[k].fallback = flagged[k];
  return rep;
}

std::string format_report_table(const EstimateReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6);
  out << "setting\tmethod\tpredicted\treal\n";
  for (const auto& r : report.rows) {
    out << r.setting << '\t' << method_name(r.method) << '\t' << r.predicted << '\t';
    if (r.real) {
      out << *r.real;
    } else {
      out << '-';
    }
    out << '\n';
  }
  out << "\nmethod\tn\tmae_mean_pp\tmae_std_pp\tr2\tfallback\n";
  for (const auto& s : report.summaries) {
    out << method_name(s.method) << '\t' << s.count << '\t' << s.error.mean << '\t' << s.error.std << '\t';
    if (s.r2) {
      out << *s.r2;
    } else {
      out << '-';
    }
    out << '\t' << (s.fallback ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string format_report_jsonl(const EstimateReport& report) {
  using nlohmann::json;
  std::ostringstream out;
  out << json{{"type", "meta"}, {"task", task_name(report.task)}}.dump() << '\n';
  for (const auto& r : report.rows) {
    json j{{"type", "row"}, {"setting", r.setting}, {"method", method_name(r.method)}, {"predicted", r.predicted}};
    j["real"] = r.real ? json(*r.real) : json(nullptr);
    out << j.dump() << '\n';
  }
  for (const auto& s : report.summaries) {
    json j{{"type", "summary"},      {"method", method_name(s.method)}, {"count", s.count},
           {"mae_mean", s.error.mean}, {"mae_std", s.error.std},          {"fallback", s.fallback}};
    j["r2"] = s.r2 ? json(*s.r2) : json(nullptr);
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace csconf
