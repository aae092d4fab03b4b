#include "csconf/calibrator_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "csconf/error.hpp"

namespace csconf {

namespace {

constexpr std::string_view kHeader = "csconf-calibrator 1";

std::string real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void put(std::ostream& out, const char* key, const Eigen::VectorXd& v) {
  if (v.size() == 0) return;
  out << key;
  for (double x : v) out << ' ' << real(x);
  out << '\n';
}

void put(std::ostream& out, const char* key, const std::optional<double>& v) {
  if (v) out << key << ' ' << real(*v) << '\n';
}

void put_flags(std::ostream& out, const std::vector<bool>& flags) {
  out << "fallback";
  for (bool b : flags) out << ' ' << (b ? 1 : 0);
  out << '\n';
}

void put_params(std::ostream& out, const Calibrator& cal) {
  put(out, "temperature", cal.temperature);
  put(out, "class_temperature", cal.class_temperature);
  put(out, "vs_scale", cal.vs_scale);
  put(out, "vs_bias", cal.vs_bias);
  put(out, "vs_nll", cal.vs_nll);
  put(out, "difference", cal.difference);
  put(out, "class_difference", cal.class_difference);
  put(out, "threshold", cal.threshold);
  put(out, "class_threshold", cal.class_threshold);
}

double parse_real(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw FormatError("calibrator: bad number '" + s + "'");
  return v;
}

using Fields = std::map<std::string, std::vector<std::string>>;

Eigen::VectorXd vec(const Fields& f, const std::string& key) {
  const auto it = f.find(key);
  if (it == f.end()) return {};
  Eigen::VectorXd v(static_cast<Eigen::Index>(it->second.size()));
  for (std::size_t i = 0; i < it->second.size(); ++i) v(static_cast<Eigen::Index>(i)) = parse_real(it->second[i]);
  return v;
}

std::optional<double> scalar(const Fields& f, const std::string& key) {
  const auto it = f.find(key);
  if (it == f.end()) return std::nullopt;
  if (it->second.size() != 1) throw FormatError("calibrator: '" + key + "' takes one value");
  return parse_real(it->second.front());
}

const std::string& word(const Fields& f, const std::string& key) {
  const auto it = f.find(key);
  if (it == f.end() || it->second.size() != 1) throw FormatError("calibrator: missing or malformed '" + key + "'");
  return it->second.front();
}

}  // namespace

std::string serialize_calibrator(const Calibrator& cal) {
  cal.validate();
  std::ostringstream out;
  out << kHeader << '\n';
  out << "task classification\n";
  out << "method " << method_name(cal.method) << '\n';
  out << "class_count " << cal.class_count << '\n';
  put_params(out, cal);
  put_flags(out, cal.fallback);
  out << "end\n";
  return out.str();
}

std::string serialize_calibrator(const SegCalibrator& cal) {
  cal.params.validate();
  std::ostringstream out;
  out << kHeader << '\n';
  out << "task segmentation\n";
  out << "method " << method_name(cal.method) << '\n';
  out << "class_count " << cal.class_count << '\n';
  put_params(out, cal.params);
  put(out, "val_soft_dsc", cal.val_soft_dsc);
  put(out, "val_real_dsc", cal.val_real_dsc);
  put_flags(out, cal.fallback);
  out << "end\n";
  return out.str();
}

AnyCalibrator parse_calibrator(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw FormatError("not a csconf calibrator (bad header)");
  Fields f;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ls(line);
    std::string key, tok;
    ls >> key;
    std::vector<std::string> values;
    while (ls >> tok) values.push_back(tok);
    if (values.empty()) throw FormatError("calibrator: key '" + key + "' has no value");
    if (!f.emplace(key, std::move(values)).second) throw FormatError("calibrator: repeated key '" + key + "'");
  }
  if (!ended) throw FormatError("calibrator: missing 'end' line");

  static const std::vector<std::string> known = {
      "task",      "method",     "class_count",      "temperature", "class_temperature", "vs_scale",
      "vs_bias",   "vs_nll",     "difference",       "class_difference", "threshold",    "class_threshold",
      "fallback",  "val_soft_dsc", "val_real_dsc"};
  for (const auto& [k, v] : f) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw FormatError("calibrator: unknown key '" + k + "'");
  }

  const auto method = parse_method(word(f, "method"));
  if (!method) throw FormatError("calibrator: unknown method '" + word(f, "method") + "'");
  Task task;
  try {
    task = parse_task(word(f, "task"));
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  Calibrator p;
  p.method = *method;
  const double count = parse_real(word(f, "class_count"));
  if (count != std::floor(count) || count < 2 || count > 1e6) throw FormatError("calibrator: bad class_count");
  p.class_count = static_cast<int>(count);
  p.temperature = scalar(f, "temperature");
  p.class_temperature = vec(f, "class_temperature");
  p.vs_scale = vec(f, "vs_scale");
  p.vs_bias = vec(f, "vs_bias");
  p.vs_nll = scalar(f, "vs_nll");
  p.difference = scalar(f, "difference");
  p.class_difference = vec(f, "class_difference");
  p.threshold = scalar(f, "threshold");
  p.class_threshold = vec(f, "class_threshold");
  const auto flags = f.find("fallback");
  if (flags == f.end()) throw FormatError("calibrator: missing fallback flags");
  for (const auto& v : flags->second) {
    if (v != "0" && v != "1") throw FormatError("calibrator: fallback flags must be 0 or 1");
    p.fallback.push_back(v == "1");
  }

  try {
    if (task == Task::Classification) {
      p.validate();
      return p;
    }
    SegCalibrator s;
    s.method = *method;
    s.class_count = p.class_count;
    if (!seg_method_supported(s.method)) throw ArgumentError("method not available for segmentation");
    if (s.method == Method::AC || s.method == Method::CS_DOC) p.method = Method::AC;
    p.validate();
    s.fallback = p.fallback;
    s.params = std::move(p);
    s.val_soft_dsc = vec(f, "val_soft_dsc");
    s.val_real_dsc = vec(f, "val_real_dsc");
    if (s.val_soft_dsc.size() != s.class_count || s.val_real_dsc.size() != s.class_count) {
      throw ArgumentError("segmentation calibrator needs per-class val_soft_dsc and val_real_dsc");
    }
    return s;
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("calibrator: ") + e.what());
  }
}

void save_calibrator(const AnyCalibrator& cal, const std::filesystem::path& path) {
  const std::string text = std::visit([](const auto& c) { return serialize_calibrator(c); }, cal);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

AnyCalibrator load_calibrator(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open calibrator " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_calibrator(buf.str());
}

}  // namespace csconf
