#include "csconf/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "csconf/calibration.hpp"
#include "csconf/calibrator_io.hpp"
#include "csconf/error.hpp"
#include "csconf/eval_harness.hpp"
#include "csconf/segmentation.hpp"
#include "csconf/shift_lab.hpp"
#include "csconf/tensor_io.hpp"

namespace csconf::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string valid_methods() {
  std::string s;
  for (Method m : all_methods()) s += (s.empty() ? "" : ", ") + std::string(method_name(m));
  return s;
}

Method method_from(const std::string& name) {
  const auto m = parse_method(name);
  if (!m) throw UsageError("unknown method '" + name + "'; valid methods: " + valid_methods());
  return *m;
}

std::optional<Task> task_from(const std::string& name) {
  if (name.empty()) return std::nullopt;
  if (name == "cls" || name == "classification") return Task::Classification;
  if (name == "seg" || name == "segmentation") return Task::Segmentation;
  throw UsageError("unknown task '" + name + "'; use cls or seg");
}

void require_path(const std::string& p, const char* flag) {
  if (!fs::exists(p)) throw DataError(std::string(flag) + " path does not exist: " + p);
}

LoadedManifest load_checked(const std::string& path, std::optional<Task> task) {
  LoadedManifest lm = load_manifest(path);
  if (task && *task != lm.manifest.task) {
    throw DataError("manifest " + path + " is a " + std::string(task_name(lm.manifest.task)) + " manifest");
  }
  return lm;
}

std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

struct Options {
  std::string method;
  std::vector<std::string> methods;
  std::string val;
  std::string target;
  std::vector<std::string> targets;
  std::string out;
  std::string task;
  std::string cal;
  std::string config;
  std::uint64_t seed = 1;
  double tol = 0.0;
};

BisectionOptions bisection_from(const Options& o, const CLI::App& sub) {
  BisectionOptions b;
  if (sub.count("--tol")) {
    if (!(o.tol > 0.0)) throw UsageError("--tol must be positive");
    b.residual = o.tol;
  }
  return b;
}

int cmd_fit(const Options& o, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  const Method method = method_from(o.method);
  const auto task = task_from(o.task);
  const auto bis = bisection_from(o, sub);
  require_path(o.val, "--val");
  const LoadedManifest lm = load_checked(o.val, task);
  if (!lm.data.has_labels()) throw DataError("validation manifest lacks labels");

  AnyCalibrator cal;
  bool infeasible = false;
  if (lm.data.task == Task::Classification) {
    FitOptions fo;
    fo.bisection = bis;
    Calibrator c = fit(method, lm.data.pooled(), fo);
    infeasible = c.all_fallback();
    cal = std::move(c);
  } else {
    SegFitOptions so;
    so.bisection = bis;
    SegCalibrator c = fit_seg_calibrator(lm.data.cases, method, so);
    infeasible = std::all_of(c.fallback.begin(), c.fallback.end(), [](bool b) { return b; });
    cal = std::move(c);
  }
  out << std::visit([](const auto& c) { return serialize_calibrator(c); }, cal);
  if (infeasible) {
    err << "fit infeasible: every class fell back to the global parameter; calibrator not written\n";
    return kFitInfeasible;
  }
  save_calibrator(cal, o.out);
  out << "wrote " << o.out << '\n';
  return kOk;
}

int cmd_estimate(const Options& o, std::ostream& out) {
  const auto task = task_from(o.task);
  require_path(o.cal, "--cal");
  require_path(o.target, "--target");
  const AnyCalibrator cal = load_calibrator(o.cal);
  const LoadedManifest lm = load_checked(o.target, task);
  const bool seg_cal = std::holds_alternative<SegCalibrator>(cal);
  if (seg_cal != (lm.data.task == Task::Segmentation)) {
    throw DataError(std::string("calibrator was fitted for ") + (seg_cal ? "segmentation" : "classification") +
                    " but the target manifest is " + std::string(task_name(lm.data.task)));
  }
  if (!seg_cal) {
    const auto& c = std::get<Calibrator>(cal);
    if (c.class_count != lm.data.class_count) throw DataError("calibrator and target disagree on class count");
    const PredictionSet target = lm.data.pooled();
    out << "method=" << method_name(c.method) << '\n';
    if (target.has_labels()) out << "real=" << fixed4(real_accuracy(target)) << '\n';
    out << "estimate=" << fixed4(estimate_accuracy(target, c)) << '\n';
    return kOk;
  }
  const auto& c = std::get<SegCalibrator>(cal);
  if (c.class_count != lm.data.class_count) throw DataError("calibrator and target disagree on class count");
  const DiceReport rep = make_dice_report(lm.data.cases, c);
  out << "method=" << method_name(c.method) << '\n';
  for (const auto& r : rep.rows) {
    if (r.real) out << "class_" << r.class_index << "_real=" << fixed4(*r.real) << '\n';
    out << "class_" << r.class_index << "_estimate=" << fixed4(r.estimated) << '\n';
  }
  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + o.out);
    f << format_dice_report(rep);
  }
  out << "estimate=" << fixed4(rep.mean_estimated()) << '\n';
  return kOk;
}

int cmd_eval(const Options& o, const CLI::App& sub, std::ostream& out) {
  const auto task = task_from(o.task);
  BenchmarkOptions bo;
  bo.fit.bisection = bisection_from(o, sub);
  bo.seg.bisection = bo.fit.bisection;
  std::vector<Method> methods;
  for (const auto& group : o.methods) {
    std::stringstream ss(group);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (!name.empty()) methods.push_back(method_from(name));
    }
  }
  require_path(o.val, "--val");
  for (const auto& t : o.targets) require_path(t, "--target");
  const LoadedManifest val = load_checked(o.val, task);
  if (methods.empty()) {
    for (Method m : all_methods()) {
      if (val.data.task == Task::Classification || seg_method_supported(m)) methods.push_back(m);
    }
  }
  std::vector<Dataset> targets;
  for (const auto& t : o.targets) {
    LoadedManifest lm = load_checked(t, val.data.task);
    // Setting ids come from the manifest location.
    lm.data.id = fs::path(resolve_manifest_path(t)).parent_path().filename().string();
    if (lm.data.id.empty()) lm.data.id = t;
    targets.push_back(std::move(lm.data));
  }
  const EstimateReport rep = run_benchmark(val.data, targets, methods, bo);
  const std::string table = format_report_table(rep);
  out << table;
  if (!o.out.empty()) {
    std::ofstream tsv(o.out + ".tsv", std::ios::binary | std::ios::trunc);
    std::ofstream jsonl(o.out + ".jsonl", std::ios::binary | std::ios::trunc);
    if (!tsv || !jsonl) throw DataError("cannot write report files with prefix " + o.out);
    tsv << table;
    jsonl << format_report_jsonl(rep);
  }
  return kOk;
}

int cmd_synth(const Options& o, const CLI::App& sub, std::ostream& out) {
  const auto task = task_from(o.task);
  SynthConfig cfg;
  if (!o.config.empty()) {
    require_path(o.config, "--config");
    std::ifstream in(o.config);
    std::stringstream buf;
    buf << in.rdbuf();
    cfg = parse_synth_config(buf.str());
    if (task && *task != cfg.task) throw UsageError("--task disagrees with the config file");
    if (sub.count("--seed")) {
      cfg.classification.seed = o.seed;
      cfg.segmentation.seed = o.seed;
    }
  } else {
    if (!task) throw UsageError("synth needs --task or --config");
    cfg = default_synth_config(*task, o.seed);
  }
  const SynthOutput data = synthesize(cfg);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "config.txt", std::ios::binary | std::ios::trunc);
    f << format_synth_config(cfg);
  }
  write_dataset(data.validation, Role::Validation, dir / "validation");
  std::ofstream list(dir / "targets.txt", std::ios::binary | std::ios::trunc);
  for (const auto& t : data.targets) {
    write_dataset(t, Role::Target, dir / t.id);
    list << t.id << "/manifest.txt\n";
  }
  out << "validation=" << (dir / "validation" / "manifest.txt").generic_string() << '\n';
  out << "targets=" << data.targets.size() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Estimate model accuracy or Dice on unlabeled target data from calibrated confidences", "csconf"};
  app.require_subcommand(1);
  Options o;

  auto* fit = app.add_subcommand("fit", "Fit a calibrator on a labelled validation manifest");
  fit->add_option("--method", o.method, "ac, ts, vs, doc, atc, ts_atc, cs_ts, cs_doc, cs_atc, cs_ts_atc")->required();
  fit->add_option("--val", o.val, "Validation manifest file or directory")->required();
  fit->add_option("--out", o.out, "Calibrator output path")->required();
  fit->add_option("--task", o.task, "cls or seg (checked against the manifest)");
  fit->add_option("--tol", o.tol, "Bisection residual tolerance");

  auto* est = app.add_subcommand("estimate", "Estimate performance on a target manifest");
  est->add_option("--target", o.target, "Target manifest file or directory")->required();
  est->add_option("--cal", o.cal, "Calibrator written by fit")->required();
  est->add_option("--task", o.task, "cls or seg");
  est->add_option("--out", o.out, "Optional Dice report path (segmentation)");

  auto* eval = app.add_subcommand("eval", "Benchmark methods over several target manifests");
  eval->add_option("--val", o.val, "Validation manifest")->required();
  eval->add_option("--target", o.targets, "Target manifest (repeatable)")->required();
  eval->add_option("--method", o.methods, "Methods (repeatable or comma-separated; default: all)");
  eval->add_option("--out", o.out, "Report prefix; writes <prefix>.tsv and <prefix>.jsonl");
  eval->add_option("--task", o.task, "cls or seg");
  eval->add_option("--tol", o.tol, "Bisection residual tolerance");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic validation set and shifted targets");
  synth->add_option("--task", o.task, "cls or seg");
  synth->add_option("--seed", o.seed, "Seed for every generator");
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--config", o.config, "Task/shift configuration file");

  std::vector<std::string> argv_store{"csconf"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (fit->parsed()) return cmd_fit(o, *fit, out, err);
    if (est->parsed()) return cmd_estimate(o, out);
    if (eval->parsed()) return cmd_eval(o, *eval, out);
    if (synth->parsed()) return cmd_synth(o, *synth, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace csconf::cli
