#include "defcalib/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <thread>

#include "CLI11.hpp"

#include "defcalib/error.hpp"
#include "defcalib/experiment.hpp"
#include "defcalib/io.hpp"
#include "defcalib/report.hpp"
#include "defcalib/synth.hpp"

namespace defcalib::cli {

namespace {

namespace fs = std::filesystem;

// Error raised while loading a particular class of input; carries the exit
// code it maps to.
struct Failure {
  int code;
  std::string message;
};

template <class F>
auto load(int code, const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const CalibError& e) {
    throw Failure{code, what + ": " + e.what()};
  }
}

int default_workers() {
  if (const char* env = std::getenv("DEFCALIB_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw Failure{kUsageError, "DEFCALIB_WORKERS must be a positive integer, got '" + std::string(env) + "'"};
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

struct SolverFlags {
  std::string kernel = "none";
  double kernel_scale = 1.0;
  int max_iterations = 200;
  std::string linear_solver = "dense";
  std::string jacobian = "analytic";

  void add(CLI::App* app) {
    app->add_option("--kernel", kernel, "Robust kernel")->check(CLI::IsMember({"none", "cauchy"}));
    app->add_option("--kernel-scale", kernel_scale, "Robust kernel scale (px)")->check(CLI::PositiveNumber);
    app->add_option("--max-iters", max_iterations, "Maximum solver iterations")->check(CLI::PositiveNumber);
    app->add_option("--linear-solver", linear_solver, "Normal-equation solver")
        ->check(CLI::IsMember({"dense", "schur"}));
    app->add_option("--jacobian", jacobian, "Jacobian evaluation")->check(CLI::IsMember({"analytic", "numeric"}));
  }
  SolverConfig config() const {
    SolverConfig c;
    c.kernel = parse_robust_kernel(kernel);
    c.kernel_scale = kernel_scale;
    c.max_iterations = max_iterations;
    c.linear_solver = linear_solver == "schur" ? LinearSolverKind::SchurFrames : LinearSolverKind::DenseCholesky;
    c.jacobian = parse_jacobian_mode(jacobian);
    return c;
  }
};

fs::path default_truth_path(const fs::path& dataset) {
  fs::path p = dataset;
  p.replace_extension();
  p += ".truth.json";
  return p;
}

void write(const fs::path& path, const std::string& text) {
  load(kDataError, "writing " + path.string(), [&] {
    io::write_text(path, text);
    return 0;
  });
}

int cmd_synth(const fs::path& config_path, const fs::path& output, std::optional<fs::path> truth_path,
              std::ostream& out) {
  const ScenarioConfig config = load(kUsageError, config_path.string(), [&] {
    return io::parse_synth_config(io::read_text(config_path));
  });
  const Scenario scenario = load(kUsageError, "generating scenario", [&] { return generate_scenario(config); });
  io::DatasetFile file{config.target, scenario.dataset, io::ImageSize{config.image_width, config.image_height}};
  write(output, io::dump_dataset(file));
  const fs::path tp = truth_path.value_or(default_truth_path(output));
  write(tp, io::dump_ground_truth(scenario.truth, config.target));
  out << "wrote " << output.string() << " (" << scenario.dataset.frames.size() << " frames, "
      << scenario.dataset.observation_count() << " observations) and " << tp.string() << "\n";
  return kOk;
}

int cmd_calibrate(const fs::path& dataset_path, const std::string& method, const SolverFlags& solver,
                  std::optional<SubsetProtocol> protocol, int workers, const fs::path& output,
                  std::optional<fs::path> csv, std::ostream& out) {
  const io::DatasetFile data = load(kDataError, dataset_path.string(), [&] { return io::load_dataset(dataset_path); });
  const SolverConfig config = load(kUsageError, "solver flags", [&] {
    SolverConfig c = solver.config();
    c.validate();
    return c;
  });
  if (protocol && protocol->subset_size > static_cast<int>(data.dataset.frames.size())) {
    throw Failure{kUsageError, "--subset-size " + std::to_string(protocol->subset_size) + " exceeds the " +
                                   std::to_string(data.dataset.frames.size()) + " frames of the dataset"};
  }
  const Report report = calibrate_report(data, dataset_path.filename().string(), parse_deformation_model(method),
                                         config, protocol, workers);
  write(output, dump_report(report));
  if (csv) write(*csv, runs_csv(report));

  const ReportAggregate agg = report.aggregate();
  out << "wrote " << output.string() << " (" << agg.runs << " runs, " << agg.succeeded << " succeeded";
  if (agg.rmse_train) out << ", mean training RMSE " << agg.rmse_train->mean << " px";
  out << ")\n";
  if (!protocol && !report.runs.front().succeeded()) {
    throw Failure{kNumericalError, "calibration failed: " + report.runs.front().message};
  }
  return kOk;
}

struct EvaluateFlags {
  fs::path input;
  fs::path output;
  std::optional<fs::path> csv;
  std::optional<fs::path> reference;
  std::optional<fs::path> reference_intrinsics;
  std::optional<fs::path> reference_correction;
  std::optional<int> grid_res;
  std::optional<double> depth;
  std::optional<int> image_width;
  std::optional<int> image_height;
};

int cmd_evaluate(const EvaluateFlags& f, const SolverFlags& solver, int workers, std::ostream& out) {
  if (!f.reference && !f.reference_intrinsics) {
    throw Failure{kUsageError, "evaluate needs --reference (test error) and/or --reference-intrinsics (mapping error)"};
  }
  if ((f.grid_res || f.depth) && !f.reference_intrinsics) {
    throw Failure{kUsageError, "--grid-res and --depth need --reference-intrinsics"};
  }
  if (f.reference_correction && !f.reference) {
    throw Failure{kUsageError, "--reference-correction needs --reference"};
  }

  Report report = load(kDataError, f.input.string(), [&] {
    const std::string text = io::read_text(f.input);
    const std::string kind = io::document_kind(text);
    if (kind == "report") return parse_report(text);
    const io::IntrinsicsFile intr = io::parse_intrinsics(text);
    Report r;
    r.dataset = f.input.filename().string();
    r.method = "external";
    r.image = intr.image;
    RunRecord run;
    run.status = "converged";
    run.intrinsics = intr.intrinsics;
    r.runs.push_back(std::move(run));
    return r;
  });

  EvaluationInputs inputs;
  inputs.solver = load(kUsageError, "solver flags", [&] {
    SolverConfig c = solver.config();
    c.validate();
    return c;
  });
  if (f.reference) {
    inputs.reference = load(kDataError, f.reference->string(), [&] { return io::load_dataset(*f.reference); });
    inputs.reference_name = f.reference->filename().string();
  }
  if (f.reference_correction) {
    const GroundTruth gt = load(kDataError, f.reference_correction->string(), [&] {
      return io::parse_ground_truth(io::read_text(*f.reference_correction));
    });
    if (!gt.static_correction) {
      throw Failure{kDataError, f.reference_correction->string() + ": no static correction in file"};
    }
    inputs.reference_correction = gt.static_correction;
    inputs.correction_name = f.reference_correction->filename().string();
  }
  if (f.reference_intrinsics) {
    const io::IntrinsicsFile intr = load(kDataError, f.reference_intrinsics->string(), [&] {
      return io::parse_intrinsics(io::read_text(*f.reference_intrinsics));
    });
    inputs.reference_intrinsics = intr.intrinsics;
    inputs.intrinsics_name = f.reference_intrinsics->filename().string();
    std::optional<io::ImageSize> size = intr.image ? intr.image : report.image;
    if (f.image_width || f.image_height) {
      if (!f.image_width || !f.image_height) throw Failure{kUsageError, "give both --image-width and --image-height"};
      size = io::ImageSize{*f.image_width, *f.image_height};
    }
    if (!size) {
      throw Failure{kUsageError, "image size unknown: pass --image-width and --image-height"};
    }
    inputs.mapping.image_width = size->width;
    inputs.mapping.image_height = size->height;
    if (f.grid_res) inputs.mapping.grid_resolution = *f.grid_res;
    if (f.depth) inputs.mapping.depth = *f.depth;
  }
  load(kUsageError, "evaluation", [&] {
    evaluate_report(report, inputs, workers);
    return 0;
  });
  write(f.output, dump_report(report));
  if (f.csv) write(*f.csv, runs_csv(report));

  const ReportAggregate agg = report.aggregate();
  out << "wrote " << f.output.string() << " (" << agg.runs << " runs";
  if (agg.rmse_test) out << ", mean test error " << agg.rmse_test->mean << " px";
  if (agg.mapping_error) out << ", mean mapping error " << agg.mapping_error->mean << " px";
  out << ")\n";
  return kOk;
}

int cmd_compare(const std::vector<fs::path>& inputs, std::optional<fs::path> output, std::ostream& out) {
  std::vector<Report> reports;
  for (const auto& path : inputs) {
    reports.push_back(load(kDataError, path.string(), [&] { return parse_report(io::read_text(path)); }));
  }
  const std::string table = compare_csv(std::move(reports));
  if (output) {
    write(*output, table);
  } else {
    out << table;
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Planar-target camera calibration with board deformation models", "defcalib"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "defcalib 0.1.0");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset and its ground truth");
  fs::path synth_config, synth_output;
  std::optional<fs::path> synth_truth;
  synth->add_option("config", synth_config, "Scenario configuration (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("-o,--output", synth_output, "Dataset file to write")->required();
  synth->add_option("--truth", synth_truth, "Ground-truth file (default: <output>.truth.json)");

  // calibrate
  auto* calib = app.add_subcommand("calibrate", "Calibrate a dataset, optionally over random frame subsets");
  fs::path calib_dataset, calib_output;
  std::string method;
  std::optional<int> subsets, subset_size;
  std::uint64_t seed = 0;
  std::optional<int> workers;
  std::optional<fs::path> calib_csv;
  SolverFlags calib_solver;
  calib->add_option("dataset", calib_dataset, "Dataset file")->required()->check(CLI::ExistingFile);
  calib->add_option("-m,--method", method, "Deformation model")
      ->required()
      ->check(CLI::IsMember({"standard", "static", "dynamic", "full"}));
  calib->add_option("-o,--output", calib_output, "Report file to write")->required();
  calib->add_option("--subsets", subsets, "Number of random frame subsets")->check(CLI::PositiveNumber);
  calib->add_option("--subset-size", subset_size, "Frames per subset")->check(CLI::PositiveNumber);
  calib->add_option("--seed", seed, "Subset sampling seed");
  calib->add_option("--workers", workers, "Parallel calibrations (env DEFCALIB_WORKERS)")->check(CLI::PositiveNumber);
  calib->add_option("--csv", calib_csv, "Also write per-run rows as CSV");
  calib_solver.add(calib);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Add test error and mapping error to a report or intrinsics file");
  EvaluateFlags ef;
  SolverFlags eval_solver;
  eval->add_option("input", ef.input, "Report or intrinsics file")->required()->check(CLI::ExistingFile);
  eval->add_option("-o,--output", ef.output, "Report file to write")->required();
  eval->add_option("--reference", ef.reference, "Reference dataset for the test error")->check(CLI::ExistingFile);
  eval->add_option("--reference-intrinsics", ef.reference_intrinsics,
                   "Intrinsics or ground-truth file for the mapping error")
      ->check(CLI::ExistingFile);
  eval->add_option("--reference-correction", ef.reference_correction,
                   "Ground-truth file whose static correction is held fixed in the test error")
      ->check(CLI::ExistingFile);
  eval->add_option("--grid-res", ef.grid_res, "Mapping-error grid points per axis")->check(CLI::Range(2, 100000));
  eval->add_option("--depth", ef.depth, "Mapping-error unprojection depth (m)")->check(CLI::PositiveNumber);
  eval->add_option("--image-width", ef.image_width, "Image width (px)")->check(CLI::PositiveNumber);
  eval->add_option("--image-height", ef.image_height, "Image height (px)")->check(CLI::PositiveNumber);
  eval->add_option("--workers", workers, "Parallel evaluations (env DEFCALIB_WORKERS)")->check(CLI::PositiveNumber);
  eval->add_option("--csv", ef.csv, "Also write per-run rows as CSV");
  eval_solver.add(eval);

  // compare
  auto* cmp = app.add_subcommand("compare", "Consolidate reports into one CSV table");
  std::vector<fs::path> cmp_inputs;
  std::optional<fs::path> cmp_output;
  cmp->add_option("reports", cmp_inputs, "Report files")->required()->check(CLI::ExistingFile);
  cmp->add_option("-o,--output", cmp_output, "CSV file (default: stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    for (auto* sub : app.get_subcommands()) {
      err << "run 'defcalib " << sub->get_name() << " --help' for usage\n";
      return kUsageError;
    }
    err << "run 'defcalib --help' for usage\n";
    return kUsageError;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_config, synth_output, synth_truth, out);
    const int n_workers = workers ? *workers : default_workers();
    if (calib->parsed()) {
      std::optional<SubsetProtocol> protocol;
      if (subsets.has_value() != subset_size.has_value()) {
        throw Failure{kUsageError, "--subsets and --subset-size must be given together"};
      }
      if (subsets) protocol = SubsetProtocol{*subsets, *subset_size, seed};
      return cmd_calibrate(calib_dataset, method, calib_solver, protocol, n_workers, calib_output, calib_csv, out);
    }
    if (eval->parsed()) return cmd_evaluate(ef, eval_solver, n_workers, out);
    if (cmp->parsed()) return cmd_compare(cmp_inputs, cmp_output, out);
  } catch (const Failure& f) {
    err << "error: " << f.message << "\n";
    return f.code;
  } catch (const CalibError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsageError;
}

}  // namespace defcalib::cli
