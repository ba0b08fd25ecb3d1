#include "defcalib/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

#include "defcalib/error.hpp"
#include "defcalib/synth.hpp"

namespace defcalib {

namespace {

// Calls task(i) for i in [0, count) on up to `workers` threads.
void parallel_for(int count, int workers, const std::function<void(int)>& task) {
  workers = std::clamp(workers, 1, std::max(count, 1));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) task(i);
    });
  }
  for (auto& t : pool) t.join();
}

RunRecord run_one(const io::DatasetFile& data, const Dataset& dataset, DeformationModel model,
                  const SolverConfig& config, int index) {
  RunRecord run;
  run.index = index;
  for (const auto& frame : dataset.frames) run.frame_ids.push_back(frame.frame_id);
  try {
    const CalibrationResult result = calibrate(dataset, data.target, model, config);
    run.status = std::string(to_string(result.status));
    run.message = result.message;
    run.iterations = result.iterations;
    run.intrinsics = result.intrinsics();
    if (result.residuals.size() > 0) run.rmse_train = result.rmse;
    for (const auto& beta : result.parameters.betas) run.max_abs_dz.push_back(max_abs_offset(data.target, beta));
  } catch (const CalibError& e) {
    run.status = "error";
    run.message = std::string(to_string(e.code())) + ": " + e.what();
  }
  return run;
}

}  // namespace

SolverSummary summarize_config(const SolverConfig& config) {
  SolverSummary s;
  s.kernel = std::string(to_string(config.kernel));
  s.kernel_scale = config.kernel_scale;
  s.max_iterations = config.max_iterations;
  s.linear_solver = config.linear_solver == LinearSolverKind::SchurFrames ? "schur" : "dense";
  s.jacobian = std::string(to_string(config.jacobian));
  return s;
}

Report calibrate_report(const io::DatasetFile& data, const std::string& dataset_name, DeformationModel model,
                        const SolverConfig& config, const std::optional<SubsetProtocol>& protocol, int workers) {
  config.validate();
  Report report;
  report.dataset = dataset_name;
  report.method = std::string(to_string(model));
  report.image = data.image;
  report.solver = summarize_config(config);
  report.protocol = protocol;

  if (!protocol) {
    report.runs.push_back(run_one(data, data.dataset, model, config, 0));
    return report;
  }
  const auto subsets = sample_subsets(data.dataset, protocol->subsets, protocol->subset_size, protocol->seed);
  report.runs.resize(subsets.size());
  parallel_for(static_cast<int>(subsets.size()), workers, [&](int i) {
    report.runs[i] = run_one(data, data.dataset.subset(subsets[i]), model, config, i);
  });
  return report;
}

void evaluate_report(Report& report, const EvaluationInputs& inputs, int workers) {
  if (!inputs.reference && !inputs.reference_intrinsics) {
    throw CalibError(ErrorCode::InvalidArgument, "nothing to evaluate: give a reference dataset or reference intrinsics");
  }
  if (inputs.reference_correction && !inputs.reference) {
    throw CalibError(ErrorCode::InvalidArgument, "a reference correction needs a reference dataset");
  }
  if (inputs.reference_intrinsics) inputs.mapping.validate();
  if (inputs.reference) {
    inputs.solver.validate();
    if (inputs.reference_correction &&
        static_cast<int>(inputs.reference_correction->offsets.size()) != inputs.reference->target.corner_count()) {
      throw CalibError(ErrorCode::InvalidArgument, "reference correction does not match the reference target");
    }
  }

  const StaticCorrection* correction = inputs.reference_correction ? &*inputs.reference_correction : nullptr;
  parallel_for(static_cast<int>(report.runs.size()), workers, [&](int i) {
    RunRecord& run = report.runs[i];
    run.rmse_test.reset();
    run.mapping_error.reset();
    run.mapping_error_symmetric.reset();
    if (!run.intrinsics || !run.succeeded()) return;
    const auto note = [&](const std::string& what, const CalibError& e) {
      if (!run.message.empty()) run.message += "; ";
      run.message += what + ": " + e.what();
    };
    if (inputs.reference) {
      try {
        run.rmse_test = test_error(*run.intrinsics, inputs.reference->dataset, inputs.reference->target, correction,
                                   inputs.solver);
      } catch (const CalibError& e) {
        note("test error", e);
      }
    }
    if (inputs.reference_intrinsics) {
      try {
        run.mapping_error = mapping_error(*inputs.reference_intrinsics, *run.intrinsics, inputs.mapping).rmse;
        run.mapping_error_symmetric = symmetric_mapping_error(*inputs.reference_intrinsics, *run.intrinsics, inputs.mapping);
      } catch (const CalibError& e) {
        note("mapping error", e);
      }
    }
  });

  EvaluationInfo info;
  info.reference_dataset = inputs.reference ? inputs.reference_name : "";
  info.reference_intrinsics = inputs.reference_intrinsics ? inputs.intrinsics_name : "";
  info.reference_correction = inputs.reference_correction ? inputs.correction_name : "";
  info.grid_resolution = inputs.reference_intrinsics ? inputs.mapping.grid_resolution : 0;
  info.depth = inputs.reference_intrinsics ? inputs.mapping.depth : 0.0;
  report.evaluation = info;
}

}  // namespace defcalib
