#pragma once

#include <optional>
#include <string>

#include "defcalib/io.hpp"
#include "defcalib/metrics.hpp"
#include "defcalib/report.hpp"
#include "defcalib/solver.hpp"

namespace defcalib {

// Calibrates every subset of the protocol (or the whole dataset when no
// protocol is given). Failures of single runs are recorded in the report.
// Runs are distributed over `workers` threads; the report does not depend on
// the worker count.
Report calibrate_report(const io::DatasetFile& data, const std::string& dataset_name, DeformationModel model,
                        const SolverConfig& config, const std::optional<SubsetProtocol>& protocol, int workers = 1);

struct EvaluationInputs {
  std::optional<io::DatasetFile> reference;  // enables the test error
  std::string reference_name;
  std::optional<StaticCorrection> reference_correction;
  std::string correction_name;
  std::optional<Intrinsics> reference_intrinsics;  // enables the mapping error
  std::string intrinsics_name;
  MappingErrorConfig mapping;
  SolverConfig solver;
};

// Fills the test-error and mapping-error columns of every run that has
// intrinsics. The mapping error unprojects with the reference intrinsics.
void evaluate_report(Report& report, const EvaluationInputs& inputs, int workers = 1);

SolverSummary summarize_config(const SolverConfig& config);

}  // namespace defcalib
