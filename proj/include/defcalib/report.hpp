#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "defcalib/geometry.hpp"
#include "defcalib/io.hpp"

namespace defcalib {

// One calibration run (one subset, or the full dataset).
struct RunRecord {
  int index = 0;
  std::vector<int> frame_ids;
  std::string status;  // solver status, or "error" when the run threw
  std::string message;
  int iterations = 0;
  std::optional<Intrinsics> intrinsics;
  std::optional<double> rmse_train;
  std::optional<double> rmse_test;
  std::optional<double> mapping_error;
  std::optional<double> mapping_error_symmetric;
  std::vector<double> max_abs_dz;  // per frame, models with a dynamic block

  bool succeeded() const { return status == "converged" || status == "max_iter"; }
  std::optional<double> mean_max_abs_dz() const;
};

// Mean and sample standard deviation (n - 1); std is absent below two values.
struct Statistic {
  int count = 0;
  double mean = 0.0;
  std::optional<double> std;
};

std::optional<Statistic> summarize(std::span<const double> values);

struct ReportAggregate {
  int runs = 0;
  int succeeded = 0;
  std::optional<Statistic> rmse_train;
  std::optional<Statistic> rmse_test;
  std::optional<Statistic> mapping_error;
  std::optional<Statistic> mapping_error_symmetric;
  std::optional<Statistic> max_abs_dz;  // over per-run means
};

struct SubsetProtocol {
  int subsets = 0;
  int subset_size = 0;
  std::uint64_t seed = 0;
};

struct SolverSummary {
  std::string kernel = "none";
  double kernel_scale = 1.0;
  int max_iterations = 200;
  std::string linear_solver = "dense";
  std::string jacobian = "analytic";
};

struct EvaluationInfo {
  std::string reference_dataset;     // empty when no test error was computed
  std::string reference_intrinsics;  // empty when no mapping error was computed
  std::string reference_correction;
  int grid_resolution = 0;
  double depth = 0.0;
};

// Aggregates only cover succeeded runs.
struct Report {
  std::string dataset;
  std::string method;
  std::optional<io::ImageSize> image;
  SolverSummary solver;
  std::optional<SubsetProtocol> protocol;
  std::vector<RunRecord> runs;
  std::optional<EvaluationInfo> evaluation;

  ReportAggregate aggregate() const;
};

std::string dump_report(const Report& report);
Report parse_report(const std::string& text);

// One line per run.
std::string runs_csv(const Report& report);

// One row per (dataset, method), sorted by dataset and then by method in the
// order standard, static, dynamic, full (other names last, alphabetical).
std::string compare_csv(std::vector<Report> reports);

}  // namespace defcalib
