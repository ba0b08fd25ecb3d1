#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "defcalib/cli.hpp"
#include "defcalib/error.hpp"
#include "defcalib/experiment.hpp"
#include "defcalib/io.hpp"
#include "defcalib/metrics.hpp"
#include "defcalib/report.hpp"
#include "defcalib/solver.hpp"
#include "defcalib/synth.hpp"

namespace py = pybind11;
using namespace defcalib;

namespace {

// observations of one frame as (corner n, corner m, u, v) rows
Eigen::MatrixXd frame_table(const Frame& f) {
  Eigen::MatrixXd t(f.observations.size(), 4);
  for (std::size_t i = 0; i < f.observations.size(); ++i) {
    const auto& o = f.observations[i];
    t.row(i) << o.corner.n, o.corner.m, o.uv.x(), o.uv.y();
  }
  return t;
}

SolverConfig solver_config(const std::string& kernel, double kernel_scale, int max_iterations,
                           const std::string& linear_solver, const std::string& jacobian) {
  SolverConfig c;
  c.jacobian = parse_jacobian_mode(jacobian);
  c.kernel = parse_robust_kernel(kernel);
  c.kernel_scale = kernel_scale;
  c.max_iterations = max_iterations;
  if (linear_solver == "schur") {
    c.linear_solver = LinearSolverKind::SchurFrames;
  } else if (linear_solver != "dense") {
    throw CalibError(ErrorCode::InvalidArgument, "unknown linear solver '" + linear_solver + "'");
  }
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Planar-target camera calibration with board deformation models";

  static py::exception<CalibError> calib_error(m, "CalibError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const CalibError& e) {
      const std::string msg = std::string(to_string(e.code())) + ": " + e.what();
      PyErr_SetString(calib_error.ptr(), msg.c_str());
    }
  });

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init([](double fx, double fy, double ppx, double ppy, double k1, double k2, double k3) {
             return Intrinsics{fx, fy, ppx, ppy, k1, k2, k3};
           }),
           py::arg("fx"), py::arg("fy"), py::arg("ppx"), py::arg("ppy"), py::arg("k1") = 0.0, py::arg("k2") = 0.0,
           py::arg("k3") = 0.0)
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("ppx", &Intrinsics::ppx)
      .def_readwrite("ppy", &Intrinsics::ppy)
      .def_readwrite("k1", &Intrinsics::k1)
      .def_readwrite("k2", &Intrinsics::k2)
      .def_readwrite("k3", &Intrinsics::k3)
      .def("to_list", [](const Intrinsics& i) {
        const auto a = i.to_array();
        return std::vector<double>(a.begin(), a.end());
      })
      .def("project", [](const Intrinsics& i, const Eigen::Vector3d& x) { return Eigen::Vector2d(project(x, i)); },
           py::arg("point"))
      .def("unproject", [](const Intrinsics& i, const Eigen::Vector2d& p, double depth) {
             return Eigen::Vector3d(unproject_at_depth(p, i, depth));
           },
           py::arg("pixel"), py::arg("depth") = 1.0)
      .def(py::self == py::self)
      .def("__repr__", [](const Intrinsics& i) {
        std::ostringstream s;
        s.precision(10);
        s << "Intrinsics(fx=" << i.fx << ", fy=" << i.fy << ", ppx=" << i.ppx << ", ppy=" << i.ppy << ", k1=" << i.k1
          << ", k2=" << i.k2 << ", k3=" << i.k3 << ")";
        return s.str();
      });

  py::class_<TargetSpec>(m, "TargetSpec")
      .def(py::init([](int rows, int cols, double spacing) { return TargetSpec{rows, cols, spacing}; }),
           py::arg("rows"), py::arg("cols"), py::arg("spacing"))
      .def_readonly("rows", &TargetSpec::rows)
      .def_readonly("cols", &TargetSpec::cols)
      .def_readonly("spacing", &TargetSpec::spacing)
      .def_property_readonly("corner_count", &TargetSpec::corner_count);

  py::class_<io::DatasetFile>(m, "Dataset")
      .def_static("from_json", &io::parse_dataset, py::arg("text"))
      .def_static("load", [](const std::string& path) { return io::load_dataset(path); }, py::arg("path"))
      .def("to_json", &io::dump_dataset)
      .def("save", [](const io::DatasetFile& d, const std::string& path) { io::save_dataset(path, d); },
           py::arg("path"))
      .def_readonly("target", &io::DatasetFile::target)
      .def_property_readonly("image_size",
                             [](const io::DatasetFile& d) -> py::object {
                               if (!d.image) return py::none();
                               return py::make_tuple(d.image->width, d.image->height);
                             })
      .def_property_readonly("frame_ids",
                             [](const io::DatasetFile& d) {
                               std::vector<int> ids;
                               for (const auto& f : d.dataset.frames) ids.push_back(f.frame_id);
                               return ids;
                             })
      .def_property_readonly("observation_count", [](const io::DatasetFile& d) { return d.dataset.observation_count(); })
      .def("observations", [](const io::DatasetFile& d, int index) { return frame_table(d.dataset.frames.at(index)); },
           py::arg("index"), "Rows of (corner n, corner m, u, v) for the frame at this position.")
      .def("subset", [](const io::DatasetFile& d, const std::vector<int>& indices) {
        return io::DatasetFile{d.target, d.dataset.subset(indices), d.image};
      },
           py::arg("indices"))
      .def("__len__", [](const io::DatasetFile& d) { return d.dataset.frames.size(); });

  py::class_<Scenario>(m, "Scenario")
      .def_property_readonly("truth_intrinsics", [](const Scenario& s) { return s.truth.intrinsics; })
      .def_property_readonly("betas",
                             [](const Scenario& s) {
                               Eigen::MatrixXd b(s.truth.betas.size(), 3);
                               for (std::size_t j = 0; j < s.truth.betas.size(); ++j) {
                                 b.row(j) = s.truth.betas[j].as_vector().transpose();
                               }
                               return b;
                             })
      .def_readonly("unobserved_corners", &Scenario::unobserved_corners);

  m.def(
      "synthesize",
      [](const std::string& config_json) {
        const ScenarioConfig c = io::parse_synth_config(config_json);
        Scenario s = generate_scenario(c);
        io::DatasetFile data{c.target, s.dataset, io::ImageSize{c.image_width, c.image_height}};
        const std::string truth = io::dump_ground_truth(s.truth, c.target);
        return py::make_tuple(std::move(data), std::move(s), truth);
      },
      py::arg("config_json"), "Generate a synthetic scenario: (dataset, scenario, ground-truth JSON).");

  py::class_<CalibrationResult>(m, "CalibrationResult")
      .def_property_readonly("intrinsics", [](const CalibrationResult& r) { return r.intrinsics(); })
      .def_readonly("rmse", &CalibrationResult::rmse)
      .def_readonly("final_cost", &CalibrationResult::final_cost)
      .def_readonly("iterations", &CalibrationResult::iterations)
      .def_readonly("message", &CalibrationResult::message)
      .def_readonly("frame_ids", &CalibrationResult::frame_ids)
      .def_property_readonly("status", [](const CalibrationResult& r) { return std::string(to_string(r.status)); })
      .def_property_readonly("ok", &CalibrationResult::ok)
      .def_property_readonly("residuals", [](const CalibrationResult& r) { return r.residuals; })
      .def_property_readonly("betas", [](const CalibrationResult& r) {
        Eigen::MatrixXd b(r.parameters.betas.size(), 3);
        for (std::size_t j = 0; j < r.parameters.betas.size(); ++j) b.row(j) = r.parameters.betas[j].as_vector().transpose();
        return b;
      });

  m.def(
      "calibrate",
      [](const io::DatasetFile& data, const std::string& method, const std::string& kernel, double kernel_scale,
         int max_iterations, const std::string& linear_solver, const std::string& jacobian) {
        const SolverConfig c = solver_config(kernel, kernel_scale, max_iterations, linear_solver, jacobian);
        const DeformationModel model = parse_deformation_model(method);
        py::gil_scoped_release release;
        return calibrate(data.dataset, data.target, model, c);
      },
      py::arg("dataset"), py::arg("method") = "standard", py::arg("kernel") = "none", py::arg("kernel_scale") = 1.0,
      py::arg("max_iterations") = 200, py::arg("linear_solver") = "dense", py::arg("jacobian") = "analytic");

  m.def(
      "calibrate_subsets",
      [](const io::DatasetFile& data, const std::string& method, int subsets, int subset_size, std::uint64_t seed,
         int workers) {
        const DeformationModel model = parse_deformation_model(method);
        py::gil_scoped_release release;
        return dump_report(
            calibrate_report(data, "dataset", model, {}, SubsetProtocol{subsets, subset_size, seed}, workers));
      },
      py::arg("dataset"), py::arg("method"), py::arg("subsets"), py::arg("subset_size"), py::arg("seed") = 0,
      py::arg("workers") = 1, "Subset protocol; returns the report as JSON.");

  m.def(
      "test_error",
      [](const Intrinsics& intrinsics, const io::DatasetFile& reference) {
        return test_error(intrinsics, reference.dataset, reference.target, nullptr);
      },
      py::arg("intrinsics"), py::arg("reference"));

  m.def(
      "mapping_error",
      [](const Intrinsics& a, const Intrinsics& b, int image_width, int image_height, int grid_resolution,
         double depth) {
        MappingErrorConfig c;
        c.image_width = image_width;
        c.image_height = image_height;
        c.grid_resolution = grid_resolution;
        c.depth = depth;
        return mapping_error(a, b, c).rmse;
      },
      py::arg("a"), py::arg("b"), py::arg("image_width") = 1280, py::arg("image_height") = 960,
      py::arg("grid_resolution") = 50, py::arg("depth") = 1.0);

  m.def(
      "compare",
      [](const std::vector<std::string>& reports) {
        std::vector<Report> parsed;
        for (const auto& r : reports) parsed.push_back(parse_report(r));
        return compare_csv(std::move(parsed));
      },
      py::arg("reports"), "Consolidated CSV table from report JSON documents.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in process: (exit code, stdout, stderr).");
}
