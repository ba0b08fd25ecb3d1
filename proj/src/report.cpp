#include "defcalib/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json_util.hpp"

namespace defcalib {

using namespace io::detail;

std::optional<double> RunRecord::mean_max_abs_dz() const {
  if (max_abs_dz.empty()) return std::nullopt;
  return std::accumulate(max_abs_dz.begin(), max_abs_dz.end(), 0.0) / static_cast<double>(max_abs_dz.size());
}

std::optional<Statistic> summarize(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  Statistic s;
  s.count = static_cast<int>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / s.count;
  if (s.count >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (s.count - 1));
  }
  return s;
}

ReportAggregate Report::aggregate() const {
  ReportAggregate agg;
  agg.runs = static_cast<int>(runs.size());
  std::vector<double> train, test, mapping, mapping_sym, dz;
  for (const auto& run : runs) {
    if (!run.succeeded()) continue;
    ++agg.succeeded;
    if (run.rmse_train) train.push_back(*run.rmse_train);
    if (run.rmse_test) test.push_back(*run.rmse_test);
    if (run.mapping_error) mapping.push_back(*run.mapping_error);
    if (run.mapping_error_symmetric) mapping_sym.push_back(*run.mapping_error_symmetric);
    if (auto m = run.mean_max_abs_dz()) dz.push_back(*m);
  }
  agg.rmse_train = summarize(train);
  agg.rmse_test = summarize(test);
  agg.mapping_error = summarize(mapping);
  agg.mapping_error_symmetric = summarize(mapping_sym);
  agg.max_abs_dz = summarize(dz);
  return agg;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json to_json(const std::optional<Statistic>& s) {
  if (!s) return nullptr;
  return {{"count", s->count}, {"mean", s->mean}, {"std", optional_number(s->std)}};
}

std::optional<double> optional_number_from(const Node& parent, const char* key) {
  if (auto n = parent.find(key)) return n->number();
  return std::nullopt;
}

}  // namespace

std::string dump_report(const Report& report) {
  json j = header("report");
  j["dataset"] = report.dataset;
  j["method"] = report.method;
  if (report.image) j["image"] = io::detail::to_json(*report.image);
  j["solver"] = {{"kernel", report.solver.kernel},
                 {"kernel_scale", report.solver.kernel_scale},
                 {"max_iterations", report.solver.max_iterations},
                 {"linear_solver", report.solver.linear_solver},
                 {"jacobian", report.solver.jacobian}};
  if (report.protocol) {
    j["protocol"] = {{"subsets", report.protocol->subsets},
                     {"subset_size", report.protocol->subset_size},
                     {"seed", report.protocol->seed}};
  } else {
    j["protocol"] = nullptr;
  }
  if (report.evaluation) {
    const auto& e = report.evaluation.value();
    j["evaluation"] = {{"reference_dataset", e.reference_dataset},
                       {"reference_intrinsics", e.reference_intrinsics},
                       {"reference_correction", e.reference_correction},
                       {"grid_resolution", e.grid_resolution},
                       {"depth", e.depth}};
  }
  json runs = json::array();
  for (const auto& run : report.runs) {
    json r;
    r["index"] = run.index;
    r["frames"] = run.frame_ids;
    r["status"] = run.status;
    r["message"] = run.message;
    r["iterations"] = run.iterations;
    r["intrinsics"] = run.intrinsics ? io::detail::to_json(*run.intrinsics) : json(nullptr);
    r["rmse_train"] = optional_number(run.rmse_train);
    r["rmse_test"] = optional_number(run.rmse_test);
    r["mapping_error"] = optional_number(run.mapping_error);
    r["mapping_error_symmetric"] = optional_number(run.mapping_error_symmetric);
    r["max_abs_dz"] = run.max_abs_dz;
    runs.push_back(std::move(r));
  }
  j["runs"] = std::move(runs);
  const ReportAggregate agg = report.aggregate();
  j["aggregate"] = {{"runs", agg.runs},
                    {"succeeded", agg.succeeded},
                    {"rmse_train", to_json(agg.rmse_train)},
                    {"rmse_test", to_json(agg.rmse_test)},
                    {"mapping_error", to_json(agg.mapping_error)},
                    {"mapping_error_symmetric", to_json(agg.mapping_error_symmetric)},
                    {"max_abs_dz", to_json(agg.max_abs_dz)}};
  return dump(j);
}

Report parse_report(const std::string& text) {
  const json doc = parse_document(text, "report");
  const Node root(doc, "");
  Report report;
  report.dataset = root.at("dataset").string();
  report.method = root.at("method").string();
  if (auto image = root.find("image")) report.image = image_from(*image);
  if (auto s = root.find("solver")) {
    report.solver.kernel = s->at("kernel").string();
    report.solver.kernel_scale = s->at("kernel_scale").number();
    report.solver.max_iterations = s->at("max_iterations").int32();
    report.solver.linear_solver = s->at("linear_solver").string();
    if (auto jm = s->find("jacobian")) report.solver.jacobian = jm->string();
  }
  if (auto p = root.find("protocol")) {
    const long long seed = p->at("seed").integer();
    report.protocol = SubsetProtocol{p->at("subsets").int32(), p->at("subset_size").int32(),
                                     static_cast<std::uint64_t>(seed)};
  }
  if (auto e = root.find("evaluation")) {
    report.evaluation = EvaluationInfo{e->at("reference_dataset").string(), e->at("reference_intrinsics").string(),
                                       e->at("reference_correction").string(), e->at("grid_resolution").int32(),
                                       e->at("depth").number()};
  }
  const Node runs = root.at("runs");
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const Node rn = runs[i];
    RunRecord run;
    run.index = rn.at("index").int32();
    const Node frames = rn.at("frames");
    for (std::size_t f = 0; f < frames.size(); ++f) run.frame_ids.push_back(frames[f].int32());
    run.status = rn.at("status").string();
    if (auto m = rn.find("message")) run.message = m->string();
    if (auto it = rn.find("iterations")) run.iterations = it->int32();
    if (auto k = rn.find("intrinsics")) run.intrinsics = intrinsics_from(*k);
    run.rmse_train = optional_number_from(rn, "rmse_train");
    run.rmse_test = optional_number_from(rn, "rmse_test");
    run.mapping_error = optional_number_from(rn, "mapping_error");
    run.mapping_error_symmetric = optional_number_from(rn, "mapping_error_symmetric");
    if (auto dz = rn.find("max_abs_dz")) {
      for (std::size_t f = 0; f < dz->size(); ++f) run.max_abs_dz.push_back((*dz)[f].number());
    }
    report.runs.push_back(std::move(run));
  }
  return report;
}

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

// RFC 4180 quoting when needed.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

int method_rank(const std::string& method) {
  static const std::array<const char*, 4> order = {"standard", "static", "dynamic", "full"};
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (method == order[i]) return static_cast<int>(i);
  }
  return static_cast<int>(order.size());
}

void append_statistic(std::ostringstream& out, const std::optional<Statistic>& s) {
  out << ',' << (s ? format_number(s->mean) : std::string()) << ','
      << (s && s->std ? format_number(*s->std) : std::string());
}

}  // namespace

std::string runs_csv(const Report& report) {
  std::ostringstream out;
  out << "dataset,method,run,status,frames,fx,fy,ppx,ppy,k1,k2,k3,rmse_train,rmse_test,mapping_error,"
         "mapping_error_symmetric,max_abs_dz_mean\n";
  for (const auto& run : report.runs) {
    out << csv_field(report.dataset) << ',' << csv_field(report.method) << ',' << run.index << ',' << run.status << ','
        << run.frame_ids.size();
    if (run.intrinsics) {
      for (double v : run.intrinsics->to_array()) out << ',' << format_number(v);
    } else {
      out << ",,,,,,,";
    }
    out << ',' << format_optional(run.rmse_train) << ',' << format_optional(run.rmse_test) << ','
        << format_optional(run.mapping_error) << ',' << format_optional(run.mapping_error_symmetric) << ','
        << format_optional(run.mean_max_abs_dz()) << '\n';
  }
  return out.str();
}

std::string compare_csv(std::vector<Report> reports) {
  std::stable_sort(reports.begin(), reports.end(), [](const Report& a, const Report& b) {
    if (a.dataset != b.dataset) return a.dataset < b.dataset;
    const int ra = method_rank(a.method);
    const int rb = method_rank(b.method);
    if (ra != rb) return ra < rb;
    return a.method < b.method;
  });
  std::ostringstream out;
  out << "dataset,method,runs,succeeded,rmse_train_mean,rmse_train_std,rmse_test_mean,rmse_test_std,"
         "mapping_error_mean,mapping_error_std,max_abs_dz_mean,max_abs_dz_std\n";
  for (const auto& report : reports) {
    const ReportAggregate agg = report.aggregate();
    out << csv_field(report.dataset) << ',' << csv_field(report.method) << ',' << agg.runs << ',' << agg.succeeded;
    append_statistic(out, agg.rmse_train);
    append_statistic(out, agg.rmse_test);
    append_statistic(out, agg.mapping_error);
    append_statistic(out, agg.max_abs_dz);
    out << '\n';
  }
  return out.str();
}

}  // namespace defcalib
