#include <filesystem>
#include <random>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "defcalib/cli.hpp"
#include "defcalib/io.hpp"
#include "defcalib/report.hpp"

namespace fs = std::filesystem;
using namespace defcalib;

namespace {

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("defcalib_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  void put(const std::string& name, const std::string& text) const { std::ofstream(dir / name) << text; }
};

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string config(const std::string& extra = "", int frames = 30) {
  return R"({"schema_version": 1, "kind": "synth_config",
    "target": {"rows": 6, "cols": 9, "spacing": 0.1},
    "intrinsics": {"fx": 1000, "fy": 1010, "ppx": 640, "ppy": 480, "k1": -0.12, "k2": 0.06, "k3": -0.01},
    "frames": )" + std::to_string(frames) + R"(, "seed": 7)" + extra + "}";
}

}  // namespace

TEST_CASE("synth is deterministic and writes both files") {
  Workspace ws;
  ws.put("c.json", config());
  REQUIRE(invoke({"synth", ws.path("c.json"), "-o", ws.path("a.json")}).code == cli::kOk);
  REQUIRE(invoke({"synth", ws.path("c.json"), "-o", ws.path("b.json"), "--truth", ws.path("gt.json")}).code == cli::kOk);
  CHECK(io::read_text(ws.path("a.json")) == io::read_text(ws.path("b.json")));
  CHECK(io::read_text(ws.path("a.truth.json")) == io::read_text(ws.path("gt.json")));
  const io::DatasetFile d = io::load_dataset(ws.path("a.json"));
  CHECK(io::dump_dataset(d) == io::read_text(ws.path("a.json")));
}

TEST_CASE("synth deformation bound in the ground truth file") {
  Workspace ws;
  ws.put("c.json", config(R"(, "deformation": {"regime": "dynamic", "dynamic_amplitude": 0.0026})"));
  REQUIRE(invoke({"synth", ws.path("c.json"), "-o", ws.path("d.json")}).code == cli::kOk);
  const GroundTruth gt = io::parse_ground_truth(io::read_text(ws.path("d.truth.json")));
  REQUIRE(gt.betas.size() == 30);
  for (const auto& b : gt.betas) CHECK(max_abs_offset({6, 9, 0.1}, b) <= 0.0026 * (1 + 1e-12));
}

TEST_CASE("synth config errors") {
  Workspace ws;
  std::string bad = config();
  bad.replace(bad.find("\"seed\": 7"), 9, "\"sed\": 7");
  ws.put("bad.json", bad);
  const Outcome r = invoke({"synth", ws.path("bad.json"), "-o", ws.path("x.json")});
  CHECK(r.code == cli::kUsageError);
  CHECK(r.err.find("seed") != std::string::npos);
  CHECK_FALSE(fs::exists(ws.path("x.json")));
}

TEST_CASE("calibrate evaluate compare") {
  Workspace ws;
  ws.put("c.json", config());
  REQUIRE(invoke({"synth", ws.path("c.json"), "-o", ws.path("d.json")}).code == cli::kOk);

  const Outcome full = invoke({"calibrate", ws.path("d.json"), "-m", "standard", "-o", ws.path("full.json")});
  REQUIRE(full.code == cli::kOk);
  const Report fr = parse_report(io::read_text(ws.path("full.json")));
  REQUIRE(fr.runs.size() == 1);
  CHECK(fr.aggregate().rmse_train->mean < 1e-6);

  const Outcome sub = invoke({"calibrate", ws.path("d.json"), "-m", "dynamic", "--subsets", "6", "--subset-size", "12",
                              "--seed", "3", "--workers", "2", "-o", ws.path("sub.json"), "--csv", ws.path("sub.csv")});
  REQUIRE(sub.code == cli::kOk);
  const Report sr = parse_report(io::read_text(ws.path("sub.json")));
  CHECK(sr.runs.size() == 6);
  CHECK(sr.runs[2].frame_ids.size() == 12);
  CHECK(fs::exists(ws.path("sub.csv")));

  // same inputs and seed, different worker count
  REQUIRE(invoke({"calibrate", ws.path("d.json"), "-m", "dynamic", "--subsets", "6", "--subset-size", "12", "--seed",
                  "3", "--workers", "1", "-o", ws.path("sub1.json")})
              .code == cli::kOk);
  CHECK(io::read_text(ws.path("sub.json")) == io::read_text(ws.path("sub1.json")));

  const Outcome ev = invoke({"evaluate", ws.path("sub.json"), "--reference", ws.path("d.json"),
                             "--reference-intrinsics", ws.path("d.truth.json"), "-o", ws.path("ev.json")});
  REQUIRE(ev.code == cli::kOk);
  const Report er = parse_report(io::read_text(ws.path("ev.json")));
  for (const auto& run : er.runs) {
    CHECK(*run.rmse_test < 1e-6);
    CHECK(*run.mapping_error < 1e-6);
  }

  const Outcome gt = invoke({"evaluate", ws.path("d.truth.json"), "--reference-intrinsics", ws.path("d.truth.json"),
                             "-o", ws.path("gt_eval.json")});
  REQUIRE(gt.code == cli::kOk);
  CHECK(*parse_report(io::read_text(ws.path("gt_eval.json"))).runs[0].mapping_error == 0.0);

  const Outcome cmp = invoke({"compare", ws.path("ev.json"), ws.path("full.json")});
  REQUIRE(cmp.code == cli::kOk);
  CHECK(cmp.out.find("d.json,standard,1,1,") < cmp.out.find("d.json,dynamic,6,6,"));
  REQUIRE(invoke({"compare", ws.path("ev.json"), ws.path("full.json"), "-o", ws.path("t.csv")}).code == cli::kOk);
  CHECK(io::read_text(ws.path("t.csv")) == cmp.out);
}

TEST_CASE("exit codes") {
  Workspace ws;
  ws.put("c.json", config("", 4));
  REQUIRE(invoke({"synth", ws.path("c.json"), "-o", ws.path("d.json")}).code == cli::kOk);

  CHECK(invoke({}).code == cli::kUsageError);
  CHECK(invoke({"frobnicate"}).code == cli::kUsageError);
  CHECK(invoke({"calibrate", ws.path("d.json"), "-m", "wobbly", "-o", ws.path("r.json")}).code == cli::kUsageError);
  CHECK(invoke({"calibrate", ws.path("d.json"), "-m", "standard", "--subsets", "3", "-o", ws.path("r.json")}).code ==
        cli::kUsageError);
  CHECK(invoke({"calibrate", ws.path("d.json"), "-m", "standard", "--subsets", "3", "--subset-size", "9", "-o",
                ws.path("r.json")})
            .code == cli::kUsageError);
  CHECK(invoke({"evaluate", ws.path("d.json"), "-o", ws.path("r.json")}).code == cli::kUsageError);

  ws.put("garbage.json", "{\"schema_version\": 1, \"kind\": \"dataset\"}");
  const Outcome g = invoke({"calibrate", ws.path("garbage.json"), "-m", "standard", "-o", ws.path("r.json")});
  CHECK(g.code == cli::kDataError);
  CHECK(g.err.find("target") != std::string::npos);
  CHECK(invoke({"compare", ws.path("d.json")}).code == cli::kDataError);

  // one frame cannot support a distortion model: numerical failure on the full path
  ws.put("c1.json", config("", 1));
  REQUIRE(invoke({"synth", ws.path("c1.json"), "-o", ws.path("one.json")}).code == cli::kOk);
  const Outcome n = invoke({"calibrate", ws.path("one.json"), "-m", "standard", "-o", ws.path("one_r.json")});
  CHECK(n.code == cli::kNumericalError);
  CHECK(fs::exists(ws.path("one_r.json")));

  // per-subset failures are recorded, not fatal
  const Outcome s = invoke({"calibrate", ws.path("one.json"), "-m", "standard", "--subsets", "2", "--subset-size", "1",
                            "-o", ws.path("one_s.json")});
  CHECK(s.code == cli::kOk);
  const Report sr = parse_report(io::read_text(ws.path("one_s.json")));
  CHECK(sr.runs.size() == 2);
  CHECK(sr.runs[0].status == "error");
}
