#include "defcalib/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "defcalib/error.hpp"
#include "json_util.hpp"

namespace defcalib::io {

using namespace detail;

std::string dump_dataset(const DatasetFile& file) {
  json j = header("dataset");
  j["target"] = to_json(file.target);
  if (file.image) j["image"] = to_json(*file.image);
  j["camera_id"] = file.dataset.camera_id;
  json frames = json::array();
  for (const auto& frame : file.dataset.frames) {
    json obs = json::array();
    for (const auto& o : frame.observations) {
      obs.push_back({{"n", o.corner.n}, {"m", o.corner.m}, {"u", o.uv.x()}, {"v", o.uv.y()}});
    }
    frames.push_back({{"frame_id", frame.frame_id}, {"observations", std::move(obs)}});
  }
  j["frames"] = std::move(frames);
  return dump(j);
}

DatasetFile parse_dataset(const std::string& text) {
  const json doc = parse_document(text, "dataset");
  const Node root(doc, "");
  DatasetFile out;
  out.target = target_from(root.at("target"));
  if (auto image = root.find("image")) out.image = image_from(*image);
  if (auto id = root.find("camera_id")) out.dataset.camera_id = id->string();
  const Node frames = root.at("frames");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Node fn = frames[f];
    Frame frame;
    frame.frame_id = fn.at("frame_id").int32();
    const Node obs = fn.at("observations");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const Node on = obs[i];
      frame.observations.push_back(
          {CornerId{on.at("n").int32(), on.at("m").int32()}, Eigen::Vector2d(on.at("u").number(), on.at("v").number())});
    }
    out.dataset.frames.push_back(std::move(frame));
  }
  try {
    out.dataset.validate(out.target);
  } catch (const CalibError& e) {
    schema_error(std::string("invalid dataset: ") + e.what());
  }
  return out;
}

std::string dump_ground_truth(const GroundTruth& truth, const TargetSpec& spec) {
  json j = header("ground_truth");
  j["target"] = to_json(spec);
  j["image"] = to_json(ImageSize{truth.image_width, truth.image_height});
  j["model"] = std::string(to_string(truth.model()));
  j["intrinsics"] = to_json(truth.intrinsics);
  json frames = json::array();
  for (std::size_t f = 0; f < truth.poses.size(); ++f) {
    json fj = {{"frame_id", static_cast<int>(f)}, {"pose", to_json(truth.poses[f])}};
    if (!truth.betas.empty()) {
      const auto& b = truth.betas[f];
      fj["beta"] = {{"a", b.a}, {"b", b.b}, {"c", b.c}};
      fj["max_abs_dz"] = max_abs_offset(spec, b);
    }
    frames.push_back(std::move(fj));
  }
  j["frames"] = std::move(frames);
  if (truth.static_correction) {
    json offsets = json::array();
    for (const auto& o : truth.static_correction->offsets) offsets.push_back(vec3(o));
    j["static_correction"] = {{"in_plane", truth.static_correction->in_plane}, {"offsets", std::move(offsets)}};
  } else {
    j["static_correction"] = nullptr;
  }
  return dump(j);
}

GroundTruth parse_ground_truth(const std::string& text) {
  const json doc = parse_document(text, "ground_truth");
  const Node root(doc, "");
  GroundTruth gt;
  const TargetSpec spec = target_from(root.at("target"));
  const ImageSize image = image_from(root.at("image"));
  gt.image_width = image.width;
  gt.image_height = image.height;
  gt.intrinsics = intrinsics_from(root.at("intrinsics"));
  const Node frames = root.at("frames");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    gt.poses.push_back(pose_from(frames[f].at("pose")));
    if (auto beta = frames[f].find("beta")) {
      gt.betas.push_back({beta->at("a").number(), beta->at("b").number(), beta->at("c").number()});
    }
  }
  if (!gt.betas.empty() && gt.betas.size() != gt.poses.size()) {
    schema_error("field 'frames': beta must be given for every frame or none");
  }
  if (auto sc = root.find("static_correction")) {
    StaticCorrection c;
    c.in_plane = sc->at("in_plane").boolean();
    const Node offsets = sc->at("offsets");
    if (static_cast<int>(offsets.size()) != spec.corner_count()) {
      schema_error("field '" + offsets.path() + "' must have one entry per corner");
    }
    for (std::size_t i = 0; i < offsets.size(); ++i) c.offsets.push_back(vec3_from(offsets[i]));
    gt.static_correction = std::move(c);
  }
  return gt;
}

std::string dump_intrinsics(const IntrinsicsFile& file) {
  json j = header("intrinsics");
  if (file.image) j["image"] = to_json(*file.image);
  j["intrinsics"] = to_json(file.intrinsics);
  return dump(j);
}

IntrinsicsFile parse_intrinsics(const std::string& text) {
  const json doc = parse_document(text, nullptr);
  const Node root(doc, "");
  const std::string kind = root.at("kind").string();
  if (kind != "intrinsics" && kind != "ground_truth") {
    schema_error("expected an 'intrinsics' or 'ground_truth' document, got '" + kind + "'");
  }
  IntrinsicsFile out;
  out.intrinsics = intrinsics_from(root.at("intrinsics"));
  if (auto image = root.find("image")) out.image = image_from(*image);
  return out;
}

ScenarioConfig parse_synth_config(const std::string& text) {
  const json doc = parse_document(text, "synth_config");
  const Node root(doc, "");
  ScenarioConfig c;
  c.target = target_from(root.at("target"));
  c.intrinsics = intrinsics_from(root.at("intrinsics"));
  c.frames = root.at("frames").int32();
  const long long seed = root.at("seed").integer();
  if (seed < 0) schema_error("field 'seed' must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  if (auto image = root.find("image")) {
    const ImageSize size = image_from(*image);
    c.image_width = size.width;
    c.image_height = size.height;
  }
  if (auto sigma = root.find("noise_sigma")) c.noise_sigma = sigma->number();
  if (auto poses = root.find("poses")) {
    auto& p = c.poses;
    if (auto v = poses->find("distance_min")) p.distance_min = v->number();
    if (auto v = poses->find("distance_max")) p.distance_max = v->number();
    if (auto v = poses->find("tilt_max")) p.tilt_max = v->number();
    if (auto v = poses->find("roll_max")) p.roll_max = v->number();
    if (auto v = poses->find("center_region")) p.center_region = v->number();
    if (auto v = poses->find("min_visible_fraction")) p.min_visible_fraction = v->number();
    if (auto v = poses->find("max_attempts")) p.max_attempts = v->int32();
  }
  if (auto def = root.find("deformation")) {
    auto& d = c.deformation;
    const Node regime = def->at("regime");
    try {
      d.regime = parse_deformation_regime(regime.string());
    } catch (const CalibError& e) {
      schema_error("field '" + regime.path() + "': " + e.what());
    }
    if (auto v = def->find("static_amplitude")) d.static_amplitude = v->number();
    if (auto v = def->find("dynamic_amplitude")) d.dynamic_amplitude = v->number();
    if (auto v = def->find("dynamic_min_amplitude")) d.dynamic_min_amplitude = v->number();
  }
  try {
    c.validate();
  } catch (const CalibError& e) {
    schema_error(e.what());
  }
  return c;
}

std::string dump_synth_config(const ScenarioConfig& c) {
  json j = header("synth_config");
  j["target"] = to_json(c.target);
  j["intrinsics"] = to_json(c.intrinsics);
  j["frames"] = c.frames;
  j["seed"] = c.seed;
  j["image"] = to_json(ImageSize{c.image_width, c.image_height});
  j["noise_sigma"] = c.noise_sigma;
  j["poses"] = {{"distance_min", c.poses.distance_min},
                {"distance_max", c.poses.distance_max},
                {"tilt_max", c.poses.tilt_max},
                {"roll_max", c.poses.roll_max},
                {"center_region", c.poses.center_region},
                {"min_visible_fraction", c.poses.min_visible_fraction},
                {"max_attempts", c.poses.max_attempts}};
  j["deformation"] = {{"regime", std::string(to_string(c.deformation.regime))},
                      {"static_amplitude", c.deformation.static_amplitude},
                      {"dynamic_amplitude", c.deformation.dynamic_amplitude},
                      {"dynamic_min_amplitude", c.deformation.dynamic_min_amplitude}};
  return dump(j);
}

std::string document_kind(const std::string& text) {
  const json doc = parse_document(text, nullptr);
  return Node(doc, "").at("kind").string();
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CalibError(ErrorCode::Io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw CalibError(ErrorCode::Io, "error reading '" + path.string() + "'");
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CalibError(ErrorCode::Io, "cannot open '" + tmp.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw CalibError(ErrorCode::Io, "error writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw CalibError(ErrorCode::Io, "cannot move output into place at '" + path.string() + "'");
  }
}

DatasetFile load_dataset(const std::filesystem::path& path) {
  try {
    return parse_dataset(read_text(path));
  } catch (const CalibError& e) {
    if (e.code() == ErrorCode::Schema) throw CalibError(ErrorCode::Schema, path.string() + ": " + e.what());
    throw;
  }
}

void save_dataset(const std::filesystem::path& path, const DatasetFile& file) { write_text(path, dump_dataset(file)); }

}  // namespace defcalib::io
