#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "defcalib/dataset.hpp"
#include "defcalib/geometry.hpp"
#include "defcalib/synth.hpp"
#include "defcalib/target.hpp"

// Versioned JSON file formats. Lengths are meters, image coordinates pixels,
// angles radians. Parse failures throw CalibError(Schema) naming the
// offending field; file access failures throw CalibError(Io).
namespace defcalib::io {

inline constexpr int kSchemaVersion = 1;

struct ImageSize {
  int width = 0;
  int height = 0;
};

struct DatasetFile {
  TargetSpec target;
  Dataset dataset;
  std::optional<ImageSize> image;
};

struct IntrinsicsFile {
  Intrinsics intrinsics;
  std::optional<ImageSize> image;
};

std::string dump_dataset(const DatasetFile& file);
DatasetFile parse_dataset(const std::string& text);

std::string dump_ground_truth(const GroundTruth& truth, const TargetSpec& spec);
GroundTruth parse_ground_truth(const std::string& text);

std::string dump_intrinsics(const IntrinsicsFile& file);
// Accepts intrinsics and ground-truth documents.
IntrinsicsFile parse_intrinsics(const std::string& text);

// Required: target, intrinsics, frames, seed. Everything else defaults.
ScenarioConfig parse_synth_config(const std::string& text);
std::string dump_synth_config(const ScenarioConfig& config);

// Value of the "kind" field of a versioned document.
std::string document_kind(const std::string& text);

std::string read_text(const std::filesystem::path& path);
// Writes via a temporary file in the same directory, then renames.
void write_text(const std::filesystem::path& path, const std::string& text);

DatasetFile load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const DatasetFile& file);

}  // namespace defcalib::io
