#pragma once

#include <filesystem>
#include <string>

#include "semfusion/fusion/tsdf.hpp"
#include "semfusion/segment2d/segment.hpp"
#include "semfusion/semmap/semantic_map.hpp"

namespace semfusion::cli {

/// Everything a pipeline command needs, mirrored 1:1 by the config file keys
/// (section.key) and the flag overrides. See load_config for the file format.
struct PipelineConfig {
  // [dataset]
  std::filesystem::path dataset;
  double depth_scale = 5000.0;  // counts per meter
  int keyframe_stride = 1;
  int max_frames = 0;  // 0 = no limit

  // [segment2d]
  segment2d::SegParams segment;

  // [semmap]
  semmap::PropagationParams semmap;
  bool propagation = true;  // off = detector labels pass through unchanged

  // [fusion]
  fusion::TsdfVolume::Params fusion;

  // [project]
  double eps_occ_scale = 1.5;  // eps_occ = scale * voxel_size
  int feature_level = 1;
  std::string feature_provider = "class_prob";  // "class_prob" | "file"
  std::filesystem::path feature_dir;            // required for "file"
  int num_classes = 41;                         // NYU40 + unannotated 0

  // [output]
  std::filesystem::path out = "out";
  uint64_t seed = 0;
  bool brute_force_oracles = false;

  /// Range checks for every field; throws ConfigError naming the field path.
  void validate() const;
};

/// TOML-like file: [section] headers, key = value lines, '#' comments.
/// Unknown keys and malformed values are ConfigErrors with file:line context.
PipelineConfig load_config(const std::filesystem::path& path);

/// Sets one field by its dotted path ("semmap.t_iou"), parsing the value.
void apply_override(PipelineConfig& config, const std::string& key,
                    const std::string& value);

/// Canonical text form; equal configs dump equal bytes.
std::string dump_config(const PipelineConfig& config);

/// FNV-1a over dump_config, as 16 hex digits. Recorded in logs + manifest.
std::string config_hash(const PipelineConfig& config);

}  // namespace semfusion::cli
