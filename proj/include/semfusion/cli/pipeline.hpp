#pragma once

#include <filesystem>

#include "semfusion/cli/config.hpp"
#include "semfusion/eval/metrics.hpp"
#include "semfusion/fusion/mesh.hpp"

namespace semfusion::cli {

// Library entry points behind the CLI subcommands. They throw (ConfigError,
// DataError, std::exception); the binary maps those to exit codes 1/2/3.
// Every command writes its artifacts plus manifest.json, config.txt and
// run.log under config.out, and is byte-deterministic for a fixed config.

struct ReconstructOutput {
  fusion::Mesh mesh;
  std::filesystem::path mesh_ply;
  int frames = 0;
};

ReconstructOutput run_reconstruct(const PipelineConfig& config);

struct PropagateOutput {
  int keyframes = 0;
  int corrected = 0;    // instances whose label the map overrode
  int map_objects = 0;  // objects alive at the end
  std::filesystem::path masks_dir;
  std::filesystem::path checkpoint;
};

/// `resume` points at a map checkpoint to continue from (empty = fresh map).
PropagateOutput run_propagate(const PipelineConfig& config,
                              const std::filesystem::path& resume = {});

struct SemanticOutput {
  fusion::Mesh mesh;  // labeled
  eval::EvalReport report;
  bool evaluated = false;  // true when the dataset ships gt_samples.ply
  std::filesystem::path mesh_ply;
  std::filesystem::path report_json;
};

SemanticOutput run_semantic(const PipelineConfig& config);

/// Compares a reconstructed PLY against a GT sample cloud; adds mIoU/mAcc when
/// both carry labels (GT label of a vertex = label of its nearest GT sample).
eval::EvalReport run_eval(const std::filesystem::path& pred_ply,
                          const std::filesystem::path& gt_ply, int num_classes,
                          bool brute_force, const std::filesystem::path& out_dir);

/// Renders a scene spec into an ingest-ready dataset rooted at out_root.
std::filesystem::path run_synth(const std::filesystem::path& spec_json,
                                const std::filesystem::path& out_root,
                                double depth_scale = 5000.0);

}  // namespace semfusion::cli
