#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "semfusion/core/camera.hpp"
#include "semfusion/core/image.hpp"
#include "semfusion/core/pose.hpp"
#include "semfusion/fusion/mesh.hpp"
#include "semfusion/ingest/dataset.hpp"

namespace semfusion::synth {

struct BoxPrim {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
};

struct SpherePrim {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;
};

/// Finite rectangle: points p with n.(p - origin) = 0, |tangent coords| <=
/// half_extent. Tangent axes are derived deterministically from the normal.
struct PlanePrim {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double half_extent = 4.0;
};

struct Primitive {
  std::variant<BoxPrim, SpherePrim, PlanePrim> shape;
  int class_id = 1;     // >= 1; raster value 0 is background
  int instance_id = 1;  // >= 1; may repeat across primitives of the same class
};

struct NoiseModel {
  double depth_sigma = 0.0;  // meters; 0 disables depth noise
  double flip_prob = 0.0;    // [0,1): chance an instance detection is mislabeled
  std::map<int, int> confusable;  // class -> substituted class; default class+1
  double score_lo = 0.85, score_hi = 0.95;            // correct detections
  double flip_score_lo = 0.85, flip_score_hi = 0.95;  // mislabeled detections
  // When set, only views seeing less than partial_fraction of the instance's
  // best (largest) silhouette are eligible for flips.
  bool flip_partial_only = false;
  double partial_fraction = 0.7;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  std::vector<Pose> waypoints;  // kWorldFromCamera; interpolated over frames
  int frame_count = 1;
  Intrinsics intrinsics{525.0, 525.0, 319.5, 239.5, 640, 480};
  NoiseModel noise;
  uint64_t seed = 0;
  double fps = 30.0;
  double max_depth = 10.0;
  double sample_spacing = 0.02;  // GT surface sample grid pitch (m)

  /// Throws ConfigError with a field path for degenerate primitives,
  /// frame_count < 1, inconsistent instance classes, or bad noise ranges.
  void validate() const;
};

struct RenderedFrame {
  int id = 0;
  double timestamp = 0.0;
  DepthImage depth;        // noisy when depth_sigma > 0; 0 = no hit
  DepthImage depth_clean;  // noise-free raycast depth
  IndexImage gt_instance;  // 0 = background
  IndexImage gt_class;     // 0 = background
  Pose camera_from_world = Pose::identity(PoseFrame::kCameraFromWorld);
};

struct RenderResult {
  std::vector<RenderedFrame> frames;
  fusion::Mesh gt_samples;  // triangle-free labeled point cloud
};

/// Camera pose (kWorldFromCamera) at `eye` with +z toward `target`; image up
/// tracks world `up`.
Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
             const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ());

/// Distance of p from the primitive's surface (meters); raycast oracle helper.
double surface_residual(const Primitive& prim, const Eigen::Vector3d& p);

/// Per-pixel raycast of every frame plus ground-truth surface samples.
/// Deterministic for a fixed spec. Throws DataError when a camera center lies
/// inside a box or sphere.
RenderResult render(const SceneSpec& spec);

/// One DetectionSet per frame: a detection per visible instance, class flipped
/// with noise.flip_prob (seeded by spec.seed, per frame+instance).
std::vector<ingest::DetectionSet> corrupt_detections(
    const std::vector<RenderedFrame>& frames, const NoiseModel& noise,
    uint64_t seed);

/// Writes the on-disk layout consumed by ingest::SequenceReader plus GT
/// rasters (gt/), sample cloud (gt_samples.ply), and the spec (scene.json).
void write_dataset(const SceneSpec& spec, const RenderResult& result,
                   const std::vector<ingest::DetectionSet>& detections,
                   const std::filesystem::path& root, double depth_scale = 5000.0);

SceneSpec load_scene_spec(const std::filesystem::path& json_path);
void save_scene_spec(const SceneSpec& spec, const std::filesystem::path& json_path);

}  // namespace semfusion::synth
