#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include <Eigen/Core>

#include "semfusion/core/camera.hpp"
#include "semfusion/core/image.hpp"
#include "semfusion/core/pose.hpp"
#include "semfusion/segment2d/segment.hpp"

namespace semfusion::semmap {

struct PropagationParams {
  double t_iou = 0.4;      // strict: match only when IoU > t_iou
  double t_p1 = 0.9;       // detection-probability gate
  double t_p2 = 0.7;       // objects below this weight are removed
  double delta_up = 0.05;  // weight increment on agreement
  double delta_down = 0.05;
  int max_support = 512;   // support cloud subsample budget
  int splat_radius = 1;    // reprojection splat (1 => 3x3)

  void validate() const;  // ConfigError with field path on violation
};

struct SemanticObject {
  int id = 0;
  int class_id = 0;
  double weight = 0.0;                   // the object's probability, in [0,1]
  std::vector<Eigen::Vector3f> support;  // world-frame points, non-empty
  int last_seen = -1;                    // keyframe id
};

enum class Provenance { kFromDetector, kCorrectedByMap, kNewObject };

const char* provenance_name(Provenance p);

/// Per-instance result of one propagate call, parallel to FilteredSeg records.
struct InstanceOutcome {
  int class_id = 0;        // possibly overridden by the map
  double probability = 0;  // possibly overridden by the object weight
  Provenance provenance = Provenance::kFromDetector;
  int object_id = 0;  // matched or created map object; 0 = none
};

struct ConsistentMasks {
  segment2d::FilteredSeg seg;  // records carry the (possibly corrected) labels
  std::vector<InstanceOutcome> outcomes;
};

/// Sparse object map fused across keyframes; single writer, serialized calls.
class SparseSemanticMap {
 public:
  explicit SparseSemanticMap(PropagationParams params = {});

  const PropagationParams& params() const { return params_; }
  const std::map<int, SemanticObject>& objects() const { return objects_; }
  int next_id() const { return next_id_; }
  int last_keyframe() const { return last_keyframe_; }

  /// Versioned JSON checkpoint; reloading resumes propagation bit-identically.
  void save(const std::filesystem::path& path) const;
  static SparseSemanticMap load(const std::filesystem::path& path);

 private:
  friend ConsistentMasks propagate(SparseSemanticMap&, const segment2d::FilteredSeg&,
                                   const DepthImage&, const Pose&, const Intrinsics&,
                                   int);
  PropagationParams params_;
  std::map<int, SemanticObject> objects_;
  int next_id_ = 1;
  int last_keyframe_ = -1;
};

/// Union of (2r+1)x(2r+1) splats of the projected visible support points.
MaskImage reproject_object(const SemanticObject& obj, const Pose& camera_from_world,
                           const Intrinsics& K, int splat_radius = 1);

/// |a AND b| / |a OR b|; 0 when both empty. Throws std::invalid_argument on
/// dimension mismatch.
double mask_iou(const MaskImage& a, const MaskImage& b);

/// One keyframe of the propagation state machine: greedy best-IoU matching of
/// reprojected objects to frame instances, weight updates, label correction,
/// admission of confident new objects, removal below t_p2. The depth raster
/// seeds support clouds for new objects.
ConsistentMasks propagate(SparseSemanticMap& map, const segment2d::FilteredSeg& frame,
                          const DepthImage& depth, const Pose& camera_from_world,
                          const Intrinsics& K, int keyframe_id);

}  // namespace semfusion::semmap
