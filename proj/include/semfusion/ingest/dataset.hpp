#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semfusion/core/camera.hpp"
#include "semfusion/core/image.hpp"
#include "semfusion/core/pose.hpp"

namespace semfusion::ingest {

/// One 2D instance detection: NYU40-style class id, confidence, binary mask.
struct Detection {
  int class_id = 0;
  double score = 0.0;
  MaskImage mask;
};

struct DetectionSet {
  int frame_id = -1;
  std::vector<Detection> detections;
};

struct FrameRecord {
  int id = -1;
  double timestamp = 0.0;
  ColorImage rgb;
  DepthImage depth;  // meters, 0 = invalid
  Pose pose;         // camera-from-world
};

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;  // camera-from-world after loading
};

/// Raw 16-bit depth counts to meters; raw 0 stays invalid (0).
DepthImage decode_depth(const RawDepthImage& raw, double counts_per_meter);

/// TUM-style trajectory: "timestamp tx ty tz qx qy qz qw" world-from-camera
/// lines, '#' comments. Poses come back camera-from-world. Quaternions off
/// unit norm by more than 1e-3 are renormalized with a warning.
std::vector<TimedPose> load_trajectory(const std::filesystem::path& path,
                                       std::vector<std::string>* warnings = nullptr);

void save_trajectory(const std::filesystem::path& path,
                     const std::vector<TimedPose>& trajectory);

struct AssociationEntry {
  double rgb_time = 0.0;
  std::string rgb_path;
  double depth_time = 0.0;
  std::string depth_path;
};

/// Whitespace-separated "timestamp rgb_rel_path timestamp depth_rel_path"
/// lines; '#' comments. Malformed lines are reported with their line number.
std::vector<AssociationEntry> load_association(const std::filesystem::path& path);

/// Alternating run lengths in row-major order, starting with a run of zeros.
MaskImage decode_rle(const std::vector<int64_t>& runs, int height, int width);
std::vector<int64_t> encode_rle(const MaskImage& mask);

/// Per-frame JSON manifest: [{"class_id":int,"score":float,"mask":...}] where
/// mask is a PNG path relative to the dataset root or {"rle":[...],"size":[h,w]}.
DetectionSet load_detections(const std::filesystem::path& json_path,
                             const std::filesystem::path& dataset_root,
                             int frame_id, int width, int height);

struct SequenceConfig {
  double depth_scale = 5000.0;    // counts per meter (TUM/ICL convention)
  double pose_tolerance = 0.020;  // seconds
  int stride = 1;                 // keep every stride-th frame
};

/// Indexes a dataset directory (association file, trajectory, depth/rgb PNGs,
/// optional detections/) and serves frames in timestamp order. Frames whose
/// nearest pose is further than the tolerance are skipped with a warning.
class SequenceReader {
 public:
  SequenceReader(std::filesystem::path root, SequenceConfig config);

  size_t size() const { return entries_.size(); }
  int frame_id(size_t i) const { return entries_[i].id; }
  double timestamp(size_t i) const { return entries_[i].timestamp; }
  const Pose& pose(size_t i) const { return entries_[i].pose; }

  /// Loads rgb + depth from disk. Missing rgb is tolerated (left empty).
  FrameRecord frame(size_t i) const;

  /// Detections for frame i; empty set when the manifest is absent.
  DetectionSet detections(size_t i) const;

  const Intrinsics& intrinsics() const { return intrinsics_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  struct Entry {
    int id;
    double timestamp;
    std::filesystem::path rgb;
    std::filesystem::path depth;
    Pose pose;
  };

  std::filesystem::path root_;
  SequenceConfig config_;
  Intrinsics intrinsics_;
  std::vector<Entry> entries_;
  std::vector<std::string> warnings_;
};

/// Zero-padded frame id used in on-disk file names ("000042").
std::string frame_name(int frame_id);

}  // namespace semfusion::ingest
