#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "semfusion/core/camera.hpp"
#include "semfusion/core/image.hpp"
#include "semfusion/ingest/dataset.hpp"

namespace semfusion::segment2d {

/// Per-pixel unit normals in the camera frame; the zero vector marks pixels
/// where the normal is undefined (border, or any central-difference neighbor
/// with invalid depth).
struct NormalMap {
  Image<Eigen::Vector3f> n;

  bool valid(int u, int v) const { return n.at(u, v).squaredNorm() > 0.25f; }
};

struct SegParams {
  double theta_edge_deg = 20.0;  // normal-angle edge threshold
  double delta_depth = 0.04;     // relative depth-gap edge threshold
  int min_area = 200;            // components below this many pixels are dropped
};

/// Geometric segmentation: R_d marks instance-covered pixels, instance ids are
/// dense 1..instance_count in scan order of each component's first pixel.
struct GeomSegmentation {
  MaskImage r_d;
  IndexImage instances;
  int instance_count = 0;
};

struct InstanceRecord {
  int class_id = 0;
  double probability = 0.0;
  int pixel_count = 0;
};

/// R*: detections clipped to R_d. Raster value k > 0 refers to records[k-1].
struct FilteredSeg {
  IndexImage instances;
  std::vector<InstanceRecord> records;
};

/// Central-difference tangents of unprojected neighbors, cross product,
/// oriented toward the camera (n . p < 0).
NormalMap compute_normals(const DepthImage& depth, const Intrinsics& K);

/// Edge pixels where 4-neighbor normal angle exceeds theta_edge or the depth
/// gap exceeds delta_depth * depth; instances are 4-connected components of
/// the remaining valid pixels with area >= min_area.
GeomSegmentation geometric_segment(const NormalMap& normals, const DepthImage& depth,
                                   const SegParams& params = {});

/// Keeps detection pixels only where R_d = 1; overlaps go to the higher score
/// (ties: lower class id, then input order). Detections left with no pixels
/// are dropped. Surviving records keep their input order.
FilteredSeg filter_semantic(const ingest::DetectionSet& detections,
                            const GeomSegmentation& geom);

/// Debug dumps: normals as RGB ((n+1)/2), instance ids via the class palette.
void write_normal_debug(const std::filesystem::path& path, const NormalMap& normals);
void write_instance_debug(const std::filesystem::path& path, const IndexImage& ids);

}  // namespace semfusion::segment2d
