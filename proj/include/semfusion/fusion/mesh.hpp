#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "semfusion/core/image.hpp"

namespace semfusion::fusion {

/// Triangle mesh in world coordinates. colors/labels are optional per-vertex
/// attributes: either empty or the same length as vertices. A mesh with no
/// triangles doubles as a labeled point cloud (ground-truth surface samples).
struct Mesh {
  std::vector<Eigen::Vector3f> vertices;
  std::vector<std::array<int32_t, 3>> triangles;
  std::vector<Rgb8> colors;
  std::vector<uint16_t> labels;

  bool has_colors() const { return !colors.empty(); }
  bool has_labels() const { return !labels.empty(); }

  /// Index/size/NaN/degeneracy checks; throws DataError naming the defect.
  void validate() const;
};

/// Binary little-endian PLY with float32 x,y,z, optional uchar red/green/blue,
/// optional ushort class_id, and an int32 triangle list.
void write_ply(const Mesh& mesh, const std::filesystem::path& path);

/// Reads meshes written by write_ply (tolerating extra scalar properties).
/// Malformed input raises DataError with the byte offset of the failure.
Mesh read_ply(const std::filesystem::path& path);

}  // namespace semfusion::fusion
