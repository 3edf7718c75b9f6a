#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "semfusion/core/camera.hpp"
#include "semfusion/core/image.hpp"
#include "semfusion/core/pose.hpp"
#include "semfusion/fusion/mesh.hpp"
#include "semfusion/fusion/tsdf.hpp"
#include "semfusion/project/features.hpp"

namespace semfusion::spblock {

/// The shared index space of the SP-Block: N voxel sample points with their
/// integer grid coordinates (unique per entry).
struct VoxelSet {
  std::vector<Eigen::Vector3f> points;   // world positions
  std::vector<fusion::GridKey> grid;     // matching integer coordinates

  size_t size() const { return points.size(); }
  /// Throws std::invalid_argument on size mismatch or duplicate grid keys.
  void validate() const;
};

/// Voxels containing mesh vertices, deduplicated, points at voxel centers,
/// sorted by grid key.
VoxelSet voxel_set_from_mesh(const fusion::Mesh& mesh, float voxel_size,
                             const Eigen::Vector3f& origin = Eigen::Vector3f::Zero());

/// Per-view visibility of the voxel points (binary mask B_k), plus the
/// full-resolution pixel each visible point landed on.
struct IntersectionMask {
  std::vector<uint8_t> visible;        // size N
  std::vector<Eigen::Vector2i> pixel;  // size N, (-1,-1) where not visible

  int count() const;
};

/// True iff the point projects in-image, the projected camera depth matches
/// the measured depth within eps_occ, and the filtered segmentation labels
/// that pixel. rstar is the R* instance raster (0 = unlabeled).
IntersectionMask intersection_mask(const std::vector<Eigen::Vector3f>& points,
                                   const Pose& camera_from_world, const Intrinsics& K,
                                   const DepthImage& depth, const IndexImage& rstar,
                                   double eps_occ);

/// Sparse N x C feature block; rows with occupied[n] == 0 hold zeros.
struct FeatureSlab {
  int channels = 0;
  std::vector<uint8_t> occupied;  // size N
  std::vector<float> data;        // N * channels, row-major (n, c)

  size_t size() const { return occupied.size(); }
  float at(int n, int c) const { return data[static_cast<size_t>(n) * channels + c]; }
  float& at(int n, int c) { return data[static_cast<size_t>(n) * channels + c]; }

  static FeatureSlab zeros(size_t n, int channels);
};

/// One view of Eq. 2 + feature transfer: each visible voxel copies the
/// feature vector at its projected pixel, rescaled to the feature raster by
/// nearest pixel. K describes the full-resolution frame the mask was built on.
FeatureSlab project_features(const FeatureImage& feat, const IntersectionMask& mask,
                             const Intrinsics& K);

/// Sparse N x C x V stack of per-view slabs.
struct VoxelFeatureStack {
  int channels = 0;
  int views = 0;
  std::vector<uint8_t> occupied;  // N * V, (n, v)
  std::vector<float> data;        // N * C * V, (n, c, v)

  size_t size() const { return views == 0 ? 0 : occupied.size() / views; }
  bool occ(int n, int v) const { return occupied[static_cast<size_t>(n) * views + v]; }
  float at(int n, int c, int v) const {
    return data[(static_cast<size_t>(n) * channels + c) * views + v];
  }
  float& at(int n, int c, int v) {
    return data[(static_cast<size_t>(n) * channels + c) * views + v];
  }
};

/// Throws std::invalid_argument on channel or length mismatch.
VoxelFeatureStack stack_views(const std::vector<FeatureSlab>& slabs);

/// One sparse 3D convolution layer: cubic kernel, no bias, weights stored
/// row-major as [out][in][dz][dy][dx].
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 1;  // odd
  std::vector<float> weights;

  float w(int o, int i, int dz, int dy, int dx) const {
    const int k = kernel_size;
    return weights[(((static_cast<size_t>(o) * in_channels + i) * k + dz) * k + dy) * k +
                   dx];
  }
};

/// Weights of the DoT aggregation: four sparse conv layers applied per view,
/// then a max-pool over the view axis.
struct DoTWeights {
  int level = 1;
  std::vector<ConvLayer> layers;

  /// Throws ConfigError if the layer chain is inconsistent.
  void validate() const;

  /// Deterministic identity-initialized profile: center-tap kernels that pass
  /// the leading min(in,out) channels through unchanged. Channel counts
  /// default to the built-in chain for the level.
  static DoTWeights identity_profile(int level, int in_channels = 0,
                                     int out_channels = 0, int kernel_size = 3);
};

/// Versioned binary weight file.
void save_dot_weights(const DoTWeights& w, const std::filesystem::path& path);
DoTWeights load_dot_weights(const std::filesystem::path& path);

using AggregatedVolume = FeatureSlab;

/// Eq. 3: runs the conv chain over each view's active voxels (submanifold:
/// the active set never grows) and max-pools across views per channel.
/// Output occupancy is the union of the view occupancies.
AggregatedVolume aggregate_dot(const VoxelFeatureStack& stack,
                               const std::vector<fusion::GridKey>& grid,
                               const DoTWeights& weights);

/// Eq. 4: channel-wise concatenation, zero-filling the side where a voxel is
/// absent. Output occupancy is the union.
FeatureSlab fuse_embeddings(const FeatureSlab& f3d, const AggregatedVolume& hat_f);

/// Element-wise vote accumulation (occupancy union). Slabs must match.
void add_votes(FeatureSlab& accum, const FeatureSlab& view);
/// Normalizes each occupied row to sum 1 (rows summing to 0 are left zero).
void normalize_votes(FeatureSlab& votes);

/// Deterministic label decoder: normalized per-voxel sum of per-view class
/// probabilities (channel c = class c).
FeatureSlab label_vote_fusion(const std::vector<FeatureSlab>& views);

/// argmax class per voxel; all-zero rows and unoccupied voxels give class 0
/// (ties resolve to the lower class id).
std::vector<uint16_t> argmax_labels(const FeatureSlab& votes);

/// Bridges vote slabs to the mesh labeling step.
fusion::VoxelLabelVotes to_label_votes(const FeatureSlab& votes,
                                       const std::vector<fusion::GridKey>& grid);

}  // namespace semfusion::spblock
