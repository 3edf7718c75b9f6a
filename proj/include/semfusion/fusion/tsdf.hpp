#pragma once

#include <cstdint>
#include <map>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "semfusion/core/camera.hpp"
#include "semfusion/core/image.hpp"
#include "semfusion/core/pose.hpp"
#include "semfusion/fusion/mesh.hpp"

namespace semfusion::fusion {

/// Integer lattice coordinate, used both for voxel indices and for the keys
/// of the 8^3 voxel blocks the volume is hashed on.
struct GridKey {
  int x = 0, y = 0, z = 0;
  friend bool operator==(const GridKey&, const GridKey&) = default;
  friend auto operator<=>(const GridKey&, const GridKey&) = default;
};

struct GridKeyHash {
  size_t operator()(const GridKey& k) const {
    // splitmix-style scramble of the packed coordinates
    uint64_t h = (static_cast<uint64_t>(static_cast<uint32_t>(k.x)) << 42) ^
                 (static_cast<uint64_t>(static_cast<uint32_t>(k.y)) << 21) ^
                 static_cast<uint64_t>(static_cast<uint32_t>(k.z));
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebULL;
    h ^= h >> 31;
    return static_cast<size_t>(h);
  }
};

struct Voxel {
  float tsdf = 0.0f;    // signed distance / truncation, in [-1, 1]
  float weight = 0.0f;  // 0 = never observed
};

/// Sparse truncated signed distance volume hashed on 8^3 voxel blocks.
/// Voxel (i,j,k) is the cube [i,i+1)x[j,j+1)x[k,k+1) * voxel_size (plus the
/// world origin); its sample point is the cube center. Only blocks near
/// observed surface are ever allocated.
class TsdfVolume {
 public:
  static constexpr int kBlockSize = 8;
  static constexpr int kBlockVoxels = kBlockSize * kBlockSize * kBlockSize;

  struct Params {
    float voxel_size = 0.05f;
    float truncation = 0.0f;  // <= 0 picks the default 4 * voxel_size
    float max_weight = 128.0f;
    float max_depth = 10.0f;  // depth readings beyond this are ignored
    Eigen::Vector3f origin = Eigen::Vector3f::Zero();
    int threads = 1;

    /// Throws ConfigError naming the violated field.
    void validate() const;
  };

  using Block = std::vector<Voxel>;  // kBlockVoxels entries

  TsdfVolume();
  explicit TsdfVolume(const Params& params);

  float voxel_size() const { return params_.voxel_size; }
  float truncation() const { return truncation_; }
  const Params& params() const { return params_; }

  /// Fuses one depth frame. Invalid (<= 0, non-finite) and out-of-range
  /// depth pixels are skipped; voxels inside the truncation band of a valid
  /// pixel get a running-average update with per-observation weight 1.
  void integrate(const DepthImage& depth, const Pose& camera_from_world,
                 const Intrinsics& K);

  /// Marching cubes over the allocated blocks. Cubes touching an unobserved
  /// voxel are skipped; shared edge vertices are welded exactly.
  Mesh extract_mesh() const;

  /// Voxel lookup by global voxel index; nullptr when the containing block
  /// was never allocated.
  const Voxel* find_voxel(const GridKey& index) const;
  float tsdf_at(int i, int j, int k) const;
  float weight_at(int i, int j, int k) const;

  /// Direct write, allocating the block if needed (used to seed analytic
  /// fields in tests and tools).
  void set_voxel(const GridKey& index, float tsdf, float weight);

  size_t block_count() const { return blocks_.size(); }
  std::vector<GridKey> block_keys() const;  // sorted

  /// Global index of the voxel whose cube contains a world point.
  GridKey voxel_index(const Eigen::Vector3f& p_world) const;
  /// World position of a voxel's sample point (cube center).
  Eigen::Vector3f voxel_center(const GridKey& index) const;

 private:
  Params params_;
  float truncation_ = 0.0f;
  std::unordered_map<GridKey, Block, GridKeyHash> blocks_;
};

/// Accumulated per-class scores for one voxel; argmax decides the label.
using LabelDistribution = std::map<uint16_t, float>;
/// Label scores keyed by global voxel index.
using VoxelLabelVotes = std::unordered_map<GridKey, LabelDistribution, GridKeyHash>;

/// Fills mesh.labels with the argmax class of each vertex's containing
/// voxel (ties -> lower class id). Vertices without votes get class 0.
void transfer_labels(Mesh& mesh, const VoxelLabelVotes& votes, float voxel_size,
                     const Eigen::Vector3f& origin = Eigen::Vector3f::Zero());

}  // namespace semfusion::fusion
