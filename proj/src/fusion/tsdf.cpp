#include "semfusion/fusion/tsdf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <unordered_set>

#include "semfusion/core/errors.hpp"
#include "mc_tables.hpp"

namespace semfusion::fusion {

namespace {

inline int floor_div(int a, int b) {
  int q = a / b;
  int r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

inline int floor_int(double x) { return static_cast<int>(std::floor(x)); }

inline bool depth_ok(float d, float max_depth) {
  return std::isfinite(d) && d > 0.0f && d <= max_depth;
}

}  // namespace

void TsdfVolume::Params::validate() const {
  if (!(voxel_size > 0.0f) || !std::isfinite(voxel_size))
    throw ConfigError("fusion.voxel_size: must be > 0");
  if (!std::isfinite(truncation) || (truncation != 0.0f && truncation <= 0.0f))
    throw ConfigError("fusion.truncation: must be > 0 (or 0 for the default)");
  if (truncation > 0.0f && truncation < voxel_size)
    throw ConfigError("fusion.truncation: must be >= voxel_size");
  if (!(max_weight >= 1.0f))
    throw ConfigError("fusion.max_weight: must be >= 1");
  if (!(max_depth > 0.0f))
    throw ConfigError("fusion.max_depth: must be > 0");
  if (!origin.allFinite())
    throw ConfigError("fusion.origin: must be finite");
  if (threads < 1)
    throw ConfigError("fusion.threads: must be >= 1");
}

TsdfVolume::TsdfVolume() : TsdfVolume(Params{}) {}

TsdfVolume::TsdfVolume(const Params& params) : params_(params) {
  params_.validate();
  truncation_ =
      params_.truncation > 0.0f ? params_.truncation : 4.0f * params_.voxel_size;
}

GridKey TsdfVolume::voxel_index(const Eigen::Vector3f& p_world) const {
  const double s = params_.voxel_size;
  return {floor_int((p_world.x() - params_.origin.x()) / s),
          floor_int((p_world.y() - params_.origin.y()) / s),
          floor_int((p_world.z() - params_.origin.z()) / s)};
}

Eigen::Vector3f TsdfVolume::voxel_center(const GridKey& g) const {
  const float s = params_.voxel_size;
  return params_.origin + Eigen::Vector3f((g.x + 0.5f) * s, (g.y + 0.5f) * s,
                                          (g.z + 0.5f) * s);
}

const Voxel* TsdfVolume::find_voxel(const GridKey& g) const {
  GridKey block{floor_div(g.x, kBlockSize), floor_div(g.y, kBlockSize),
                floor_div(g.z, kBlockSize)};
  auto it = blocks_.find(block);
  if (it == blocks_.end()) return nullptr;
  int lx = g.x - block.x * kBlockSize;
  int ly = g.y - block.y * kBlockSize;
  int lz = g.z - block.z * kBlockSize;
  return &it->second[(lz * kBlockSize + ly) * kBlockSize + lx];
}

float TsdfVolume::tsdf_at(int i, int j, int k) const {
  const Voxel* v = find_voxel({i, j, k});
  return v ? v->tsdf : 0.0f;
}

float TsdfVolume::weight_at(int i, int j, int k) const {
  const Voxel* v = find_voxel({i, j, k});
  return v ? v->weight : 0.0f;
}

void TsdfVolume::set_voxel(const GridKey& g, float tsdf, float weight) {
  GridKey block{floor_div(g.x, kBlockSize), floor_div(g.y, kBlockSize),
                floor_div(g.z, kBlockSize)};
  auto [it, inserted] = blocks_.try_emplace(block);
  if (inserted) it->second.assign(kBlockVoxels, Voxel{});
  int lx = g.x - block.x * kBlockSize;
  int ly = g.y - block.y * kBlockSize;
  int lz = g.z - block.z * kBlockSize;
  it->second[(lz * kBlockSize + ly) * kBlockSize + lx] = {tsdf, weight};
}

std::vector<GridKey> TsdfVolume::block_keys() const {
  std::vector<GridKey> keys;
  keys.reserve(blocks_.size());
  for (const auto& [k, b] : blocks_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

void TsdfVolume::integrate(const DepthImage& depth, const Pose& camera_from_world,
                           const Intrinsics& K) {
  if (camera_from_world.frame() != PoseFrame::kCameraFromWorld)
    throw std::invalid_argument("integrate: pose must be camera-from-world");
  if (!depth.same_size(K.width, K.height))
    throw std::invalid_argument("integrate: depth raster does not match intrinsics");

  const double voxel = params_.voxel_size;
  const double tau = truncation_;
  const double step = voxel;
  const Eigen::Vector3d origin = params_.origin.cast<double>();
  const Pose world_from_camera = camera_from_world.flipped();

  // Pass 1: touch every block that could hold a voxel inside this frame's
  // truncation band. Samples along each pixel ray are padded by a bound on
  // the distance from any band voxel center (which projects to the pixel)
  // to its nearest sample, so the touched set is a superset of the voxels
  // pass 2 will actually update.
  std::unordered_set<GridKey, GridKeyHash> touched;
  const int n_steps = static_cast<int>(std::ceil(2.0 * tau / step));
  for (int pv = 0; pv < depth.height(); ++pv) {
    for (int pu = 0; pu < depth.width(); ++pu) {
      const float d = depth.at(pu, pv);
      if (!depth_ok(d, params_.max_depth)) continue;
      const double ru = (pu - K.cx) / K.fx;
      const double rv = (pv - K.cy) / K.fy;
      for (int k = 0; k <= n_steps; ++k) {
        const double z = d - tau + k * step;
        if (z <= 1e-6) continue;
        const Eigen::Vector3d p_cam(ru * z, rv * z, z);
        const Eigen::Vector3d p = world_from_camera.apply(p_cam);
        const double bx =
            (std::abs(pu - K.cx) * 0.5 * step + 0.5 * (z + 0.5 * step)) / K.fx;
        const double by =
            (std::abs(pv - K.cy) * 0.5 * step + 0.5 * (z + 0.5 * step)) / K.fy;
        const double r = std::sqrt(bx * bx + by * by + 0.25 * step * step);
        GridKey lo{floor_int((p.x() - origin.x() - r) / voxel - 0.5),
                   floor_int((p.y() - origin.y() - r) / voxel - 0.5),
                   floor_int((p.z() - origin.z() - r) / voxel - 0.5)};
        GridKey hi{floor_int((p.x() - origin.x() + r) / voxel - 0.5) + 1,
                   floor_int((p.y() - origin.y() + r) / voxel - 0.5) + 1,
                   floor_int((p.z() - origin.z() + r) / voxel - 0.5) + 1};
        for (int bz = floor_div(lo.z, kBlockSize); bz <= floor_div(hi.z, kBlockSize); ++bz)
          for (int byy = floor_div(lo.y, kBlockSize); byy <= floor_div(hi.y, kBlockSize); ++byy)
            for (int bxx = floor_div(lo.x, kBlockSize); bxx <= floor_div(hi.x, kBlockSize); ++bxx)
              touched.insert({bxx, byy, bz});
      }
    }
  }

  std::vector<GridKey> fresh;
  std::vector<std::pair<GridKey, Block*>> work;
  work.reserve(touched.size());
  for (const GridKey& key : touched) {
    auto [it, inserted] = blocks_.try_emplace(key);
    if (inserted) {
      it->second.assign(kBlockVoxels, Voxel{});
      fresh.push_back(key);
    }
    work.emplace_back(key, &it->second);
  }
  std::sort(work.begin(), work.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Pass 2: projective update of the touched blocks only; discovery being a
  // superset makes this equal to updating every voxel in storage.
  auto update_range = [&](size_t begin, size_t end) {
    for (size_t bi = begin; bi < end; ++bi) {
      const GridKey& key = work[bi].first;
      Block& block = *work[bi].second;
      for (int lz = 0; lz < kBlockSize; ++lz) {
        for (int ly = 0; ly < kBlockSize; ++ly) {
          for (int lx = 0; lx < kBlockSize; ++lx) {
            const Eigen::Vector3d center =
                origin + voxel * Eigen::Vector3d(key.x * kBlockSize + lx + 0.5,
                                                 key.y * kBlockSize + ly + 0.5,
                                                 key.z * kBlockSize + lz + 0.5);
            const Eigen::Vector3d p_cam = camera_from_world.apply(center);
            if (p_cam.z() <= 0.0) continue;
            const int iu = nearest_pixel(K.fx * p_cam.x() / p_cam.z() + K.cx);
            const int iv = nearest_pixel(K.fy * p_cam.y() / p_cam.z() + K.cy);
            if (!depth.in_bounds(iu, iv)) continue;
            const float d = depth.at(iu, iv);
            if (!depth_ok(d, params_.max_depth)) continue;
            const double sdf = d - p_cam.z();
            if (std::abs(sdf) > tau) continue;
            const float obs =
                static_cast<float>(std::clamp(sdf / tau, -1.0, 1.0));
            Voxel& vx = block[(lz * kBlockSize + ly) * kBlockSize + lx];
            vx.tsdf = (vx.tsdf * vx.weight + obs) / (vx.weight + 1.0f);
            vx.weight = std::min(vx.weight + 1.0f, params_.max_weight);
          }
        }
      }
    }
  };

  const int threads =
      std::min(params_.threads, static_cast<int>(std::max<size_t>(work.size(), 1)));
  if (threads <= 1) {
    update_range(0, work.size());
  } else {
    std::vector<std::thread> pool;
    const size_t chunk = (work.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      size_t begin = t * chunk;
      size_t end = std::min(work.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(update_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  // Blocks touched speculatively but never written stay out of storage.
  for (const GridKey& key : fresh) {
    const Block& block = blocks_.at(key);
    bool any = false;
    for (const Voxel& v : block)
      if (v.weight > 0.0f) { any = true; break; }
    if (!any) blocks_.erase(key);
  }
}

Mesh TsdfVolume::extract_mesh() const {
  Mesh mesh;
  std::map<std::array<int, 4>, int32_t> edge_vertex;  // (x, y, z, axis) -> index

  float f[8];
  for (const GridKey& key : block_keys()) {
    const int gx0 = key.x * kBlockSize;
    const int gy0 = key.y * kBlockSize;
    const int gz0 = key.z * kBlockSize;
    for (int lz = 0; lz < kBlockSize; ++lz) {
      for (int ly = 0; ly < kBlockSize; ++ly) {
        for (int lx = 0; lx < kBlockSize; ++lx) {
          const int gx = gx0 + lx, gy = gy0 + ly, gz = gz0 + lz;
          int cube_index = 0;
          bool skip = false;
          for (int c = 0; c < 8; ++c) {
            const Voxel* v = find_voxel({gx + mc::corner_shift[c][0],
                                         gy + mc::corner_shift[c][1],
                                         gz + mc::corner_shift[c][2]});
            if (v == nullptr || v->weight == 0.0f) {
              skip = true;
              break;
            }
            f[c] = v->tsdf;
            if (f[c] < 0.0f) cube_index |= (1 << c);
          }
          if (skip || mc::edge_table[cube_index] == 0) continue;

          int edge_vert_index[12];
          for (int e = 0; e < 12; ++e) {
            if (!(mc::edge_table[cube_index] & (1 << e))) continue;
            std::array<int, 4> ek = {gx + mc::edge_shift[e][0],
                                     gy + mc::edge_shift[e][1],
                                     gz + mc::edge_shift[e][2],
                                     mc::edge_shift[e][3]};
            auto it = edge_vertex.find(ek);
            if (it == edge_vertex.end()) {
              const float f0 = std::abs(f[mc::edge_to_vert[e][0]]);
              const float f1 = std::abs(f[mc::edge_to_vert[e][1]]);
              Eigen::Vector3f pt =
                  params_.origin +
                  params_.voxel_size * Eigen::Vector3f(ek[0] + 0.5f, ek[1] + 0.5f,
                                                       ek[2] + 0.5f);
              const float span = f0 + f1;
              pt(ek[3]) += params_.voxel_size * (span > 0.0f ? f0 / span : 0.5f);
              it = edge_vertex.emplace(ek, static_cast<int32_t>(mesh.vertices.size()))
                       .first;
              mesh.vertices.push_back(pt);
            }
            edge_vert_index[e] = it->second;
          }

          const int* tri = mc::tri_table[cube_index];
          for (int i = 0; tri[i] != -1; i += 3) {
            mesh.triangles.push_back({edge_vert_index[tri[i]],
                                      edge_vert_index[tri[i + 2]],
                                      edge_vert_index[tri[i + 1]]});
          }
        }
      }
    }
  }
  return mesh;
}

void transfer_labels(Mesh& mesh, const VoxelLabelVotes& votes, float voxel_size,
                     const Eigen::Vector3f& origin) {
  if (!(voxel_size > 0.0f))
    throw std::invalid_argument("transfer_labels: voxel_size must be > 0");
  mesh.labels.assign(mesh.vertices.size(), 0);
  const double s = voxel_size;  // same arithmetic as TsdfVolume::voxel_index
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Eigen::Vector3f& p = mesh.vertices[i];
    GridKey g{floor_int((p.x() - origin.x()) / s),
              floor_int((p.y() - origin.y()) / s),
              floor_int((p.z() - origin.z()) / s)};
    auto it = votes.find(g);
    if (it == votes.end() || it->second.empty()) continue;
    uint16_t best = 0;
    float best_score = -1.0f;
    for (const auto& [cls, score] : it->second) {
      if (score > best_score) {
        best = cls;
        best_score = score;
      }
    }
    mesh.labels[i] = best;
  }
}

}  // namespace semfusion::fusion
