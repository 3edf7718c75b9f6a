#include "semfusion/project/spblock.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Dense>

#include "semfusion/core/errors.hpp"

namespace semfusion::spblock {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, size_t offset,
                       const std::string& what) {
  throw DataError(path.string() + ": " + what + " (byte " +
                  std::to_string(offset) + ")");
}

constexpr uint32_t kDotMagic = 0x57544f44;  // "DOTW" little-endian
constexpr uint32_t kDotVersion = 1;

}  // namespace

void VoxelSet::validate() const {
  if (points.size() != grid.size())
    throw std::invalid_argument("voxel set: points/grid size mismatch");
  std::unordered_set<fusion::GridKey, fusion::GridKeyHash> seen;
  for (const fusion::GridKey& g : grid)
    if (!seen.insert(g).second)
      throw std::invalid_argument("voxel set: duplicate grid key");
}

VoxelSet voxel_set_from_mesh(const fusion::Mesh& mesh, float voxel_size,
                             const Eigen::Vector3f& origin) {
  if (!(voxel_size > 0.0f))
    throw std::invalid_argument("voxel_set_from_mesh: voxel_size must be > 0");
  const double s = voxel_size;  // same arithmetic as TsdfVolume::voxel_index
  std::set<fusion::GridKey> keys;
  for (const Eigen::Vector3f& p : mesh.vertices) {
    keys.insert({static_cast<int>(std::floor((p.x() - origin.x()) / s)),
                 static_cast<int>(std::floor((p.y() - origin.y()) / s)),
                 static_cast<int>(std::floor((p.z() - origin.z()) / s))});
  }
  VoxelSet out;
  out.grid.assign(keys.begin(), keys.end());
  out.points.reserve(out.grid.size());
  for (const fusion::GridKey& g : out.grid)
    out.points.push_back(origin + voxel_size * Eigen::Vector3f(g.x + 0.5f, g.y + 0.5f,
                                                               g.z + 0.5f));
  return out;
}

int IntersectionMask::count() const {
  int n = 0;
  for (uint8_t b : visible) n += b != 0;
  return n;
}

IntersectionMask intersection_mask(const std::vector<Eigen::Vector3f>& points,
                                   const Pose& camera_from_world, const Intrinsics& K,
                                   const DepthImage& depth, const IndexImage& rstar,
                                   double eps_occ) {
  if (camera_from_world.frame() != PoseFrame::kCameraFromWorld)
    throw std::invalid_argument("intersection_mask: pose must be camera-from-world");
  if (!depth.same_size(K.width, K.height))
    throw std::invalid_argument("intersection_mask: depth does not match intrinsics");
  if (!rstar.same_size(depth))
    throw std::invalid_argument("intersection_mask: R* does not match depth");
  if (!(eps_occ > 0.0))
    throw std::invalid_argument("intersection_mask: eps_occ must be > 0");

  IntersectionMask mask;
  mask.visible.assign(points.size(), 0);
  mask.pixel.assign(points.size(), Eigen::Vector2i(-1, -1));
  for (size_t n = 0; n < points.size(); ++n) {
    const Eigen::Vector3d p_cam = camera_from_world.apply(points[n].cast<double>());
    if (p_cam.z() <= 0.0) continue;
    const int iu = nearest_pixel(K.fx * p_cam.x() / p_cam.z() + K.cx);
    const int iv = nearest_pixel(K.fy * p_cam.y() / p_cam.z() + K.cy);
    if (!depth.in_bounds(iu, iv)) continue;
    const float d = depth.at(iu, iv);
    if (!std::isfinite(d) || d <= 0.0f) continue;
    if (std::abs(p_cam.z() - d) > eps_occ) continue;
    if (rstar.at(iu, iv) <= 0) continue;
    mask.visible[n] = 1;
    mask.pixel[n] = {iu, iv};
  }
  return mask;
}

FeatureSlab FeatureSlab::zeros(size_t n, int channels) {
  FeatureSlab s;
  s.channels = channels;
  s.occupied.assign(n, 0);
  s.data.assign(n * channels, 0.0f);
  return s;
}

FeatureSlab project_features(const FeatureImage& feat, const IntersectionMask& mask,
                             const Intrinsics& K) {
  feat.validate();
  if (K.width <= 0 || K.height <= 0)
    throw std::invalid_argument("project_features: empty intrinsics raster");
  if (mask.visible.size() != mask.pixel.size())
    throw std::invalid_argument("project_features: malformed mask");

  FeatureSlab slab = FeatureSlab::zeros(mask.visible.size(), feat.channels);
  for (size_t n = 0; n < mask.visible.size(); ++n) {
    if (!mask.visible[n]) continue;
    const Eigen::Vector2i& px = mask.pixel[n];
    if (px.x() < 0 || px.x() >= K.width || px.y() < 0 || px.y() >= K.height)
      throw std::invalid_argument("project_features: mask pixel outside raster");
    const int uf = std::clamp(
        nearest_pixel((px.x() + 0.5) * feat.width / K.width - 0.5), 0, feat.width - 1);
    const int vf = std::clamp(
        nearest_pixel((px.y() + 0.5) * feat.height / K.height - 0.5), 0,
        feat.height - 1);
    slab.occupied[n] = 1;
    for (int c = 0; c < feat.channels; ++c) slab.at(n, c) = feat.at(c, uf, vf);
  }
  return slab;
}

VoxelFeatureStack stack_views(const std::vector<FeatureSlab>& slabs) {
  if (slabs.empty()) throw std::invalid_argument("stack_views: no views");
  const size_t n = slabs[0].size();
  const int c = slabs[0].channels;
  for (const FeatureSlab& s : slabs) {
    if (s.size() != n) throw std::invalid_argument("stack_views: length mismatch");
    if (s.channels != c) throw std::invalid_argument("stack_views: channel mismatch");
  }

  VoxelFeatureStack stack;
  stack.channels = c;
  stack.views = static_cast<int>(slabs.size());
  stack.occupied.assign(n * slabs.size(), 0);
  stack.data.assign(n * c * slabs.size(), 0.0f);
  for (int v = 0; v < stack.views; ++v) {
    const FeatureSlab& s = slabs[v];
    for (size_t i = 0; i < n; ++i) {
      if (!s.occupied[i]) continue;
      stack.occupied[i * stack.views + v] = 1;
      for (int ch = 0; ch < c; ++ch)
        stack.at(static_cast<int>(i), ch, v) = s.at(static_cast<int>(i), ch);
    }
  }
  return stack;
}

void DoTWeights::validate() const {
  if (level < 1 || level > 4) throw ConfigError("project.dot.level: must be in [1, 4]");
  if (layers.size() != 4) throw ConfigError("project.dot.layers: must have 4 layers");
  for (size_t i = 0; i < layers.size(); ++i) {
    const ConvLayer& l = layers[i];
    const std::string name = "project.dot.layers[" + std::to_string(i) + "]";
    if (l.in_channels <= 0 || l.out_channels <= 0)
      throw ConfigError(name + ": channel counts must be > 0");
    if (l.kernel_size < 1 || l.kernel_size % 2 == 0)
      throw ConfigError(name + ".kernel_size: must be odd and >= 1");
    const size_t expect = static_cast<size_t>(l.out_channels) * l.in_channels *
                          l.kernel_size * l.kernel_size * l.kernel_size;
    if (l.weights.size() != expect)
      throw ConfigError(name + ".weights: has " + std::to_string(l.weights.size()) +
                        " values, expected " + std::to_string(expect));
    if (i > 0 && l.in_channels != layers[i - 1].out_channels)
      throw ConfigError(name + ".in_channels: does not chain from previous layer");
  }
}

DoTWeights DoTWeights::identity_profile(int level, int in_channels, int out_channels,
                                        int kernel_size) {
  if (in_channels <= 0) in_channels = level_channels(level);
  if (out_channels <= 0) out_channels = aggregated_channels(level);

  auto identity_layer = [kernel_size](int in, int out) {
    ConvLayer l;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel_size = kernel_size;
    l.weights.assign(static_cast<size_t>(out) * in * kernel_size * kernel_size *
                         kernel_size,
                     0.0f);
    const int c = kernel_size / 2;
    for (int o = 0; o < std::min(in, out); ++o) {
      const size_t idx =
          (((static_cast<size_t>(o) * in + o) * kernel_size + c) * kernel_size + c) *
              kernel_size +
          c;
      l.weights[idx] = 1.0f;
    }
    return l;
  };

  DoTWeights w;
  w.level = level;
  w.layers = {identity_layer(in_channels, in_channels),
              identity_layer(in_channels, in_channels),
              identity_layer(in_channels, out_channels),
              identity_layer(out_channels, out_channels)};
  w.validate();
  return w;
}

void save_dot_weights(const DoTWeights& w, const std::filesystem::path& path) {
  w.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  auto put = [&out](uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  put(kDotMagic);
  put(kDotVersion);
  put(static_cast<uint32_t>(w.level));
  put(static_cast<uint32_t>(w.layers.size()));
  for (const ConvLayer& l : w.layers) {
    put(static_cast<uint32_t>(l.in_channels));
    put(static_cast<uint32_t>(l.out_channels));
    put(static_cast<uint32_t>(l.kernel_size));
    out.write(reinterpret_cast<const char*>(l.weights.data()),
              static_cast<std::streamsize>(l.weights.size() * sizeof(float)));
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

DoTWeights load_dot_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  size_t offset = 0;
  auto get = [&](const char* what) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (in.gcount() != sizeof(v)) fail(path, offset, std::string("truncated ") + what);
    offset += sizeof(v);
    return v;
  };

  if (get("magic") != kDotMagic) fail(path, 0, "not a DoT weight file");
  const uint32_t version = get("version");
  if (version != kDotVersion)
    fail(path, 4, "unsupported version " + std::to_string(version));
  DoTWeights w;
  w.level = static_cast<int>(get("level"));
  const uint32_t layer_count = get("layer count");
  if (layer_count != 4) fail(path, 12, "expected 4 layers");

  for (uint32_t i = 0; i < layer_count; ++i) {
    ConvLayer l;
    l.in_channels = static_cast<int>(get("layer header"));
    l.out_channels = static_cast<int>(get("layer header"));
    l.kernel_size = static_cast<int>(get("layer header"));
    if (l.in_channels <= 0 || l.in_channels > 4096 || l.out_channels <= 0 ||
        l.out_channels > 4096 || l.kernel_size < 1 || l.kernel_size > 9)
      fail(path, offset - 12, "implausible layer header");
    const size_t count = static_cast<size_t>(l.out_channels) * l.in_channels *
                         l.kernel_size * l.kernel_size * l.kernel_size;
    l.weights.resize(count);
    in.read(reinterpret_cast<char*>(l.weights.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != count * sizeof(float))
      fail(path, offset + static_cast<size_t>(in.gcount()), "truncated kernel data");
    offset += count * sizeof(float);
    w.layers.push_back(std::move(l));
  }
  try {
    w.validate();
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return w;
}

AggregatedVolume aggregate_dot(const VoxelFeatureStack& stack,
                               const std::vector<fusion::GridKey>& grid,
                               const DoTWeights& weights) {
  weights.validate();
  const size_t n = stack.size();
  if (grid.size() != n)
    throw std::invalid_argument("aggregate_dot: grid/stack length mismatch");
  if (stack.channels != weights.layers.front().in_channels)
    throw std::invalid_argument(
        "aggregate_dot: stack has " + std::to_string(stack.channels) +
        " channels, weights expect " +
        std::to_string(weights.layers.front().in_channels));

  std::unordered_map<fusion::GridKey, int, fusion::GridKeyHash> site;
  site.reserve(n);
  for (size_t i = 0; i < n; ++i)
    if (!site.emplace(grid[i], static_cast<int>(i)).second)
      throw std::invalid_argument("aggregate_dot: duplicate grid key");

  // per-layer, per-offset weight matrices; all-zero offsets are skipped
  struct OffsetMat {
    int dx, dy, dz;
    Eigen::MatrixXf m;  // out x in
  };
  std::vector<std::vector<OffsetMat>> layer_mats;
  for (const ConvLayer& l : weights.layers) {
    std::vector<OffsetMat> mats;
    const int r = l.kernel_size / 2;
    for (int dz = -r; dz <= r; ++dz)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          Eigen::MatrixXf m(l.out_channels, l.in_channels);
          for (int o = 0; o < l.out_channels; ++o)
            for (int i = 0; i < l.in_channels; ++i)
              m(o, i) = l.w(o, i, dz + r, dy + r, dx + r);
          if (m.isZero(0.0f)) continue;
          mats.push_back({dx, dy, dz, std::move(m)});
        }
    layer_mats.push_back(std::move(mats));
  }

  const int out_channels = weights.layers.back().out_channels;
  AggregatedVolume out = FeatureSlab::zeros(n, out_channels);

  for (int v = 0; v < stack.views; ++v) {
    std::vector<int> active;
    for (size_t i = 0; i < n; ++i)
      if (stack.occ(static_cast<int>(i), v)) active.push_back(static_cast<int>(i));
    if (active.empty()) continue;

    Eigen::MatrixXf cur(stack.channels, n);
    cur.setZero();
    for (int i : active)
      for (int c = 0; c < stack.channels; ++c) cur(c, i) = stack.at(i, c, v);

    for (size_t li = 0; li < weights.layers.size(); ++li) {
      Eigen::MatrixXf next(weights.layers[li].out_channels, n);
      next.setZero();
      for (int i : active) {
        const fusion::GridKey& g = grid[i];
        for (const OffsetMat& om : layer_mats[li]) {
          auto it = site.find({g.x + om.dx, g.y + om.dy, g.z + om.dz});
          if (it == site.end()) continue;
          const int m = it->second;
          if (!stack.occ(m, v)) continue;  // submanifold: inactive sites stay empty
          next.col(i) += om.m * cur.col(m);
        }
      }
      cur = std::move(next);
    }

    for (int i : active) {
      if (!out.occupied[i]) {
        out.occupied[i] = 1;
        for (int c = 0; c < out_channels; ++c) out.at(i, c) = cur(c, i);
      } else {
        for (int c = 0; c < out_channels; ++c)
          out.at(i, c) = std::max(out.at(i, c), cur(c, i));
      }
    }
  }
  return out;
}

FeatureSlab fuse_embeddings(const FeatureSlab& f3d, const AggregatedVolume& hat_f) {
  if (f3d.size() != hat_f.size())
    throw std::invalid_argument("fuse_embeddings: length mismatch");
  FeatureSlab out = FeatureSlab::zeros(f3d.size(), f3d.channels + hat_f.channels);
  for (size_t i = 0; i < f3d.size(); ++i) {
    const int n = static_cast<int>(i);
    if (!f3d.occupied[i] && !hat_f.occupied[i]) continue;
    out.occupied[i] = 1;
    if (f3d.occupied[i])
      for (int c = 0; c < f3d.channels; ++c) out.at(n, c) = f3d.at(n, c);
    if (hat_f.occupied[i])
      for (int c = 0; c < hat_f.channels; ++c)
        out.at(n, f3d.channels + c) = hat_f.at(n, c);
  }
  return out;
}

void add_votes(FeatureSlab& accum, const FeatureSlab& view) {
  if (accum.size() != view.size() || accum.channels != view.channels)
    throw std::invalid_argument("add_votes: slab shape mismatch");
  for (size_t i = 0; i < view.occupied.size(); ++i)
    accum.occupied[i] |= view.occupied[i];
  for (size_t i = 0; i < view.data.size(); ++i) accum.data[i] += view.data[i];
}

void normalize_votes(FeatureSlab& votes) {
  for (size_t i = 0; i < votes.size(); ++i) {
    if (!votes.occupied[i]) continue;
    const int n = static_cast<int>(i);
    float sum = 0.0f;
    for (int c = 0; c < votes.channels; ++c) sum += votes.at(n, c);
    if (sum <= 0.0f) continue;
    for (int c = 0; c < votes.channels; ++c) votes.at(n, c) /= sum;
  }
}

FeatureSlab label_vote_fusion(const std::vector<FeatureSlab>& views) {
  if (views.empty()) throw std::invalid_argument("label_vote_fusion: no views");
  FeatureSlab accum = FeatureSlab::zeros(views[0].size(), views[0].channels);
  for (const FeatureSlab& v : views) add_votes(accum, v);
  normalize_votes(accum);
  return accum;
}

std::vector<uint16_t> argmax_labels(const FeatureSlab& votes) {
  std::vector<uint16_t> labels(votes.size(), 0);
  for (size_t i = 0; i < votes.size(); ++i) {
    if (!votes.occupied[i]) continue;
    const int n = static_cast<int>(i);
    int best = -1;
    float best_score = 0.0f;
    for (int c = 0; c < votes.channels; ++c) {
      if (votes.at(n, c) > best_score) {
        best = c;
        best_score = votes.at(n, c);
      }
    }
    if (best >= 0) labels[i] = static_cast<uint16_t>(best);
  }
  return labels;
}

fusion::VoxelLabelVotes to_label_votes(const FeatureSlab& votes,
                                       const std::vector<fusion::GridKey>& grid) {
  if (grid.size() != votes.size())
    throw std::invalid_argument("to_label_votes: grid/votes length mismatch");
  fusion::VoxelLabelVotes out;
  for (size_t i = 0; i < votes.size(); ++i) {
    if (!votes.occupied[i]) continue;
    const int n = static_cast<int>(i);
    fusion::LabelDistribution dist;
    for (int c = 0; c < votes.channels; ++c)
      if (votes.at(n, c) > 0.0f) dist[static_cast<uint16_t>(c)] = votes.at(n, c);
    if (!dist.empty()) out.emplace(grid[i], std::move(dist));
  }
  return out;
}

}  // namespace semfusion::spblock
