#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "semfusion/core/palette.hpp"
#include "semfusion/ingest/image_io.hpp"
#include "semfusion/segment2d/segment.hpp"

namespace semfusion::segment2d {
namespace {

constexpr int kDu[4] = {1, -1, 0, 0};
constexpr int kDv[4] = {0, 0, 1, -1};

}  // namespace

NormalMap compute_normals(const DepthImage& depth, const Intrinsics& K) {
  if (!depth.same_size(K.width, K.height))
    throw std::invalid_argument("compute_normals: depth/intrinsics size mismatch");
  NormalMap out;
  out.n = Image<Eigen::Vector3f>(depth.width(), depth.height(),
                                 Eigen::Vector3f::Zero());
  for (int v = 1; v + 1 < depth.height(); ++v) {
    for (int u = 1; u + 1 < depth.width(); ++u) {
      const float dc = depth.at(u, v);
      const float dl = depth.at(u - 1, v), dr = depth.at(u + 1, v);
      const float dt = depth.at(u, v - 1), db = depth.at(u, v + 1);
      if (dc <= 0 || dl <= 0 || dr <= 0 || dt <= 0 || db <= 0) continue;
      const Eigen::Vector3d tu =
          unproject(K, u + 1, v, dr) - unproject(K, u - 1, v, dl);
      const Eigen::Vector3d tv =
          unproject(K, u, v + 1, db) - unproject(K, u, v - 1, dt);
      Eigen::Vector3d n = tu.cross(tv);
      const double norm = n.norm();
      if (norm < 1e-12) continue;
      n /= norm;
      if (n.dot(unproject(K, u, v, dc)) > 0) n = -n;
      out.n.at(u, v) = n.cast<float>();
    }
  }
  return out;
}

GeomSegmentation geometric_segment(const NormalMap& normals, const DepthImage& depth,
                                   const SegParams& params) {
  if (!normals.n.same_size(depth))
    throw std::invalid_argument("geometric_segment: raster size mismatch");
  const int w = depth.width(), h = depth.height();
  const float cos_edge =
      static_cast<float>(std::cos(params.theta_edge_deg * M_PI / 180.0));

  // Pixels that are valid and not on a normal/depth discontinuity.
  MaskImage smooth(w, h, 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!normals.valid(u, v)) continue;
      const float d = depth.at(u, v);
      bool edge = false;
      for (int k = 0; k < 4 && !edge; ++k) {
        const int nu = u + kDu[k], nv = v + kDv[k];
        if (!depth.in_bounds(nu, nv)) continue;
        const float nd = depth.at(nu, nv);
        if (nd > 0 && std::abs(nd - d) > params.delta_depth * d) edge = true;
        if (normals.valid(nu, nv) &&
            normals.n.at(u, v).dot(normals.n.at(nu, nv)) < cos_edge)
          edge = true;
      }
      if (!edge) smooth.at(u, v) = 1;
    }
  }

  GeomSegmentation seg;
  seg.r_d = MaskImage(w, h, 0);
  seg.instances = IndexImage(w, h, 0);
  IndexImage component(w, h, 0);
  std::vector<int> area;  // per provisional component (1-based)
  std::vector<int> stack;
  int next = 0;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!smooth.at(u, v) || component.at(u, v)) continue;
      const int id = ++next;
      int count = 0;
      component.at(u, v) = id;
      stack.push_back(v * w + u);
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        ++count;
        const int cu = cur % w, cv = cur / w;
        for (int k = 0; k < 4; ++k) {
          const int nu = cu + kDu[k], nv = cv + kDv[k];
          if (!smooth.in_bounds(nu, nv)) continue;
          if (!smooth.at(nu, nv) || component.at(nu, nv)) continue;
          component.at(nu, nv) = id;
          stack.push_back(nv * w + nu);
        }
      }
      area.push_back(count);
    }
  }

  // Renumber surviving components densely, in scan order of first appearance.
  std::vector<int> remap(next + 1, 0);
  for (size_t i = 0; i < component.size(); ++i) {
    const int id = component.data()[i];
    if (!id || area[id - 1] < params.min_area) continue;
    if (!remap[id]) remap[id] = ++seg.instance_count;
    seg.instances.data()[i] = remap[id];
    seg.r_d.data()[i] = 1;
  }
  return seg;
}

FilteredSeg filter_semantic(const ingest::DetectionSet& detections,
                            const GeomSegmentation& geom) {
  FilteredSeg out;
  out.instances = IndexImage(geom.r_d.width(), geom.r_d.height(), 0);

  const size_t n = detections.detections.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const auto& da = detections.detections[a];
    const auto& db = detections.detections[b];
    if (da.score != db.score) return da.score > db.score;
    return da.class_id < db.class_id;
  });

  // Winner raster holds 1-based indices into the input detection list.
  IndexImage owner(geom.r_d.width(), geom.r_d.height(), 0);
  std::vector<int> counts(n, 0);
  for (size_t oi : order) {
    const ingest::Detection& det = detections.detections[oi];
    if (!det.mask.same_size(geom.r_d))
      throw std::invalid_argument("filter_semantic: mask/raster size mismatch");
    for (size_t i = 0; i < det.mask.size(); ++i) {
      if (det.mask.data()[i] && geom.r_d.data()[i] && !owner.data()[i]) {
        owner.data()[i] = static_cast<int>(oi) + 1;
        ++counts[oi];
      }
    }
  }

  // Survivors keep their input order in the record list.
  std::vector<int> final_id(n, 0);
  for (size_t i = 0; i < n; ++i) {
    if (counts[i] == 0) continue;
    const ingest::Detection& det = detections.detections[i];
    out.records.push_back({det.class_id, det.score, counts[i]});
    final_id[i] = static_cast<int>(out.records.size());
  }
  for (size_t i = 0; i < owner.size(); ++i) {
    if (owner.data()[i]) out.instances.data()[i] = final_id[owner.data()[i] - 1];
  }
  return out;
}

void write_normal_debug(const std::filesystem::path& path, const NormalMap& normals) {
  ColorImage img(normals.n.width(), normals.n.height());
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      if (!normals.valid(u, v)) continue;
      const Eigen::Vector3f& n = normals.n.at(u, v);
      img.at(u, v) = {static_cast<uint8_t>((n.x() * 0.5f + 0.5f) * 255),
                      static_cast<uint8_t>((n.y() * 0.5f + 0.5f) * 255),
                      static_cast<uint8_t>((n.z() * 0.5f + 0.5f) * 255)};
    }
  }
  ingest::write_png_rgb(path, img);
}

void write_instance_debug(const std::filesystem::path& path, const IndexImage& ids) {
  ColorImage img(ids.width(), ids.height());
  for (size_t i = 0; i < ids.size(); ++i) img.data()[i] = class_color(ids.data()[i]);
  ingest::write_png_rgb(path, img);
}

}  // namespace semfusion::segment2d
