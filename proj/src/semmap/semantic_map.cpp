#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

#include "semfusion/core/errors.hpp"
#include "semfusion/semmap/semantic_map.hpp"

namespace semfusion::semmap {
namespace {

using json = nlohmann::json;

constexpr int kCheckpointVersion = 1;

std::vector<Eigen::Vector3f> subsample_support(const IndexImage& instances,
                                               int instance_value,
                                               const DepthImage& depth,
                                               const Pose& camera_from_world,
                                               const Intrinsics& K, int budget) {
  // Bounding box of usable pixels, then a stride grid anchored at its corner.
  int u0 = instances.width(), v0 = instances.height(), u1 = -1, v1 = -1, count = 0;
  for (int v = 0; v < instances.height(); ++v) {
    for (int u = 0; u < instances.width(); ++u) {
      if (instances.at(u, v) != instance_value || depth.at(u, v) <= 0) continue;
      u0 = std::min(u0, u);
      v0 = std::min(v0, v);
      u1 = std::max(u1, u);
      v1 = std::max(v1, v);
      ++count;
    }
  }
  std::vector<Eigen::Vector3f> support;
  if (count == 0) return support;

  const int stride = std::max(
      1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count) / budget))));
  const Pose world_from_camera = camera_from_world.inverse();
  for (int v = v0; v <= v1 && static_cast<int>(support.size()) < budget; v += stride) {
    for (int u = u0; u <= u1 && static_cast<int>(support.size()) < budget;
         u += stride) {
      if (instances.at(u, v) != instance_value || depth.at(u, v) <= 0) continue;
      support.push_back(
          world_from_camera.apply(unproject(K, u, v, depth.at(u, v))).cast<float>());
    }
  }
  if (support.empty()) {
    // Pathological stride phase: fall back to the first usable pixel.
    for (int v = v0; v <= v1 && support.empty(); ++v) {
      for (int u = u0; u <= u1; ++u) {
        if (instances.at(u, v) != instance_value || depth.at(u, v) <= 0) continue;
        support.push_back(
            world_from_camera.apply(unproject(K, u, v, depth.at(u, v))).cast<float>());
        break;
      }
    }
  }
  return support;
}

}  // namespace

void PropagationParams::validate() const {
  if (t_iou < 0 || t_iou >= 1)
    throw ConfigError("propagation.t_iou: must be in [0, 1)");
  if (t_p1 <= 0 || t_p1 > 1) throw ConfigError("propagation.t_p1: must be in (0, 1]");
  if (t_p2 <= 0 || t_p2 > 1) throw ConfigError("propagation.t_p2: must be in (0, 1]");
  if (delta_up <= 0 || delta_up > 1)
    throw ConfigError("propagation.delta_up: must be in (0, 1]");
  if (delta_down <= 0 || delta_down > 1)
    throw ConfigError("propagation.delta_down: must be in (0, 1]");
  if (max_support < 1) throw ConfigError("propagation.max_support: must be >= 1");
  if (splat_radius < 0) throw ConfigError("propagation.splat_radius: must be >= 0");
}

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kFromDetector: return "from-detector";
    case Provenance::kCorrectedByMap: return "corrected-by-map";
    case Provenance::kNewObject: return "new-object";
  }
  return "unknown";
}

SparseSemanticMap::SparseSemanticMap(PropagationParams params) : params_(params) {
  params_.validate();
}

MaskImage reproject_object(const SemanticObject& obj, const Pose& camera_from_world,
                           const Intrinsics& K, int splat_radius) {
  if (camera_from_world.frame() != PoseFrame::kCameraFromWorld)
    throw std::invalid_argument("reproject_object: pose must be camera-from-world");
  MaskImage region(K.width, K.height, 0);
  for (const Eigen::Vector3f& p : obj.support) {
    const auto pix = project(K, camera_from_world, p.cast<double>());
    if (!pix) continue;
    const int cu = nearest_pixel(pix->u), cv = nearest_pixel(pix->v);
    for (int dv = -splat_radius; dv <= splat_radius; ++dv) {
      for (int du = -splat_radius; du <= splat_radius; ++du) {
        if (region.in_bounds(cu + du, cv + dv)) region.at(cu + du, cv + dv) = 1;
      }
    }
  }
  return region;
}

double mask_iou(const MaskImage& a, const MaskImage& b) {
  if (!a.same_size(b))
    throw std::invalid_argument("mask_iou: dimension mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool av = a.data()[i] != 0, bv = b.data()[i] != 0;
    inter += av && bv;
    uni += av || bv;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ConsistentMasks propagate(SparseSemanticMap& map, const segment2d::FilteredSeg& frame,
                          const DepthImage& depth, const Pose& camera_from_world,
                          const Intrinsics& K, int keyframe_id) {
  if (!frame.instances.same_size(K.width, K.height) ||
      !depth.same_size(K.width, K.height))
    throw std::invalid_argument("propagate: raster/intrinsics size mismatch");

  const PropagationParams& P = map.params_;
  const size_t n_inst = frame.records.size();

  std::vector<MaskImage> inst_mask(n_inst, MaskImage(K.width, K.height, 0));
  for (size_t i = 0; i < frame.instances.size(); ++i) {
    const int id = frame.instances.data()[i];
    if (id > 0) inst_mask[id - 1].data()[i] = 1;
  }

  // IoU of every reprojected object against every frame instance.
  struct Cand {
    double iou;
    int object_id;
    size_t inst;
  };
  std::vector<Cand> cands;
  for (const auto& [oid, obj] : map.objects_) {
    const MaskImage rp = reproject_object(obj, camera_from_world, K, P.splat_radius);
    for (size_t j = 0; j < n_inst; ++j) {
      const double iou = mask_iou(rp, inst_mask[j]);
      if (iou > P.t_iou) cands.push_back({iou, oid, j});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return std::tie(b.iou, a.object_id, a.inst) < std::tie(a.iou, b.object_id, b.inst);
  });

  ConsistentMasks out;
  out.seg = frame;
  out.outcomes.resize(n_inst);
  for (size_t j = 0; j < n_inst; ++j) {
    out.outcomes[j] = {frame.records[j].class_id, frame.records[j].probability,
                       Provenance::kFromDetector, 0};
  }

  std::vector<char> inst_matched(n_inst, 0);
  std::map<int, char> obj_matched;
  for (const Cand& c : cands) {
    if (inst_matched[c.inst] || obj_matched.count(c.object_id)) continue;
    if (!map.objects_.count(c.object_id)) continue;  // removed earlier this call
    inst_matched[c.inst] = 1;
    obj_matched[c.object_id] = 1;

    SemanticObject& obj = map.objects_.at(c.object_id);
    const segment2d::InstanceRecord& rec = frame.records[c.inst];
    InstanceOutcome& res = out.outcomes[c.inst];
    const bool same_class = rec.class_id == obj.class_id;
    const bool confident = rec.probability >= P.t_p1;

    if (same_class && confident) {
      obj.weight = std::min(1.0, obj.weight + P.delta_up);
      obj.last_seen = keyframe_id;
      res = {obj.class_id, rec.probability, Provenance::kFromDetector, obj.id};
    } else if (!same_class && confident) {
      obj.weight -= P.delta_down;
      if (obj.weight >= P.t_p2) {
        obj.last_seen = keyframe_id;
        res = {obj.class_id, rec.probability, Provenance::kCorrectedByMap, obj.id};
      } else {
        map.objects_.erase(c.object_id);  // keep the detector's label
      }
    } else if (same_class) {
      obj.last_seen = keyframe_id;
      res = {obj.class_id, obj.weight, Provenance::kFromDetector, obj.id};
    } else {
      // Unconfident disagreement: trust the map, leave the weight alone.
      obj.last_seen = keyframe_id;
      res = {obj.class_id, obj.weight, Provenance::kCorrectedByMap, obj.id};
    }
  }

  // Confident unmatched instances are fused into the map as new objects.
  for (size_t j = 0; j < n_inst; ++j) {
    if (inst_matched[j]) continue;
    const segment2d::InstanceRecord& rec = frame.records[j];
    if (rec.probability <= P.t_p1) continue;
    std::vector<Eigen::Vector3f> support =
        subsample_support(frame.instances, static_cast<int>(j) + 1, depth,
                          camera_from_world, K, P.max_support);
    if (support.empty()) continue;  // no depth anywhere on the instance
    SemanticObject obj;
    obj.id = map.next_id_++;
    obj.class_id = rec.class_id;
    obj.weight = rec.probability;
    obj.support = std::move(support);
    obj.last_seen = keyframe_id;
    out.outcomes[j] = {obj.class_id, obj.weight, Provenance::kNewObject, obj.id};
    map.objects_.emplace(obj.id, std::move(obj));
  }

  for (auto it = map.objects_.begin(); it != map.objects_.end();) {
    it = it->second.weight < P.t_p2 ? map.objects_.erase(it) : std::next(it);
  }
  map.last_keyframe_ = keyframe_id;

  for (size_t j = 0; j < n_inst; ++j) {
    out.seg.records[j].class_id = out.outcomes[j].class_id;
    out.seg.records[j].probability = out.outcomes[j].probability;
  }
  return out;
}

void SparseSemanticMap::save(const std::filesystem::path& path) const {
  json j;
  j["version"] = kCheckpointVersion;
  j["next_id"] = next_id_;
  j["last_keyframe"] = last_keyframe_;
  j["params"] = {{"t_iou", params_.t_iou},
                 {"t_p1", params_.t_p1},
                 {"t_p2", params_.t_p2},
                 {"delta_up", params_.delta_up},
                 {"delta_down", params_.delta_down},
                 {"max_support", params_.max_support},
                 {"splat_radius", params_.splat_radius}};
  json objs = json::array();
  for (const auto& [id, obj] : objects_) {
    json o;
    o["id"] = id;
    o["class_id"] = obj.class_id;
    o["weight"] = obj.weight;
    o["last_seen"] = obj.last_seen;
    json support = json::array();
    for (const Eigen::Vector3f& p : obj.support)
      support.push_back({p.x(), p.y(), p.z()});
    o["support"] = support;
    objs.push_back(o);
  }
  j["objects"] = objs;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write map checkpoint: " + path.string());
  out << j.dump(1) << "\n";
}

SparseSemanticMap SparseSemanticMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open map checkpoint: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (j.value("version", -1) != kCheckpointVersion)
    throw DataError(path.string() + ": unsupported checkpoint version");

  PropagationParams params;
  const json& p = j.at("params");
  params.t_iou = p.at("t_iou").get<double>();
  params.t_p1 = p.at("t_p1").get<double>();
  params.t_p2 = p.at("t_p2").get<double>();
  params.delta_up = p.at("delta_up").get<double>();
  params.delta_down = p.at("delta_down").get<double>();
  params.max_support = p.at("max_support").get<int>();
  params.splat_radius = p.at("splat_radius").get<int>();

  SparseSemanticMap map(params);
  map.next_id_ = j.at("next_id").get<int>();
  map.last_keyframe_ = j.at("last_keyframe").get<int>();
  for (const json& o : j.at("objects")) {
    SemanticObject obj;
    obj.id = o.at("id").get<int>();
    obj.class_id = o.at("class_id").get<int>();
    obj.weight = o.at("weight").get<double>();
    obj.last_seen = o.at("last_seen").get<int>();
    for (const json& s : o.at("support")) {
      if (!s.is_array() || s.size() != 3)
        throw DataError(path.string() + ": support points must be [x, y, z]");
      obj.support.emplace_back(s[0].get<float>(), s[1].get<float>(),
                               s[2].get<float>());
    }
    if (obj.support.empty())
      throw DataError(path.string() + ": object " + std::to_string(obj.id) +
                      " has empty support");
    map.objects_.emplace(obj.id, std::move(obj));
  }
  return map;
}

}  // namespace semfusion::semmap
