#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "semfusion/core/errors.hpp"
#include "semfusion/core/palette.hpp"
#include "semfusion/ingest/image_io.hpp"
#include "semfusion/synth/scene.hpp"

namespace semfusion::synth {
namespace {

using json = nlohmann::json;

constexpr double kTMin = 1e-6;

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

uint64_t frame_seed(uint64_t base, uint64_t frame, uint64_t salt) {
  return splitmix64(splitmix64(base ^ salt) ^ frame);
}

void tangent_basis(const Eigen::Vector3d& n, Eigen::Vector3d& t1, Eigen::Vector3d& t2) {
  const Eigen::Vector3d ref =
      std::abs(n.z()) < 0.9 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX();
  t1 = n.cross(ref).normalized();
  t2 = n.cross(t1);
}

// Ray o + t*d with unnormalized d (unit camera z), so t is the z-depth.
bool intersect_box(const BoxPrim& b, const Eigen::Vector3d& o,
                   const Eigen::Vector3d& d, double& t_hit) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < b.min[a] || o[a] > b.max[a]) return false;
      continue;
    }
    double ta = (b.min[a] - o[a]) / d[a];
    double tb = (b.max[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  if (t0 > kTMin) {
    t_hit = t0;
    return true;
  }
  if (t1 > kTMin) {
    t_hit = t1;
    return true;
  }
  return false;
}

bool intersect_sphere(const SpherePrim& s, const Eigen::Vector3d& o,
                      const Eigen::Vector3d& d, double& t_hit) {
  const Eigen::Vector3d oc = o - s.center;
  const double a = d.squaredNorm();
  const double b = 2.0 * oc.dot(d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0) return false;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2.0 * a);
  if (t0 > kTMin) {
    t_hit = t0;
    return true;
  }
  const double t1 = (-b + sq) / (2.0 * a);
  if (t1 > kTMin) {
    t_hit = t1;
    return true;
  }
  return false;
}

bool intersect_plane(const PlanePrim& p, const Eigen::Vector3d& o,
                     const Eigen::Vector3d& d, double& t_hit) {
  const Eigen::Vector3d n = p.normal.normalized();
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-15) return false;
  const double t = n.dot(p.origin - o) / denom;
  if (t <= kTMin) return false;
  Eigen::Vector3d t1, t2;
  tangent_basis(n, t1, t2);
  const Eigen::Vector3d rel = o + t * d - p.origin;
  if (std::abs(rel.dot(t1)) > p.half_extent || std::abs(rel.dot(t2)) > p.half_extent)
    return false;
  t_hit = t;
  return true;
}

bool intersect(const Primitive& prim, const Eigen::Vector3d& o,
               const Eigen::Vector3d& d, double& t_hit) {
  if (const auto* b = std::get_if<BoxPrim>(&prim.shape))
    return intersect_box(*b, o, d, t_hit);
  if (const auto* s = std::get_if<SpherePrim>(&prim.shape))
    return intersect_sphere(*s, o, d, t_hit);
  return intersect_plane(std::get<PlanePrim>(prim.shape), o, d, t_hit);
}

bool camera_inside(const Primitive& prim, const Eigen::Vector3d& o) {
  if (const auto* b = std::get_if<BoxPrim>(&prim.shape)) {
    return (o.array() > b->min.array()).all() && (o.array() < b->max.array()).all();
  }
  if (const auto* s = std::get_if<SpherePrim>(&prim.shape)) {
    return (o - s->center).norm() < s->radius;
  }
  return false;  // planes are thin
}

void append_sample(fusion::Mesh& out, const Eigen::Vector3d& p, int class_id) {
  out.vertices.push_back(p.cast<float>());
  out.labels.push_back(static_cast<uint16_t>(class_id));
  out.colors.push_back(class_color(class_id));
}

void sample_primitive(const Primitive& prim, double spacing, fusion::Mesh& out) {
  if (const auto* b = std::get_if<BoxPrim>(&prim.shape)) {
    const Eigen::Vector3d ext = b->max - b->min;
    for (int axis = 0; axis < 3; ++axis) {
      const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
      const int n1 = std::max(1, static_cast<int>(std::lround(ext[a1] / spacing)));
      const int n2 = std::max(1, static_cast<int>(std::lround(ext[a2] / spacing)));
      for (int side = 0; side < 2; ++side) {
        for (int i = 0; i <= n1; ++i) {
          for (int j = 0; j <= n2; ++j) {
            Eigen::Vector3d p;
            p[axis] = side ? b->max[axis] : b->min[axis];
            p[a1] = b->min[a1] + ext[a1] * i / n1;
            p[a2] = b->min[a2] + ext[a2] * j / n2;
            append_sample(out, p, prim.class_id);
          }
        }
      }
    }
  } else if (const auto* s = std::get_if<SpherePrim>(&prim.shape)) {
    const double area = 4.0 * M_PI * s->radius * s->radius;
    const int n = std::max(64, static_cast<int>(std::ceil(area / (spacing * spacing))));
    constexpr double kGoldenAngle = 2.399963229728653;
    for (int i = 0; i < n; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / n;
      const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = kGoldenAngle * i;
      const Eigen::Vector3d dir(std::cos(phi) * rxy, std::sin(phi) * rxy, z);
      append_sample(out, s->center + s->radius * dir, prim.class_id);
    }
  } else {
    const auto& pl = std::get<PlanePrim>(prim.shape);
    const Eigen::Vector3d n = pl.normal.normalized();
    Eigen::Vector3d t1, t2;
    tangent_basis(n, t1, t2);
    const int steps =
        std::max(1, static_cast<int>(std::lround(2.0 * pl.half_extent / spacing)));
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; j <= steps; ++j) {
        const double a = -pl.half_extent + 2.0 * pl.half_extent * i / steps;
        const double b2 = -pl.half_extent + 2.0 * pl.half_extent * j / steps;
        append_sample(out, pl.origin + a * t1 + b2 * t2, prim.class_id);
      }
    }
  }
}

std::vector<Pose> interpolate_trajectory(const std::vector<Pose>& waypoints,
                                         int frame_count) {
  std::vector<Pose> out;
  out.reserve(frame_count);
  const int segments = static_cast<int>(waypoints.size()) - 1;
  for (int i = 0; i < frame_count; ++i) {
    if (segments == 0 || frame_count == 1) {
      out.push_back(waypoints.front());
      continue;
    }
    const double u = static_cast<double>(i) * segments / (frame_count - 1);
    const int seg = std::min(static_cast<int>(u), segments - 1);
    const double f = u - seg;
    const Pose& a = waypoints[seg];
    const Pose& b = waypoints[seg + 1];
    const Eigen::Quaterniond q = a.rotation().slerp(f, b.rotation());
    const Eigen::Vector3d t = (1.0 - f) * a.translation() + f * b.translation();
    out.emplace_back(q, t, PoseFrame::kWorldFromCamera);
  }
  return out;
}

std::string shape_name(const Primitive& prim) {
  if (std::holds_alternative<BoxPrim>(prim.shape)) return "box";
  if (std::holds_alternative<SpherePrim>(prim.shape)) return "sphere";
  return "plane";
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw DataError(where + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void SceneSpec::validate() const {
  if (frame_count < 1) throw ConfigError("scene.frame_count: must be >= 1");
  if (waypoints.empty()) throw ConfigError("scene.waypoints: at least one required");
  for (size_t i = 0; i < waypoints.size(); ++i) {
    if (waypoints[i].frame() != PoseFrame::kWorldFromCamera)
      throw ConfigError("scene.waypoints[" + std::to_string(i) +
                        "]: must be world-from-camera");
  }
  intrinsics.validate();
  if (!(fps > 0)) throw ConfigError("scene.fps: must be positive");
  if (!(max_depth > 0)) throw ConfigError("scene.max_depth: must be positive");
  if (!(sample_spacing > 0))
    throw ConfigError("scene.sample_spacing: must be positive");
  if (noise.depth_sigma < 0)
    throw ConfigError("scene.noise.depth_sigma: must be >= 0");
  if (noise.flip_prob < 0 || noise.flip_prob >= 1)
    throw ConfigError("scene.noise.flip_prob: must be in [0, 1)");
  auto check_range = [](double lo, double hi, const std::string& name) {
    if (lo < 0 || hi > 1 || lo > hi)
      throw ConfigError("scene.noise." + name + ": need 0 <= lo <= hi <= 1");
  };
  check_range(noise.score_lo, noise.score_hi, "score");
  check_range(noise.flip_score_lo, noise.flip_score_hi, "flip_score");
  if (!(noise.partial_fraction > 0) || noise.partial_fraction > 1)
    throw ConfigError("scene.noise.partial_fraction: must be in (0, 1]");

  std::map<int, int> instance_class;
  for (size_t i = 0; i < primitives.size(); ++i) {
    const std::string at = "scene.primitives[" + std::to_string(i) + "]";
    const Primitive& prim = primitives[i];
    if (prim.class_id < 1) throw ConfigError(at + ".class_id: must be >= 1");
    if (prim.instance_id < 1) throw ConfigError(at + ".instance_id: must be >= 1");
    auto [it, fresh] = instance_class.emplace(prim.instance_id, prim.class_id);
    if (!fresh && it->second != prim.class_id)
      throw ConfigError(at + ".instance_id: instance " +
                        std::to_string(prim.instance_id) +
                        " reused with a different class");
    if (const auto* b = std::get_if<BoxPrim>(&prim.shape)) {
      if (!((b->max.array() > b->min.array()).all()))
        throw ConfigError(at + ".box: max must exceed min on every axis");
    } else if (const auto* s = std::get_if<SpherePrim>(&prim.shape)) {
      if (!(s->radius > 0)) throw ConfigError(at + ".radius: must be > 0");
    } else {
      const auto& pl = std::get<PlanePrim>(prim.shape);
      if (pl.normal.norm() < 1e-12)
        throw ConfigError(at + ".normal: must be nonzero");
      if (!(pl.half_extent > 0))
        throw ConfigError(at + ".half_extent: must be > 0");
    }
  }
}

Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
             const Eigen::Vector3d& up) {
  Eigen::Vector3d z = target - eye;
  if (z.norm() < 1e-12)
    throw ConfigError("look_at: eye and target coincide");
  z.normalize();
  Eigen::Vector3d u = up;
  if (z.cross(u).norm() < 1e-9) u = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d x = z.cross(u).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d rot;
  rot.col(0) = x;
  rot.col(1) = y;
  rot.col(2) = z;
  return Pose(Eigen::Quaterniond(rot), eye, PoseFrame::kWorldFromCamera);
}

double surface_residual(const Primitive& prim, const Eigen::Vector3d& p) {
  if (const auto* b = std::get_if<BoxPrim>(&prim.shape)) {
    const Eigen::Vector3d q = (b->min - p).cwiseMax(p - b->max);
    const double outside = q.cwiseMax(0.0).norm();
    const double inside = std::min(q.maxCoeff(), 0.0);
    return std::abs(outside + inside);
  }
  if (const auto* s = std::get_if<SpherePrim>(&prim.shape)) {
    return std::abs((p - s->center).norm() - s->radius);
  }
  const auto& pl = std::get<PlanePrim>(prim.shape);
  return std::abs(pl.normal.normalized().dot(p - pl.origin));
}

RenderResult render(const SceneSpec& spec) {
  spec.validate();
  const Intrinsics& K = spec.intrinsics;
  const std::vector<Pose> poses_wc =
      interpolate_trajectory(spec.waypoints, spec.frame_count);

  RenderResult result;
  result.frames.reserve(spec.frame_count);
  for (int f = 0; f < spec.frame_count; ++f) {
    const Pose& wc = poses_wc[f];
    const Eigen::Vector3d origin = wc.translation();
    for (size_t i = 0; i < spec.primitives.size(); ++i) {
      if (camera_inside(spec.primitives[i], origin))
        throw DataError("render: camera center of frame " + std::to_string(f) +
                        " lies inside primitive " + std::to_string(i));
    }

    RenderedFrame frame;
    frame.id = f;
    frame.timestamp = f / spec.fps;
    frame.camera_from_world = wc.flipped();
    frame.depth_clean = DepthImage(K.width, K.height, 0.0f);
    frame.gt_instance = IndexImage(K.width, K.height, 0);
    frame.gt_class = IndexImage(K.width, K.height, 0);

    const Eigen::Matrix3d rot_wc = wc.rotation().toRotationMatrix();
    for (int v = 0; v < K.height; ++v) {
      for (int u = 0; u < K.width; ++u) {
        const Eigen::Vector3d d_cam((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
        const Eigen::Vector3d d_world = rot_wc * d_cam;
        double best_t = spec.max_depth;
        int best = -1;
        for (size_t i = 0; i < spec.primitives.size(); ++i) {
          double t = 0;
          if (intersect(spec.primitives[i], origin, d_world, t) && t < best_t) {
            best_t = t;
            best = static_cast<int>(i);
          }
        }
        if (best >= 0) {
          frame.depth_clean.at(u, v) = static_cast<float>(best_t);
          frame.gt_instance.at(u, v) = spec.primitives[best].instance_id;
          frame.gt_class.at(u, v) = spec.primitives[best].class_id;
        }
      }
    }

    frame.depth = frame.depth_clean;
    if (spec.noise.depth_sigma > 0) {
      std::mt19937_64 rng(frame_seed(spec.seed, f, 0xD417ULL));
      std::normal_distribution<double> gauss(0.0, spec.noise.depth_sigma);
      for (size_t i = 0; i < frame.depth.size(); ++i) {
        float& d = frame.depth.data()[i];
        if (d > 0) {
          const double noisy = d + gauss(rng);
          d = noisy > 0 ? static_cast<float>(noisy) : 0.0f;
        }
      }
    }
    result.frames.push_back(std::move(frame));
  }

  for (const Primitive& prim : spec.primitives)
    sample_primitive(prim, spec.sample_spacing, result.gt_samples);
  return result;
}

std::vector<ingest::DetectionSet> corrupt_detections(
    const std::vector<RenderedFrame>& frames, const NoiseModel& noise,
    uint64_t seed) {
  if (noise.flip_prob < 0 || noise.flip_prob >= 1)
    throw ConfigError("noise.flip_prob: must be in [0, 1)");

  // Largest silhouette per instance across the sequence, for partial-view flips.
  std::map<int, int> max_area;
  std::vector<std::map<int, int>> areas(frames.size());
  for (size_t f = 0; f < frames.size(); ++f) {
    const IndexImage& inst = frames[f].gt_instance;
    for (size_t i = 0; i < inst.size(); ++i) {
      const int id = inst.data()[i];
      if (id > 0) ++areas[f][id];
    }
    for (const auto& [id, area] : areas[f])
      max_area[id] = std::max(max_area[id], area);
  }

  std::vector<ingest::DetectionSet> out;
  out.reserve(frames.size());
  for (size_t f = 0; f < frames.size(); ++f) {
    const RenderedFrame& frame = frames[f];
    ingest::DetectionSet set;
    set.frame_id = frame.id;
    for (const auto& [id, area] : areas[f]) {
      MaskImage mask(frame.gt_instance.width(), frame.gt_instance.height(), 0);
      int gt_class = 0;
      for (size_t i = 0; i < mask.size(); ++i) {
        if (frame.gt_instance.data()[i] == id) {
          mask.data()[i] = 1;
          gt_class = frame.gt_class.data()[i];
        }
      }
      std::mt19937_64 rng(
          frame_seed(seed, (static_cast<uint64_t>(frame.id) << 24) ^
                               static_cast<uint64_t>(id),
                     0xF11BULL));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double flip_draw = unit(rng);
      const double score_draw = unit(rng);
      const bool eligible =
          !noise.flip_partial_only ||
          area < noise.partial_fraction * max_area[id];
      const bool flip = eligible && flip_draw < noise.flip_prob;

      ingest::Detection det;
      if (flip) {
        auto it = noise.confusable.find(gt_class);
        det.class_id = it != noise.confusable.end() ? it->second : gt_class + 1;
        det.score = noise.flip_score_lo +
                    score_draw * (noise.flip_score_hi - noise.flip_score_lo);
      } else {
        det.class_id = gt_class;
        det.score = noise.score_lo + score_draw * (noise.score_hi - noise.score_lo);
      }
      det.mask = std::move(mask);
      set.detections.push_back(std::move(det));
    }
    out.push_back(std::move(set));
  }
  return out;
}

void write_dataset(const SceneSpec& spec, const RenderResult& result,
                   const std::vector<ingest::DetectionSet>& detections,
                   const std::filesystem::path& root, double depth_scale) {
  if (!(depth_scale > 0)) throw ConfigError("dataset.depth_scale: must be positive");
  if (detections.size() != result.frames.size())
    throw ConfigError("write_dataset: detections/frames length mismatch");
  namespace fs = std::filesystem;
  for (const char* sub : {"rgb", "depth", "detections", "gt"})
    fs::create_directories(root / sub);

  {
    std::ofstream out(root / "intrinsics.txt");
    out << std::setprecision(17) << spec.intrinsics.fx << " " << spec.intrinsics.fy
        << " " << spec.intrinsics.cx << " " << spec.intrinsics.cy << " "
        << spec.intrinsics.width << " " << spec.intrinsics.height << "\n";
  }

  std::vector<ingest::TimedPose> trajectory;
  std::ofstream assoc(root / "associations.txt");
  assoc << std::setprecision(17);
  for (const RenderedFrame& frame : result.frames) {
    const std::string name = ingest::frame_name(frame.id) + ".png";
    trajectory.push_back({frame.timestamp, frame.camera_from_world});
    assoc << frame.timestamp << " rgb/" << name << " " << frame.timestamp
          << " depth/" << name << "\n";

    RawDepthImage raw(frame.depth.width(), frame.depth.height(), 0);
    for (size_t i = 0; i < raw.size(); ++i) {
      const double counts = std::lround(frame.depth.data()[i] * depth_scale);
      raw.data()[i] = static_cast<uint16_t>(std::clamp(counts, 0.0, 65535.0));
    }
    ingest::write_png16(root / "depth" / name, raw);

    ColorImage rgb(frame.gt_class.width(), frame.gt_class.height());
    for (size_t i = 0; i < rgb.size(); ++i)
      rgb.data()[i] = class_color(frame.gt_class.data()[i]);
    ingest::write_png_rgb(root / "rgb" / name, rgb);

    auto to_u16 = [](const IndexImage& src, const char* what) {
      RawDepthImage dst(src.width(), src.height(), 0);
      for (size_t i = 0; i < dst.size(); ++i) {
        const int32_t v = src.data()[i];
        if (v < 0 || v > 65535)
          throw DataError(std::string(what) + " id out of uint16 range");
        dst.data()[i] = static_cast<uint16_t>(v);
      }
      return dst;
    };
    ingest::write_png16(root / "gt" / ("class_" + name),
                        to_u16(frame.gt_class, "class"));
    ingest::write_png16(root / "gt" / ("instance_" + name),
                        to_u16(frame.gt_instance, "instance"));
  }
  ingest::save_trajectory(root / "trajectory.txt", trajectory);

  for (const ingest::DetectionSet& set : detections) {
    json arr = json::array();
    for (const ingest::Detection& det : set.detections) {
      json item;
      item["class_id"] = det.class_id;
      item["score"] = det.score;
      item["mask"] = {{"rle", ingest::encode_rle(det.mask)},
                      {"size", {det.mask.height(), det.mask.width()}}};
      arr.push_back(item);
    }
    std::ofstream out(root / "detections" / (ingest::frame_name(set.frame_id) + ".json"));
    out << arr.dump(1) << "\n";
  }

  fusion::write_ply(result.gt_samples, root / "gt_samples.ply");
  save_scene_spec(spec, root / "scene.json");
}

SceneSpec load_scene_spec(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DataError("cannot open scene spec: " + json_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(json_path.string() + ": " + e.what());
  }

  SceneSpec spec;
  spec.frame_count = j.value("frame_count", spec.frame_count);
  spec.seed = j.value("seed", spec.seed);
  spec.fps = j.value("fps", spec.fps);
  spec.max_depth = j.value("max_depth", spec.max_depth);
  spec.sample_spacing = j.value("sample_spacing", spec.sample_spacing);
  if (j.contains("intrinsics")) {
    const json& k = j["intrinsics"];
    spec.intrinsics =
        Intrinsics{k.at("fx").get<double>(), k.at("fy").get<double>(),
                   k.at("cx").get<double>(), k.at("cy").get<double>(),
                   k.at("width").get<int>(), k.at("height").get<int>()};
  }
  if (j.contains("noise")) {
    const json& n = j["noise"];
    spec.noise.depth_sigma = n.value("depth_sigma", 0.0);
    spec.noise.flip_prob = n.value("flip_prob", 0.0);
    spec.noise.score_lo = n.value("score_lo", spec.noise.score_lo);
    spec.noise.score_hi = n.value("score_hi", spec.noise.score_hi);
    spec.noise.flip_score_lo = n.value("flip_score_lo", spec.noise.flip_score_lo);
    spec.noise.flip_score_hi = n.value("flip_score_hi", spec.noise.flip_score_hi);
    spec.noise.flip_partial_only = n.value("flip_partial_only", false);
    spec.noise.partial_fraction =
        n.value("partial_fraction", spec.noise.partial_fraction);
    for (const auto& [key, val] : n.value("confusable", json::object()).items())
      spec.noise.confusable[std::stoi(key)] = val.get<int>();
  }
  for (const json& p : j.value("primitives", json::array())) {
    Primitive prim;
    prim.class_id = p.at("class_id").get<int>();
    prim.instance_id = p.at("instance_id").get<int>();
    const std::string type = p.at("type").get<std::string>();
    if (type == "box") {
      prim.shape = BoxPrim{vec_from_json(p.at("min"), "primitive.min"),
                           vec_from_json(p.at("max"), "primitive.max")};
    } else if (type == "sphere") {
      prim.shape = SpherePrim{vec_from_json(p.at("center"), "primitive.center"),
                              p.at("radius").get<double>()};
    } else if (type == "plane") {
      PlanePrim pl;
      pl.origin = vec_from_json(p.at("origin"), "primitive.origin");
      pl.normal = vec_from_json(p.at("normal"), "primitive.normal");
      pl.half_extent = p.value("half_extent", pl.half_extent);
      prim.shape = pl;
    } else {
      throw DataError(json_path.string() + ": unknown primitive type '" + type + "'");
    }
    spec.primitives.push_back(prim);
  }
  for (const json& w : j.value("waypoints", json::array())) {
    if (w.contains("eye")) {
      spec.waypoints.push_back(look_at(
          vec_from_json(w.at("eye"), "waypoint.eye"),
          vec_from_json(w.at("target"), "waypoint.target"),
          w.contains("up") ? vec_from_json(w["up"], "waypoint.up")
                           : Eigen::Vector3d::UnitZ()));
    } else {
      const auto q = w.at("q");
      if (!q.is_array() || q.size() != 4)
        throw DataError(json_path.string() + ": waypoint.q must be [x, y, z, w]");
      spec.waypoints.emplace_back(
          Eigen::Quaterniond(q[3].get<double>(), q[0].get<double>(),
                             q[1].get<double>(), q[2].get<double>()),
          vec_from_json(w.at("t"), "waypoint.t"), PoseFrame::kWorldFromCamera);
    }
  }
  spec.validate();
  return spec;
}

void save_scene_spec(const SceneSpec& spec, const std::filesystem::path& json_path) {
  json j;
  j["frame_count"] = spec.frame_count;
  j["seed"] = spec.seed;
  j["fps"] = spec.fps;
  j["max_depth"] = spec.max_depth;
  j["sample_spacing"] = spec.sample_spacing;
  j["intrinsics"] = {{"fx", spec.intrinsics.fx},   {"fy", spec.intrinsics.fy},
                     {"cx", spec.intrinsics.cx},   {"cy", spec.intrinsics.cy},
                     {"width", spec.intrinsics.width},
                     {"height", spec.intrinsics.height}};
  json noise;
  noise["depth_sigma"] = spec.noise.depth_sigma;
  noise["flip_prob"] = spec.noise.flip_prob;
  noise["score_lo"] = spec.noise.score_lo;
  noise["score_hi"] = spec.noise.score_hi;
  noise["flip_score_lo"] = spec.noise.flip_score_lo;
  noise["flip_score_hi"] = spec.noise.flip_score_hi;
  noise["flip_partial_only"] = spec.noise.flip_partial_only;
  noise["partial_fraction"] = spec.noise.partial_fraction;
  json confusable = json::object();
  for (const auto& [from, to] : spec.noise.confusable)
    confusable[std::to_string(from)] = to;
  noise["confusable"] = confusable;
  j["noise"] = noise;

  json prims = json::array();
  for (const Primitive& prim : spec.primitives) {
    json p;
    p["type"] = shape_name(prim);
    p["class_id"] = prim.class_id;
    p["instance_id"] = prim.instance_id;
    if (const auto* b = std::get_if<BoxPrim>(&prim.shape)) {
      p["min"] = vec_json(b->min);
      p["max"] = vec_json(b->max);
    } else if (const auto* s = std::get_if<SpherePrim>(&prim.shape)) {
      p["center"] = vec_json(s->center);
      p["radius"] = s->radius;
    } else {
      const auto& pl = std::get<PlanePrim>(prim.shape);
      p["origin"] = vec_json(pl.origin);
      p["normal"] = vec_json(pl.normal);
      p["half_extent"] = pl.half_extent;
    }
    prims.push_back(p);
  }
  j["primitives"] = prims;

  json waypoints = json::array();
  for (const Pose& w : spec.waypoints) {
    const auto& q = w.rotation();
    waypoints.push_back({{"t", vec_json(w.translation())},
                         {"q", {q.x(), q.y(), q.z(), q.w()}}});
  }
  j["waypoints"] = waypoints;

  if (json_path.has_parent_path())
    std::filesystem::create_directories(json_path.parent_path());
  std::ofstream out(json_path);
  if (!out) throw DataError("cannot write scene spec: " + json_path.string());
  out << j.dump(1) << "\n";
}

}  // namespace semfusion::synth
