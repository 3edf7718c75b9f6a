#include "semfusion/ingest/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "semfusion/core/errors.hpp"
#include "semfusion/ingest/image_io.hpp"

namespace semfusion::ingest {

namespace {

bool is_comment_or_blank(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

void warn(std::vector<std::string>* warnings, const std::string& msg) {
  if (warnings) warnings->push_back(msg);
}

}  // namespace

std::string frame_name(int frame_id) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << frame_id;
  return os.str();
}

DepthImage decode_depth(const RawDepthImage& raw, double counts_per_meter) {
  if (!(counts_per_meter > 0)) {
    throw ConfigError("dataset.depth_scale: must be positive");
  }
  DepthImage out(raw.width(), raw.height(), 0.0f);
  const double inv = 1.0 / counts_per_meter;
  for (size_t i = 0; i < raw.size(); ++i) {
    uint16_t r = raw.data()[i];
    out.data()[i] = r == 0 ? 0.0f : static_cast<float>(r * inv);
  }
  return out;
}

std::vector<TimedPose> load_trajectory(const std::filesystem::path& path,
                                       std::vector<std::string>* warnings) {
  std::ifstream fs(path);
  if (!fs) throw DataError("cannot open trajectory file: " + path.string());

  std::vector<TimedPose> out;
  std::string line;
  for (int line_no = 1; std::getline(fs, line); ++line_no) {
    if (is_comment_or_blank(line)) continue;
    std::istringstream iss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(iss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": malformed trajectory line");
    }
    Eigen::Quaterniond q(qw, qx, qy, qz);
    double norm = q.norm();
    if (norm <= 0) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": zero quaternion");
    }
    if (std::abs(norm - 1.0) > 1e-3) {
      warn(warnings, path.string() + ":" + std::to_string(line_no) +
                         ": quaternion norm " + std::to_string(norm) +
                         " off unit; renormalized");
    }
    Pose world_from_camera(q, Eigen::Vector3d(tx, ty, tz),
                           PoseFrame::kWorldFromCamera);
    out.push_back(TimedPose{t, world_from_camera.flipped()});
  }
  return out;
}

void save_trajectory(const std::filesystem::path& path,
                     const std::vector<TimedPose>& trajectory) {
  std::ofstream fs(path);
  if (!fs) throw DataError("cannot write trajectory file: " + path.string());
  fs << "# timestamp tx ty tz qx qy qz qw\n";
  fs << std::setprecision(17);
  for (const auto& tp : trajectory) {
    Pose wc = tp.pose.frame() == PoseFrame::kWorldFromCamera ? tp.pose
                                                             : tp.pose.flipped();
    const auto& t = wc.translation();
    const auto& q = wc.rotation();
    fs << tp.timestamp << " " << t.x() << " " << t.y() << " " << t.z() << " "
       << q.x() << " " << q.y() << " " << q.z() << " " << q.w() << "\n";
  }
}

std::vector<AssociationEntry> load_association(const std::filesystem::path& path) {
  std::ifstream fs(path);
  if (!fs) throw DataError("cannot open association file: " + path.string());

  std::vector<AssociationEntry> out;
  std::string line;
  for (int line_no = 1; std::getline(fs, line); ++line_no) {
    if (is_comment_or_blank(line)) continue;
    std::istringstream iss(line);
    AssociationEntry e;
    if (!(iss >> e.rgb_time >> e.rgb_path >> e.depth_time >> e.depth_path)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": malformed association line");
    }
    out.push_back(std::move(e));
  }
  return out;
}

MaskImage decode_rle(const std::vector<int64_t>& runs, int height, int width) {
  MaskImage mask(width, height, 0);
  size_t pos = 0;
  const size_t total = mask.size();
  uint8_t value = 0;  // runs start with zeros
  for (int64_t run : runs) {
    if (run < 0 || pos + static_cast<size_t>(run) > total) {
      throw DataError("rle runs exceed mask size");
    }
    if (value) std::fill_n(mask.data() + pos, run, uint8_t{1});
    pos += static_cast<size_t>(run);
    value = value ? 0 : 1;
  }
  if (pos != total) {
    throw DataError("rle runs do not cover the mask");
  }
  return mask;
}

std::vector<int64_t> encode_rle(const MaskImage& mask) {
  std::vector<int64_t> runs;
  uint8_t current = 0;
  int64_t run = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    uint8_t v = mask.data()[i] ? 1 : 0;
    if (v == current) {
      ++run;
    } else {
      runs.push_back(run);
      current = v;
      run = 1;
    }
  }
  runs.push_back(run);
  return runs;
}

DetectionSet load_detections(const std::filesystem::path& json_path,
                             const std::filesystem::path& dataset_root,
                             int frame_id, int width, int height) {
  std::ifstream fs(json_path);
  if (!fs) throw DataError("cannot open detections file: " + json_path.string());

  nlohmann::json doc;
  try {
    fs >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(json_path.string() + ": " + e.what());
  }
  if (!doc.is_array()) {
    throw DataError(json_path.string() + ": expected a JSON array");
  }

  DetectionSet set;
  set.frame_id = frame_id;
  for (size_t k = 0; k < doc.size(); ++k) {
    const auto& item = doc[k];
    Detection det;
    det.class_id = item.at("class_id").get<int>();
    det.score = item.at("score").get<double>();
    if (det.score < 0.0 || det.score > 1.0) {
      throw DataError(json_path.string() + ": detection " + std::to_string(k) +
                      " score out of [0,1]");
    }
    const auto& mask = item.at("mask");
    if (mask.is_string()) {
      det.mask = read_png8(dataset_root / mask.get<std::string>());
      for (size_t i = 0; i < det.mask.size(); ++i) {
        det.mask.data()[i] = det.mask.data()[i] ? 1 : 0;
      }
    } else if (mask.is_object()) {
      auto size = mask.at("size").get<std::vector<int>>();
      if (size.size() != 2) {
        throw DataError(json_path.string() + ": mask size must be [h,w]");
      }
      det.mask = decode_rle(mask.at("rle").get<std::vector<int64_t>>(), size[0],
                            size[1]);
    } else {
      throw DataError(json_path.string() + ": mask must be a path or rle object");
    }
    if (!det.mask.same_size(width, height)) {
      throw DataError(json_path.string() + ": detection " + std::to_string(k) +
                      " mask dimensions " + std::to_string(det.mask.width()) + "x" +
                      std::to_string(det.mask.height()) + " do not match frame " +
                      std::to_string(width) + "x" + std::to_string(height));
    }
    set.detections.push_back(std::move(det));
  }
  return set;
}

SequenceReader::SequenceReader(std::filesystem::path root, SequenceConfig config)
    : root_(std::move(root)), config_(config) {
  if (config_.stride < 1) throw ConfigError("dataset.keyframe_stride: must be >= 1");

  auto assoc_path = root_ / "associations.txt";
  if (!std::filesystem::exists(assoc_path)) assoc_path = root_ / "association.txt";
  auto assoc = load_association(assoc_path);

  auto traj_path = root_ / "trajectory.txt";
  if (!std::filesystem::exists(traj_path)) traj_path = root_ / "groundtruth.txt";
  auto trajectory = load_trajectory(traj_path, &warnings_);
  if (trajectory.empty()) {
    throw DataError("trajectory is empty: " + traj_path.string());
  }
  std::sort(trajectory.begin(), trajectory.end(),
            [](const TimedPose& a, const TimedPose& b) {
              return a.timestamp < b.timestamp;
            });

  // Default to the TUM sensor model when the dataset does not pin intrinsics.
  intrinsics_ = Intrinsics{525.0, 525.0, 319.5, 239.5, 640, 480};
  auto intr_path = root_ / "intrinsics.txt";
  if (std::filesystem::exists(intr_path)) {
    std::ifstream fs(intr_path);
    std::string line;
    while (std::getline(fs, line)) {
      if (is_comment_or_blank(line)) continue;
      std::istringstream iss(line);
      if (!(iss >> intrinsics_.fx >> intrinsics_.fy >> intrinsics_.cx >>
            intrinsics_.cy >> intrinsics_.width >> intrinsics_.height)) {
        throw DataError(intr_path.string() + ": expected fx fy cx cy width height");
      }
      break;
    }
  } else {
    warnings_.push_back("no intrinsics.txt; using TUM defaults");
  }
  intrinsics_.validate();

  // Frame id = position in the association file; stable across skips.
  std::vector<std::pair<int, const AssociationEntry*>> ordered;
  ordered.reserve(assoc.size());
  for (size_t i = 0; i < assoc.size(); ++i) {
    ordered.emplace_back(static_cast<int>(i), &assoc[i]);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) {
                     return a.second->rgb_time < b.second->rgb_time;
                   });

  double last_time = -std::numeric_limits<double>::infinity();
  for (const auto& [id, entry] : ordered) {
    if (entry->rgb_time <= last_time) {
      warnings_.push_back("frame " + std::to_string(id) +
                          ": timestamp not strictly increasing; skipped");
      continue;
    }
    // Nearest pose by timestamp.
    auto it = std::lower_bound(
        trajectory.begin(), trajectory.end(), entry->rgb_time,
        [](const TimedPose& tp, double t) { return tp.timestamp < t; });
    const TimedPose* best = nullptr;
    if (it != trajectory.end()) best = &*it;
    if (it != trajectory.begin()) {
      const TimedPose* prev = &*(it - 1);
      if (!best || std::abs(prev->timestamp - entry->rgb_time) <
                       std::abs(best->timestamp - entry->rgb_time)) {
        best = prev;
      }
    }
    double dt = std::abs(best->timestamp - entry->rgb_time);
    if (dt > config_.pose_tolerance) {
      std::ostringstream os;
      os << "frame " << id << " @" << entry->rgb_time << ": nearest pose " << dt
         << "s away (tolerance " << config_.pose_tolerance << "); skipped";
      warnings_.push_back(os.str());
      continue;
    }
    entries_.push_back(Entry{id, entry->rgb_time, root_ / entry->rgb_path,
                             root_ / entry->depth_path, best->pose});
    last_time = entry->rgb_time;
  }

  if (config_.stride > 1) {
    std::vector<Entry> strided;
    for (size_t i = 0; i < entries_.size(); i += config_.stride) {
      strided.push_back(entries_[i]);
    }
    entries_ = std::move(strided);
  }
}

FrameRecord SequenceReader::frame(size_t i) const {
  const Entry& e = entries_.at(i);
  FrameRecord rec;
  rec.id = e.id;
  rec.timestamp = e.timestamp;
  rec.pose = e.pose;
  if (std::filesystem::exists(e.rgb)) {
    rec.rgb = read_png_rgb(e.rgb);
  }
  rec.depth = decode_depth(read_png16(e.depth), config_.depth_scale);
  if (!rec.rgb.empty() && !rec.rgb.same_size(rec.depth)) {
    throw DataError("frame " + std::to_string(e.id) +
                    ": rgb and depth dimensions differ");
  }
  return rec;
}

DetectionSet SequenceReader::detections(size_t i) const {
  const Entry& e = entries_.at(i);
  auto path = root_ / "detections" / (frame_name(e.id) + ".json");
  if (!std::filesystem::exists(path)) {
    return DetectionSet{e.id, {}};
  }
  return load_detections(path, root_, e.id, intrinsics_.width, intrinsics_.height);
}

}  // namespace semfusion::ingest
