#include "semfusion/project/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "semfusion/core/errors.hpp"

namespace semfusion::spblock {

namespace {

constexpr int kPyramidChannels[4] = {512, 256, 128, 96};
constexpr int kAggregatedChannels[4] = {256, 128, 128, 96};

void check_level(int level) {
  if (level < 1 || level > 4)
    throw ConfigError("project.level: must be in [1, 4]");
}

[[noreturn]] void fail(const std::filesystem::path& path, size_t offset,
                       const std::string& what) {
  throw DataError(path.string() + ": " + what + " (byte " +
                  std::to_string(offset) + ")");
}

}  // namespace

int level_channels(int level) {
  check_level(level);
  return kPyramidChannels[level - 1];
}

int aggregated_channels(int level) {
  check_level(level);
  return kAggregatedChannels[level - 1];
}

Eigen::VectorXf FeatureImage::vector_at(int u, int v) const {
  Eigen::VectorXf out(channels);
  for (int c = 0; c < channels; ++c) out[c] = at(c, u, v);
  return out;
}

void FeatureImage::validate() const {
  check_level(level);
  if (channels <= 0) throw ConfigError("feature_image.channels: must be > 0");
  if (width <= 0 || height <= 0)
    throw ConfigError("feature_image.raster: must be non-empty");
  if (width > 320 || height > 240)
    throw ConfigError("feature_image.raster: exceeds 320x240");
  if (data.size() != static_cast<size_t>(channels) * height * width)
    throw ConfigError("feature_image.data: size does not match dimensions");
}

FeatureImage class_probability_image(const segment2d::FilteredSeg& seg,
                                     int num_classes, int level, int max_width,
                                     int max_height) {
  if (num_classes <= 0)
    throw std::invalid_argument("class_probability_image: num_classes must be > 0");
  const int in_w = seg.instances.width();
  const int in_h = seg.instances.height();
  if (in_w == 0 || in_h == 0)
    throw std::invalid_argument("class_probability_image: empty segmentation");

  FeatureImage img;
  img.level = level;
  img.channels = num_classes;
  img.width = std::min(max_width, in_w);
  img.height = std::min(max_height, in_h);
  img.data.assign(static_cast<size_t>(num_classes) * img.width * img.height, 0.0f);

  for (int vf = 0; vf < img.height; ++vf) {
    const int v = std::clamp(
        nearest_pixel((vf + 0.5) * in_h / img.height - 0.5), 0, in_h - 1);
    for (int uf = 0; uf < img.width; ++uf) {
      const int u = std::clamp(
          nearest_pixel((uf + 0.5) * in_w / img.width - 0.5), 0, in_w - 1);
      const int32_t id = seg.instances.at(u, v);
      if (id <= 0) continue;
      const segment2d::InstanceRecord& rec = seg.records.at(id - 1);
      if (rec.class_id < 0 || rec.class_id >= num_classes)
        throw std::invalid_argument(
            "class_probability_image: class id " + std::to_string(rec.class_id) +
            " outside [0, " + std::to_string(num_classes) + ")");
      img.at(rec.class_id, uf, vf) = static_cast<float>(rec.probability);
    }
  }
  return img;
}

ClassProbabilityProvider::ClassProbabilityProvider(int num_classes, int level,
                                                  int max_width, int max_height)
    : num_classes_(num_classes),
      level_(level),
      max_width_(max_width),
      max_height_(max_height) {
  check_level(level);
}

FeatureImage ClassProbabilityProvider::features(int /*frame_id*/,
                                                const segment2d::FilteredSeg& seg) {
  return class_probability_image(seg, num_classes_, level_, max_width_, max_height_);
}

FileFeatureProvider::FileFeatureProvider(std::filesystem::path dir, int level)
    : dir_(std::move(dir)), level_(level) {
  check_level(level);
}

FeatureImage FileFeatureProvider::features(int frame_id,
                                           const segment2d::FilteredSeg&) {
  char name[64];
  std::snprintf(name, sizeof(name), "features_L%d_%06d.bin", level_, frame_id);
  FeatureImage img = read_feature_image(dir_ / name);
  if (img.level != level_)
    throw DataError((dir_ / name).string() + ": level " + std::to_string(img.level) +
                    " does not match requested level " + std::to_string(level_));
  return img;
}

void write_feature_image(const FeatureImage& img, const std::filesystem::path& path) {
  img.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  const uint32_t header[4] = {static_cast<uint32_t>(img.level),
                              static_cast<uint32_t>(img.height),
                              static_cast<uint32_t>(img.width),
                              static_cast<uint32_t>(img.channels)};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
  if (!out) throw DataError(path.string() + ": write failed");
}

FeatureImage read_feature_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  uint32_t header[4];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (in.gcount() != sizeof(header)) fail(path, 0, "truncated header");

  FeatureImage img;
  img.level = static_cast<int>(header[0]);
  img.height = static_cast<int>(header[1]);
  img.width = static_cast<int>(header[2]);
  img.channels = static_cast<int>(header[3]);
  if (img.level < 1 || img.level > 4) fail(path, 0, "bad level");
  if (img.height <= 0 || img.height > 240 || img.width <= 0 || img.width > 320)
    fail(path, 4, "bad raster size");
  if (img.channels <= 0 || img.channels > 4096) fail(path, 12, "bad channel count");

  const size_t count = static_cast<size_t>(img.channels) * img.height * img.width;
  img.data.resize(count);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != count * sizeof(float))
    fail(path, sizeof(header) + static_cast<size_t>(in.gcount()), "truncated data");
  return img;
}

}  // namespace semfusion::spblock
