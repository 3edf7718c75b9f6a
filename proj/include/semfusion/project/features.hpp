#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "semfusion/segment2d/segment.hpp"

namespace semfusion::spblock {

/// Channel widths of the 2D feature pyramid and of the aggregated volumes,
/// by level 1..4.
int level_channels(int level);       // 512, 256, 128, 96
int aggregated_channels(int level);  // 256, 128, 128, 96

/// Per-pixel feature vectors at one pyramid level, stored plane-major
/// (all of channel 0, then channel 1, ...). Rasters are capped at 320x240.
struct FeatureImage {
  int level = 1;
  int channels = 0;
  int width = 0;
  int height = 0;
  std::vector<float> data;  // channels * height * width

  float at(int c, int u, int v) const {
    return data[(static_cast<size_t>(c) * height + v) * width + u];
  }
  float& at(int c, int u, int v) {
    return data[(static_cast<size_t>(c) * height + v) * width + u];
  }
  Eigen::VectorXf vector_at(int u, int v) const;

  /// Throws ConfigError on inconsistent dimensions or oversized raster.
  void validate() const;
};

/// Source of per-keyframe feature images. The segmentation argument lets the
/// default provider derive features from the frame itself; file-backed
/// providers ignore it.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual FeatureImage features(int frame_id, const segment2d::FilteredSeg& seg) = 0;
};

/// Default provider: channel c holds the detector probability where the
/// filtered segmentation carries class c, zero elsewhere. The raster is the
/// segmentation nearest-downsampled to at most max_width x max_height.
class ClassProbabilityProvider final : public FeatureProvider {
 public:
  explicit ClassProbabilityProvider(int num_classes, int level = 1,
                                    int max_width = 320, int max_height = 240);
  FeatureImage features(int frame_id, const segment2d::FilteredSeg& seg) override;

 private:
  int num_classes_;
  int level_;
  int max_width_, max_height_;
};

/// Replays exported activations from dir/features_L<level>_NNNNNN.bin.
class FileFeatureProvider final : public FeatureProvider {
 public:
  FileFeatureProvider(std::filesystem::path dir, int level);
  FeatureImage features(int frame_id, const segment2d::FilteredSeg& seg) override;

 private:
  std::filesystem::path dir_;
  int level_;
};

/// Raster file: 4 little-endian uint32 {level, height, width, channels}
/// followed by float32 plane-major data.
void write_feature_image(const FeatureImage& img, const std::filesystem::path& path);
FeatureImage read_feature_image(const std::filesystem::path& path);

/// Standalone form of the default provider, usable without a frame id.
FeatureImage class_probability_image(const segment2d::FilteredSeg& seg,
                                     int num_classes, int level = 1,
                                     int max_width = 320, int max_height = 240);

}  // namespace semfusion::spblock
