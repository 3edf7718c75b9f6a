#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace semfusion {

/// Dense row-major raster. u indexes columns along the width, v indexes rows
/// along the height, origin at the top-left pixel center.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width),
        height_(height),
        data_(static_cast<size_t>(width) * static_cast<size_t>(height), fill) {
    assert(width >= 0 && height >= 0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  bool in_bounds(int u, int v) const {
    return u >= 0 && u < width_ && v >= 0 && v < height_;
  }

  T& at(int u, int v) {
    assert(in_bounds(u, v));
    return data_[static_cast<size_t>(v) * width_ + u];
  }
  const T& at(int u, int v) const {
    assert(in_bounds(u, v));
    return data_[static_cast<size_t>(v) * width_ + u];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool same_size(int w, int h) const { return width_ == w && height_ == h; }
  template <typename U>
  bool same_size(const Image<U>& other) const {
    return same_size(other.width(), other.height());
  }

  void fill(const T& value) { data_.assign(data_.size(), value); }

  friend bool operator==(const Image& a, const Image& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct Rgb8 {
  uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb8&, const Rgb8&) = default;
};

/// Depth in meters; 0 marks an invalid measurement.
using DepthImage = Image<float>;
using MaskImage = Image<uint8_t>;
using IndexImage = Image<int32_t>;
using ColorImage = Image<Rgb8>;
using RawDepthImage = Image<uint16_t>;

/// Number of nonzero pixels.
template <typename T>
int count_nonzero(const Image<T>& img) {
  int n = 0;
  for (size_t i = 0; i < img.size(); ++i) {
    if (img.data()[i] != T{}) ++n;
  }
  return n;
}

}  // namespace semfusion
