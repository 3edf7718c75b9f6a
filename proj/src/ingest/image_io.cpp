#include "semfusion/ingest/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "semfusion/core/errors.hpp"

namespace semfusion::ingest {

namespace {

void ensure_parent(const std::filesystem::path& path) {
  auto parent = path.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

cv::Mat load_or_throw(const std::filesystem::path& path, int flags) {
  cv::Mat m = cv::imread(path.string(), flags);
  if (m.empty()) {
    throw DataError("failed to read image: " + path.string());
  }
  return m;
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& m) {
  ensure_parent(path);
  if (!cv::imwrite(path.string(), m)) {
    throw DataError("failed to write image: " + path.string());
  }
}

}  // namespace

void write_png16(const std::filesystem::path& path, const Image<uint16_t>& img) {
  cv::Mat m(img.height(), img.width(), CV_16UC1,
            const_cast<uint16_t*>(img.data()));
  write_or_throw(path, m);
}

Image<uint16_t> read_png16(const std::filesystem::path& path) {
  cv::Mat m = load_or_throw(path, cv::IMREAD_UNCHANGED);
  if (m.type() != CV_16UC1) {
    throw DataError("expected 16-bit single-channel PNG: " + path.string());
  }
  Image<uint16_t> img(m.cols, m.rows);
  for (int v = 0; v < m.rows; ++v) {
    const uint16_t* row = m.ptr<uint16_t>(v);
    std::copy(row, row + m.cols, img.data() + static_cast<size_t>(v) * m.cols);
  }
  return img;
}

void write_png8(const std::filesystem::path& path, const MaskImage& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC1, const_cast<uint8_t*>(img.data()));
  write_or_throw(path, m);
}

MaskImage read_png8(const std::filesystem::path& path) {
  cv::Mat m = load_or_throw(path, cv::IMREAD_GRAYSCALE);
  MaskImage img(m.cols, m.rows);
  for (int v = 0; v < m.rows; ++v) {
    const uint8_t* row = m.ptr<uint8_t>(v);
    std::copy(row, row + m.cols, img.data() + static_cast<size_t>(v) * m.cols);
  }
  return img;
}

void write_png_rgb(const std::filesystem::path& path, const ColorImage& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC3);
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      const Rgb8& c = img.at(u, v);
      m.at<cv::Vec3b>(v, u) = cv::Vec3b(c.b, c.g, c.r);  // OpenCV is BGR
    }
  }
  write_or_throw(path, m);
}

ColorImage read_png_rgb(const std::filesystem::path& path) {
  cv::Mat m = load_or_throw(path, cv::IMREAD_COLOR);
  ColorImage img(m.cols, m.rows);
  for (int v = 0; v < m.rows; ++v) {
    for (int u = 0; u < m.cols; ++u) {
      cv::Vec3b c = m.at<cv::Vec3b>(v, u);
      img.at(u, v) = Rgb8{c[2], c[1], c[0]};
    }
  }
  return img;
}

}  // namespace semfusion::ingest
