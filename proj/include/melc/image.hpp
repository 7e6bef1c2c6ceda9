#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace melc {

// Single-channel image with values in [0, 1], row-major.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  GrayImage() = default;
  GrayImage(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

  double& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return values.size(); }

  bool same_shape(const GrayImage& other) const {
    return height == other.height && width == other.width;
  }
};

double mean_abs_diff(const GrayImage& a, const GrayImage& b);

// File formats, selected by extension:
//   .png  8-bit grayscale PNG
//   .f32  raw little-endian float32 with a small header (magic, height, width)
GrayImage load_image(const std::string& path);
void save_image(const std::string& path, const GrayImage& image);

GrayImage load_image_f32(const std::string& path);
void save_image_f32(const std::string& path, const GrayImage& image);
GrayImage load_image_png(const std::string& path);
void save_image_png(const std::string& path, const GrayImage& image);

}  // namespace melc
