#include "melc/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace melc {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Bilinear sample with zero padding outside the image.
double sample_zero(const GrayImage& img, double y, double x) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double wx = x - x0;
  const double wy = y - y0;
  auto fetch = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) return 0.0;
    return img.at(yy, xx);
  };
  return (1 - wy) * ((1 - wx) * fetch(y0, x0) + wx * fetch(y0, x0 + 1)) +
         wy * ((1 - wx) * fetch(y0 + 1, x0) + wx * fetch(y0 + 1, x0 + 1));
}

// Bilinear sample with edge clamping.
double sample_clamp(const GrayImage& img, double y, double x) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double wx = x - x0;
  const double wy = y - y0;
  return (1 - wy) * ((1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
         wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
}

}  // namespace

void AugmentConfig::validate() const {
  if (jitter_probability < 0 || jitter_probability > 1)
    throw std::invalid_argument("jitter_probability must be in [0,1]");
  if (flip_probability < 0 || flip_probability > 1)
    throw std::invalid_argument("flip_probability must be in [0,1]");
  if (max_rel_change < 0 || max_rel_change >= 1)
    throw std::invalid_argument("max_rel_change must be in [0,1)");
  if (max_rotation_deg < 0) throw std::invalid_argument("max_rotation_deg must be >= 0");
  if (crop_height <= 0 || crop_width <= 0 || out_height <= 0 || out_width <= 0)
    throw std::invalid_argument("crop and output sizes must be positive");
  if (!(scale_min > 0) || scale_min > scale_max || scale_max > 1.0)
    throw std::invalid_argument("scale range must satisfy 0 < min <= max <= 1");
  if (!(aspect_min > 0) || aspect_min > aspect_max)
    throw std::invalid_argument("aspect range must satisfy 0 < min <= max");
}

AugmentConfig AugmentConfig::weak() const {
  AugmentConfig w = *this;
  w.max_rel_change = max_rel_change * 0.5;
  w.max_rotation_deg = max_rotation_deg * 0.5;
  w.scale_min = 1.0 - (1.0 - scale_min) * 0.4;
  return w;
}

GrayImage jitter_brightness_contrast(const GrayImage& image, double brightness_factor,
                                     double contrast_factor) {
  GrayImage out(image.height, image.width);
  for (size_t i = 0; i < image.values.size(); ++i)
    out.values[i] = clamp01(image.values[i] * brightness_factor);
  double mean = 0.0;
  for (double v : out.values) mean += v;
  mean /= static_cast<double>(out.values.size());
  for (auto& v : out.values) v = clamp01(mean + contrast_factor * (v - mean));
  return out;
}

GrayImage rotate_bilinear(const GrayImage& image, double angle_deg) {
  const double theta = angle_deg * M_PI / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double cy = (image.height - 1) / 2.0;
  const double cx = (image.width - 1) / 2.0;
  GrayImage out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = cx + dx * c + dy * s;
      const double sy = cy - dx * s + dy * c;
      out.at(y, x) = sample_zero(image, sy, sx);
    }
  }
  return out;
}

GrayImage center_crop(const GrayImage& image, int crop_height, int crop_width) {
  if (image.height < crop_height || image.width < crop_width)
    throw std::invalid_argument("center_crop: image smaller than crop size");
  const int oy = (image.height - crop_height) / 2;
  const int ox = (image.width - crop_width) / 2;
  GrayImage out(crop_height, crop_width);
  for (int y = 0; y < crop_height; ++y)
    for (int x = 0; x < crop_width; ++x) out.at(y, x) = image.at(y + oy, x + ox);
  return out;
}

GrayImage hflip(const GrayImage& image) {
  GrayImage out(image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) out.at(y, x) = image.at(y, image.width - 1 - x);
  return out;
}

GrayImage resize_bilinear(const GrayImage& image, int out_height, int out_width) {
  GrayImage out(out_height, out_width);
  const double sy = static_cast<double>(image.height) / out_height;
  const double sx = static_cast<double>(image.width) / out_width;
  for (int y = 0; y < out_height; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_width; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      out.at(y, x) = sample_clamp(image, src_y, src_x);
    }
  }
  return out;
}

GrayImage random_resized_crop(const GrayImage& image, const AugmentConfig& cfg, Rng& rng) {
  const int H = image.height;
  const int W = image.width;
  int th = 0, tw = 0, oy = 0, ox = 0;
  double scale = 1.0, aspect = 1.0;
  bool accepted = false;
  for (int attempt = 0; attempt < 10; ++attempt) {
    scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    aspect = std::exp(rng.uniform(std::log(cfg.aspect_min), std::log(cfg.aspect_max)));
    // Aspect applies relative to the region's own aspect ratio, so scale 1 /
    // aspect 1 keeps the whole region.
    th = static_cast<int>(std::lround(H * std::sqrt(scale / aspect)));
    tw = static_cast<int>(std::lround(W * std::sqrt(scale * aspect)));
    if (th >= 1 && th <= H && tw >= 1 && tw <= W) {
      oy = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(H - th + 1)));
      ox = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(W - tw + 1)));
      accepted = true;
      break;
    }
  }
  if (!accepted) {
    th = std::clamp(static_cast<int>(std::lround(H * std::sqrt(scale / aspect))), 1, H);
    tw = std::clamp(static_cast<int>(std::lround(W * std::sqrt(scale * aspect))), 1, W);
    oy = (H - th) / 2;
    ox = (W - tw) / 2;
  }
  GrayImage region(th, tw);
  for (int y = 0; y < th; ++y)
    for (int x = 0; x < tw; ++x) region.at(y, x) = image.at(y + oy, x + ox);
  return resize_bilinear(region, cfg.out_height, cfg.out_width);
}

GrayImage augment(const GrayImage& image, const AugmentConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (image.height < cfg.crop_height || image.width < cfg.crop_width)
    throw std::invalid_argument("augment: image smaller than central crop size");
  Rng rng(seed);

  GrayImage out = image;
  if (rng.bernoulli(cfg.jitter_probability)) {
    const double fb = rng.uniform(1.0 - cfg.max_rel_change, 1.0 + cfg.max_rel_change);
    const double fc = rng.uniform(1.0 - cfg.max_rel_change, 1.0 + cfg.max_rel_change);
    out = jitter_brightness_contrast(out, fb, fc);
  }
  const double angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
  if (angle != 0.0) out = rotate_bilinear(out, angle);
  out = center_crop(out, cfg.crop_height, cfg.crop_width);
  if (rng.bernoulli(cfg.flip_probability)) out = hflip(out);
  return random_resized_crop(out, cfg, rng);
}

GrayImage finetune_augment(const GrayImage& image, const AugmentConfig& cfg, uint64_t seed) {
  return augment(image, cfg.weak(), seed);
}

}  // namespace melc
