#pragma once

#include <cstdint>

#include "melc/image.hpp"
#include "melc/rng.hpp"

namespace melc {

// View-generation pipeline for single-channel scans, applied in order:
// brightness/contrast jitter, small rotation, central crop, horizontal flip,
// random resized crop. There are no hue, saturation, colour-drop, blur or
// solarization stages; none of them apply to grayscale input.
struct AugmentConfig {
  double jitter_probability = 0.8;
  double max_rel_change = 0.4;      // brightness and contrast factor range
  double max_rotation_deg = 8.0;
  int crop_height = 188;
  int crop_width = 236;
  double flip_probability = 0.5;
  double scale_min = 0.25;          // crop area fraction
  double scale_max = 1.0;
  double aspect_min = 0.75;         // aspect multiplier relative to the region
  double aspect_max = 4.0 / 3.0;
  int out_height = 192;
  int out_width = 192;

  void validate() const;

  // Weaker form used during finetuning: jitter and rotation magnitudes are
  // halved and the crop scale range shrinks toward full area (0.25 -> 0.7 at
  // the defaults).
  AugmentConfig weak() const;
};

// Individual stages, exposed for tests. Each preserves values in [0, 1].
GrayImage jitter_brightness_contrast(const GrayImage& image, double brightness_factor,
                                     double contrast_factor);
GrayImage rotate_bilinear(const GrayImage& image, double angle_deg);
GrayImage center_crop(const GrayImage& image, int crop_height, int crop_width);
GrayImage hflip(const GrayImage& image);
GrayImage resize_bilinear(const GrayImage& image, int out_height, int out_width);
GrayImage random_resized_crop(const GrayImage& image, const AugmentConfig& cfg, Rng& rng);

// Deterministic in (image, cfg, seed). Output is cfg.out_height x
// cfg.out_width with values in [0, 1]. Throws if the image is smaller than
// the central crop.
GrayImage augment(const GrayImage& image, const AugmentConfig& cfg, uint64_t seed);

// augment() with cfg.weak().
GrayImage finetune_augment(const GrayImage& image, const AugmentConfig& cfg, uint64_t seed);

}  // namespace melc
