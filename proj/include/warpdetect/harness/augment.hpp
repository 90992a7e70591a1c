#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "warpdetect/detect.hpp"
#include "warpdetect/tensor.hpp"

namespace wd::harness {

struct AugmentationSpec {
  double rotation_deg = 10.0;  // draws uniform in [-r, r]
  double shear_deg = 10.0;     // horizontal and vertical, each in [-s, s]
  double crop_fraction = 0.15;
  bool rotation = false;
  bool shear = false;
  bool crop = false;
  /// Test hook: use this angle instead of drawing one.
  std::optional<double> fixed_rotation_deg;

  bool any() const { return rotation || shear || crop; }
  /// Throws ConfigError for negative ranges or crop_fraction outside [0, 1).
  void validate() const;
  std::string name() const;
};

/// "none", "rotation", "shear", "crop", "all", or a '+'-joined subset, with
/// ranges taken from `ranges`.
AugmentationSpec named_augmentation(const std::string& name, const AugmentationSpec& ranges);

struct Augmented {
  Tensor image;
  std::vector<GroundTruthBox> labels;
  bool skipped = false;  // every label was dropped
  std::string notice;
};

/// Applies the enabled ops in order rotation, shear, crop about the image
/// center. Boxes become the axis-aligned hull of their transformed corners,
/// clipped to the frame; boxes losing more than 80% of their area are dropped.
Augmented augment(const Tensor& image, std::span<const GroundTruthBox> labels,
                  const AugmentationSpec& spec, std::uint64_t seed);

}  // namespace wd::harness
