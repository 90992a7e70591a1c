#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "warpdetect/detect.hpp"
#include "warpdetect/tensor.hpp"
#include "warpdetect/tps.hpp"

namespace wd::harness {

enum class ShapeFamily { blob_leaf = 0, elongated_stem = 1, rosette = 2 };
inline constexpr std::size_t kNumFamilies = 3;
std::string to_string(ShapeFamily f);

struct SceneSpec {
  std::size_t image_size = 64;
  std::size_t num_objects = 2;  // 1..4
  double occlusion_prob = 0.5;
  double bend_amplitude = 0.6;
  double clutter_level = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Quadratic curve spine with a width profile, in pixel units (pixel centers
/// at integer + 0.5).
struct Stroke {
  Point2 p0, p1, p2;
  double max_width = 1.0;
  bool taper = false;  // stem-like linear taper; otherwise 4t(1-t) leaf profile

  Point2 at(double t) const;
  double width(double t) const;
};

/// Everything needed to re-render one object.
struct ObjectShape {
  ShapeFamily family = ShapeFamily::blob_leaf;
  std::vector<Stroke> strokes;
  double softness = 1.5;          // edge ramp width in pixels
  std::array<double, 3> color{};  // RGB
  /// Optional bend: pixel p renders the undeformed shape at bend(p). Identity
  /// when empty.
  std::vector<Point2> bend_source, bend_target;
  Point2 frame_center;
  double frame_radius = 1.0;
};

struct Scene {
  Tensor image;  // [3, H, W] in [0, 1]
  std::vector<GroundTruthBox> labels;
  std::vector<ObjectShape> objects;
};

/// Coverage in [0, 1] of one object at pixel-space point p.
double object_alpha(const ObjectShape& obj, const TpsParams* bend, Point2 p);

/// Deterministic: identical spec and seed give bit-identical scenes.
Scene gen_scene(const SceneSpec& spec);

/// splitmix64-based per-item seed derivation.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index);

struct DatasetSpec {
  std::size_t count = 600;
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  SceneSpec scene;  // num_objects and seed are drawn per item
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // separates splits sharing a root seed
};

using Dataset = std::vector<Scene>;

/// Scenes generated in parallel; scene k uses derive_seed(seed, stream, k).
Dataset gen_dataset(const DatasetSpec& spec);

}  // namespace wd::harness
