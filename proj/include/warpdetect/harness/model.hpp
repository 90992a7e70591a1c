#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "warpdetect/cbam.hpp"
#include "warpdetect/detect.hpp"
#include "warpdetect/stn.hpp"

namespace wd::harness {

enum class Variant { yolo, stn, stn_tps, cbam_stn, cbam_stn_tps };

std::string to_string(Variant v);
/// Throws ConfigError("unknown variant ...").
Variant parse_variant(const std::string& name);
std::vector<Variant> all_variants();
bool has_stn(Variant v);
bool has_cbam(Variant v);
bool has_tps(Variant v);

struct ModelConfig {
  std::size_t image_size = 64;
  std::size_t stem_channels = 8;
  std::size_t width = 32;  // backbone channels
  StnConfig stn;           // mode is overridden by the variant
  std::size_t cbam_reduction = 4;
  HeadConfig head;
  /// Throws ConfigError when the image size does not reduce to an integral grid.
  void validate() const;
  std::size_t grid_size() const { return image_size / 8; }
};

/// [STN] -> standardize -> stem (pool, 3x3 conv) -> [CBAM] -> three conv blocks -> head.
/// The backbone reduces a S x S input to an S/8 x S/8 prediction grid.
struct Model {
  Variant variant = Variant::yolo;
  ModelConfig cfg;
  std::optional<LocalizationNet> loc;
  std::shared_ptr<const StnWarp> warp;
  std::optional<CbamParams> cbam;
  Tensor stem_w, stem_b;
  std::array<Tensor, 3> block_w, block_b;
  HeadParams head;

  ParameterList parameters();
  std::size_t parameter_count() const;

  /// Stage names are appended to `trace` in execution order when given.
  HeadOutput forward(Tape& tape, Var image, std::vector<std::string>* trace = nullptr) const;
  /// Raw detections above score_threshold after per-class NMS.
  std::vector<Detection> predict(const Tensor& image, double score_threshold,
                                 double nms_iou) const;
  /// The STN output for an image (the input itself for variants without STN).
  Tensor rectify(const Tensor& image) const;
};

Model build_model(Variant variant, const ModelConfig& cfg, std::uint64_t seed);

}  // namespace wd::harness
